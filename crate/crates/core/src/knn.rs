//! Exact nearest-neighbour search over item positions.
//!
//! Both searchers return the lowest index among equidistant candidates, and
//! both measure distance with [`sq_dist`], so they agree exactly.

use crate::latent::{sq_dist, Points};

/// Exact nearest-item lookup.
pub trait NearestItem {
    /// Index and squared distance of the nearest item to `query`.
    fn nearest(&self, query: &[f64]) -> (usize, f64);
}

#[inline]
fn better(d: f64, j: usize, best: (usize, f64)) -> bool {
    d < best.1 || (d == best.1 && j < best.0)
}

/// Brute force; cheapest when only a handful of queries hit an item set.
pub struct LinearScan<'a> {
    items: &'a Points,
}

impl<'a> LinearScan<'a> {
    pub fn new(items: &'a Points) -> Self {
        Self { items }
    }
}

impl NearestItem for LinearScan<'_> {
    fn nearest(&self, query: &[f64]) -> (usize, f64) {
        let mut best = (0usize, f64::INFINITY);
        for (j, row) in self.items.rows().enumerate() {
            let d = sq_dist(query, row);
            if d < best.1 {
                best = (j, d);
            }
        }
        best
    }
}

const LEAF_SIZE: usize = 8;

enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

/// Static k-d tree over a borrowed item set.
pub struct KdTree<'a> {
    items: &'a Points,
    /// Item indices, permuted so every node covers a contiguous range.
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    pub fn new(items: &'a Points) -> Self {
        let mut tree = Self {
            items,
            order: (0..items.len()).collect(),
            nodes: Vec::new(),
        };
        if !items.is_empty() {
            tree.build(0, items.len());
        }
        tree
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let dim = self.widest_dim(start, end);
        let items = self.items;
        let mid = start + (end - start) / 2;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            let (va, vb) = (items.row(a)[dim], items.row(b)[dim]);
            va.total_cmp(&vb).then(a.cmp(&b))
        });
        let value = items.row(self.order[mid])[dim];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split {
            dim,
            value,
            left,
            right,
        };
        id
    }

    fn widest_dim(&self, start: usize, end: usize) -> usize {
        let d = self.items.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for &i in &self.order[start..end] {
            for (k, v) in self.items.row(i).iter().enumerate() {
                lo[k] = lo[k].min(*v);
                hi[k] = hi[k].max(*v);
            }
        }
        (0..d)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
            .unwrap_or(0)
    }

    fn search(&self, node: usize, query: &[f64], best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &j in &self.order[start..end] {
                    let d = sq_dist(query, self.items.row(j));
                    if better(d, j, *best) {
                        *best = (j, d);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = query[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, best);
                // `<=` keeps equidistant lower-index candidates reachable
                if diff * diff <= best.1 {
                    self.search(far, query, best);
                }
            }
        }
    }
}

impl NearestItem for KdTree<'_> {
    fn nearest(&self, query: &[f64]) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        if !self.nodes.is_empty() {
            self.search(0, query, &mut best);
        }
        best
    }
}

/// The `k` nearest items as `(index, squared distance)`, nearest first,
/// ties broken by index.
pub fn k_nearest(items: &Points, query: &[f64], k: usize) -> Vec<(usize, f64)> {
    let mut all: Vec<(usize, f64)> = items
        .rows()
        .enumerate()
        .map(|(j, row)| (j, sq_dist(query, row)))
        .collect();
    let cmp = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
    if k < all.len() && k > 0 {
        all.select_nth_unstable_by(k - 1, cmp);
    }
    all.truncate(k);
    all.sort_by(cmp);
    all
}
