use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rating {
    /// Dense user index.
    pub user: usize,
    /// Dense item index.
    pub item: usize,
    pub value: f64,
}

/// Observed ratings with dense index maps. Dense indices follow ascending
/// raw ids, so the same file always yields the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingsMatrix {
    ratings: Vec<Rating>,
    user_ids: Vec<u64>,
    item_ids: Vec<u64>,
    global_mean: f64,
}

impl RatingsMatrix {
    pub fn from_triplets(triplets: &[(u64, u64, f64)]) -> Result<Self> {
        if triplets.is_empty() {
            return Err(Error::Data("no ratings".into()));
        }
        let mut seen = HashSet::with_capacity(triplets.len());
        let mut duplicates = 0usize;
        for &(u, i, v) in triplets {
            if !v.is_finite() {
                return Err(Error::Data(format!("non-finite rating for user {u}, item {i}")));
            }
            if !seen.insert((u, i)) {
                duplicates += 1;
            }
        }
        if duplicates > 0 {
            return Err(Error::Data(format!("{duplicates} duplicate (user, item) pairs")));
        }
        let index = |ids: BTreeMap<u64, usize>| -> (BTreeMap<u64, usize>, Vec<u64>) {
            let order: Vec<u64> = ids.keys().copied().collect();
            let map = order.iter().enumerate().map(|(k, &id)| (id, k)).collect();
            (map, order)
        };
        let (user_map, user_ids) = index(triplets.iter().map(|t| (t.0, 0)).collect());
        let (item_map, item_ids) = index(triplets.iter().map(|t| (t.1, 0)).collect());
        let ratings: Vec<Rating> = triplets
            .iter()
            .map(|&(u, i, value)| Rating {
                user: user_map[&u],
                item: item_map[&i],
                value,
            })
            .collect();
        let global_mean = ratings.iter().map(|r| r.value).sum::<f64>() / ratings.len() as f64;
        Ok(Self {
            ratings,
            user_ids,
            item_ids,
            global_mean,
        })
    }

    pub fn ratings(&self) -> &[Rating] {
        &self.ratings
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn user_ids(&self) -> &[u64] {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &[u64] {
        &self.item_ids
    }

    pub fn global_mean(&self) -> f64 {
        self.global_mean
    }

    pub fn triplets(&self) -> Vec<(u64, u64, f64)> {
        self.ratings
            .iter()
            .map(|r| (self.user_ids[r.user], self.item_ids[r.item], r.value))
            .collect()
    }

    /// Same index maps, a subset of the ratings. Used for held-out splits,
    /// where every dense index must stay meaningful.
    pub fn with_ratings(&self, ratings: Vec<Rating>) -> Result<Self> {
        if ratings.is_empty() {
            return Err(Error::Data("no ratings".into()));
        }
        let global_mean = ratings.iter().map(|r| r.value).sum::<f64>() / ratings.len() as f64;
        Ok(Self {
            ratings,
            user_ids: self.user_ids.clone(),
            item_ids: self.item_ids.clone(),
            global_mean,
        })
    }

    fn counts(&self) -> (Vec<usize>, Vec<usize>) {
        let mut users = vec![0; self.n_users()];
        let mut items = vec![0; self.n_items()];
        for r in &self.ratings {
            users[r.user] += 1;
            items[r.item] += 1;
        }
        (users, items)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub lines: usize,
    pub valid: usize,
    pub malformed: usize,
    /// Up to ten `(line number, text)` samples of malformed lines.
    pub malformed_samples: Vec<(usize, String)>,
}

impl IngestReport {
    fn reject(&mut self, line_no: usize, text: &str) {
        self.malformed += 1;
        if self.malformed_samples.len() < 10 {
            self.malformed_samples.push((line_no, text.to_string()));
        }
    }
}

fn parse_ml_line(line: &str) -> Option<(u64, u64, f64)> {
    let mut fields = line.split("::");
    let user = fields.next()?.trim().parse().ok()?;
    let item = fields.next()?.trim().parse().ok()?;
    let rating: f64 = fields.next()?.trim().parse().ok()?;
    // timestamp must be present, value discarded
    fields.next()?.trim().parse::<u64>().ok()?;
    if fields.next().is_some() || !rating.is_finite() {
        return None;
    }
    Some((user, item, rating))
}

/// Parses `UserID::MovieID::Rating::Timestamp` lines.
pub fn parse_movielens<R: Read>(reader: R) -> Result<(RatingsMatrix, IngestReport)> {
    let mut report = IngestReport::default();
    let mut triplets = Vec::new();
    for (k, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::Data(format!("read failed at line {}: {e}", k + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        report.lines += 1;
        match parse_ml_line(&line) {
            Some(t) => triplets.push(t),
            None => report.reject(k + 1, &line),
        }
    }
    report.valid = triplets.len();
    if triplets.is_empty() {
        return Err(Error::Data(format!(
            "no valid ratings ({} malformed lines); expected `UserID::MovieID::Rating::Timestamp`",
            report.malformed
        )));
    }
    Ok((RatingsMatrix::from_triplets(&triplets)?, report))
}

pub fn ingest_movielens(path: impl AsRef<Path>) -> Result<(RatingsMatrix, IngestReport)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_movielens(file)
}

/// Parses a headered `user_id,item_id,rating` CSV.
pub fn parse_ratings_csv<R: Read>(reader: R) -> Result<(RatingsMatrix, IngestReport)> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = csv.headers().map_err(|e| Error::Data(format!("bad CSV header: {e}")))?.clone();
    let expected = ["user_id", "item_id", "rating"];
    if headers.len() < 3 || headers.iter().take(3).ne(expected) {
        return Err(Error::Data(format!(
            "CSV header must start with `user_id,item_id,rating`, got `{}`",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut report = IngestReport::default();
    let mut triplets = Vec::new();
    for (k, record) in csv.records().enumerate() {
        let line_no = k + 2;
        report.lines += 1;
        let parsed = record.ok().and_then(|r| {
            let u = r.get(0)?.parse().ok()?;
            let i = r.get(1)?.parse().ok()?;
            let v: f64 = r.get(2)?.parse().ok()?;
            v.is_finite().then_some((u, i, v))
        });
        match parsed {
            Some(t) => triplets.push(t),
            None => report.reject(line_no, "unparseable record"),
        }
    }
    report.valid = triplets.len();
    if triplets.is_empty() {
        return Err(Error::Data(format!(
            "no valid ratings ({} malformed records)",
            report.malformed
        )));
    }
    Ok((RatingsMatrix::from_triplets(&triplets)?, report))
}

pub fn ingest_ratings_csv(path: impl AsRef<Path>) -> Result<(RatingsMatrix, IngestReport)> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_ratings_csv(file)
}

fn keep(r: &RatingsMatrix, user_ok: &[bool], item_ok: &[bool]) -> Vec<(u64, u64, f64)> {
    r.ratings
        .iter()
        .filter(|x| user_ok[x.user] && item_ok[x.item])
        .map(|x| (r.user_ids[x.user], r.item_ids[x.item], x.value))
        .collect()
}

/// Drops users with fewer than `min_user` ratings, then items with fewer
/// than `min_item` ratings among those users. One pass, no re-check of users.
pub fn filter_matrix(r: &RatingsMatrix, min_user: usize, min_item: usize) -> Result<RatingsMatrix> {
    if min_user == 0 || min_item == 0 {
        return Err(Error::invalid("filter thresholds must be at least 1"));
    }
    let (user_counts, _) = r.counts();
    let user_ok: Vec<bool> = user_counts.iter().map(|&c| c >= min_user).collect();
    let mut item_counts = vec![0usize; r.n_items()];
    for x in &r.ratings {
        if user_ok[x.user] {
            item_counts[x.item] += 1;
        }
    }
    let item_ok: Vec<bool> = item_counts.iter().map(|&c| c >= min_item).collect();
    let kept = keep(r, &user_ok, &item_ok);
    if kept.is_empty() {
        return Err(Error::Data(format!(
            "no ratings survive filtering at min_user = {min_user}, min_item = {min_item}"
        )));
    }
    RatingsMatrix::from_triplets(&kept)
}

/// Alternates the user and item filters until both thresholds hold.
pub fn filter_matrix_fixpoint(r: &RatingsMatrix, min_user: usize, min_item: usize) -> Result<RatingsMatrix> {
    let mut current = filter_matrix(r, min_user, min_item)?;
    loop {
        let (users, items) = current.counts();
        if users.iter().all(|&c| c >= min_user) && items.iter().all(|&c| c >= min_item) {
            return Ok(current);
        }
        current = filter_matrix(&current, min_user, min_item)?;
    }
}
