//! The organic and recommender matching processes.
//!
//! Organic: the user draws one noisy sample of every item, estimates each
//! item's position, and picks the item whose estimate is nearest to her.
//! Recommender: the system draws one noisy sample of the user, estimates her
//! position, and picks the true item nearest to that estimate.
//!
//! In both cases the loss is measured between true positions; estimates only
//! drive the decision.

use crate::error::{Error, Result};
use crate::estimators::{shrink_into, EstimatorPolicy, MapEstimator};
use crate::knn::{KdTree, LinearScan, NearestItem};
use crate::latent::{sq_dist, Covariance, GaussianNoise, Points};
use crate::rng::{Role, RngStream, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Model {
    Organic,
    Recommender,
}

impl Model {
    pub fn label(self) -> &'static str {
        match self {
            Model::Organic => "organic",
            Model::Recommender => "recommender",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    pub user_index: usize,
    pub chosen_item_index: usize,
    pub chosen_position: Vec<f64>,
    pub loss: f64,
}

impl MatchOutcome {
    fn new(user_index: usize, user: &[f64], items: &Points, chosen: usize) -> Self {
        let chosen_position = items.row(chosen).to_vec();
        let loss = sq_dist(user, &chosen_position);
        Self {
            user_index,
            chosen_item_index: chosen,
            chosen_position,
            loss,
        }
    }
}

/// One outcome per user, in user order. Items may repeat.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchedSet {
    pub outcomes: Vec<MatchOutcome>,
}

impl MatchedSet {
    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn positions(&self) -> Result<Points> {
        let dim = self
            .outcomes
            .first()
            .map(|o| o.chosen_position.len())
            .ok_or_else(|| Error::invalid("empty matched set"))?;
        let mut points = Points::with_capacity(dim, self.len())?;
        for o in &self.outcomes {
            points.push(&o.chosen_position)?;
        }
        Ok(points)
    }

    pub fn losses(&self) -> impl Iterator<Item = f64> + '_ {
        self.outcomes.iter().map(|o| o.loss)
    }
}

#[derive(Debug, Clone)]
enum Rule {
    Mle,
    Map(MapEstimator),
    Interpolated(f64),
}

/// A model, a noise covariance and an estimation policy, with the noise
/// factor and MAP gain precomputed.
#[derive(Debug, Clone)]
pub struct Matcher {
    model: Model,
    dim: usize,
    noise: GaussianNoise,
    rule: Rule,
}

/// Searchers are rebuilt per item set; a k-d tree only pays off when many
/// queries hit the same items.
const KD_TREE_MIN_QUERIES: usize = 16;
const KD_TREE_MIN_ITEMS: usize = 64;

impl Matcher {
    /// `noise` is the user's item-sampling noise for the organic model and the
    /// system's user-sampling noise for the recommender model.
    pub fn new(model: Model, noise: &Covariance, policy: &EstimatorPolicy) -> Result<Self> {
        let dim = noise.dim();
        policy.validate(dim)?;
        let rule = match policy {
            EstimatorPolicy::Mle => Rule::Mle,
            EstimatorPolicy::GaussianMap(prior) => Rule::Map(MapEstimator::new(noise, prior)?),
            EstimatorPolicy::Interpolated { alpha } => Rule::Interpolated(*alpha),
        };
        Ok(Self {
            model,
            dim,
            noise: GaussianNoise::new(noise),
            rule,
        })
    }

    pub fn model(&self) -> Model {
        self.model
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn check(&self, user: &[f64], items: &Points) {
        assert_eq!(user.len(), self.dim, "user dimension");
        assert_eq!(items.dim(), self.dim, "item dimension");
        assert!(!items.is_empty(), "at least one item is required");
    }

    /// Organic choice for one user. Uses the interpolated rule's batch mean
    /// over this user's `n` item samples.
    pub fn organic(&self, user_index: usize, user: &[f64], items: &Points, rng: &mut StreamRng) -> MatchOutcome {
        self.check(user, items);
        let d = self.dim;
        let mut best = (0usize, f64::INFINITY);
        match &self.rule {
            Rule::Mle => {
                let mut z = [0.0f64; 16];
                let mut zv = Vec::new();
                let z = scratch(&mut z, &mut zv, d);
                for (j, y) in items.rows().enumerate() {
                    self.noise.sample_around(y, rng, z);
                    let dist = sq_dist(user, z);
                    if dist < best.1 {
                        best = (j, dist);
                    }
                }
            }
            Rule::Map(map) => {
                let (mut z, mut e) = ([0.0f64; 16], [0.0f64; 16]);
                let (mut zv, mut ev) = (Vec::new(), Vec::new());
                let z = scratch(&mut z, &mut zv, d);
                let e = scratch(&mut e, &mut ev, d);
                for (j, y) in items.rows().enumerate() {
                    self.noise.sample_around(y, rng, z);
                    map.apply_into(z, e);
                    let dist = sq_dist(user, e);
                    if dist < best.1 {
                        best = (j, dist);
                    }
                }
            }
            Rule::Interpolated(alpha) => {
                let samples = self.survey(items, rng);
                let mean = samples.mean().expect("nonempty");
                best.0 = shrunk_argmin(user, &samples, &mean, *alpha);
            }
        }
        MatchOutcome::new(user_index, user, items, best.0)
    }

    fn survey(&self, items: &Points, rng: &mut StreamRng) -> Points {
        let d = self.dim;
        let mut data = vec![0.0; items.as_flat().len()];
        for (y, z) in items.rows().zip(data.chunks_exact_mut(d)) {
            self.noise.sample_around(y, rng, z);
        }
        Points::from_flat(d, data).expect("finite samples")
    }

    /// Organic choices of one user for several shrinkage levels, all made from
    /// the same item survey. Element `a` equals [`Matcher::organic`] with
    /// `Interpolated { alpha: alphas[a] }` on the same stream.
    pub fn organic_alphas(
        &self,
        user_index: usize,
        user: &[f64],
        items: &Points,
        alphas: &[f64],
        rng: &mut StreamRng,
    ) -> Vec<MatchOutcome> {
        self.check(user, items);
        let samples = self.survey(items, rng);
        let mean = samples.mean().expect("nonempty");
        alphas
            .iter()
            .map(|&a| MatchOutcome::new(user_index, user, items, shrunk_argmin(user, &samples, &mean, a)))
            .collect()
    }

    fn sample_user(&self, user: &[f64], rng: &mut StreamRng) -> Vec<f64> {
        let mut z = vec![0.0; self.dim];
        self.noise.sample_around(user, rng, &mut z);
        z
    }

    fn estimate_user(&self, sample: &[f64], cohort_mean: &[f64]) -> Vec<f64> {
        match &self.rule {
            Rule::Mle => sample.to_vec(),
            Rule::Map(map) => map.apply(sample),
            Rule::Interpolated(alpha) => {
                let mut out = vec![0.0; self.dim];
                shrink_into(sample, cohort_mean, *alpha, &mut out);
                out
            }
        }
    }

    /// Recommender choice for one user in isolation. With the interpolated
    /// rule the cohort is this user alone, so it reduces to the MLE; use
    /// [`Matcher::match_population`] for cohort shrinkage.
    pub fn recommender(
        &self,
        user_index: usize,
        user: &[f64],
        items: &Points,
        index: &dyn NearestItem,
        rng: &mut StreamRng,
    ) -> MatchOutcome {
        self.check(user, items);
        let z = self.sample_user(user, rng);
        let estimate = self.estimate_user(&z, &z);
        MatchOutcome::new(user_index, user, items, index.nearest(&estimate).0)
    }

    /// Matches every user in one trial. Per-user noise comes from
    /// `(master_seed, trial, role, user_index)` streams.
    pub fn match_population(&self, users: &Points, items: &Points, trial: RngStream) -> Result<MatchedSet> {
        if users.is_empty() || items.is_empty() {
            return Err(Error::invalid("matching needs at least one user and one item"));
        }
        if users.dim() != self.dim || items.dim() != self.dim {
            return Err(Error::invalid("population dimension does not match the noise covariance"));
        }
        let outcomes = match self.model {
            Model::Organic => users
                .rows()
                .enumerate()
                .map(|(i, x)| {
                    let mut rng = noise_stream(trial, Model::Organic, i).rng();
                    self.organic(i, x, items, &mut rng)
                })
                .collect(),
            Model::Recommender => {
                let samples = self.sample_users(users, trial);
                let cohort = samples.mean().expect("nonempty");
                with_index(items, users.len(), |index| {
                    users
                        .rows()
                        .zip(samples.rows())
                        .enumerate()
                        .map(|(i, (x, z))| {
                            let estimate = self.estimate_user(z, &cohort);
                            MatchOutcome::new(i, x, items, index.nearest(&estimate).0)
                        })
                        .collect()
                })
            }
        };
        Ok(MatchedSet { outcomes })
    }

    fn sample_users(&self, users: &Points, trial: RngStream) -> Points {
        let mut data = Vec::with_capacity(users.as_flat().len());
        for (i, x) in users.rows().enumerate() {
            let mut rng = noise_stream(trial, Model::Recommender, i).rng();
            data.extend(self.sample_user(x, &mut rng));
        }
        Points::from_flat(self.dim, data).expect("finite samples")
    }

    /// One matched set per shrinkage level, all sharing the trial's noise
    /// draws. Element `a` equals [`Matcher::match_population`] of a matcher
    /// built with `Interpolated { alpha: alphas[a] }`.
    pub fn match_population_alphas(
        &self,
        users: &Points,
        items: &Points,
        alphas: &[f64],
        trial: RngStream,
    ) -> Result<Vec<MatchedSet>> {
        if users.is_empty() || items.is_empty() {
            return Err(Error::invalid("matching needs at least one user and one item"));
        }
        if let Some(bad) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::invalid(format!("shrinkage alpha {bad} outside [0, 1]")));
        }
        let mut sets: Vec<Vec<MatchOutcome>> = vec![Vec::with_capacity(users.len()); alphas.len()];
        match self.model {
            Model::Organic => {
                for (i, x) in users.rows().enumerate() {
                    let mut rng = noise_stream(trial, Model::Organic, i).rng();
                    for (set, o) in sets.iter_mut().zip(self.organic_alphas(i, x, items, alphas, &mut rng)) {
                        set.push(o);
                    }
                }
            }
            Model::Recommender => {
                let samples = self.sample_users(users, trial);
                let cohort = samples.mean().expect("nonempty");
                let mut est = vec![0.0; self.dim];
                with_index(items, users.len() * alphas.len(), |index| {
                    for (set, &alpha) in sets.iter_mut().zip(alphas) {
                        for (i, (x, z)) in users.rows().zip(samples.rows()).enumerate() {
                            shrink_into(z, &cohort, alpha, &mut est);
                            set.push(MatchOutcome::new(i, x, items, index.nearest(&est).0));
                        }
                    }
                });
            }
        }
        Ok(sets.into_iter().map(|outcomes| MatchedSet { outcomes }).collect())
    }
}

fn scratch<'a>(stack: &'a mut [f64; 16], heap: &'a mut Vec<f64>, d: usize) -> &'a mut [f64] {
    if d <= 16 {
        &mut stack[..d]
    } else {
        *heap = vec![0.0; d];
        heap
    }
}

fn shrunk_argmin(user: &[f64], samples: &Points, mean: &[f64], alpha: f64) -> usize {
    let d = samples.dim();
    let mut e = [0.0f64; 16];
    let mut ev = Vec::new();
    let e = scratch(&mut e, &mut ev, d);
    let mut best = (0usize, f64::INFINITY);
    for (j, z) in samples.rows().enumerate() {
        shrink_into(z, mean, alpha, e);
        let dist = sq_dist(user, e);
        if dist < best.1 {
            best = (j, dist);
        }
    }
    best.0
}

pub(crate) fn with_index<T>(items: &Points, queries: usize, f: impl FnOnce(&dyn NearestItem) -> T) -> T {
    if queries >= KD_TREE_MIN_QUERIES && items.len() >= KD_TREE_MIN_ITEMS {
        f(&KdTree::new(items))
    } else {
        f(&LinearScan::new(items))
    }
}

/// The noise stream a user gets in a given trial and model.
pub fn noise_stream(trial: RngStream, model: Model, user_index: usize) -> RngStream {
    let role = match model {
        Model::Organic => Role::ItemNoise,
        Model::Recommender => Role::UserNoise,
    };
    trial.with_role(role).with_index(user_index as u64)
}

/// Organic choice of a single user.
pub fn organic_match(
    user: &[f64],
    items: &Points,
    noise: &Covariance,
    policy: &EstimatorPolicy,
    stream: RngStream,
) -> Result<MatchOutcome> {
    let matcher = Matcher::new(Model::Organic, noise, policy)?;
    check_single(&matcher, user, items)?;
    Ok(matcher.organic(0, user, items, &mut stream.rng()))
}

/// Recommender choice of a single user.
pub fn recommender_match(
    user: &[f64],
    items: &Points,
    noise: &Covariance,
    policy: &EstimatorPolicy,
    stream: RngStream,
) -> Result<MatchOutcome> {
    let matcher = Matcher::new(Model::Recommender, noise, policy)?;
    check_single(&matcher, user, items)?;
    Ok(matcher.recommender(0, user, items, &LinearScan::new(items), &mut stream.rng()))
}

fn check_single(matcher: &Matcher, user: &[f64], items: &Points) -> Result<()> {
    if items.is_empty() {
        return Err(Error::invalid("at least one item is required"));
    }
    if user.len() != matcher.dim() || items.dim() != matcher.dim() {
        return Err(Error::invalid("user, items and noise must share a dimension"));
    }
    Ok(())
}

pub fn match_population(
    pop: &crate::latent::Population,
    model: Model,
    noise: &Covariance,
    policy: &EstimatorPolicy,
    trial: RngStream,
) -> Result<MatchedSet> {
    Matcher::new(model, noise, policy)?.match_population(&pop.users, &pop.items, trial)
}


#[cfg(test)]
mod proptests {
    use super::*;
    use crate::latent::{sample_gaussian_points, GaussianPrior};
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn zero_noise_organic_is_nearest_neighbour(
            dim in prop::sample::select(vec![1usize, 2, 5]),
            n in 1usize..200,
            m in 1usize..20,
            seed in any::<u64>(),
        ) {
            let prior = GaussianPrior::new(vec![0.0; dim], Covariance::identity(dim).unwrap()).unwrap();
            let s = RngStream::new(seed, 0, Role::Aux);
            let items = sample_gaussian_points(&prior, n, &mut s.rng()).unwrap();
            let users = sample_gaussian_points(&prior, m, &mut s.with_index(1).rng()).unwrap();
            let set = Matcher::new(Model::Organic, &Covariance::zeros(dim).unwrap(), &EstimatorPolicy::Mle)
                .unwrap()
                .match_population(&users, &items, s)
                .unwrap();
            for (o, x) in set.outcomes.iter().zip(users.rows()) {
                let brute = (0..n)
                    .min_by(|&a, &b| sq_dist(x, items.row(a)).total_cmp(&sq_dist(x, items.row(b))).then(a.cmp(&b)))
                    .unwrap();
                prop_assert_eq!(o.chosen_item_index, brute);
            }
        }
    }
}
