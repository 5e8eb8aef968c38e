//! Seeded Monte Carlo engine and the figure recipes built on it.
//!
//! Trials run in parallel, each with its own counter-based streams, and are
//! reduced in trial order on one thread. Item, user and noise streams are
//! keyed only by seed, trial and user index, so runs that differ in policy,
//! model or item count still see the same underlying draws.

mod sweeps;
mod table;

use rayon::prelude::*;

use crate::analytic::{ScalarTheoremParams, Variant};
use crate::error::{Error, Result};
use crate::estimators::EstimatorPolicy;
use crate::latent::{empirical_moments, sample_gaussian_points, Covariance, GaussianPrior, Points, Population};
use crate::matching::{MatchedSet, Matcher, Model};
use crate::metrics::{mse, spread, Spread};
use crate::rng::{Role, RngStream};

pub use sweeps::{
    alpha_grid, convergence_sweep, loss_vs_position, n_grid, population_variance_sweep, shrinkage_sweep,
    user_level_study, ConvergenceRow, LossRow, McOverlay, PopulationSweepRow, ShrinkageRow, SweepAxis, VariantPoint,
    SweepTrials, UserLevelStudy,
};
pub use table::{Cell, Table};

#[derive(Debug, Clone, PartialEq)]
pub enum PopulationSpec {
    /// Users and items redrawn every trial.
    Synthetic { users: GaussianPrior, items: GaussianPrior },
    /// Users and items fixed; only the noise is redrawn.
    Empirical(Population),
}

impl PopulationSpec {
    pub fn dim(&self) -> usize {
        match self {
            PopulationSpec::Synthetic { items, .. } => items.dim(),
            PopulationSpec::Empirical(p) => p.dim(),
        }
    }

    /// Gaussian summary of the users and the items, used as MAP priors.
    pub fn priors(&self) -> Result<(GaussianPrior, GaussianPrior)> {
        match self {
            PopulationSpec::Synthetic { users, items } => Ok((users.clone(), items.clone())),
            PopulationSpec::Empirical(p) => {
                let (mu, su) = empirical_moments(&p.users)?;
                let (mi, si) = empirical_moments(&p.items)?;
                Ok((GaussianPrior::new(mu, su)?, GaussianPrior::new(mi, si)?))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSpec {
    /// The user's noise when sampling items (organic model).
    pub item_noise: Covariance,
    /// The system's noise when sampling users (recommender model).
    pub user_noise: Covariance,
}

impl NoiseSpec {
    pub fn for_model(&self, model: Model) -> &Covariance {
        match model {
            Model::Organic => &self.item_noise,
            Model::Recommender => &self.user_noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: Model,
    pub policy: EstimatorPolicy,
    pub population: PopulationSpec,
    pub noise: NoiseSpec,
    /// Users per trial. Ignored when `fixed_user` is set.
    pub m: usize,
    /// Items per trial.
    pub n: usize,
    pub trials: usize,
    pub master_seed: u64,
    /// Match this single user in every trial instead of drawing users.
    pub fixed_user: Option<Vec<f64>>,
}

impl ExperimentConfig {
    /// One-dimensional Gaussian setting with fixed user `p.x_i` and `p.m`
    /// drawn users otherwise.
    pub fn theorem(variant: Variant, p: &ScalarTheoremParams, n: usize, trials: usize, seed: u64) -> Result<Self> {
        p.validate()?;
        let population = PopulationSpec::Synthetic {
            users: GaussianPrior::centered_scalar(p.sigma2_user)?,
            items: GaussianPrior::centered_scalar(p.sigma2_item)?,
        };
        let noise = NoiseSpec {
            item_noise: Covariance::scalar(p.sigma2_i)?,
            user_noise: Covariance::scalar(p.sigma2_r)?,
        };
        let (model, policy) = variant_policy(variant, &population)?;
        Ok(Self {
            model,
            policy,
            population,
            noise,
            m: p.m,
            n,
            trials,
            master_seed: seed,
            fixed_user: Some(vec![p.x_i]),
        })
    }

    pub fn empirical(model: Model, policy: EstimatorPolicy, population: Population, noise: NoiseSpec, trials: usize, seed: u64) -> Self {
        Self {
            model,
            policy,
            m: population.users.len(),
            n: population.items.len(),
            population: PopulationSpec::Empirical(population),
            noise,
            trials,
            master_seed: seed,
            fixed_user: None,
        }
    }

    pub fn with_variant(&self, variant: Variant) -> Result<Self> {
        let (model, policy) = variant_policy(variant, &self.population)?;
        Ok(Self {
            model,
            policy,
            ..self.clone()
        })
    }

    pub fn users_per_trial(&self) -> usize {
        if self.fixed_user.is_some() {
            1
        } else {
            self.m
        }
    }

    /// Whether the same users are matched in every trial.
    pub fn users_fixed(&self) -> bool {
        self.fixed_user.is_some() || matches!(self.population, PopulationSpec::Empirical(_))
    }

    /// Every problem with the configuration, joined into one error.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let d = self.population.dim();
        if self.trials == 0 {
            problems.push("trials must be at least 1".to_string());
        }
        if self.n == 0 {
            problems.push("n must be at least 1".to_string());
        }
        if self.fixed_user.is_none() && self.m == 0 {
            problems.push("m must be at least 1".to_string());
        }
        match &self.population {
            PopulationSpec::Synthetic { users, items } => {
                if users.dim() != items.dim() {
                    problems.push(format!("user prior has dimension {} but item prior {}", users.dim(), items.dim()));
                }
            }
            PopulationSpec::Empirical(p) => {
                if self.n != p.items.len() {
                    problems.push(format!("n = {} but the population has {} items", self.n, p.items.len()));
                }
                if self.fixed_user.is_none() && self.m != p.users.len() {
                    problems.push(format!("m = {} but the population has {} users", self.m, p.users.len()));
                }
            }
        }
        for (name, cov) in [("item_noise", &self.noise.item_noise), ("user_noise", &self.noise.user_noise)] {
            if cov.dim() != d {
                problems.push(format!("{name} has dimension {} but positions have {d}", cov.dim()));
            }
        }
        if let Some(x) = &self.fixed_user {
            if x.len() != d {
                problems.push(format!("fixed_user has dimension {} but positions have {d}", x.len()));
            }
            if x.iter().any(|v| !v.is_finite()) {
                problems.push("fixed_user must be finite".to_string());
            }
        }
        if let Err(e) = self.policy.validate(d) {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(problems.join("; ")))
        }
    }
}

/// Model and policy of a theorem variant. MAP priors are the item
/// distribution for the organic model and the user distribution for the
/// recommender.
pub fn variant_policy(variant: Variant, population: &PopulationSpec) -> Result<(Model, EstimatorPolicy)> {
    let model = variant.model();
    if !variant.is_map() {
        return Ok((model, EstimatorPolicy::Mle));
    }
    let (users, items) = population.priors()?;
    let prior = match model {
        Model::Organic => items,
        Model::Recommender => users,
    };
    Ok((model, EstimatorPolicy::GaussianMap(prior)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    pub mse: f64,
    pub spread: Spread,
    /// Matched position of user 0 (the fixed user when one is set).
    pub match_position: Vec<f64>,
    pub user_losses: Vec<f64>,
}

impl TrialSummary {
    pub fn from_matched(set: &MatchedSet) -> Result<Self> {
        Ok(Self {
            mse: mse(set)?,
            spread: spread(&set.positions()?)?,
            match_position: set.outcomes[0].chosen_position.clone(),
            user_losses: set.losses().collect(),
        })
    }
}

/// A Monte Carlo mean and its standard error, `sd / √trials`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn from_samples(values: &[f64]) -> Self {
        let t = values.len() as f64;
        let mean = values.iter().sum::<f64>() / t;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (t - 1.0);
        Self {
            mean,
            stderr: (var / t).sqrt(),
        }
    }

    /// Sample variance (divisor `T − 1`) with the standard error of the
    /// mean of the rescaled squared deviations it averages.
    pub fn variance_of(values: &[f64]) -> Self {
        let t = values.len() as f64;
        let mean = values.iter().sum::<f64>() / t;
        let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean) * t / (t - 1.0)).collect();
        Self::from_samples(&sq)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregates {
    pub trials: usize,
    pub mse: Estimate,
    /// Over the trials whose spread is defined.
    pub spread: Option<Estimate>,
    pub degenerate_trials: usize,
    /// Per coordinate; present when a fixed user is matched.
    pub match_mean: Option<Vec<Estimate>>,
    pub match_variance: Option<Vec<Estimate>>,
    /// Present when users are the same in every trial.
    pub per_user_mean_loss: Option<Vec<f64>>,
}

impl Aggregates {
    pub fn from_trials(per_trial: &[TrialSummary], fixed_user: bool, users_fixed: bool) -> Result<Self> {
        if per_trial.is_empty() {
            return Err(Error::invalid("no trials to aggregate"));
        }
        let mses: Vec<f64> = per_trial.iter().map(|t| t.mse).collect();
        let spreads: Vec<f64> = per_trial.iter().filter_map(|t| t.spread.value()).collect();
        let d = per_trial[0].match_position.len();
        let coord = |k: usize| -> Vec<f64> { per_trial.iter().map(|t| t.match_position[k]).collect() };
        let per_user_mean_loss = users_fixed.then(|| {
            let mut acc = vec![0.0; per_trial[0].user_losses.len()];
            for t in per_trial {
                for (a, l) in acc.iter_mut().zip(&t.user_losses) {
                    *a += l;
                }
            }
            acc.iter().map(|a| a / per_trial.len() as f64).collect()
        });
        Ok(Self {
            trials: per_trial.len(),
            mse: Estimate::from_samples(&mses),
            spread: (!spreads.is_empty()).then(|| Estimate::from_samples(&spreads)),
            degenerate_trials: per_trial.len() - spreads.len(),
            match_mean: fixed_user.then(|| (0..d).map(|k| Estimate::from_samples(&coord(k))).collect()),
            match_variance: fixed_user.then(|| (0..d).map(|k| Estimate::variance_of(&coord(k))).collect()),
            per_user_mean_loss,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialBatch {
    pub per_trial: Vec<TrialSummary>,
    pub aggregates: Aggregates,
}

/// A fixed-size worker pool. Output never depends on the worker count.
pub struct Engine {
    pool: rayon::ThreadPool,
    workers: usize,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").field("workers", &self.workers).finish()
    }
}

impl Engine {
    pub fn new(workers: usize) -> Result<Self> {
        if workers == 0 {
            return Err(Error::invalid("at least one worker is required"));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::Resource(format!("cannot start {workers} workers: {e}")))?;
        Ok(Self { pool, workers })
    }

    pub fn workers(&self) -> usize {
        self.workers
    }

    /// `f(0..count)` in parallel, returned in index order. The first error
    /// by index wins.
    pub fn map_trials<T, F>(&self, count: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64) -> Result<T> + Sync,
    {
        let results: Vec<Result<T>> = self
            .pool
            .install(|| (0..count as u64).into_par_iter().map(&f).collect());
        let mut out = Vec::new();
        out.try_reserve_exact(count)
            .map_err(|e| Error::Resource(format!("cannot hold {count} trial results: {e}")))?;
        for r in results {
            out.push(r?);
        }
        Ok(out)
    }

    pub fn run_batch(&self, cfg: &ExperimentConfig) -> Result<TrialBatch> {
        cfg.validate()?;
        let matcher = Matcher::new(cfg.model, cfg.noise.for_model(cfg.model), &cfg.policy)?;
        let per_trial = self.map_trials(cfg.trials, |t| {
            let (users, items) = trial_population(cfg, t)?;
            let set = matcher.match_population(&users, &items, trial_stream(cfg.master_seed, t))?;
            TrialSummary::from_matched(&set)
        })?;
        let aggregates = Aggregates::from_trials(&per_trial, cfg.fixed_user.is_some(), cfg.users_fixed())?;
        Ok(TrialBatch { per_trial, aggregates })
    }
}

impl Default for Engine {
    fn default() -> Self {
        let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
        Self::new(workers).expect("default worker pool")
    }
}

pub fn run_batch(cfg: &ExperimentConfig) -> Result<TrialBatch> {
    Engine::default().run_batch(cfg)
}

pub(crate) fn trial_stream(seed: u64, trial: u64) -> RngStream {
    RngStream::new(seed, trial, Role::Aux)
}

/// Users and items of trial `t`. Borrowing would avoid the copy for
/// empirical populations, but the copy is small next to the matching.
pub(crate) fn trial_population(cfg: &ExperimentConfig, t: u64) -> Result<(Points, Points)> {
    match &cfg.population {
        PopulationSpec::Synthetic { users, items } => {
            let mut item_rng = RngStream::new(cfg.master_seed, t, Role::Items).rng();
            let item_points = sample_gaussian_points(items, cfg.n, &mut item_rng)?;
            let user_points = match &cfg.fixed_user {
                Some(x) => Points::from_flat(x.len(), x.clone())?,
                None => {
                    let mut user_rng = RngStream::new(cfg.master_seed, t, Role::Users).rng();
                    sample_gaussian_points(users, cfg.m, &mut user_rng)?
                }
            };
            Ok((user_points, item_points))
        }
        PopulationSpec::Empirical(p) => {
            let users = match &cfg.fixed_user {
                Some(x) => Points::from_flat(x.len(), x.clone())?,
                None => p.users.clone(),
            };
            Ok((users, p.items.clone()))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_noise_single_trial() {
        let mut cfg = ExperimentConfig::theorem(Variant::OrganicMle, &ScalarTheoremParams::default(), 50, 1, 3).unwrap();
        cfg.noise.item_noise = Covariance::scalar(0.0).unwrap();
        let batch = Engine::new(1).unwrap().run_batch(&cfg).unwrap();
        let (users, items) = trial_population(&cfg, 0).unwrap();
        let nearest = items
            .rows()
            .map(|y| y[0])
            .min_by(|a, b| (a - 0.75).abs().total_cmp(&(b - 0.75).abs()))
            .unwrap();
        assert_eq!(users.row(0), &[0.75]);
        let agg = &batch.aggregates;
        assert_eq!(agg.match_mean.as_ref().unwrap()[0].mean, nearest);
        assert_eq!(agg.mse.mean, (nearest - 0.75) * (nearest - 0.75));
    }

    #[test]
    fn single_item_has_zero_spread() {
        for v in Variant::ALL {
            let mut cfg = ExperimentConfig::theorem(v, &ScalarTheoremParams::default(), 1, 20, 1).unwrap();
            cfg.fixed_user = None;
            cfg.m = 50;
            let batch = Engine::new(2).unwrap().run_batch(&cfg).unwrap();
            assert!(batch.per_trial.iter().all(|t| t.spread == Spread::Variance(0.0)));
        }
    }

    #[test]
    fn aggregates_recompute_from_rows() {
        let cfg = ExperimentConfig::theorem(Variant::RecommenderMap, &ScalarTheoremParams::default(), 30, 40, 5).unwrap();
        let batch = Engine::new(3).unwrap().run_batch(&cfg).unwrap();
        assert_eq!(Aggregates::from_trials(&batch.per_trial, true, true).unwrap(), batch.aggregates);
    }

    #[test]
    fn worker_count_does_not_matter() {
        let mut cfg = ExperimentConfig::theorem(Variant::OrganicMap, &ScalarTheoremParams::default(), 40, 30, 8).unwrap();
        cfg.fixed_user = None;
        cfg.m = 20;
        let one = Engine::new(1).unwrap().run_batch(&cfg).unwrap();
        let four = Engine::new(4).unwrap().run_batch(&cfg).unwrap();
        assert_eq!(one, four);
    }

    #[test]
    fn invalid_config_lists_every_problem() {
        let mut cfg = ExperimentConfig::theorem(Variant::OrganicMle, &ScalarTheoremParams::default(), 10, 1, 0).unwrap();
        cfg.trials = 0;
        cfg.n = 0;
        cfg.fixed_user = Some(vec![0.0, 1.0]);
        let msg = cfg.validate().unwrap_err().to_string();
        assert!(msg.contains("trials") && msg.contains("n must") && msg.contains("fixed_user"), "{msg}");
    }

    #[test]
    fn estimate_stderr() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        // sample sd = sqrt(5/3)
        assert!((e.stderr - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
        let v = Estimate::variance_of(&[1.0, 2.0, 3.0, 4.0]);
        assert!((v.mean - 5.0 / 3.0).abs() < 1e-15);
    }
}
