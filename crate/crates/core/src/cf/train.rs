use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use super::ratings::{Rating, RatingsMatrix};
use crate::error::{Error, Result};
use crate::latent::{empirical_moments, sample_empirical, sq_dist, Covariance, Points, Population, PopulationSource};
use crate::rng::{Role, RngStream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    /// One pass over the shuffled ratings per epoch.
    Sgd,
    /// One gradient step on the mean objective per epoch, halving the step
    /// whenever it would raise the objective.
    FullBatch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    pub lambda: f64,
    pub learning_rate: f64,
    /// Multiplied into the SGD learning rate every `decay_every` epochs.
    pub decay: f64,
    pub decay_every: usize,
    pub epochs: usize,
    /// Standard deviation of the initial embedding coordinates.
    pub init_scale: f64,
    pub seed: u64,
    pub mode: TrainMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 5,
            lambda: 0.05,
            learning_rate: 0.01,
            decay: 0.9,
            decay_every: 10,
            epochs: 100,
            init_scale: 0.1,
            seed: 0,
            mode: TrainMode::Sgd,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.dim == 0 {
            problems.push("dim must be at least 1".to_string());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            problems.push(format!("lambda must be finite and non-negative, got {}", self.lambda));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            problems.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            problems.push(format!("decay must lie in (0, 1], got {}", self.decay));
        }
        if self.decay_every == 0 {
            problems.push("decay_every must be at least 1".to_string());
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            problems.push(format!("init_scale must be finite and non-negative, got {}", self.init_scale));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(problems.join("; ")))
        }
    }
}

/// Distance-based latent factor model: `r̂ = μ + b_user − ‖u − v‖²`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    pub users: Points,
    pub items: Points,
    pub biases: Vec<f64>,
    pub global_mean: f64,
    pub config: TrainConfig,
}

impl EmbeddingModel {
    pub fn dim(&self) -> usize {
        self.items.dim()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn is_finite(&self) -> bool {
        self.users.as_flat().iter().chain(self.items.as_flat()).chain(&self.biases).all(|v| v.is_finite())
    }

    #[inline]
    fn predict_unchecked(&self, user: usize, item: usize) -> f64 {
        self.global_mean + self.biases[user] - sq_dist(self.users.row(user), self.items.row(item))
    }

    /// Translates every user and item so their joint mean is the origin.
    /// Predictions do not change.
    pub fn center(&mut self) {
        let d = self.dim();
        let total = (self.users.len() + self.items.len()) as f64;
        let mut mean = vec![0.0; d];
        for row in self.users.rows().chain(self.items.rows()) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= total);
        self.users = self.users.shifted(&mean);
        self.items = self.items.shifted(&mean);
    }
}

pub fn predict_rating(model: &EmbeddingModel, user: usize, item: usize) -> Result<f64> {
    if user >= model.n_users() || item >= model.n_items() {
        return Err(Error::invalid(format!(
            "index (user {user}, item {item}) out of range for {} users and {} items",
            model.n_users(),
            model.n_items()
        )));
    }
    Ok(model.predict_unchecked(user, item))
}

/// Regularized objective summed over `ratings`.
pub fn objective(model: &EmbeddingModel, ratings: &[Rating], lambda: f64) -> f64 {
    ratings
        .iter()
        .map(|r| {
            let dist = sq_dist(model.users.row(r.user), model.items.row(r.item));
            let b = model.biases[r.user];
            let e = r.value - (model.global_mean + b - dist);
            e * e + lambda * (dist + b * b)
        })
        .sum()
}

/// Gradient of [`objective`], laid out like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub users: Vec<f64>,
    pub items: Vec<f64>,
    pub biases: Vec<f64>,
}

pub fn gradient(model: &EmbeddingModel, ratings: &[Rating], lambda: f64) -> Gradient {
    let d = model.dim();
    let mut g = Gradient {
        users: vec![0.0; model.users.as_flat().len()],
        items: vec![0.0; model.items.as_flat().len()],
        biases: vec![0.0; model.biases.len()],
    };
    for r in ratings {
        let (u, v) = (model.users.row(r.user), model.items.row(r.item));
        let b = model.biases[r.user];
        let e = r.value - model.predict_unchecked(r.user, r.item);
        g.biases[r.user] += -2.0 * e + 2.0 * lambda * b;
        let c = 4.0 * e + 2.0 * lambda;
        let (gu, gv) = (
            &mut g.users[r.user * d..(r.user + 1) * d],
            &mut g.items[r.item * d..(r.item + 1) * d],
        );
        for k in 0..d {
            let step = c * (u[k] - v[k]);
            gu[k] += step;
            gv[k] -= step;
        }
    }
    g
}

pub fn rmse(model: &EmbeddingModel, ratings: &[Rating]) -> f64 {
    if ratings.is_empty() {
        return f64::NAN;
    }
    let sum: f64 = ratings
        .iter()
        .map(|r| {
            let e = r.value - model.predict_unchecked(r.user, r.item);
            e * e
        })
        .sum();
    (sum / ratings.len() as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: EmbeddingModel,
    /// `(epoch, mean objective per rating)`, starting with epoch 0 at initialization.
    pub trace: Vec<(usize, f64)>,
}

fn initialize(r: &RatingsMatrix, cfg: &TrainConfig) -> Result<EmbeddingModel> {
    let d = cfg.dim;
    let mut rng = RngStream::new(cfg.seed, 0, Role::Init).rng();
    let normal = Normal::new(0.0, cfg.init_scale).map_err(|e| Error::invalid(e.to_string()))?;
    let mut draw = |count: usize| -> Result<Points> {
        let data = (0..count * d).map(|_| normal.sample(&mut rng)).collect();
        Points::from_flat(d, data)
    };
    let users = draw(r.n_users())?;
    let items = draw(r.n_items())?;
    Ok(EmbeddingModel {
        users,
        items,
        biases: vec![0.0; r.n_users()],
        global_mean: r.global_mean(),
        config: cfg.clone(),
    })
}

/// Fits the model to every rating in `r`. The returned model is centered.
pub fn train(r: &RatingsMatrix, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    if r.is_empty() {
        return Err(Error::invalid("no ratings to train on"));
    }
    let mut model = initialize(r, cfg)?;
    let ratings = r.ratings();
    let count = ratings.len() as f64;
    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    let mut current = objective(&model, ratings, cfg.lambda) / count;
    trace.push((0, current));
    match cfg.mode {
        TrainMode::Sgd => {
            let mut order: Vec<usize> = (0..ratings.len()).collect();
            let mut lr = cfg.learning_rate;
            for epoch in 1..=cfg.epochs {
                let last_finite = model.clone();
                let mut rng = RngStream::new(cfg.seed, epoch as u64, Role::Shuffle).rng();
                order.shuffle(&mut rng);
                for &k in &order {
                    sgd_step(&mut model, &ratings[k], cfg.lambda, lr);
                }
                current = objective(&model, ratings, cfg.lambda) / count;
                if !current.is_finite() || !model.is_finite() {
                    return Err(diverged(epoch, current, last_finite));
                }
                trace.push((epoch, current));
                if epoch % cfg.decay_every == 0 {
                    lr *= cfg.decay;
                }
            }
        }
        TrainMode::FullBatch => {
            let mut lr = cfg.learning_rate;
            for epoch in 1..=cfg.epochs {
                let g = gradient(&model, ratings, cfg.lambda);
                let mut accepted = false;
                for _ in 0..60 {
                    let candidate = descend(&model, &g, lr / count);
                    let value = objective(&candidate, ratings, cfg.lambda) / count;
                    if value.is_finite() && value <= current {
                        model = candidate;
                        current = value;
                        accepted = true;
                        break;
                    }
                    lr *= 0.5;
                }
                if !current.is_finite() {
                    return Err(diverged(epoch, current, model));
                }
                trace.push((epoch, current));
                if accepted {
                    lr *= 1.2;
                }
            }
        }
    }
    model.center();
    Ok(TrainedModel { model, trace })
}

fn diverged(epoch: usize, objective: f64, last_finite: EmbeddingModel) -> Error {
    Error::Diverged {
        epoch,
        objective,
        last_finite: Box::new(last_finite),
    }
}

fn sgd_step(model: &mut EmbeddingModel, r: &Rating, lambda: f64, lr: f64) {
    let d = model.dim();
    let e = r.value - model.predict_unchecked(r.user, r.item);
    let b = &mut model.biases[r.user];
    *b -= lr * (-2.0 * e + 2.0 * lambda * *b);
    let c = lr * (4.0 * e + 2.0 * lambda);
    let users = model.users.flat_mut();
    let items = model.items.flat_mut();
    let (u, v) = (&mut users[r.user * d..(r.user + 1) * d], &mut items[r.item * d..(r.item + 1) * d]);
    for k in 0..d {
        let step = c * (u[k] - v[k]);
        u[k] -= step;
        v[k] += step;
    }
}

fn descend(model: &EmbeddingModel, g: &Gradient, lr: f64) -> EmbeddingModel {
    let mut next = model.clone();
    for (p, gp) in next.users.flat_mut().iter_mut().zip(&g.users) {
        *p -= lr * gp;
    }
    for (p, gp) in next.items.flat_mut().iter_mut().zip(&g.items) {
        *p -= lr * gp;
    }
    for (p, gp) in next.biases.iter_mut().zip(&g.biases) {
        *p -= lr * gp;
    }
    next
}

/// Seeded split by rating. Both halves keep the full index maps.
pub fn train_test_split(r: &RatingsMatrix, test_fraction: f64, seed: u64) -> Result<(RatingsMatrix, RatingsMatrix)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(format!("test fraction must lie in (0, 1), got {test_fraction}")));
    }
    let mut all = r.ratings().to_vec();
    all.shuffle(&mut RngStream::new(seed, 0, Role::Split).rng());
    let n_test = ((all.len() as f64) * test_fraction).round() as usize;
    if n_test == 0 || n_test == all.len() {
        return Err(Error::invalid("split leaves one side empty"));
    }
    let train = all.split_off(n_test);
    Ok((r.with_ratings(train)?, r.with_ratings(all)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportedPopulation {
    /// Bootstrapped test users and the trained item embeddings.
    pub population: Population,
    /// The user's item-sampling noise: `noise_scale` times the item covariance.
    pub item_noise: Covariance,
    /// The system's user-sampling noise: `noise_scale` times the test-user covariance.
    pub user_noise: Covariance,
    /// Row of the trained model each test user was drawn from.
    pub user_indices: Vec<usize>,
}

pub fn export_population(
    model: &EmbeddingModel,
    m_test: usize,
    noise_scale: f64,
    stream: RngStream,
) -> Result<ExportedPopulation> {
    export_embeddings(&model.users, &model.items, m_test, noise_scale, stream)
}

/// [`export_population`] from embedding tables, e.g. ones loaded from CSV.
pub fn export_embeddings(
    trained_users: &Points,
    items: &Points,
    m_test: usize,
    noise_scale: f64,
    stream: RngStream,
) -> Result<ExportedPopulation> {
    if trained_users.dim() != items.dim() {
        return Err(Error::Data(format!(
            "user embeddings have dimension {} but item embeddings {}",
            trained_users.dim(),
            items.dim()
        )));
    }
    if m_test < 2 {
        return Err(Error::invalid("at least 2 test users are needed to estimate their covariance"));
    }
    if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
        return Err(Error::invalid(format!("noise scale must be finite and non-negative, got {noise_scale}")));
    }
    // bootstrap row indices on a 1-d index set so the source rows are known
    let index_points = Points::from_flat(1, (0..trained_users.len()).map(|i| i as f64).collect())?;
    let picks = sample_empirical(&index_points, m_test, stream)?;
    let user_indices: Vec<usize> = picks.as_flat().iter().map(|&v| v as usize).collect();
    let mut users = Points::with_capacity(items.dim(), m_test)?;
    for &i in &user_indices {
        users.push(trained_users.row(i))?;
    }
    let (_, item_cov) = empirical_moments(items)?;
    let (_, user_cov) = empirical_moments(&users)?;
    let population = Population::new(
        users,
        items.clone(),
        PopulationSource::Empirical {
            provenance: format!("trained embeddings, {} test users", m_test),
        },
    )?;
    Ok(ExportedPopulation {
        population,
        item_noise: item_cov.scaled(noise_scale)?,
        user_noise: user_cov.scaled(noise_scale)?,
        user_indices,
    })
}
