//! Closed-form large-`n` limits for the one-dimensional Gaussian setting.
//!
//! Users are drawn from `N(0, σ²_user)`, items from `N(0, σ²_item)`, the
//! user samples items with noise `σ²_i` and the system samples users with
//! noise `σ²_r`. As the item count grows every estimate the decision maker
//! aims for has an item at it, which reduces each model to a Gaussian
//! conjugate update or a rescaling of one Gaussian sample.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarTheoremParams {
    pub sigma2_user: f64,
    pub sigma2_item: f64,
    pub sigma2_i: f64,
    pub sigma2_r: f64,
    pub m: usize,
    pub x_i: f64,
}

impl Default for ScalarTheoremParams {
    fn default() -> Self {
        Self {
            sigma2_user: 1.0,
            sigma2_item: 1.0,
            sigma2_i: 0.5,
            sigma2_r: 0.5,
            m: 300,
            x_i: 0.75,
        }
    }
}

impl ScalarTheoremParams {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.sigma2_user > 0.0 && self.sigma2_user.is_finite()) {
            problems.push(format!("sigma2_user must be positive, got {}", self.sigma2_user));
        }
        if !(self.sigma2_item > 0.0 && self.sigma2_item.is_finite()) {
            problems.push(format!("sigma2_item must be positive, got {}", self.sigma2_item));
        }
        if !(self.sigma2_i >= 0.0 && self.sigma2_i.is_finite()) {
            problems.push(format!("sigma2_i must be non-negative, got {}", self.sigma2_i));
        }
        if !(self.sigma2_r >= 0.0 && self.sigma2_r.is_finite()) {
            problems.push(format!("sigma2_r must be non-negative, got {}", self.sigma2_r));
        }
        if self.m == 0 {
            problems.push("m must be at least 1".to_string());
        }
        if !self.x_i.is_finite() {
            problems.push(format!("x_i must be finite, got {}", self.x_i));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidInput(problems.join("; ")))
        }
    }

    fn sample_factor(&self) -> f64 {
        (self.m as f64 - 1.0) / self.m as f64
    }

    /// `σ²_item / (σ²_item + σ²_i)`; 1 when the user sees items exactly.
    pub fn item_gain(&self) -> f64 {
        self.sigma2_item / (self.sigma2_item + self.sigma2_i)
    }

    /// `σ²_user / (σ²_user + σ²_r)`.
    pub fn user_gain(&self) -> f64 {
        self.sigma2_user / (self.sigma2_user + self.sigma2_r)
    }

    /// Posterior variance of an item's position given one sample of it,
    /// `(1/σ²_item + 1/σ²_i)⁻¹`, written so that `σ²_i = 0` gives 0.
    pub fn posterior_item_variance(&self) -> f64 {
        self.sigma2_item * self.sigma2_i / (self.sigma2_item + self.sigma2_i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremPrediction {
    pub expected_match: f64,
    pub match_variance: f64,
    pub expected_loss: f64,
    pub population_variance: f64,
}

impl TheoremPrediction {
    fn from_parts(x_i: f64, expected_match: f64, match_variance: f64, population_variance: f64) -> Self {
        let bias = expected_match - x_i;
        Self {
            expected_match,
            match_variance,
            expected_loss: bias * bias + match_variance,
            population_variance,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    OrganicMle,
    OrganicMap,
    RecommenderMle,
    RecommenderMap,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::OrganicMle,
        Variant::OrganicMap,
        Variant::RecommenderMle,
        Variant::RecommenderMap,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Variant::OrganicMle => "org_mle",
            Variant::OrganicMap => "org_map",
            Variant::RecommenderMle => "rec_mle",
            Variant::RecommenderMap => "rec_map",
        }
    }

    pub fn parse(label: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.label() == label)
    }

    pub fn model(self) -> crate::matching::Model {
        match self {
            Variant::OrganicMle | Variant::OrganicMap => crate::matching::Model::Organic,
            Variant::RecommenderMle | Variant::RecommenderMap => crate::matching::Model::Recommender,
        }
    }

    pub fn is_map(self) -> bool {
        matches!(self, Variant::OrganicMap | Variant::RecommenderMap)
    }
}

/// Organic model, user takes her samples at face value.
pub fn organic_mle_limits(p: &ScalarTheoremParams) -> Result<TheoremPrediction> {
    p.validate()?;
    let g = p.item_gain();
    let v = p.posterior_item_variance();
    let pop = p.sample_factor() * (g * g * p.sigma2_user + v);
    Ok(TheoremPrediction::from_parts(p.x_i, g * p.x_i, v, pop))
}

/// Organic model, user shrinks her samples with the true item prior.
pub fn organic_map_limits(p: &ScalarTheoremParams) -> Result<TheoremPrediction> {
    p.validate()?;
    let v = p.posterior_item_variance();
    let pop = p.sample_factor() * (p.sigma2_user + v);
    Ok(TheoremPrediction::from_parts(p.x_i, p.x_i, v, pop))
}

pub fn recommender_mle_limits(p: &ScalarTheoremParams) -> Result<TheoremPrediction> {
    p.validate()?;
    let pop = p.sample_factor() * (p.sigma2_user + p.sigma2_r);
    Ok(TheoremPrediction::from_parts(p.x_i, p.x_i, p.sigma2_r, pop))
}

/// Recommender model, system shrinks its user sample with the true user prior.
pub fn recommender_map_limits(p: &ScalarTheoremParams) -> Result<TheoremPrediction> {
    p.validate()?;
    let g = p.user_gain();
    let pop = p.sample_factor() * g * p.sigma2_user;
    Ok(TheoremPrediction::from_parts(p.x_i, g * p.x_i, g * g * p.sigma2_r, pop))
}

pub fn predict(variant: Variant, p: &ScalarTheoremParams) -> Result<TheoremPrediction> {
    match variant {
        Variant::OrganicMle => organic_mle_limits(p),
        Variant::OrganicMap => organic_map_limits(p),
        Variant::RecommenderMle => recommender_mle_limits(p),
        Variant::RecommenderMap => recommender_map_limits(p),
    }
}

/// Diagonal multi-dimensional parameters: the models decouple per
/// coordinate, so each coordinate gets its own scalar prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalParams {
    pub sigma2_user: Vec<f64>,
    pub sigma2_item: Vec<f64>,
    pub sigma2_i: Vec<f64>,
    pub sigma2_r: Vec<f64>,
    pub m: usize,
    pub x_i: Vec<f64>,
}

pub fn predict_per_dimension(variant: Variant, p: &DiagonalParams) -> Result<Vec<TheoremPrediction>> {
    let d = p.x_i.len();
    if [p.sigma2_user.len(), p.sigma2_item.len(), p.sigma2_i.len(), p.sigma2_r.len()]
        .iter()
        .any(|&l| l != d)
    {
        return Err(Error::invalid("per-dimension parameters disagree on dimension"));
    }
    (0..d)
        .map(|k| {
            predict(
                variant,
                &ScalarTheoremParams {
                    sigma2_user: p.sigma2_user[k],
                    sigma2_item: p.sigma2_item[k],
                    sigma2_i: p.sigma2_i[k],
                    sigma2_r: p.sigma2_r[k],
                    m: p.m,
                    x_i: p.x_i[k],
                },
            )
        })
        .collect()
}

/// Like [`predict_per_dimension`] but from full covariances; refuses
/// anything with off-diagonal structure.
pub fn predict_from_covariances(
    variant: Variant,
    user: &crate::latent::Covariance,
    item: &crate::latent::Covariance,
    noise_i: &crate::latent::Covariance,
    noise_r: &crate::latent::Covariance,
    m: usize,
    x_i: &[f64],
) -> Result<Vec<TheoremPrediction>> {
    for (name, c) in [("user", user), ("item", item), ("sigma_i", noise_i), ("sigma_r", noise_r)] {
        if !c.is_diagonal() {
            return Err(Error::invalid(format!(
                "closed forms only decouple for diagonal covariances; {name} covariance is not diagonal"
            )));
        }
    }
    predict_per_dimension(
        variant,
        &DiagonalParams {
            sigma2_user: user.diag(),
            sigma2_item: item.diag(),
            sigma2_i: noise_i.diag(),
            sigma2_r: noise_r.diag(),
            m,
            x_i: x_i.to_vec(),
        },
    )
}
