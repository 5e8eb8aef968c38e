//! Individual and population metrics over matched sets.
//!
//! Variances here use divisor `m`, not `m - 1`: the expectation of the
//! divisor-`m` estimator over `m` i.i.d. matches is `(m-1)/m · σ²`, which is
//! exactly the form the closed-form population limits take.

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::knn::k_nearest;
use crate::latent::Points;
use crate::matching::MatchedSet;

pub fn mse(outcomes: &MatchedSet) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::invalid("MSE of an empty matched set"));
    }
    Ok(outcomes.losses().sum::<f64>() / outcomes.len() as f64)
}

/// Divisor-`m` variance of one-dimensional positions.
pub fn matched_variance(positions: &Points) -> Result<f64> {
    if positions.dim() != 1 {
        return Err(Error::invalid(format!(
            "matched_variance is one-dimensional; use log_generalized_variance for d = {}",
            positions.dim()
        )));
    }
    if positions.is_empty() {
        return Err(Error::invalid("variance of an empty set"));
    }
    // shifting by the first value makes identical positions give exactly 0
    let values = positions.as_flat();
    let m = values.len() as f64;
    let shift = values[0];
    let mean = values.iter().map(|v| v - shift).sum::<f64>() / m;
    Ok(values.iter().map(|v| (v - shift - mean) * (v - shift - mean)).sum::<f64>() / m)
}

/// Divisor-`m` covariance of the positions.
pub fn population_covariance(positions: &Points) -> Result<DMatrix<f64>> {
    if positions.is_empty() {
        return Err(Error::invalid("covariance of an empty set"));
    }
    let d = positions.dim();
    let mean = positions.mean().expect("nonempty");
    let mut cov = DMatrix::zeros(d, d);
    for row in positions.rows() {
        for i in 0..d {
            let di = row[i] - mean[i];
            for j in i..d {
                cov[(i, j)] += di * (row[j] - mean[j]);
            }
        }
    }
    let m = positions.len() as f64;
    for i in 0..d {
        for j in i..d {
            cov[(i, j)] /= m;
            cov[(j, i)] = cov[(i, j)];
        }
    }
    Ok(cov)
}

/// Log of the product of the covariance eigenvalues. A covariance that is
/// not positive definite yields [`Error::Degenerate`].
pub fn log_generalized_variance(positions: &Points) -> Result<f64> {
    let d = positions.dim();
    if positions.len() <= d {
        return Err(Error::Degenerate(format!(
            "{} positions cannot span {d} dimensions",
            positions.len()
        )));
    }
    let cov = population_covariance(positions)?;
    let scale = cov.diagonal().max();
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::Degenerate("covariance of matched positions is singular".into()))?;
    let diag = chol.l_dirty().diagonal();
    // a pivot at rounding level means rank deficiency, not a tiny volume
    if diag.iter().any(|v| !(v * v > 1e-14 * scale)) {
        return Err(Error::Degenerate("covariance of matched positions is singular".into()));
    }
    Ok(2.0 * diag.iter().map(|v| v.ln()).sum::<f64>())
}

/// Mean squared distance from `user` to its `k` nearest items.
pub fn centrality(user: &[f64], items: &Points, k: usize) -> Result<f64> {
    if k == 0 || k > items.len() {
        return Err(Error::invalid(format!(
            "centrality needs 1 <= k <= n, got k = {k} with n = {}",
            items.len()
        )));
    }
    if user.len() != items.dim() {
        return Err(Error::invalid("user and items differ in dimension"));
    }
    let near = k_nearest(items, user, k);
    Ok(near.iter().map(|(_, d)| d).sum::<f64>() / k as f64)
}

/// Spread of one trial's matched positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Spread {
    /// `d = 1`: divisor-`m` variance.
    Variance(f64),
    /// `d > 1`: log generalized variance.
    LogGeneralizedVariance(f64),
    /// `d > 1` and the matched positions do not span the space.
    Degenerate,
}

impl Spread {
    pub fn value(self) -> Option<f64> {
        match self {
            Spread::Variance(v) | Spread::LogGeneralizedVariance(v) => Some(v),
            Spread::Degenerate => None,
        }
    }
}

pub fn spread(positions: &Points) -> Result<Spread> {
    if positions.dim() == 1 {
        return matched_variance(positions).map(Spread::Variance);
    }
    match log_generalized_variance(positions) {
        Ok(v) => Ok(Spread::LogGeneralizedVariance(v)),
        Err(Error::Degenerate(_)) => Ok(Spread::Degenerate),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationStats {
    pub mse: f64,
    pub spread: Spread,
    pub per_user_loss: Vec<f64>,
}

pub fn population_stats(outcomes: &MatchedSet) -> Result<PopulationStats> {
    Ok(PopulationStats {
        mse: mse(outcomes)?,
        spread: spread(&outcomes.positions()?)?,
        per_user_loss: outcomes.losses().collect(),
    })
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankCorrelation {
    pub rho: f64,
    /// Two-sided p-value from the t approximation with `n - 2` degrees of freedom.
    pub p_value: f64,
}

/// Spearman rank correlation with a two-sided significance test.
pub fn spearman(a: &[f64], b: &[f64]) -> Result<RankCorrelation> {
    if a.len() != b.len() || a.len() < 3 {
        return Err(Error::invalid("rank correlation needs two equal-length samples of at least 3"));
    }
    let rho = pearson(&ranks(a), &ranks(b));
    if !rho.is_finite() {
        return Err(Error::Degenerate("a sample is constant".into()));
    }
    let df = (a.len() - 2) as f64;
    let p_value = if rho.abs() >= 1.0 {
        0.0
    } else {
        let t = rho * (df / (1.0 - rho * rho)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numeric(e.to_string()))?;
        2.0 * (1.0 - dist.cdf(t.abs()))
    };
    Ok(RankCorrelation { rho, p_value })
}
