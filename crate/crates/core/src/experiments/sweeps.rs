use super::{
    trial_population, trial_stream, Aggregates, Engine, Estimate, ExperimentConfig, NoiseSpec, Table, TrialSummary,
};
use crate::analytic::{predict, ScalarTheoremParams, Variant};
use crate::error::{Error, Result};
use crate::estimators::EstimatorPolicy;
use crate::latent::Population;
use crate::matching::{Matcher, Model};
use crate::metrics::{centrality, spearman, RankCorrelation};

/// `{4, 6, ..., 200}`.
pub fn n_grid() -> Vec<usize> {
    (4..=200).step_by(2).collect()
}

/// `{0.05, 0.10, ..., 0.95}`.
pub fn alpha_grid() -> Vec<f64> {
    (1..=19).map(|k| k as f64 / 20.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepTrials {
    /// Trials for metrics of one fixed user.
    pub individual: usize,
    /// Trials for metrics of a whole population.
    pub population: usize,
}

impl Default for SweepTrials {
    fn default() -> Self {
        Self {
            individual: 5000,
            population: 500,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariantPoint {
    pub mean_match: Estimate,
    pub var_match: Estimate,
    pub pop_var: Estimate,
    pub pop_mse: Estimate,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    /// Indexed like [`Variant::ALL`].
    pub variants: Vec<VariantPoint>,
}

/// Individual and population metrics of all four variants at each item
/// count. `base` supplies the distributions, noise, fixed user, `m` and seed.
pub fn convergence_sweep(
    engine: &Engine,
    base: &ExperimentConfig,
    grid: &[usize],
    trials: SweepTrials,
) -> Result<Vec<ConvergenceRow>> {
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("item-count grid must be nonempty and strictly ascending"));
    }
    let x = base
        .fixed_user
        .clone()
        .ok_or_else(|| Error::invalid("the convergence sweep needs a fixed user"))?;
    if x.len() != 1 {
        return Err(Error::invalid("the convergence sweep is one-dimensional"));
    }
    let mut rows = Vec::with_capacity(grid.len());
    for &n in grid {
        let mut variants = Vec::with_capacity(4);
        for v in Variant::ALL {
            let cfg = base.with_variant(v)?;
            let individual = engine.run_batch(&ExperimentConfig {
                n,
                trials: trials.individual,
                fixed_user: Some(x.clone()),
                ..cfg.clone()
            })?;
            let population = engine.run_batch(&ExperimentConfig {
                n,
                trials: trials.population,
                fixed_user: None,
                ..cfg
            })?;
            let agg = &individual.aggregates;
            variants.push(VariantPoint {
                mean_match: agg.match_mean.as_ref().expect("fixed user")[0],
                var_match: agg.match_variance.as_ref().expect("fixed user")[0],
                pop_var: population.aggregates.spread.expect("one-dimensional spread is always defined"),
                pop_mse: population.aggregates.mse,
            });
        }
        rows.push(ConvergenceRow { n, variants });
    }
    Ok(rows)
}

impl ConvergenceRow {
    pub fn table(rows: &[ConvergenceRow]) -> Table {
        let mut cols = vec!["n".to_string()];
        for v in Variant::ALL {
            for c in ["mean_match", "se_mean", "var_match", "se_var", "pop_var", "se_pop_var", "pop_mse", "se_pop_mse"] {
                cols.push(format!("{}_{c}", v.label()));
            }
        }
        let mut t = Table::new(cols);
        for r in rows {
            let mut row = vec![r.n.into()];
            for p in &r.variants {
                for e in [p.mean_match, p.var_match, p.pop_var, p.pop_mse] {
                    row.push(e.mean.into());
                    row.push(e.stderr.into());
                }
            }
            t.push(row);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShrinkageRow {
    pub model: Model,
    pub alpha: f64,
    pub mse: Estimate,
    /// Mean matched variance (`d = 1`) or log generalized variance (`d > 1`)
    /// over the non-degenerate trials.
    pub spread: Option<Estimate>,
    pub degenerate_trials: usize,
    pub dim: usize,
}

/// MSE and matched spread of both models at every shrinkage level. All
/// levels of a trial share one set of noise draws. `base` supplies the
/// population, noise, `m`, `n`, trial count and seed; its model and policy
/// are ignored.
pub fn shrinkage_sweep(engine: &Engine, base: &ExperimentConfig, alphas: &[f64]) -> Result<Vec<ShrinkageRow>> {
    if alphas.is_empty() {
        return Err(Error::invalid("alpha grid is empty"));
    }
    let cfg = ExperimentConfig {
        policy: EstimatorPolicy::Mle,
        fixed_user: None,
        ..base.clone()
    };
    cfg.validate()?;
    let dim = cfg.population.dim();
    let mut rows = Vec::with_capacity(2 * alphas.len());
    for model in [Model::Organic, Model::Recommender] {
        let matcher = Matcher::new(model, cfg.noise.for_model(model), &EstimatorPolicy::Mle)?;
        let per_trial: Vec<Vec<TrialSummary>> = engine.map_trials(cfg.trials, |t| {
            let (users, items) = trial_population(&cfg, t)?;
            matcher
                .match_population_alphas(&users, &items, alphas, trial_stream(cfg.master_seed, t))?
                .iter()
                .map(TrialSummary::from_matched)
                .collect()
        })?;
        for (a, &alpha) in alphas.iter().enumerate() {
            let column: Vec<TrialSummary> = per_trial.iter().map(|t| t[a].clone()).collect();
            let agg = Aggregates::from_trials(&column, false, false)?;
            rows.push(ShrinkageRow {
                model,
                alpha,
                mse: agg.mse,
                spread: agg.spread,
                degenerate_trials: agg.degenerate_trials,
                dim,
            });
        }
    }
    Ok(rows)
}

impl ShrinkageRow {
    pub fn table(rows: &[ShrinkageRow]) -> Table {
        let mut t = Table::new([
            "model",
            "alpha",
            "mse",
            "se_mse",
            "matched_spread",
            "se_matched_spread",
            "spread_metric",
            "degenerate_trials",
        ]);
        for r in rows {
            let (s, se) = r.spread.map_or((f64::NAN, f64::NAN), |e| (e.mean, e.stderr));
            let metric = if r.dim == 1 { "variance" } else { "log_generalized_variance" };
            t.push(vec![
                r.model.label().into(),
                r.alpha.into(),
                r.mse.mean.into(),
                r.mse.stderr.into(),
                s.into(),
                se.into(),
                metric.into(),
                r.degenerate_trials.into(),
            ]);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossRow {
    pub x: f64,
    /// Expected loss of each variant, indexed like [`Variant::ALL`].
    pub analytic: Vec<f64>,
    pub monte_carlo: Option<Vec<Estimate>>,
}

/// Expected loss of a user at each position of `xs`, alongside a Monte Carlo
/// estimate with `n` items when `trials > 0`.
pub fn loss_vs_position(
    engine: &Engine,
    params: &ScalarTheoremParams,
    xs: &[f64],
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<Vec<LossRow>> {
    xs.iter()
        .map(|&x| {
            let p = ScalarTheoremParams { x_i: x, ..*params };
            let analytic = Variant::ALL
                .iter()
                .map(|&v| predict(v, &p).map(|t| t.expected_loss))
                .collect::<Result<_>>()?;
            let monte_carlo = if trials == 0 {
                None
            } else {
                let est = Variant::ALL
                    .iter()
                    .map(|&v| {
                        let cfg = ExperimentConfig::theorem(v, &p, n, trials, seed)?;
                        Ok(engine.run_batch(&cfg)?.aggregates.mse)
                    })
                    .collect::<Result<_>>()?;
                Some(est)
            };
            Ok(LossRow { x, analytic, monte_carlo })
        })
        .collect()
}

impl LossRow {
    pub fn table(rows: &[LossRow]) -> Table {
        let mut cols = vec!["x".to_string()];
        for v in Variant::ALL {
            cols.push(format!("{}_analytic", v.label()));
            cols.push(format!("{}_mc", v.label()));
            cols.push(format!("{}_se", v.label()));
        }
        let mut t = Table::new(cols);
        for r in rows {
            let mut row = vec![r.x.into()];
            for (k, a) in r.analytic.iter().enumerate() {
                let e = r.monte_carlo.as_ref().map(|m| m[k]);
                row.push((*a).into());
                row.push(e.map_or(f64::NAN, |e| e.mean).into());
                row.push(e.map_or(f64::NAN, |e| e.stderr).into());
            }
            t.push(row);
        }
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Vary the user variance.
    SigmaUser,
    /// Vary the item variance.
    SigmaItem,
}

impl SweepAxis {
    pub fn label(self) -> &'static str {
        match self {
            SweepAxis::SigmaUser => "sigma2_user",
            SweepAxis::SigmaItem => "sigma2_item",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOverlay {
    pub n: usize,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSweepRow {
    pub axis: SweepAxis,
    pub value: f64,
    pub analytic: Vec<f64>,
    pub monte_carlo: Option<Vec<Estimate>>,
}

/// Large-`n` matched variance of every variant as one variance parameter moves.
pub fn population_variance_sweep(
    engine: &Engine,
    params: &ScalarTheoremParams,
    axis: SweepAxis,
    values: &[f64],
    overlay: Option<McOverlay>,
) -> Result<Vec<PopulationSweepRow>> {
    values
        .iter()
        .map(|&value| {
            let p = match axis {
                SweepAxis::SigmaUser => ScalarTheoremParams { sigma2_user: value, ..*params },
                SweepAxis::SigmaItem => ScalarTheoremParams { sigma2_item: value, ..*params },
            };
            let analytic = Variant::ALL
                .iter()
                .map(|&v| predict(v, &p).map(|t| t.population_variance))
                .collect::<Result<_>>()?;
            let monte_carlo = match overlay {
                None => None,
                Some(o) => Some(
                    Variant::ALL
                        .iter()
                        .map(|&v| {
                            let mut cfg = ExperimentConfig::theorem(v, &p, o.n, o.trials, o.seed)?;
                            cfg.fixed_user = None;
                            Ok(engine.run_batch(&cfg)?.aggregates.spread.expect("one-dimensional"))
                        })
                        .collect::<Result<_>>()?,
                ),
            };
            Ok(PopulationSweepRow {
                axis,
                value,
                analytic,
                monte_carlo,
            })
        })
        .collect()
}

impl PopulationSweepRow {
    pub fn table(rows: &[PopulationSweepRow]) -> Table {
        let mut cols = vec!["axis".to_string(), "value".to_string()];
        for v in Variant::ALL {
            cols.push(format!("{}_analytic", v.label()));
            cols.push(format!("{}_mc", v.label()));
            cols.push(format!("{}_se", v.label()));
        }
        let mut t = Table::new(cols);
        for r in rows {
            let mut row = vec![r.axis.label().into(), r.value.into()];
            for (k, a) in r.analytic.iter().enumerate() {
                let e = r.monte_carlo.as_ref().map(|m| m[k]);
                row.push((*a).into());
                row.push(e.map_or(f64::NAN, |e| e.mean).into());
                row.push(e.map_or(f64::NAN, |e| e.stderr).into());
            }
            t.push(row);
        }
        t
    }
}

/// Per-user centrality and mean MLE loss under both models, over trials
/// that keep the population fixed.
#[derive(Debug, Clone, PartialEq)]
pub struct UserLevelStudy {
    pub centrality: Vec<f64>,
    pub organic_loss: Vec<f64>,
    pub recommender_loss: Vec<f64>,
    pub organic: RankCorrelation,
    pub recommender: RankCorrelation,
}

pub fn user_level_study(
    engine: &Engine,
    population: &Population,
    noise: &NoiseSpec,
    trials: usize,
    k: usize,
    seed: u64,
) -> Result<UserLevelStudy> {
    let centrality = population
        .users
        .rows()
        .map(|u| centrality(u, &population.items, k))
        .collect::<Result<Vec<_>>>()?;
    let mut losses = Vec::with_capacity(2);
    for model in [Model::Organic, Model::Recommender] {
        let cfg = ExperimentConfig::empirical(model, EstimatorPolicy::Mle, population.clone(), noise.clone(), trials, seed);
        let batch = engine.run_batch(&cfg)?;
        losses.push(batch.aggregates.per_user_mean_loss.expect("fixed population"));
    }
    let recommender_loss = losses.pop().expect("two models");
    let organic_loss = losses.pop().expect("two models");
    Ok(UserLevelStudy {
        organic: spearman(&centrality, &organic_loss)?,
        recommender: spearman(&centrality, &recommender_loss)?,
        centrality,
        organic_loss,
        recommender_loss,
    })
}

impl UserLevelStudy {
    pub fn table(&self) -> Table {
        let mut t = Table::new(["user", "centrality", "org_mle_loss", "rec_mle_loss"]);
        for (i, ((c, o), r)) in self.centrality.iter().zip(&self.organic_loss).zip(&self.recommender_loss).enumerate() {
            t.push(vec![i.into(), (*c).into(), (*o).into(), (*r).into()]);
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        let n = n_grid();
        assert_eq!((n.len(), n[0], n[98]), (99, 4, 200));
        let a = alpha_grid();
        assert_eq!(a.len(), 19);
        assert!((a[0] - 0.05).abs() < 1e-15 && (a[18] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn convergence_rejects_unsorted_grid() {
        let base = ExperimentConfig::theorem(Variant::OrganicMle, &ScalarTheoremParams::default(), 10, 10, 0).unwrap();
        let engine = Engine::new(1).unwrap();
        assert!(convergence_sweep(&engine, &base, &[6, 4], SweepTrials::default()).is_err());
    }

    #[test]
    fn small_convergence_table() {
        let p = ScalarTheoremParams { m: 20, ..ScalarTheoremParams::default() };
        let base = ExperimentConfig::theorem(Variant::OrganicMle, &p, 10, 10, 0).unwrap();
        let engine = Engine::new(2).unwrap();
        let rows = convergence_sweep(&engine, &base, &[4, 6], SweepTrials { individual: 50, population: 5 }).unwrap();
        let t = ConvergenceRow::table(&rows);
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.columns.len(), 1 + 4 * 8);
        assert!(t.columns.contains(&"rec_map_pop_var".to_string()));
    }

    #[test]
    fn loss_table_without_overlay() {
        let engine = Engine::new(1).unwrap();
        let rows = loss_vs_position(&engine, &ScalarTheoremParams::default(), &[0.0, 1.0], 10, 0, 0).unwrap();
        assert!(rows.iter().all(|r| r.monte_carlo.is_none()));
        assert_eq!(rows[0].analytic[2], 0.5);
        let csv = LossRow::table(&rows).to_csv();
        assert!(csv.contains("NaN"));
    }
}
