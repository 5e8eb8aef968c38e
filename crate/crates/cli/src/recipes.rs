use std::path::{Path, PathBuf};

use matchsim_core::experiments::{
    convergence_sweep, loss_vs_position, population_variance_sweep, shrinkage_sweep, user_level_study,
    ConvergenceRow, LossRow, McOverlay, PopulationSweepRow, ShrinkageRow, SweepAxis, SweepTrials, Table,
};
use matchsim_core::{cf, io, Engine, EstimatorPolicy, ExperimentConfig, Model, NoiseSpec, Role, RngStream, Variant};

use crate::config::{RunConfig, Source};
use crate::CliError;

/// `min, min + step, ...` up to `max` inclusive, tolerating rounding in the
/// last step.
pub fn grid(min: f64, max: f64, step: f64) -> Vec<f64> {
    let count = ((max - min) / step + 1e-9).floor() as usize;
    (0..=count).map(|k| min + k as f64 * step).collect()
}

fn write(table: &Table, dir: &Path, name: &str, written: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let path = dir.join(name);
    table.write_csv(&path)?;
    written.push(path);
    Ok(())
}

/// Runs the configured recipe into `dir` and returns the files written.
pub fn run(cfg: &RunConfig, engine: &Engine, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let params = cfg.params.theorem();
    let mut written = Vec::new();
    if let Some(f) = &cfg.fig3 {
        let xs = grid(f.x_min, f.x_max, f.x_step);
        let rows = loss_vs_position(engine, &params, &xs, f.n, f.trials, cfg.seed)?;
        write(&LossRow::table(&rows), dir, "loss_vs_position.csv", &mut written)?;
    }
    if let Some(f) = &cfg.fig4 {
        let values = grid(f.min, f.max, f.step);
        let overlay = (f.overlay_n > 0).then_some(McOverlay {
            n: f.overlay_n,
            trials: f.overlay_trials,
            seed: cfg.seed,
        });
        let mut rows = population_variance_sweep(engine, &params, SweepAxis::SigmaUser, &values, overlay)?;
        rows.extend(population_variance_sweep(engine, &params, SweepAxis::SigmaItem, &values, overlay)?);
        write(&PopulationSweepRow::table(&rows), dir, "population_sweep.csv", &mut written)?;
    }
    if let Some(f) = &cfg.fig6 {
        let base = ExperimentConfig::theorem(Variant::OrganicMle, &params, f.n_min, 2, cfg.seed)?;
        let ns: Vec<usize> = (f.n_min..=f.n_max).step_by(f.n_step).collect();
        let trials = SweepTrials {
            individual: f.individual_trials,
            population: f.population_trials,
        };
        let rows = convergence_sweep(engine, &base, &ns, trials)?;
        write(&ConvergenceRow::table(&rows), dir, "convergence.csv", &mut written)?;
    }
    if let Some(f) = &cfg.fig8 {
        let base = match f.source {
            Source::Synthetic => {
                let mut base = ExperimentConfig::theorem(Variant::OrganicMle, &params, f.n, f.trials, cfg.seed)?;
                base.fixed_user = None;
                base.m = f.m;
                base
            }
            Source::Embeddings => {
                let users = f.users.as_ref().expect("validated");
                let items = f.items.as_ref().expect("validated");
                let (user_points, _) = io::load_embeddings(users)?;
                let (item_points, _) = io::load_embeddings(items)?;
                let stream = RngStream::new(cfg.seed, 0, Role::Bootstrap);
                let exported = cf::export_embeddings(&user_points, &item_points, f.m, f.noise_scale, stream)?;
                let path = dir.join("test_users.csv");
                io::save_embeddings(&path, &exported.population.users, None)?;
                written.push(path);
                let noise = NoiseSpec {
                    item_noise: exported.item_noise,
                    user_noise: exported.user_noise,
                };
                ExperimentConfig::empirical(Model::Organic, EstimatorPolicy::Mle, exported.population, noise, f.trials, cfg.seed)
            }
        };
        let rows = shrinkage_sweep(engine, &base, &f.alphas)?;
        write(&ShrinkageRow::table(&rows), dir, "shrinkage.csv", &mut written)?;
        if f.user_study {
            let matchsim_core::PopulationSpec::Empirical(population) = &base.population else {
                unreachable!("user study is validated to need embeddings");
            };
            let study = user_level_study(engine, population, &base.noise, f.trials, f.centrality_k, cfg.seed)?;
            write(&study.table(), dir, "user_level.csv", &mut written)?;
            let mut t = Table::new(["model", "spearman_rho", "p_value"]);
            t.push(vec!["organic".into(), study.organic.rho.into(), study.organic.p_value.into()]);
            t.push(vec!["recommender".into(), study.recommender.rho.into(), study.recommender.p_value.into()]);
            write(&t, dir, "rank_correlation.csv", &mut written)?;
        }
    }
    Ok(written)
}
