use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Subcommand, ValueEnum};
use matchsim_core::cf::{self, IngestReport, RatingsMatrix, TrainConfig, TrainMode};
use matchsim_core::{io, Points, Role, RngStream};
use serde::{Deserialize, Serialize};

use crate::manifest::{digests, RunManifest};
use crate::{create_run_dir, CliError};

const FORMAT_HELP: &str = "expected either MovieLens `UserID::MovieID::Rating::Timestamp` lines \
(ratings.dat from https://grouplens.org/datasets/movielens/1m/) or a CSV with header `user_id,item_id,rating`";

#[derive(Subcommand, Debug)]
pub enum CfCommand {
    /// Filter a ratings file and train user and item embeddings.
    Train(TrainArgs),
    /// Bootstrap test users from trained embeddings and derive noise covariances.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    /// Infer from the extension: `.csv` is CSV, anything else MovieLens.
    Auto,
    Movielens,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Sgd,
    FullBatch,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Ratings file.
    #[arg(long)]
    pub ratings: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Auto)]
    pub format: Format,
    /// Drop users with fewer ratings than this.
    #[arg(long, default_value_t = 50)]
    pub min_user: usize,
    /// Then drop items with fewer ratings than this.
    #[arg(long, default_value_t = 50)]
    pub min_item: usize,
    /// Repeat the user and item filters until both thresholds hold.
    #[arg(long)]
    pub fixpoint: bool,
    #[arg(long, default_value_t = 5)]
    pub dim: usize,
    /// Regularization weight.
    #[arg(long, default_value_t = 0.05)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.01)]
    pub learning_rate: f64,
    /// Learning-rate factor applied every `--decay-every` epochs (SGD).
    #[arg(long, default_value_t = 0.9)]
    pub decay: f64,
    #[arg(long, default_value_t = 10)]
    pub decay_every: usize,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    /// Standard deviation of the initial coordinates.
    #[arg(long, default_value_t = 0.1)]
    pub init_scale: f64,
    #[arg(long, value_enum, default_value_t = Mode::Sgd)]
    pub mode: Mode,
    /// Hold out this fraction of ratings and report their RMSE; 0 trains on all.
    #[arg(long, default_value_t = 0.0)]
    pub holdout: f64,
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    pub seed: u64,
    /// Directory that receives the run directory.
    #[arg(long, default_value = "runs")]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ExportArgs {
    /// User embeddings CSV from `cf train`.
    #[arg(long)]
    pub users: PathBuf,
    /// Item embeddings CSV from `cf train`.
    #[arg(long)]
    pub items: PathBuf,
    /// Number of test users to bootstrap.
    #[arg(long, default_value_t = 300)]
    pub m_test: usize,
    /// Noise covariances are this multiple of the empirical covariances.
    #[arg(long, default_value_t = 0.5)]
    pub noise_scale: f64,
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    pub seed: u64,
    #[arg(long, default_value = "runs")]
    #[serde(skip)]
    pub out: PathBuf,
}

pub fn run(c: &CfCommand) -> Result<(), CliError> {
    let clock = Instant::now();
    let started_at = chrono::Utc::now().to_rfc3339();
    let (label, seed, root, toml_text, json, inputs) = match c {
        CfCommand::Train(a) => {
            let a = TrainArgs { ratings: absolute(&a.ratings)?, ..a.clone() };
            let text = toml::to_string(&a).expect("args serialize");
            ("cf-train", a.seed, c_out(c), text, serde_json::to_value(&a).expect("json"), vec![a.ratings.clone()])
        }
        CfCommand::Export(a) => {
            let a = ExportArgs { users: absolute(&a.users)?, items: absolute(&a.items)?, ..a.clone() };
            let text = toml::to_string(&a).expect("args serialize");
            let inputs = vec![a.users.clone(), a.items.clone()];
            ("cf-export", a.seed, c_out(c), text, serde_json::to_value(&a).expect("json"), inputs)
        }
    };
    let dir = create_run_dir(&root, label, seed)?;
    let outputs = match c {
        CfCommand::Train(_) => train(&toml::from_str(&toml_text).expect("round trip"), &dir, true)?,
        CfCommand::Export(_) => export(&toml::from_str(&toml_text).expect("round trip"), &dir)?,
    };
    let manifest = RunManifest {
        tool: "matchsim".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        git_describe: crate::manifest::git_describe().into(),
        command: label.into(),
        seed,
        config_toml: toml_text,
        config: json,
        workers: 1,
        config_file: None,
        inputs: digests(&inputs, None)?,
        outputs: digests(&outputs, Some(&dir))?,
        started_at,
        duration_secs: clock.elapsed().as_secs_f64(),
    };
    manifest.write(&dir)?;
    println!("wrote {}", dir.display());
    Ok(())
}

fn c_out(c: &CfCommand) -> PathBuf {
    match c {
        CfCommand::Train(a) => a.out.clone(),
        CfCommand::Export(a) => a.out.clone(),
    }
}

fn absolute(p: &Path) -> Result<PathBuf, CliError> {
    std::fs::canonicalize(p).map_err(|e| CliError::Input(format!("cannot open {}: {e}; {FORMAT_HELP}", p.display())))
}

pub fn rerun(m: &RunManifest, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let bad = |e: toml::de::Error| CliError::Input(format!("manifest config is malformed: {e}"));
    match m.command.as_str() {
        "cf-train" => train(&toml::from_str(&m.config_toml).map_err(bad)?, dir, false),
        "cf-export" => export(&toml::from_str(&m.config_toml).map_err(bad)?, dir),
        other => Err(CliError::Input(format!("not a cf command: {other}"))),
    }
}

fn ingest(a: &TrainArgs) -> Result<(RatingsMatrix, IngestReport), CliError> {
    let as_csv = match a.format {
        Format::Csv => true,
        Format::Movielens => false,
        Format::Auto => a.ratings.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")),
    };
    let result = if as_csv { cf::ingest_ratings_csv(&a.ratings) } else { cf::ingest_movielens(&a.ratings) };
    result.map_err(|e| match e {
        matchsim_core::Error::Io { .. } | matchsim_core::Error::Data(_) => CliError::Input(format!("{e}; {FORMAT_HELP}")),
        other => other.into(),
    })
}

fn write_ids(path: &Path, header: &str, ids: &[u64]) -> Result<(), CliError> {
    let mut text = format!("{header}\n");
    for id in ids {
        text.push_str(&format!("{id}\n"));
    }
    std::fs::write(path, text).map_err(|e| CliError::Other(format!("cannot write {}: {e}", path.display())))
}

fn train(a: &TrainArgs, dir: &Path, verbose: bool) -> Result<Vec<PathBuf>, CliError> {
    let (raw, report) = ingest(a)?;
    let filtered = if a.fixpoint {
        cf::filter_matrix_fixpoint(&raw, a.min_user, a.min_item)?
    } else {
        cf::filter_matrix(&raw, a.min_user, a.min_item)?
    };
    if verbose {
        println!("ratings={} malformed={}", report.valid, report.malformed);
        for (line, text) in &report.malformed_samples {
            println!("  malformed line {line}: {text}");
        }
        println!("users={} items={} ratings={}", filtered.n_users(), filtered.n_items(), filtered.len());
    }
    let cfg = TrainConfig {
        dim: a.dim,
        lambda: a.lambda,
        learning_rate: a.learning_rate,
        decay: a.decay,
        decay_every: a.decay_every,
        epochs: a.epochs,
        init_scale: a.init_scale,
        seed: a.seed,
        mode: match a.mode {
            Mode::Sgd => TrainMode::Sgd,
            Mode::FullBatch => TrainMode::FullBatch,
        },
    };
    let (train_set, test_set) = if a.holdout > 0.0 {
        let (tr, te) = cf::train_test_split(&filtered, a.holdout, a.seed)?;
        (tr, Some(te))
    } else {
        (filtered.clone(), None)
    };
    let fit = cf::train(&train_set, &cfg)?;
    let train_rmse = cf::rmse(&fit.model, train_set.ratings());
    let test_rmse = test_set.as_ref().map(|t| cf::rmse(&fit.model, t.ratings()));
    if verbose {
        let last = fit.trace.last().map_or(f64::NAN, |t| t.1);
        println!("final objective={last:.6} train_rmse={train_rmse:.6}");
        if let Some(r) = test_rmse {
            println!("heldout_rmse={r:.6}");
        }
    }

    let mut written = Vec::new();
    let mut out = |name: &str| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };
    io::save_embeddings(out("users.csv"), &fit.model.users, Some(&fit.model.biases))?;
    io::save_embeddings(out("items.csv"), &fit.model.items, None)?;
    write_ids(&out("user_ids.csv"), "user_id", filtered.user_ids())?;
    write_ids(&out("item_ids.csv"), "item_id", filtered.item_ids())?;
    let trace_path = out("trace.csv");
    let file = std::fs::File::create(&trace_path).map_err(|e| CliError::Other(format!("cannot write trace: {e}")))?;
    io::write_trace(std::io::BufWriter::new(file), &fit.trace)?;
    let summary = serde_json::json!({
        "ingested_ratings": report.valid,
        "malformed_lines": report.malformed,
        "users": filtered.n_users(),
        "items": filtered.n_items(),
        "filtered_ratings": filtered.len(),
        "global_mean": fit.model.global_mean,
        "final_objective": fit.trace.last().map(|t| t.1),
        "train_rmse": train_rmse,
        "heldout_rmse": test_rmse,
    });
    let report_path = out("report.json");
    std::fs::write(&report_path, serde_json::to_string_pretty(&summary).expect("json") + "\n")
        .map_err(|e| CliError::Other(format!("cannot write report: {e}")))?;
    Ok(written)
}

fn export(a: &ExportArgs, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let (users, biases) = io::load_embeddings(&a.users)?;
    let (items, _) = io::load_embeddings(&a.items)?;
    let e = cf::export_embeddings(&users, &items, a.m_test, a.noise_scale, RngStream::new(a.seed, 0, Role::Bootstrap))?;
    let mut written = Vec::new();
    let mut out = |name: &str| {
        let p = dir.join(name);
        written.push(p.clone());
        p
    };
    let test_biases: Option<Vec<f64>> = biases.map(|b| e.user_indices.iter().map(|&i| b[i]).collect());
    io::save_embeddings(out("test_users.csv"), &e.population.users, test_biases.as_deref())?;
    io::save_embeddings(out("items.csv"), &e.population.items, None)?;
    let d = items.dim();
    let cov_points = |c: &matchsim_core::Covariance| Points::from_flat(d, c.as_row_major().to_vec());
    io::save_embeddings(out("item_noise.csv"), &cov_points(&e.item_noise)?, None)?;
    io::save_embeddings(out("user_noise.csv"), &cov_points(&e.user_noise)?, None)?;
    write_ids(
        &out("test_user_rows.csv"),
        "row",
        &e.user_indices.iter().map(|&i| i as u64).collect::<Vec<_>>(),
    )?;
    Ok(written)
}
