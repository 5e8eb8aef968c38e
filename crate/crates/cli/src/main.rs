//! `matchsim`: closed-form tables, figure recipes and the embedding pipeline.

mod cfcmd;
mod config;
mod manifest;
mod recipes;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use matchsim_core::{predict, ScalarTheoremParams, Variant};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config file. Exit code 2.
    Config(String),
    /// Missing or malformed input data. Exit code 3.
    Input(String),
    /// Numeric failure, or `--verify` found different outputs. Exit code 4.
    Numeric(String),
    Other(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Input(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Input(m) | CliError::Numeric(m) | CliError::Other(m) => f.write_str(m),
        }
    }
}

impl From<matchsim_core::Error> for CliError {
    fn from(e: matchsim_core::Error) -> Self {
        use matchsim_core::Error as E;
        let msg = e.to_string();
        match e {
            E::InvalidInput(_) => CliError::Config(msg),
            E::Data(_) | E::Io { .. } => CliError::Input(msg),
            E::Numeric(_) | E::Degenerate(_) | E::Diverged { .. } => CliError::Numeric(msg),
            E::Resource(_) => CliError::Other(msg),
        }
    }
}

impl From<config::ConfigErrors> for CliError {
    fn from(e: config::ConfigErrors) -> Self {
        CliError::Config(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "matchsim", version, about = "Simulate organic and recommender-mediated item matching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the large-n limits of all four model variants.
    Theorems(TheoremArgs),
    /// Run a recipe config, or re-run a manifest and compare outputs.
    Simulate(simulate::SimulateArgs),
    /// Ratings ingest, embedding training and population export.
    #[command(subcommand)]
    Cf(cfcmd::CfCommand),
}

#[derive(Args, Debug)]
struct TheoremArgs {
    /// Variance of user positions.
    #[arg(long, default_value_t = 1.0)]
    sigma2_user: f64,
    /// Variance of item positions.
    #[arg(long, default_value_t = 1.0)]
    sigma2_item: f64,
    /// Noise variance of the user's item samples.
    #[arg(long, default_value_t = 0.5)]
    sigma2_i: f64,
    /// Noise variance of the system's user samples.
    #[arg(long, default_value_t = 0.5)]
    sigma2_r: f64,
    /// Number of users in the population.
    #[arg(long, default_value_t = 300)]
    m: usize,
    /// Position of the individual user.
    #[arg(long = "x", default_value_t = 0.75, allow_negative_numbers = true)]
    x_i: f64,
    /// Print CSV with full precision instead of an aligned table.
    #[arg(long)]
    csv: bool,
}

fn theorems(a: &TheoremArgs) -> Result<(), CliError> {
    let p = ScalarTheoremParams {
        sigma2_user: a.sigma2_user,
        sigma2_item: a.sigma2_item,
        sigma2_i: a.sigma2_i,
        sigma2_r: a.sigma2_r,
        m: a.m,
        x_i: a.x_i,
    };
    p.validate()?;
    if a.csv {
        println!("variant,expected_match,match_variance,expected_loss,population_variance");
    } else {
        println!("{:<9} {:>10} {:>10} {:>10} {:>10}", "variant", "E[y_k]", "Var[y_k]", "E[loss]", "Var[Y_k]");
    }
    for v in Variant::ALL {
        let t = predict(v, &p)?;
        if a.csv {
            println!(
                "{},{:?},{:?},{:?},{:?}",
                v.label(),
                t.expected_match,
                t.match_variance,
                t.expected_loss,
                t.population_variance
            );
        } else {
            println!(
                "{:<9} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
                v.label(),
                t.expected_match,
                t.match_variance,
                t.expected_loss,
                t.population_variance
            );
        }
    }
    Ok(())
}

/// A fresh directory `<root>/<label>-<UTC time>-seed<seed>`; never reuses one.
pub fn create_run_dir(root: &std::path::Path, label: &str, seed: u64) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(root).map_err(|e| CliError::Other(format!("cannot create {}: {e}", root.display())))?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
    let base = format!("{label}-{stamp}-seed{seed}");
    for k in 1.. {
        let name = if k == 1 { base.clone() } else { format!("{base}-{k}") };
        let dir = root.join(name);
        match std::fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(CliError::Other(format!("cannot create {}: {e}", dir.display()))),
        }
    }
    unreachable!()
}

pub fn default_workers() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Theorems(a) => theorems(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Cf(c) => cfcmd::run(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
