use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use matchsim_core::Engine;

use crate::config::{self, RunConfig};
use crate::manifest::{digests, sha256_file, RunManifest};
use crate::{cfcmd, create_run_dir, default_workers, recipes, CliError};

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("input").required(true).args(["config", "verify"]))]
pub struct SimulateArgs {
    /// Recipe config file (TOML).
    config: Option<PathBuf>,
    /// Re-run the command recorded in a manifest and compare output digests.
    #[arg(long, value_name = "MANIFEST", conflicts_with_all = ["out", "seed", "trials"])]
    verify: Option<PathBuf>,
    /// Directory that receives the run directory.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Worker threads. Results do not depend on this.
    #[arg(long, env = "MATCHSIM_WORKERS")]
    workers: Option<usize>,
    /// Override the config's master seed.
    #[arg(long, value_parser = clap::value_parser!(u64).range(..=i64::MAX as u64))]
    seed: Option<u64>,
    /// Override every trial count of the recipe.
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    trials: Option<u64>,
}

pub(crate) fn engine(workers: Option<usize>) -> Result<Engine, CliError> {
    let w = workers.unwrap_or_else(default_workers);
    if w == 0 {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    Ok(Engine::new(w)?)
}

pub fn run(a: &SimulateArgs) -> Result<(), CliError> {
    let engine = engine(a.workers)?;
    if let Some(m) = &a.verify {
        return verify(m, &engine);
    }
    let path = a.config.as_ref().expect("clap requires config or --verify");
    let mut cfg = config::load(path)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(t) = a.trials {
        cfg.override_trials(t as usize);
    }
    let dir = create_run_dir(&a.out, cfg.recipe.name(), cfg.seed)?;
    let started_at = chrono::Utc::now().to_rfc3339();
    let clock = Instant::now();
    let outputs = recipes::run(&cfg, &engine, &dir)?;
    let manifest = RunManifest {
        tool: "matchsim".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        git_describe: crate::manifest::git_describe().into(),
        command: "simulate".into(),
        seed: cfg.seed,
        config_toml: cfg.to_toml(),
        config: serde_json::to_value(&cfg).expect("config serializes"),
        workers: engine.workers(),
        config_file: digests(std::slice::from_ref(path), None)?.pop(),
        inputs: digests(&cfg.input_files(), None)?,
        outputs: digests(&outputs, Some(&dir))?,
        started_at,
        duration_secs: clock.elapsed().as_secs_f64(),
    };
    manifest.write(&dir)?;
    for o in &manifest.outputs {
        println!("{}", o.path);
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn rerun_simulate(m: &RunManifest, engine: &Engine, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let cfg: RunConfig = config::parse(&m.config_toml, Path::new("/"))?;
    recipes::run(&cfg, engine, dir)
}

/// Re-executes the manifest's command in a scratch directory. Input files
/// must be unchanged and every output must match its recorded digest.
pub fn verify(path: &Path, engine: &Engine) -> Result<(), CliError> {
    let path = if path.is_dir() { path.join(crate::manifest::FILE_NAME) } else { path.to_path_buf() };
    let m = RunManifest::read(&path)?;
    for input in &m.inputs {
        let now = sha256_file(Path::new(&input.path))?;
        if now != input.sha256 {
            return Err(CliError::Input(format!("input {} changed since the run", input.path)));
        }
    }
    let scratch = tempfile::tempdir().map_err(|e| CliError::Other(format!("cannot create scratch dir: {e}")))?;
    let dir = scratch.path();
    let written = match m.command.as_str() {
        "simulate" => rerun_simulate(&m, engine, dir)?,
        "cf-train" | "cf-export" => cfcmd::rerun(&m, dir)?,
        other => return Err(CliError::Input(format!("manifest has unknown command `{other}`"))),
    };
    let fresh = digests(&written, Some(dir))?;
    let mut mismatches = 0;
    for expected in &m.outputs {
        match fresh.iter().find(|f| f.path == expected.path) {
            Some(f) if f.sha256 == expected.sha256 => println!("ok       {}", expected.path),
            Some(_) => {
                mismatches += 1;
                println!("MISMATCH {}", expected.path);
            }
            None => {
                mismatches += 1;
                println!("MISSING  {}", expected.path);
            }
        }
    }
    for f in fresh.iter().filter(|f| !m.outputs.iter().any(|e| e.path == f.path)) {
        mismatches += 1;
        println!("EXTRA    {}", f.path);
    }
    if mismatches > 0 {
        return Err(CliError::Numeric(format!("{mismatches} output(s) differ from {}", path.display())));
    }
    println!("verified {} output(s)", m.outputs.len());
    Ok(())
}
