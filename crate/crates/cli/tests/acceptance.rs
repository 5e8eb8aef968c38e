//! End-to-end acceptance checks. Run with `cargo test --test acceptance`;
//! pass criterion numbers after `--` to run a subset.
//!
//! `MATCHSIM_MOVIELENS=/path/to/ratings.dat` enables the MovieLens checks.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use matchsim_core::cf::{self, RatingsMatrix, TrainConfig, TrainMode};
use matchsim_core::experiments::{
    alpha_grid, convergence_sweep, loss_vs_position, n_grid, shrinkage_sweep, user_level_study, ShrinkageRow, SweepTrials,
};
use matchsim_core::latent::{sample_gaussian_points, GaussianPrior};
use matchsim_core::metrics::Spread;
use matchsim_core::*;
use rand::Rng;

const SEED: u64 = 20240601;

/// Outcome of one criterion: detail lines plus pass, fail or skip.
struct Outcome {
    lines: Vec<String>,
    failures: usize,
    skipped: Option<String>,
}

impl Outcome {
    fn new() -> Self {
        Self { lines: Vec::new(), failures: 0, skipped: None }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        self.lines.push(format!("{} {what}", if ok { "ok  " } else { "FAIL" }));
        if !ok {
            self.failures += 1;
        }
    }

    fn info(&mut self, what: impl Into<String>) {
        self.lines.push(format!("     {}", what.into()));
    }

    fn skip(reason: impl Into<String>) -> Self {
        Self { skipped: Some(reason.into()), ..Self::new() }
    }
}

fn engine() -> Engine {
    Engine::new(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)).unwrap()
}

fn params() -> ScalarTheoremParams {
    ScalarTheoremParams {
        sigma2_user: 1.0,
        sigma2_item: 1.0,
        sigma2_i: 0.5,
        sigma2_r: 0.5,
        m: 300,
        x_i: 0.75,
    }
}

/// Closed forms worked by hand for `params()`: gains are
/// σ²/(σ² + σ²_noise) = 2/3 for both items and users.
fn hand_limits(v: Variant) -> (f64, f64, f64) {
    let (g, x) = (2.0 / 3.0, 0.75);
    let f = 299.0 / 300.0;
    match v {
        Variant::OrganicMle => (g * x, 1.0 / 3.0, f * (g * g + 1.0 / 3.0)),
        Variant::OrganicMap => (x, 1.0 / 3.0, f * (1.0 + 1.0 / 3.0)),
        Variant::RecommenderMle => (x, 0.5, f * 1.5),
        Variant::RecommenderMap => (g * x, g * g * 0.5, f * g),
    }
}

fn theorem_oracle() -> Outcome {
    let mut o = Outcome::new();
    let p = params();
    let quoted = [(0.5, 1.0 / 3.0), (0.75, 1.0 / 3.0), (0.75, 0.5), (0.5, 2.0 / 9.0)];
    let engine = engine();
    for (v, (mean, var)) in Variant::ALL.into_iter().zip(quoted) {
        let t = predict(v, &p).unwrap();
        let (hm, hv, _) = hand_limits(v);
        o.check(
            (t.expected_match - mean).abs() < 1e-12 && (t.match_variance - var).abs() < 1e-12,
            format!("{} closed form E={:.6} Var={:.6} (hand: {hm:.6}, {hv:.6})", v.label(), t.expected_match, t.match_variance),
        );
        let cfg = ExperimentConfig::theorem(v, &p, 50_000, 2000, SEED).unwrap();
        let agg = engine.run_batch(&cfg).unwrap().aggregates;
        let m = agg.match_mean.unwrap()[0];
        let s = agg.match_variance.unwrap()[0];
        o.check(
            (m.mean - t.expected_match).abs() <= 0.02,
            format!("{} mean {:.4} ± {:.4} vs {:.4} (±0.02)", v.label(), m.mean, m.stderr, t.expected_match),
        );
        o.check(
            ((s.mean - t.match_variance) / t.match_variance).abs() <= 0.05,
            format!("{} var {:.4} ± {:.4} vs {:.4} (5%)", v.label(), s.mean, s.stderr, t.match_variance),
        );
    }
    o
}

fn population_variance() -> Outcome {
    let mut o = Outcome::new();
    let p = params();
    let engine = engine();
    let mut mc = Vec::new();
    for v in Variant::ALL {
        let t = predict(v, &p).unwrap();
        let (_, _, hand) = hand_limits(v);
        o.check((t.population_variance - hand).abs() < 1e-12, format!("{} closed form {:.5} (hand {hand:.5})", v.label(), t.population_variance));
        let mut cfg = ExperimentConfig::theorem(v, &p, 20_000, 500, SEED).unwrap();
        cfg.fixed_user = None;
        let spread = engine.run_batch(&cfg).unwrap().aggregates.spread.unwrap();
        o.check(
            ((spread.mean - t.population_variance) / t.population_variance).abs() <= 0.05,
            format!("{} matched variance {:.4} ± {:.4} vs {:.4} (5%)", v.label(), spread.mean, spread.stderr, t.population_variance),
        );
        mc.push(spread.mean);
    }
    let [org_mle, org_map, rec_mle, rec_map] = mc[..] else { unreachable!() };
    o.check(
        rec_mle > org_map && org_map > org_mle && org_mle > rec_map,
        format!("ordering rec_mle {rec_mle:.4} > org_map {org_map:.4} > org_mle {org_mle:.4} > rec_map {rec_map:.4}"),
    );
    o
}

fn convergence() -> Outcome {
    let mut o = Outcome::new();
    let p = params();
    let engine = engine();
    let base = ExperimentConfig::theorem(Variant::OrganicMle, &p, 4, 2, SEED).unwrap();
    let rows = convergence_sweep(&engine, &base, &n_grid(), SweepTrials::default()).unwrap();
    let rec = Variant::ALL.iter().position(|&v| v == Variant::RecommenderMle).unwrap();
    let worst = rows
        .iter()
        .filter(|r| r.n >= 100)
        .map(|r| (r.n, (r.variants[rec].mean_match.mean - 0.75).abs()))
        .fold((0, 0.0), |a, b| if b.1 > a.1 { b } else { a });
    o.check(worst.1 <= 0.05, format!("rec_mle mean match within 0.05 of 0.75 for n >= 100 (worst {:.4} at n = {})", worst.1, worst.0));
    let at = |n: usize| rows.iter().find(|r| r.n == n).unwrap();
    for (k, v) in Variant::ALL.into_iter().enumerate() {
        let m10 = at(10).variants[k].mean_match.mean;
        let m200 = at(200).variants[k].mean_match.mean;
        o.check(0.0 < m10 && m10 < m200, format!("{} mean match 0 < {m10:.4} (n=10) < {m200:.4} (n=200)", v.label()));
    }
    for v in Variant::ALL {
        let mut cfg = ExperimentConfig::theorem(v, &p, 1, 50, SEED).unwrap();
        cfg.fixed_user = None;
        let batch = engine.run_batch(&cfg).unwrap();
        let exact = batch.per_trial.iter().all(|t| t.spread == Spread::Variance(0.0));
        o.check(exact, format!("{} n = 1 matched variance is exactly 0 in all 50 trials", v.label()));
    }
    o
}

fn loss_shape() -> Outcome {
    let mut o = Outcome::new();
    let xs: Vec<f64> = (0..=8).map(|k| k as f64 * 0.25).collect();
    let rows = loss_vs_position(&engine(), &params(), &xs, 50_000, 2000, SEED).unwrap();
    let org = Variant::ALL.iter().position(|&v| v == Variant::OrganicMle).unwrap();
    let rec = Variant::ALL.iter().position(|&v| v == Variant::RecommenderMle).unwrap();
    o.check(rows.iter().all(|r| (r.analytic[rec] - 0.5).abs() < 1e-12), "analytic rec_mle loss is 0.5 at every x");
    o.check(
        rows.windows(2).all(|w| w[1].analytic[org] > w[0].analytic[org]),
        format!(
            "analytic org_mle loss strictly increasing: {}",
            rows.iter().map(|r| format!("{:.4}", r.analytic[org])).collect::<Vec<_>>().join(" ")
        ),
    );
    let mut worst = (0.0f64, String::new());
    for r in &rows {
        for (k, v) in Variant::ALL.into_iter().enumerate() {
            let e = r.monte_carlo.as_ref().unwrap()[k];
            let z = (e.mean - r.analytic[k]) / e.stderr;
            if z.abs() > worst.0.abs() {
                worst = (z, format!("{} at x = {}", v.label(), r.x));
            }
            if z.abs() > 3.0 {
                o.info(format!("{} x = {}: {:.4} ± {:.4} vs {:.4}", v.label(), r.x, e.mean, e.stderr, r.analytic[k]));
            }
        }
    }
    o.check(worst.0.abs() <= 3.0, format!("Monte Carlo within 3 stderr at all 36 points (largest |z| = {:.2}, {})", worst.0.abs(), worst.1));
    o
}

fn spreads(rows: &[ShrinkageRow], model: Model) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mine: Vec<&ShrinkageRow> = rows.iter().filter(|r| r.model == model).collect();
    (
        mine.iter().map(|r| r.alpha).collect(),
        mine.iter().map(|r| r.spread.map_or(f64::NAN, |s| s.mean)).collect(),
        mine.iter().map(|r| r.mse.mean).collect(),
    )
}

fn argmin(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, i| if v[i] < v[b] { i } else { b })
}

/// Strict trend of the spread and an interior MSE minimum, for both models.
/// Returns the alpha of each model's MSE minimum.
fn shrinkage_shape(o: &mut Outcome, label: &str, rows: &[ShrinkageRow]) -> [f64; 2] {
    let mut minima = [0.0; 2];
    for (k, model) in [Model::Organic, Model::Recommender].into_iter().enumerate() {
        let (alphas, spread, mse) = spreads(rows, model);
        let increasing = spread.windows(2).all(|w| w[1] > w[0]);
        let decreasing = spread.windows(2).all(|w| w[1] < w[0]);
        let (ok, dir) = match model {
            Model::Organic => (increasing, "increasing"),
            Model::Recommender => (decreasing, "decreasing"),
        };
        o.check(
            ok,
            format!(
                "{label} {} spread strictly {dir} over {} alphas ({:.4} .. {:.4})",
                model.label(),
                alphas.len(),
                spread[0],
                spread[spread.len() - 1]
            ),
        );
        let i = argmin(&mse);
        minima[k] = alphas[i];
        o.check(
            i > 0 && i + 1 < mse.len(),
            format!("{label} {} MSE minimum is interior: alpha = {:.2}, mse = {:.4}", model.label(), alphas[i], mse[i]),
        );
        let degenerate: usize = rows.iter().filter(|r| r.model == model).map(|r| r.degenerate_trials).sum();
        if degenerate > 0 {
            o.info(format!("{label} {}: {degenerate} degenerate trial(s) excluded from the spread", model.label()));
        }
    }
    minima
}

/// Users and items drawn from `N(0, scale² I)` plus noise-free distance ratings.
fn planted_ratings(dim: usize, users: usize, items: usize, density: f64, seed: u64) -> (Vec<(u64, u64, f64)>, Points, Points) {
    let prior = GaussianPrior::new(vec![0.0; dim], Covariance::diagonal(&vec![0.25; dim]).unwrap()).unwrap();
    let mut rng = RngStream::new(seed, 0, Role::Aux).rng();
    let u = sample_gaussian_points(&prior, users, &mut rng).unwrap();
    let v = sample_gaussian_points(&prior, items, &mut rng).unwrap();
    let bias: Vec<f64> = (0..users).map(|_| rng.random_range(-0.3..0.3)).collect();
    let mut t = Vec::new();
    for (i, b) in bias.iter().enumerate() {
        for j in 0..items {
            if rng.random::<f64>() < density {
                t.push((i as u64, j as u64, 3.5 + b - latent::sq_dist(u.row(i), v.row(j))));
            }
        }
    }
    (t, u, v)
}

fn shrinkage() -> Outcome {
    let mut o = Outcome::new();
    let engine = engine();
    let mut base = ExperimentConfig::theorem(Variant::OrganicMle, &params(), 2514, 500, SEED).unwrap();
    base.fixed_user = None;
    base.m = 300;
    let rows = shrinkage_sweep(&engine, &base, &alpha_grid()).unwrap();
    shrinkage_shape(&mut o, "gaussian d=1", &rows);

    let (t, _, _) = planted_ratings(5, 800, 400, 0.2, SEED);
    let r = RatingsMatrix::from_triplets(&t).unwrap();
    let fit = cf::train(&r, &TrainConfig { epochs: 60, seed: SEED, ..TrainConfig::default() }).unwrap();
    o.info(format!("trained d=5 embeddings on {} ratings, rmse {:.4}", r.len(), cf::rmse(&fit.model, r.ratings())));
    let e = cf::export_population(&fit.model, 300, 0.5, RngStream::new(SEED, 0, Role::Bootstrap)).unwrap();
    let noise = NoiseSpec { item_noise: e.item_noise, user_noise: e.user_noise };
    let base = ExperimentConfig::empirical(Model::Organic, EstimatorPolicy::Mle, e.population.clone(), noise.clone(), 500, SEED);
    let rows = shrinkage_sweep(&engine, &base, &alpha_grid()).unwrap();
    shrinkage_shape(&mut o, "embeddings d=5", &rows);
    let study = user_level_study(&engine, &e.population, &noise, 500, 10, SEED).unwrap();
    o.info(format!(
        "embeddings d=5 centrality rank correlation: organic rho {:.3} (p {:.3}), recommender rho {:.3} (p {:.3})",
        study.organic.rho, study.organic.p_value, study.recommender.rho, study.recommender.p_value
    ));
    o
}

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = a.iter().chain(b).map(|x| x.abs()).fold(0.0, f64::max);
    diff / scale.max(1e-8)
}

fn finite_difference(model: &cf::EmbeddingModel, ratings: &[cf::Rating], lambda: f64) -> Vec<f64> {
    let h = 1e-5;
    let mut params: Vec<f64> = [model.users.as_flat(), model.items.as_flat(), &model.biases[..]].concat();
    let rebuild = |p: &[f64]| {
        let (nu, ni, d) = (model.n_users(), model.n_items(), model.dim());
        cf::EmbeddingModel {
            users: Points::from_flat(d, p[..nu * d].to_vec()).unwrap(),
            items: Points::from_flat(d, p[nu * d..(nu + ni) * d].to_vec()).unwrap(),
            biases: p[(nu + ni) * d..].to_vec(),
            ..model.clone()
        }
    };
    (0..params.len())
        .map(|k| {
            let orig = params[k];
            params[k] = orig + h;
            let up = cf::objective(&rebuild(&params), ratings, lambda);
            params[k] = orig - h;
            let down = cf::objective(&rebuild(&params), ratings, lambda);
            params[k] = orig;
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn cf_correctness() -> Outcome {
    let mut o = Outcome::new();
    let mut rng = RngStream::new(SEED, 0, Role::Aux).rng();
    let mut worst = 0.0f64;
    for case in 0..100u64 {
        let dim = rng.random_range(1..=4);
        let (nu, ni) = (rng.random_range(2..=8), rng.random_range(2..=8));
        let mut t = Vec::new();
        for i in 0..nu {
            for j in 0..ni {
                if rng.random::<f64>() < 0.6 {
                    t.push((i, j, rng.random_range(1.0..5.0)));
                }
            }
        }
        if t.is_empty() {
            t.push((0, 0, 3.0));
        }
        let r = RatingsMatrix::from_triplets(&t).unwrap();
        let mut coords = |count: usize| -> Points {
            Points::from_flat(dim, (0..count * dim).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
        };
        let (users, items) = (coords(r.n_users()), coords(r.n_items()));
        let model = cf::EmbeddingModel {
            users,
            items,
            biases: (0..r.n_users()).map(|_| rng.random_range(-0.5..0.5)).collect(),
            global_mean: r.global_mean(),
            config: TrainConfig { dim, seed: SEED + case, ..TrainConfig::default() },
        };
        let lambda = rng.random_range(0.0..0.2);
        let g = cf::gradient(&model, r.ratings(), lambda);
        let analytic = [g.users, g.items, g.biases].concat();
        worst = worst.max(relative_error(&analytic, &finite_difference(&model, r.ratings(), lambda)));
    }
    o.check(worst < 1e-5, format!("gradient vs central differences on 100 instances, worst relative error {worst:.2e}"));

    let (t, _, _) = planted_ratings(2, 150, 100, 0.5, SEED);
    let r = RatingsMatrix::from_triplets(&t).unwrap();
    let (train, test) = cf::train_test_split(&r, 0.1, SEED).unwrap();
    let cfg = TrainConfig { dim: 2, lambda: 1e-4, epochs: 200, decay: 0.95, decay_every: 20, seed: SEED, ..TrainConfig::default() };
    let fit = cf::train(&train, &cfg).unwrap();
    let heldout = cf::rmse(&fit.model, test.ratings());
    o.check(heldout <= 0.05, format!("planted model held-out rmse {heldout:.4} on {} ratings (<= 0.05)", test.len()));

    let (t, _, _) = planted_ratings(3, 60, 40, 0.4, SEED + 1);
    let r = RatingsMatrix::from_triplets(&t).unwrap();
    let cfg = TrainConfig { dim: 3, mode: TrainMode::FullBatch, learning_rate: 0.05, epochs: 300, seed: SEED, ..TrainConfig::default() };
    let trace = cf::train(&r, &cfg).unwrap().trace;
    let increases = trace.windows(2).filter(|w| w[1].1 > w[0].1).count();
    o.check(
        increases == 0,
        format!("full-batch objective non-increasing over {} epochs ({:.5} -> {:.5})", trace.len() - 1, trace[0].1, trace[trace.len() - 1].1),
    );
    o
}

fn movielens() -> Outcome {
    let Some(path) = std::env::var_os("MATCHSIM_MOVIELENS").map(PathBuf::from) else {
        return Outcome::skip("set MATCHSIM_MOVIELENS to the ml-1m ratings.dat");
    };
    let mut o = Outcome::new();
    let (raw, report) = cf::ingest_movielens(&path).unwrap();
    o.check(report.valid == 1_000_209, format!("ingested {} ratings ({} malformed)", report.valid, report.malformed));
    let filtered = cf::filter_matrix(&raw, 50, 50).unwrap();
    let counts_ok = filtered.n_users() == 4297 && filtered.n_items() == 2514;
    o.check(counts_ok, format!("single-pass filter keeps {} users and {} movies", filtered.n_users(), filtered.n_items()));
    if !counts_ok {
        let fix = cf::filter_matrix_fixpoint(&raw, 50, 50).unwrap();
        o.info(format!("fixpoint filter keeps {} users and {} movies", fix.n_users(), fix.n_items()));
    }
    let fit = cf::train(&filtered, &TrainConfig { seed: SEED, ..TrainConfig::default() }).unwrap();
    let e = cf::export_population(&fit.model, 300, 0.5, RngStream::new(SEED, 0, Role::Bootstrap)).unwrap();
    let noise = NoiseSpec { item_noise: e.item_noise, user_noise: e.user_noise };
    let base = ExperimentConfig::empirical(Model::Organic, EstimatorPolicy::Mle, e.population, noise, 500, SEED);
    let rows = shrinkage_sweep(&engine(), &base, &alpha_grid()).unwrap();
    let mut shape = Outcome::new();
    let minima = shrinkage_shape(&mut shape, "movielens", &rows);
    o.lines.extend(shape.lines.into_iter().map(|l| format!("     (soft) {}", l.trim_start())));
    o.info(format!(
        "(soft) MSE minima at alpha {:.2} (organic) and {:.2} (recommender); band [0.25, 0.55] {}",
        minima[0],
        minima[1],
        if minima.iter().all(|a| (0.25..=0.55).contains(a)) { "met" } else { "missed" }
    ));
    o
}

fn matchsim(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_matchsim")).args(args).output().expect("run matchsim");
    assert!(
        out.status.success(),
        "matchsim {args:?} failed: {}\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn run_dir(stdout: &str) -> PathBuf {
    let line = stdout.lines().rev().find_map(|l| l.strip_prefix("wrote ")).expect("run directory");
    PathBuf::from(line)
}

fn csv_files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

fn determinism() -> Outcome {
    let mut o = Outcome::new();
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let s = |p: &Path| p.to_str().unwrap().to_string();

    let (t, _, _) = planted_ratings(3, 120, 80, 0.5, SEED);
    let mut text = String::from("user_id,item_id,rating\n");
    for (u, i, r) in &t {
        text.push_str(&format!("{u},{i},{r}\n"));
    }
    let ratings = root.join("ratings.csv");
    std::fs::write(&ratings, text).unwrap();
    let cf_out = root.join("cf");
    let train = run_dir(&matchsim(&[
        "cf", "train", "--ratings", &s(&ratings), "--min-user", "5", "--min-item", "5", "--dim", "3", "--epochs", "30",
        "--holdout", "0.1", "--seed", "7", "--out", &s(&cf_out),
    ]));
    let export = run_dir(&matchsim(&[
        "cf", "export", "--users", &s(&train.join("users.csv")), "--items", &s(&train.join("items.csv")), "--m-test", "40",
        "--seed", "7", "--out", &s(&cf_out),
    ]));
    let recipes = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../recipes");
    let embeddings_cfg = root.join("fig8-embeddings.toml");
    std::fs::write(
        &embeddings_cfg,
        format!(
            "recipe = \"fig8\"\nseed = 11\n[fig8]\nsource = \"embeddings\"\nusers = \"{}\"\nitems = \"{}\"\nm = 40\n",
            s(&train.join("users.csv")),
            s(&train.join("items.csv"))
        ),
    )
    .unwrap();
    let configs: Vec<(String, PathBuf)> = ["fig3", "fig4", "fig6", "fig8"]
        .iter()
        .map(|r| (r.to_string(), recipes.join(format!("{r}.toml"))))
        .chain([("fig8-embeddings".to_string(), embeddings_cfg)])
        .collect();

    let mut manifests = vec![train, export];
    for (name, cfg) in &configs {
        let mut runs = Vec::new();
        for w in ["1", "4", "16"] {
            let out = root.join(format!("w{w}"));
            let dir = run_dir(&matchsim(&["simulate", &s(cfg), "--trials", "20", "--workers", w, "--out", &s(&out)]));
            runs.push(csv_files(&dir));
            manifests.push(dir);
        }
        let same = runs.iter().all(|r| *r == runs[0]);
        o.check(
            same && !runs[0].is_empty(),
            format!("{name}: {} csv file(s) byte-identical across 1, 4 and 16 workers", runs[0].len()),
        );
    }
    let mut failed = Vec::new();
    for dir in &manifests {
        let out = Command::new(env!("CARGO_BIN_EXE_matchsim"))
            .args(["simulate", "--verify", &s(dir), "--workers", "2"])
            .output()
            .unwrap();
        if !out.status.success() {
            failed.push(dir.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    o.check(failed.is_empty(), format!("--verify passes on {} manifests {failed:?}", manifests.len()));
    o
}

/// At large n the organic loss grows with distance from the items while the
/// recommender loss does not depend on position.
fn rank_correlation() -> Outcome {
    let mut o = Outcome::new();
    let prior = GaussianPrior::new(vec![0.0], Covariance::scalar(1.0).unwrap()).unwrap();
    let mut rng = RngStream::new(SEED, 0, Role::Aux).rng();
    let users = sample_gaussian_points(&prior, 300, &mut rng).unwrap();
    let items = sample_gaussian_points(&prior, 20_000, &mut rng).unwrap();
    let pop = Population::new(users, items, PopulationSource::Empirical { provenance: "gaussian".into() }).unwrap();
    let noise = NoiseSpec { item_noise: Covariance::scalar(0.5).unwrap(), user_noise: Covariance::scalar(0.5).unwrap() };
    let study = user_level_study(&engine(), &pop, &noise, 500, 10, SEED).unwrap();
    o.check(
        study.organic.rho > 0.0 && study.organic.p_value < 0.05,
        format!("organic loss rises with centrality distance: rho {:.3}, p {:.2e}", study.organic.rho, study.organic.p_value),
    );
    o.check(
        study.recommender.p_value >= 0.05,
        format!("recommender loss shows no trend: rho {:.3}, p {:.3}", study.recommender.rho, study.recommender.p_value),
    );
    o
}

type Criterion = (&'static str, &'static str, fn() -> Outcome);

fn main() {
    let all: [Criterion; 9] = [
        ("1", "theorem-oracle agreement", theorem_oracle),
        ("2", "population-variance agreement", population_variance),
        ("3", "finite-n convergence", convergence),
        ("4", "loss against position", loss_shape),
        ("5", "shrinkage divergence", shrinkage),
        ("6", "embedding training correctness", cf_correctness),
        ("7", "MovieLens pipeline", movielens),
        ("8", "determinism and --verify", determinism),
        ("rank", "user-level rank correlation", rank_correlation),
    ];
    let wanted: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut summary = Vec::new();
    for (id, name, f) in all {
        if !wanted.is_empty() && !wanted.iter().any(|w| w == id) {
            continue;
        }
        let clock = Instant::now();
        let o = f();
        let secs = clock.elapsed().as_secs_f64();
        let status = match (&o.skipped, o.failures) {
            (Some(_), _) => "SKIP",
            (None, 0) => "PASS",
            (None, _) => "FAIL",
        };
        for l in &o.lines {
            println!("    [{id}] {l}");
        }
        let extra = o.skipped.as_deref().map(|r| format!(" ({r})")).unwrap_or_default();
        let line = format!("{status} criterion {id}: {name}{extra} [{secs:.1}s]");
        println!("{line}\n");
        summary.push((status, line));
    }
    println!("acceptance summary:");
    for (_, line) in &summary {
        println!("  {line}");
    }
    let failed = summary.iter().filter(|(s, _)| *s == "FAIL").count();
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
