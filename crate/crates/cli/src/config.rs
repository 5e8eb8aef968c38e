//! Recipe configuration files.
//!
//! A config is a TOML file with a top-level `recipe` and `seed`, a shared
//! `[params]` table and one table named after the recipe. Every problem in
//! a file is collected before reporting, including unknown keys.

use std::path::{Path, PathBuf};

use matchsim_core::ScalarTheoremParams;
use serde::Serialize;
use toml::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Recipe {
    Fig3,
    Fig4,
    Fig6,
    Fig8,
}

impl Recipe {
    pub const ALL: [Recipe; 4] = [Recipe::Fig3, Recipe::Fig4, Recipe::Fig6, Recipe::Fig8];

    pub fn name(self) -> &'static str {
        match self {
            Recipe::Fig3 => "fig3",
            Recipe::Fig4 => "fig4",
            Recipe::Fig6 => "fig6",
            Recipe::Fig8 => "fig8",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Params {
    pub sigma2_user: f64,
    pub sigma2_item: f64,
    pub sigma2_i: f64,
    pub sigma2_r: f64,
    pub m: usize,
    pub x_i: f64,
}

impl Params {
    pub fn theorem(&self) -> ScalarTheoremParams {
        ScalarTheoremParams {
            sigma2_user: self.sigma2_user,
            sigma2_item: self.sigma2_item,
            sigma2_i: self.sigma2_i,
            sigma2_r: self.sigma2_r,
            m: self.m,
            x_i: self.x_i,
        }
    }
}

/// Expected loss against user position.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig3 {
    pub x_min: f64,
    pub x_max: f64,
    pub x_step: f64,
    pub n: usize,
    /// Monte Carlo trials per grid point and variant; 0 skips the overlay.
    pub trials: usize,
}

/// Large-`n` matched variance as the user or item variance moves.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig4 {
    pub min: f64,
    pub max: f64,
    pub step: f64,
    /// Items per trial of the Monte Carlo overlay; 0 skips it.
    pub overlay_n: usize,
    pub overlay_trials: usize,
}

/// Finite-`n` convergence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig6 {
    pub n_min: usize,
    pub n_max: usize,
    pub n_step: usize,
    pub individual_trials: usize,
    pub population_trials: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Synthetic,
    Embeddings,
}

/// Shrinkage sweep, plus a per-user study on embeddings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig8 {
    pub source: Source,
    pub alphas: Vec<f64>,
    pub trials: usize,
    /// Users per trial; bootstrapped test users for embeddings.
    pub m: usize,
    /// Items per trial for the synthetic source.
    pub n: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub users: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub items: Option<PathBuf>,
    pub noise_scale: f64,
    pub user_study: bool,
    pub centrality_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub recipe: Recipe,
    pub seed: u64,
    pub params: Params,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fig3: Option<Fig3>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fig4: Option<Fig4>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fig6: Option<Fig6>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fig8: Option<Fig8>,
}

/// Every schema violation found in one file.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<String>);

impl std::fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{} configuration error(s):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

struct Section<'e> {
    name: String,
    table: Table,
    errors: &'e mut Vec<String>,
}

impl<'e> Section<'e> {
    fn new(name: &str, table: Table, errors: &'e mut Vec<String>) -> Self {
        Self {
            name: name.to_string(),
            table,
            errors,
        }
    }

    fn key(&self, key: &str) -> String {
        if self.name.is_empty() {
            key.to_string()
        } else {
            format!("{}.{key}", self.name)
        }
    }

    fn bad(&mut self, key: &str, expected: &str, got: &Value) {
        let k = self.key(key);
        self.errors.push(format!("`{k}` must be {expected}, got {got}"));
    }

    fn f64(&mut self, key: &str, default: f64) -> f64 {
        match self.table.remove(key) {
            None => default,
            Some(Value::Float(v)) => v,
            Some(Value::Integer(v)) => v as f64,
            Some(other) => {
                self.bad(key, "a number", &other);
                default
            }
        }
    }

    fn positive(&mut self, key: &str, default: f64) -> f64 {
        let v = self.f64(key, default);
        if !(v > 0.0 && v.is_finite()) {
            let k = self.key(key);
            self.errors.push(format!("`{k}` must be positive, got {v}"));
        }
        v
    }

    fn u64(&mut self, key: &str, default: u64) -> u64 {
        match self.table.remove(key) {
            None => default,
            Some(Value::Integer(v)) if v >= 0 => v as u64,
            Some(other) => {
                self.bad(key, "a non-negative integer", &other);
                default
            }
        }
    }

    fn usize(&mut self, key: &str, default: usize) -> usize {
        self.u64(key, default as u64) as usize
    }

    fn at_least(&mut self, key: &str, default: usize, min: usize) -> usize {
        let v = self.usize(key, default);
        if v < min {
            let k = self.key(key);
            self.errors.push(format!("`{k}` must be at least {min}, got {v}"));
        }
        v
    }

    fn bool(&mut self, key: &str, default: bool) -> bool {
        match self.table.remove(key) {
            None => default,
            Some(Value::Boolean(v)) => v,
            Some(other) => {
                self.bad(key, "true or false", &other);
                default
            }
        }
    }

    fn string(&mut self, key: &str) -> Option<String> {
        match self.table.remove(key) {
            None => None,
            Some(Value::String(s)) => Some(s),
            Some(other) => {
                self.bad(key, "a string", &other);
                None
            }
        }
    }

    fn f64_list(&mut self, key: &str) -> Option<Vec<f64>> {
        let value = self.table.remove(key)?;
        let Value::Array(items) = &value else {
            self.bad(key, "an array of numbers", &value);
            return None;
        };
        let mut out = Vec::with_capacity(items.len());
        for item in items {
            match item {
                Value::Float(v) => out.push(*v),
                Value::Integer(v) => out.push(*v as f64),
                _ => {
                    self.bad(key, "an array of numbers", &value);
                    return None;
                }
            }
        }
        Some(out)
    }

    fn finish(self) {
        let mut unknown: Vec<String> = self.table.keys().map(|k| self.key(k)).collect();
        unknown.sort();
        for k in unknown {
            self.errors.push(format!("unknown key `{k}`"));
        }
    }
}

fn take_table(root: &mut Table, name: &str, errors: &mut Vec<String>) -> Option<Table> {
    match root.remove(name) {
        None => None,
        Some(Value::Table(t)) => Some(t),
        Some(other) => {
            errors.push(format!("`{name}` must be a table, got {other}"));
            None
        }
    }
}

fn resolve(base: &Path, p: String) -> PathBuf {
    let p = PathBuf::from(p);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

/// Parses config text. Relative paths resolve against `base_dir`.
pub fn parse(text: &str, base_dir: &Path) -> Result<RunConfig, ConfigErrors> {
    let mut errors = Vec::new();
    let mut root: Table = match text.parse() {
        Ok(t) => t,
        Err(e) => return Err(ConfigErrors(vec![format!("not valid TOML: {e}")])),
    };

    let params_table = take_table(&mut root, "params", &mut errors).unwrap_or_default();
    let mut sections: Vec<(Recipe, Table)> = Vec::new();
    for r in Recipe::ALL {
        if let Some(t) = take_table(&mut root, r.name(), &mut errors) {
            sections.push((r, t));
        }
    }

    let mut top = Section::new("", root, &mut errors);
    let recipe_name = top.string("recipe");
    let seed = top.u64("seed", 0);
    top.finish();
    let recipe = match recipe_name.as_deref() {
        None => {
            errors.push("missing `recipe` (one of fig3, fig4, fig6, fig8)".into());
            None
        }
        Some(s) => {
            let r = Recipe::parse(s);
            if r.is_none() {
                errors.push(format!("unknown recipe `{s}` (expected fig3, fig4, fig6 or fig8)"));
            }
            r
        }
    };

    let defaults = ScalarTheoremParams::default();
    let mut p = Section::new("params", params_table, &mut errors);
    let params = Params {
        sigma2_user: p.positive("sigma2_user", defaults.sigma2_user),
        sigma2_item: p.positive("sigma2_item", defaults.sigma2_item),
        sigma2_i: p.f64("sigma2_i", defaults.sigma2_i),
        sigma2_r: p.f64("sigma2_r", defaults.sigma2_r),
        m: p.at_least("m", defaults.m, 1),
        x_i: p.f64("x_i", defaults.x_i),
    };
    p.finish();
    if let Err(e) = params.theorem().validate() {
        errors.push(format!("[params]: {e}"));
    }

    let mut cfg = RunConfig {
        recipe: recipe.unwrap_or(Recipe::Fig3),
        seed,
        params,
        fig3: None,
        fig4: None,
        fig6: None,
        fig8: None,
    };
    for (r, _) in &sections {
        if Some(*r) != recipe && recipe.is_some() {
            errors.push(format!("section [{}] is not used by recipe {}", r.name(), cfg.recipe.name()));
        }
    }
    let section_for = |r: Recipe, sections: &mut Vec<(Recipe, Table)>| -> Table {
        sections
            .iter()
            .position(|(s, _)| *s == r)
            .map(|k| sections.remove(k).1)
            .unwrap_or_default()
    };
    if let Some(r) = recipe {
        let table = section_for(r, &mut sections);
        let mut s = Section::new(r.name(), table, &mut errors);
        match r {
            Recipe::Fig3 => {
                let f = Fig3 {
                    x_min: s.f64("x_min", 0.0),
                    x_max: s.f64("x_max", 2.0),
                    x_step: s.positive("x_step", 0.25),
                    n: s.at_least("n", 50_000, 1),
                    trials: s.usize("trials", 2000),
                };
                if f.x_max < f.x_min {
                    s.errors.push("`fig3.x_max` must not be below `fig3.x_min`".into());
                }
                if f.trials == 1 {
                    s.errors.push("`fig3.trials` must be 0 (no overlay) or at least 2".into());
                }
                s.finish();
                cfg.fig3 = Some(f);
            }
            Recipe::Fig4 => {
                let f = Fig4 {
                    min: s.positive("min", 0.1),
                    max: s.positive("max", 3.0),
                    step: s.positive("step", 0.1),
                    overlay_n: s.usize("overlay_n", 0),
                    overlay_trials: s.at_least("overlay_trials", 500, 2),
                };
                if f.max < f.min {
                    s.errors.push("`fig4.max` must not be below `fig4.min`".into());
                }
                s.finish();
                cfg.fig4 = Some(f);
            }
            Recipe::Fig6 => {
                let f = Fig6 {
                    n_min: s.at_least("n_min", 4, 1),
                    n_max: s.at_least("n_max", 200, 1),
                    n_step: s.at_least("n_step", 2, 1),
                    individual_trials: s.at_least("individual_trials", 5000, 2),
                    population_trials: s.at_least("population_trials", 500, 2),
                };
                if f.n_max < f.n_min {
                    s.errors.push("`fig6.n_max` must not be below `fig6.n_min`".into());
                }
                s.finish();
                cfg.fig6 = Some(f);
            }
            Recipe::Fig8 => {
                let source = match s.string("source").as_deref() {
                    None | Some("synthetic") => Source::Synthetic,
                    Some("embeddings") => Source::Embeddings,
                    Some(other) => {
                        s.errors.push(format!("`fig8.source` must be \"synthetic\" or \"embeddings\", got \"{other}\""));
                        Source::Synthetic
                    }
                };
                let alphas = s.f64_list("alphas").unwrap_or_else(matchsim_core::experiments::alpha_grid);
                if alphas.is_empty() || alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
                    s.errors.push("`fig8.alphas` must be a nonempty list of values in [0, 1]".into());
                }
                let users = s.string("users").map(|p| resolve(base_dir, p));
                let items = s.string("items").map(|p| resolve(base_dir, p));
                let f = Fig8 {
                    source,
                    alphas,
                    trials: s.at_least("trials", 500, 2),
                    m: s.at_least("m", 300, 2),
                    n: s.at_least("n", 2514, 1),
                    users,
                    items,
                    noise_scale: s.f64("noise_scale", 0.5),
                    user_study: s.bool("user_study", source == Source::Embeddings),
                    centrality_k: s.at_least("centrality_k", 10, 1),
                };
                if !(f.noise_scale >= 0.0 && f.noise_scale.is_finite()) {
                    s.errors.push(format!("`fig8.noise_scale` must be non-negative, got {}", f.noise_scale));
                }
                match source {
                    Source::Embeddings if f.users.is_none() || f.items.is_none() => {
                        s.errors.push("the embeddings source needs `fig8.users` and `fig8.items` CSV paths".into());
                    }
                    Source::Synthetic if f.users.is_some() || f.items.is_some() => {
                        s.errors.push("`fig8.users` and `fig8.items` only apply to the embeddings source".into());
                    }
                    Source::Synthetic if f.user_study => {
                        s.errors.push("`fig8.user_study` needs the embeddings source".into());
                    }
                    _ => {}
                }
                s.finish();
                cfg.fig8 = Some(f);
            }
        }
    }

    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(errors))
    }
}

pub fn load(path: &Path) -> Result<RunConfig, ConfigErrors> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigErrors(vec![format!("cannot read {}: {e}", path.display())]))?;
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let base = std::fs::canonicalize(parent).unwrap_or_else(|_| parent.to_path_buf());
    parse(&text, &base)
}

impl RunConfig {
    /// The resolved config as TOML; parsing it back gives the same config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Sets every trial count of the active recipe.
    pub fn override_trials(&mut self, trials: usize) {
        if let Some(f) = &mut self.fig3 {
            f.trials = trials;
        }
        if let Some(f) = &mut self.fig4 {
            f.overlay_trials = trials;
        }
        if let Some(f) = &mut self.fig6 {
            f.individual_trials = trials;
            f.population_trials = trials;
        }
        if let Some(f) = &mut self.fig8 {
            f.trials = trials;
        }
    }

    pub fn input_files(&self) -> Vec<PathBuf> {
        self.fig8
            .iter()
            .flat_map(|f| f.users.iter().chain(f.items.iter()).cloned())
            .collect()
    }
}
