//! Experiment configuration, read from TOML. Unknown keys are rejected at
//! every level so that a misspelled coefficient name fails loudly.

use std::fmt;
use std::path::{Path, PathBuf};

use netalloc_core::allocator::GaConfig;
use netalloc_core::dgp::{DgpParams, OutcomeMode};
use netalloc_core::netest::Aggregation;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Spillover strengths outside this range are accepted with a warning.
pub const STUDIED_SPILLOVER: (f64, f64) = (0.0, 0.7);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Greedy over the estimator's predicted TTE.
    Greedy,
    /// Genetic search over the estimator's predicted TTE.
    Genetic,
    Deg,
    Sd,
    Celf,
    /// Top-k individual uplift from the feature-only two-headed model.
    Tarnet,
    Random,
    /// Greedy over the true outcome model.
    UpperBound,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::Greedy,
        Method::Genetic,
        Method::Deg,
        Method::Sd,
        Method::Celf,
        Method::Tarnet,
        Method::Random,
        Method::UpperBound,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Greedy => "greedy",
            Method::Genetic => "genetic",
            Method::Deg => "deg",
            Method::Sd => "sd",
            Method::Celf => "celf",
            Method::Tarnet => "tarnet",
            Method::Random => "random",
            Method::UpperBound => "upper_bound",
        }
    }

    pub fn parse(name: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.as_str() == name)
    }

    pub fn needs_netest(self) -> bool {
        matches!(self, Method::Greedy | Method::Genetic)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFiles {
    pub edges: PathBuf,
    /// Sampled from the data-generating process when absent.
    #[serde(default)]
    pub features: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkSpec {
    BarabasiAlbert {
        n: usize,
        #[serde(default = "default_m")]
        m: usize,
    },
    WattsStrogatz {
        n: usize,
        #[serde(default = "default_ring_degree")]
        ring_degree: usize,
        #[serde(default = "default_rewire")]
        rewire_prob: f64,
    },
    Files {
        train: SplitFiles,
        valid: SplitFiles,
        test: SplitFiles,
    },
}

fn default_m() -> usize {
    2
}
fn default_ring_degree() -> usize {
    4
}
fn default_rewire() -> f64 {
    0.1
}

impl Default for NetworkSpec {
    fn default() -> Self {
        NetworkSpec::BarabasiAlbert { n: 500, m: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub learning_rates: Vec<f64>,
    pub epochs: Vec<usize>,
    pub alpha: f64,
    pub gamma: f64,
    pub hidden: usize,
    pub aggregation: Aggregation,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            learning_rates: vec![5e-3, 1e-3, 5e-4],
            epochs: vec![200, 500, 800],
            alpha: 0.5,
            gamma: 0.5,
            hidden: 16,
            aggregation: Aggregation::Mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TarnetGrid {
    pub learning_rates: Vec<f64>,
    pub epochs: Vec<usize>,
    pub rep_layers: Vec<usize>,
    pub head_layers: Vec<usize>,
    pub hidden: usize,
}

impl Default for TarnetGrid {
    fn default() -> Self {
        Self {
            learning_rates: vec![5e-3, 1e-3, 5e-4],
            epochs: vec![500, 800],
            rep_layers: vec![1, 2],
            head_layers: vec![1, 2],
            hidden: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CelfConfig {
    pub p: f64,
    pub simulations: usize,
}

impl Default for CelfConfig {
    fn default() -> Self {
        Self { p: 0.01, simulations: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run_id: String,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Each value overrides `dgp.beta_spillover` for one sweep cell.
    #[serde(default = "default_spillover")]
    pub beta_spillover: Vec<f64>,
    #[serde(default = "default_k_pct")]
    pub k_pct: Vec<f64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub network: NetworkSpec,
    #[serde(default)]
    pub dgp: DgpParams,
    #[serde(default)]
    pub outcome_mode: OutcomeMode,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub tarnet: TarnetGrid,
    #[serde(default)]
    pub genetic: GaConfig,
    #[serde(default)]
    pub celf: CelfConfig,
    #[serde(default = "default_random_samples")]
    pub random_samples: usize,
    /// Fill the `seconds` column of results.csv. Off by default because
    /// wall-clock times differ between otherwise identical runs.
    #[serde(default)]
    pub timings: bool,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}
fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2]
}
fn default_spillover() -> Vec<f64> {
    vec![0.3]
}
fn default_k_pct() -> Vec<f64> {
    vec![1.0, 5.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0]
}
fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_random_samples() -> usize {
    netalloc_core::eval::DEFAULT_RANDOM_SAMPLES
}

impl ExperimentConfig {
    pub fn new(run_id: impl Into<String>) -> Self {
        Self {
            run_id: run_id.into(),
            output: default_output(),
            seeds: default_seeds(),
            beta_spillover: default_spillover(),
            k_pct: default_k_pct(),
            methods: default_methods(),
            network: NetworkSpec::default(),
            dgp: DgpParams::default(),
            outcome_mode: OutcomeMode::default(),
            estimator: EstimatorConfig::default(),
            tarnet: TarnetGrid::default(),
            genetic: GaConfig::default(),
            celf: CelfConfig::default(),
            random_samples: default_random_samples(),
            timings: false,
        }
    }

    /// Parses TOML. Relative paths are taken relative to `base`.
    pub fn from_toml_str(text: &str, base: &Path) -> Result<Self> {
        let mut config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        Self::from_toml_str(&text, base).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output);
        if let NetworkSpec::Files { train, valid, test } = &mut self.network {
            for split in [train, valid, test] {
                fix(&mut split.edges);
                if let Some(f) = &mut split.features {
                    fix(f);
                }
            }
        }
    }

    /// Budget for a percentage of `n` nodes, rounded to the nearest node.
    pub fn budget(pct: f64, n: usize) -> usize {
        ((pct / 100.0) * n as f64).round() as usize
    }

    /// Checks the whole config. Returns warnings for accepted but unusual
    /// values.
    pub fn validate(&self) -> Result<Vec<String>> {
        let fail = |msg: String| Err(Error::Config(msg));
        let mut warnings = Vec::new();
        if self.run_id.is_empty() || self.run_id.contains(['/', ',', '"', '\n']) {
            return fail(format!("run_id `{}` must be non-empty without '/', ',' or quotes", self.run_id));
        }
        if self.seeds.is_empty() {
            return fail("at least one seed is required".into());
        }
        if has_duplicates(&self.seeds) {
            return fail("seeds must be distinct".into());
        }
        if self.beta_spillover.is_empty() {
            return fail("beta_spillover needs at least one value".into());
        }
        for &b in &self.beta_spillover {
            if !b.is_finite() {
                return fail(format!("beta_spillover value {b} is not finite"));
            }
            if b < STUDIED_SPILLOVER.0 || b > STUDIED_SPILLOVER.1 {
                warnings.push(format!(
                    "beta_spillover = {b} lies outside the studied range [{}, {}]",
                    STUDIED_SPILLOVER.0, STUDIED_SPILLOVER.1
                ));
            }
        }
        if has_duplicates(&self.beta_spillover.iter().map(|b| b.to_bits()).collect::<Vec<_>>()) {
            return fail("beta_spillover values must be distinct".into());
        }
        if self.k_pct.is_empty() || self.k_pct.iter().any(|p| !(0.0..=100.0).contains(p)) {
            return fail("k_pct values must lie in [0, 100]".into());
        }
        if has_duplicates(&self.k_pct.iter().map(|b| b.to_bits()).collect::<Vec<_>>()) {
            return fail("k_pct values must be distinct".into());
        }
        if self.methods.is_empty() || has_duplicates(&self.methods) {
            return fail("methods must be a non-empty list without repeats".into());
        }
        self.dgp.validate().map_err(|e| Error::Config(e.to_string()))?;
        match &self.network {
            NetworkSpec::BarabasiAlbert { n, m } => {
                if *m < 1 || n <= m {
                    return fail(format!("Barabási-Albert needs n > m >= 1, got n = {n}, m = {m}"));
                }
            }
            NetworkSpec::WattsStrogatz { n, ring_degree, rewire_prob } => {
                if ring_degree % 2 == 1 || n <= ring_degree || !(0.0..=1.0).contains(rewire_prob) {
                    return fail(format!(
                        "Watts-Strogatz needs an even ring degree below n and rewire_prob in [0, 1], got n = {n}, \
                         ring_degree = {ring_degree}, rewire_prob = {rewire_prob}"
                    ));
                }
            }
            NetworkSpec::Files { train, valid, test } => {
                for (name, split) in [("train", train), ("valid", valid), ("test", test)] {
                    if !split.edges.is_file() {
                        return fail(format!("{name} edge list {} does not exist", split.edges.display()));
                    }
                    if let Some(f) = &split.features {
                        if !f.is_file() {
                            return fail(format!("{name} feature file {} does not exist", f.display()));
                        }
                    }
                }
            }
        }
        let est = &self.estimator;
        if est.learning_rates.is_empty() || est.epochs.is_empty() {
            return fail("estimator grid needs at least one learning rate and one epoch count".into());
        }
        for &lr in &est.learning_rates {
            for &epochs in &est.epochs {
                self.training_config(lr, epochs, 0).validate().map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        let tar = &self.tarnet;
        if [&tar.learning_rates.len(), &tar.epochs.len(), &tar.rep_layers.len(), &tar.head_layers.len()]
            .iter()
            .any(|&&l| l == 0)
        {
            return fail("tarnet grid lists must be non-empty".into());
        }
        for cfg in self.tarnet_grid(0) {
            cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        }
        self.genetic.validate().map_err(|e| Error::Config(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.celf.p) || self.celf.simulations == 0 {
            return fail("celf needs p in [0, 1] and at least one simulation".into());
        }
        if self.random_samples == 0 {
            return fail("random_samples must be positive".into());
        }
        Ok(warnings)
    }

    pub fn training_config(&self, lr: f64, epochs: usize, seed: u64) -> netalloc_core::netest::TrainingConfig {
        netalloc_core::netest::TrainingConfig {
            learning_rate: lr,
            epochs,
            alpha: self.estimator.alpha,
            gamma: self.estimator.gamma,
            seed,
            hidden: self.estimator.hidden,
        }
    }

    /// NetEst grid in row-major order (learning rate outer).
    pub fn netest_grid(&self) -> Vec<(f64, usize)> {
        let e = &self.estimator;
        e.learning_rates.iter().flat_map(|&lr| e.epochs.iter().map(move |&ep| (lr, ep))).collect()
    }

    pub fn tarnet_grid(&self, seed: u64) -> Vec<netalloc_core::tarnet::TarnetConfig> {
        let t = &self.tarnet;
        let mut out = Vec::new();
        for &learning_rate in &t.learning_rates {
            for &epochs in &t.epochs {
                for &rep_layers in &t.rep_layers {
                    for &head_layers in &t.head_layers {
                        out.push(netalloc_core::tarnet::TarnetConfig {
                            learning_rate,
                            epochs,
                            rep_layers,
                            head_layers,
                            hidden: t.hidden,
                            seed,
                        });
                    }
                }
            }
        }
        out
    }
}

fn has_duplicates<T: PartialEq>(xs: &[T]) -> bool {
    xs.iter().enumerate().any(|(i, a)| xs[..i].contains(a))
}
