//! Staged experiment runner.
//!
//! Stages communicate only through files under the output directory:
//! `generate` writes graphs, features and datasets, `train` writes
//! estimator checkpoints, `allocate` writes one allocation per method and
//! budget, `evaluate` scores them against the true outcome model and
//! `report` reshapes the scores into plot-ready tables.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use netalloc_core::allocator::{
    celf, degree_topk, genetic, greedy, random_allocation, single_discount, uplift_topk, Allocation, GreedyMode,
};
use netalloc_core::dgp::{sample_features, Dataset, DgpInstance, DgpWeights};
use netalloc_core::eval::{allocation_similarity, random_baseline, score};
use netalloc_core::graph::{barabasi_albert, degree_histogram, watts_strogatz};
use netalloc_core::math::mean_and_sem;
use netalloc_core::netest::{Architecture, Batch, NetEst};
use netalloc_core::objective::TotalEffect;
use netalloc_core::par::map_indices;
use netalloc_core::rng::{derive, mix, stream};
use netalloc_core::tarnet::{TarnetModel, TarnetConfig};
use netalloc_core::{Graph, Matrix};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Method, NetworkSpec};
use crate::error::{Error, Result};
use crate::formats::{
    loss_trace_string, results_string, save_trace, similarity_string, AllocationRecord, Candidate, DgpRecord,
    NetEstCheckpoint, ResultRow, Selection, SplitSeeds, TarnetCheckpoint, TraceRow,
};
use crate::io::{
    load_dataset, load_edge_list, load_features, read_json, require, save_dataset, save_edge_list, save_features,
    sha256_file, write_bytes, write_json,
};

pub const SPLITS: [&str; 3] = ["train", "valid", "test"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Generate,
    Train,
    Allocate,
    Evaluate,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Generate, Stage::Train, Stage::Allocate, Stage::Evaluate, Stage::Report];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Train => "train",
            Stage::Allocate => "allocate",
            Stage::Evaluate => "evaluate",
            Stage::Report => "report",
        }
    }
}

/// Paths of every artifact under the output root.
#[derive(Debug, Clone)]
pub struct Paths {
    pub root: PathBuf,
}

impl Paths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.root.join(format!("seed-{seed}"))
    }

    pub fn graph(&self, seed: u64, split: &str) -> PathBuf {
        self.seed_dir(seed).join(format!("{split}.edges"))
    }

    pub fn features(&self, seed: u64, split: &str) -> PathBuf {
        self.seed_dir(seed).join(format!("{split}-features.csv"))
    }

    pub fn cell(&self, seed: u64, beta: f64) -> PathBuf {
        self.seed_dir(seed).join(format!("beta-{beta}"))
    }

    pub fn dgp(&self, seed: u64, beta: f64) -> PathBuf {
        self.cell(seed, beta).join("dgp.json")
    }

    pub fn dataset(&self, seed: u64, beta: f64, split: &str) -> PathBuf {
        self.cell(seed, beta).join(format!("{split}-data.csv"))
    }

    pub fn netest_dir(&self, seed: u64, beta: f64) -> PathBuf {
        self.cell(seed, beta).join("netest")
    }

    pub fn tarnet_dir(&self, seed: u64, beta: f64) -> PathBuf {
        self.cell(seed, beta).join("tarnet")
    }

    pub fn allocation(&self, seed: u64, beta: f64, method: Method, k: usize) -> PathBuf {
        self.cell(seed, beta).join("allocations").join(format!("{method}-k{k}.json"))
    }

    pub fn trace(&self, seed: u64, beta: f64, method: Method, k: usize) -> PathBuf {
        self.cell(seed, beta).join("traces").join(format!("{method}-k{k}.csv"))
    }

    pub fn timings(&self, seed: u64, beta: f64) -> PathBuf {
        self.cell(seed, beta).join("timings.csv")
    }

    pub fn results(&self) -> PathBuf {
        self.root.join("results.csv")
    }

    pub fn similarity(&self, seed: u64, beta: f64, k_pct: f64) -> PathBuf {
        self.root.join("similarity").join(format!("seed-{seed}-beta-{beta}-k{k_pct}.csv"))
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }

    pub fn stage_record(&self, stage: Stage) -> PathBuf {
        self.root.join("stages").join(format!("{}.json", stage.as_str()))
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    fn relative(&self, path: &Path) -> String {
        let rel = path.strip_prefix(&self.root).unwrap_or(path);
        rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: String,
    pub sha256: String,
    /// Seed that produced the file, when one did.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub seed: u64,
    pub beta_spillover: f64,
    pub method: Option<String>,
    pub k: Option<usize>,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub outputs: Vec<OutputRecord>,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run_id: String,
    pub version: String,
    pub config: ExperimentConfig,
    /// Conventions that the outputs depend on.
    pub conventions: BTreeMap<String, String>,
    pub warnings: Vec<String>,
    pub stages: Vec<StageRecord>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Failure> {
        self.stages.iter().flat_map(|s| &s.failures)
    }

    pub fn output(&self, path: &str) -> Option<&OutputRecord> {
        self.stages.iter().flat_map(|s| &s.outputs).find(|o| o.path == path)
    }
}

fn conventions(config: &ExperimentConfig) -> BTreeMap<String, String> {
    let mut c = BTreeMap::new();
    c.insert("ba_seed_set".into(), "m isolated nodes; first new node links to all of them".into());
    c.insert("ba_sampling".into(), "endpoint urn, duplicate targets rejected".into());
    if let NetworkSpec::WattsStrogatz { rewire_prob, .. } = config.network {
        c.insert("ws_rewire_prob".into(), rewire_prob.to_string());
    }
    c.insert("weight_init".into(), "uniform(-a, a), a = sqrt(6 / (fan_in + fan_out)); zero biases".into());
    c.insert("exposure".into(), "treated-neighbor ratio; 0 for isolated nodes".into());
    c.insert("metrics".into(), "noise-free expected outcomes".into());
    c.insert("ga_seeds".into(), "DEG and SD solutions at budget k, rest random k-subsets".into());
    c.insert("tie_break".into(), "lowest node index".into());
    c
}

struct Recorder<'a> {
    paths: &'a Paths,
    record: StageRecord,
}

impl<'a> Recorder<'a> {
    fn new(paths: &'a Paths, stage: Stage) -> Self {
        Self { paths, record: StageRecord { stage: stage.as_str().into(), outputs: Vec::new(), failures: Vec::new() } }
    }

    fn output(&mut self, path: &Path, seed: Option<u64>) -> Result<()> {
        let sha256 = sha256_file(path)?;
        self.record.outputs.push(OutputRecord { path: self.paths.relative(path), sha256, seed });
        Ok(())
    }

    fn fail(&mut self, seed: u64, beta: f64, method: Option<Method>, k: Option<usize>, error: impl ToString) {
        self.record.failures.push(Failure {
            seed,
            beta_spillover: beta,
            method: method.map(|m| m.as_str().to_string()),
            k,
            error: error.to_string(),
        });
    }

    fn finish(self, stage: Stage) -> Result<StageRecord> {
        write_json(self.paths.stage_record(stage), &self.record)?;
        Ok(self.record)
    }
}

/// Rewrites `manifest.json` from the stage records present on disk.
pub fn write_manifest(config: &ExperimentConfig, warnings: &[String]) -> Result<Manifest> {
    let paths = Paths::new(&config.output);
    let mut stages = Vec::new();
    for stage in Stage::ALL {
        let p = paths.stage_record(stage);
        if p.exists() {
            stages.push(read_json(&p)?);
        }
    }
    let manifest = Manifest {
        run_id: config.run_id.clone(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        conventions: conventions(config),
        warnings: warnings.to_vec(),
        stages,
    };
    write_json(paths.manifest(), &manifest)?;
    Ok(manifest)
}

fn split_index(split: &str) -> u64 {
    SPLITS.iter().position(|s| *s == split).expect("known split") as u64
}

fn split_seeds(base: u64) -> SplitSeeds {
    SplitSeeds { train: mix(base, 0), valid: mix(base, 1), test: mix(base, 2) }
}

fn seed_of(seeds: &SplitSeeds, split: &str) -> u64 {
    match split {
        "train" => seeds.train,
        "valid" => seeds.valid,
        _ => seeds.test,
    }
}

/// Writes graphs, features and factual datasets for every seed and
/// spillover value.
pub fn generate(config: &ExperimentConfig) -> Result<StageRecord> {
    let paths = Paths::new(&config.output);
    let mut rec = Recorder::new(&paths, Stage::Generate);
    let d = config.dgp.d;
    for &seed in &config.seeds {
        let graph_seed = derive(seed, "graph");
        let feature_seeds = split_seeds(derive(seed, "features"));
        let weights_seed = derive(seed, "weights");
        let weights = DgpWeights::sample(d, &mut stream(weights_seed, 0));
        let mut worlds: Vec<(Graph, Matrix)> = Vec::with_capacity(3);
        for split in SPLITS {
            let idx = split_index(split);
            let mut rng = stream(graph_seed, idx);
            let (graph, given_features) = match &config.network {
                NetworkSpec::BarabasiAlbert { n, m } => (barabasi_albert(*n, *m, &mut rng)?, None),
                NetworkSpec::WattsStrogatz { n, ring_degree, rewire_prob } => {
                    (watts_strogatz(*n, *ring_degree, *rewire_prob, &mut rng)?, None)
                }
                NetworkSpec::Files { train, valid, test } => {
                    let files = [train, valid, test][idx as usize];
                    let g = load_edge_list(&files.edges)?;
                    let x = files.features.as_ref().map(load_features).transpose()?;
                    (g, x)
                }
            };
            let features = match given_features {
                Some(x) => {
                    if x.rows() != graph.n() || x.cols() != d {
                        return Err(Error::Config(format!(
                            "{split} features are {}x{}, expected {}x{d}",
                            x.rows(),
                            x.cols(),
                            graph.n()
                        )));
                    }
                    x
                }
                None => sample_features(graph.n(), d, &mut stream(seed_of(&feature_seeds, split), 0)),
            };
            let gp = paths.graph(seed, split);
            save_edge_list(&graph, &gp)?;
            rec.output(&gp, Some(graph_seed))?;
            let fp = paths.features(seed, split);
            save_features(&features, &fp)?;
            rec.output(&fp, Some(seed_of(&feature_seeds, split)))?;
            worlds.push((graph, features));
        }
        for &beta in &config.beta_spillover {
            let params = config.dgp.with_spillover(beta);
            let data_seeds = split_seeds(derive(seed, &format!("data/beta={beta}")));
            for (split, (graph, features)) in SPLITS.iter().zip(&worlds) {
                let inst = DgpInstance::new(graph.clone(), features.clone(), weights.clone(), params)?;
                let ds = inst.sample_dataset(config.outcome_mode, &mut stream(seed_of(&data_seeds, split), 0))?;
                let p = paths.dataset(seed, beta, split);
                save_dataset(&ds, &p)?;
                rec.output(&p, Some(seed_of(&data_seeds, split)))?;
            }
            let record = DgpRecord { seed, params, weights: weights.clone(), weights_seed, feature_seeds, data_seeds };
            let p = paths.dgp(seed, beta);
            write_json(&p, &record)?;
            rec.output(&p, Some(weights_seed))?;
        }
    }
    rec.finish(Stage::Generate)
}

struct Split {
    graph: Graph,
    features: Matrix,
}

fn load_split(paths: &Paths, seed: u64, split: &str) -> Result<Split> {
    let graph = load_edge_list(require(&paths.graph(seed, split), "edge list", "generate")?)?;
    let features = load_features(require(&paths.features(seed, split), "feature file", "generate")?)?;
    if features.rows() != graph.n() {
        return Err(Error::format(paths.features(seed, split), "row count does not match the graph"));
    }
    Ok(Split { graph, features })
}

fn load_data(paths: &Paths, seed: u64, beta: f64, split: &str, graph: &Graph) -> Result<Dataset> {
    let p = require(&paths.dataset(seed, beta, split), "dataset", "generate")?;
    let ds = load_dataset(&p)?;
    ds.validate_graph(graph)?;
    Ok(ds)
}

fn load_instance(paths: &Paths, seed: u64, beta: f64, split: Split) -> Result<DgpInstance> {
    let record: DgpRecord = read_json(require(&paths.dgp(seed, beta), "DGP record", "generate")?)?;
    Ok(DgpInstance::new(split.graph, split.features, record.weights, record.params)?)
}

fn netest_name(lr: f64, epochs: usize) -> String {
    format!("lr{lr}-ep{epochs}")
}

fn tarnet_name(c: &TarnetConfig) -> String {
    format!("lr{}-ep{}-rep{}-head{}", c.learning_rate, c.epochs, c.rep_layers, c.head_layers)
}

fn pick(candidates: &[Candidate]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        if c.validation_bce.is_finite() && best.is_none_or(|b| c.validation_bce < candidates[b].validation_bce) {
            best = Some(i);
        }
    }
    best
}

/// Fits the estimator grids on the train split and selects by validation
/// BCE.
pub fn train(config: &ExperimentConfig) -> Result<StageRecord> {
    let paths = Paths::new(&config.output);
    require(&paths.stage_record(Stage::Generate), "generation record", "generate")?;
    let mut rec = Recorder::new(&paths, Stage::Train);
    let want_netest = config.methods.iter().any(|m| m.needs_netest());
    let want_tarnet = config.methods.contains(&Method::Tarnet);
    for &seed in &config.seeds {
        let tr = load_split(&paths, seed, "train")?;
        let va = load_split(&paths, seed, "valid")?;
        for &beta in &config.beta_spillover {
            let tr_data = load_data(&paths, seed, beta, "train", &tr.graph)?;
            let va_data = load_data(&paths, seed, beta, "valid", &va.graph)?;
            if want_netest {
                train_netest_grid(config, &paths, &mut rec, seed, beta, (&tr, &tr_data), (&va, &va_data))?;
            }
            if want_tarnet {
                train_tarnet_grid(config, &paths, &mut rec, seed, beta, (&tr, &tr_data), (&va, &va_data))?;
            }
        }
    }
    rec.finish(Stage::Train)
}

fn train_netest_grid(
    config: &ExperimentConfig,
    paths: &Paths,
    rec: &mut Recorder<'_>,
    seed: u64,
    beta: f64,
    (tr, tr_data): (&Split, &Dataset),
    (va, va_data): (&Split, &Dataset),
) -> Result<()> {
    let arch = Architecture {
        features: tr.features.cols(),
        hidden: config.estimator.hidden,
        head_hidden: Architecture::new(1).head_hidden,
        aggregation: config.estimator.aggregation,
    };
    let grid = config.netest_grid();
    let dir = paths.netest_dir(seed, beta);
    let fitted = map_indices(grid.len(), |c| {
        let (lr, epochs) = grid[c];
        let cell_seed = derive(seed, &format!("netest/beta={beta}/{}", netest_name(lr, epochs)));
        let cfg = config.training_config(lr, epochs, cell_seed);
        let batch = Batch::new(&tr.graph, &tr.features, tr_data);
        let mut model = NetEst::new(arch, &mut stream(cell_seed, 0))?;
        let history = model.train(&batch, &cfg, &mut stream(cell_seed, 1))?;
        let bce = model.outcome_bce(&va.graph, &va.features, va_data)?;
        Ok::<_, netalloc_core::Error>((NetEstCheckpoint::new(&model, arch, cfg, cell_seed, bce), history))
    });
    let mut candidates = Vec::new();
    for (c, result) in fitted.into_iter().enumerate() {
        let (lr, epochs) = grid[c];
        let name = netest_name(lr, epochs);
        match result {
            Ok((ckpt, history)) => {
                let p = dir.join(format!("{name}.json"));
                write_json(&p, &ckpt)?;
                rec.output(&p, Some(ckpt.seed))?;
                let lp = dir.join(format!("{name}-loss.csv"));
                write_bytes(&lp, loss_trace_string(&history).as_bytes())?;
                rec.output(&lp, Some(ckpt.seed))?;
                candidates.push(Candidate { checkpoint: format!("{name}.json"), validation_bce: ckpt.validation_bce });
            }
            Err(e) => rec.fail(seed, beta, None, None, format!("netest {name}: {e}")),
        }
    }
    write_selection(rec, &dir, seed, beta, "netest", candidates)
}

fn write_selection(
    rec: &mut Recorder<'_>,
    dir: &Path,
    seed: u64,
    beta: f64,
    what: &str,
    candidates: Vec<Candidate>,
) -> Result<()> {
    match pick(&candidates) {
        Some(best) => {
            let selected = candidates[best].checkpoint.clone();
            let p = dir.join("selection.json");
            write_json(&p, &Selection { candidates, selected })?;
            rec.output(&p, Some(seed))?;
        }
        None => rec.fail(seed, beta, None, None, format!("no {what} grid cell trained successfully")),
    }
    Ok(())
}

fn train_tarnet_grid(
    config: &ExperimentConfig,
    paths: &Paths,
    rec: &mut Recorder<'_>,
    seed: u64,
    beta: f64,
    (tr, tr_data): (&Split, &Dataset),
    (va, va_data): (&Split, &Dataset),
) -> Result<()> {
    let dir = paths.tarnet_dir(seed, beta);
    let grid: Vec<TarnetConfig> = config
        .tarnet_grid(0)
        .into_iter()
        .map(|c| TarnetConfig { seed: derive(seed, &format!("tarnet/beta={beta}/{}", tarnet_name(&c))), ..c })
        .collect();
    let fitted = map_indices(grid.len(), |c| {
        let cfg = grid[c];
        let mut model = TarnetModel::new(tr.features.cols(), &cfg, &mut stream(cfg.seed, 0))?;
        model.train(&tr.features, &tr_data.t, &tr_data.y, &cfg, &mut stream(cfg.seed, 1))?;
        let bce = model.factual_bce(&va.features, &va_data.t, &va_data.y)?;
        Ok::<_, netalloc_core::Error>(TarnetCheckpoint {
            features: tr.features.cols(),
            config: cfg,
            seed: cfg.seed,
            params: model.params().to_vec(),
            validation_bce: bce,
        })
    });
    let mut candidates = Vec::new();
    for (c, result) in fitted.into_iter().enumerate() {
        let name = tarnet_name(&grid[c]);
        match result {
            Ok(ckpt) => {
                let p = dir.join(format!("{name}.json"));
                write_json(&p, &ckpt)?;
                rec.output(&p, Some(ckpt.seed))?;
                candidates.push(Candidate { checkpoint: format!("{name}.json"), validation_bce: ckpt.validation_bce });
            }
            Err(e) => rec.fail(seed, beta, None, None, format!("tarnet {name}: {e}")),
        }
    }
    write_selection(rec, &dir, seed, beta, "tarnet", candidates)
}

fn selected_checkpoint(dir: &Path) -> Result<PathBuf> {
    let sel: Selection = read_json(require(&dir.join("selection.json"), "model selection", "train")?)?;
    Ok(dir.join(sel.selected))
}

/// Distinct budgets of the k grid with the first percentage that maps to
/// each.
pub fn budgets(config: &ExperimentConfig, n: usize) -> Vec<(f64, usize)> {
    let mut out: Vec<(f64, usize)> = Vec::new();
    for &pct in &config.k_pct {
        let k = ExperimentConfig::budget(pct, n);
        if !out.iter().any(|&(_, seen)| seen == k) {
            out.push((pct, k));
        }
    }
    out
}

struct Produced {
    allocation: Allocation,
    objective_value: Option<f64>,
    seed: u64,
    trace: Option<Vec<TraceRow>>,
}

fn path_trace(order: &[usize], values: &[f64]) -> Vec<TraceRow> {
    order.iter().zip(values).enumerate().map(|(s, (&node, &value))| TraceRow { step: s + 1, node: Some(node), value }).collect()
}

/// Runs every configured method for every budget on the test split.
pub fn allocate(config: &ExperimentConfig) -> Result<StageRecord> {
    let paths = Paths::new(&config.output);
    require(&paths.stage_record(Stage::Generate), "generation record", "generate")?;
    let needs_models = config.methods.iter().any(|m| m.needs_netest() || *m == Method::Tarnet);
    if needs_models {
        require(&paths.stage_record(Stage::Train), "training record", "train")?;
    }
    let mut rec = Recorder::new(&paths, Stage::Allocate);
    for &seed in &config.seeds {
        for &beta in &config.beta_spillover {
            let test = load_split(&paths, seed, "test")?;
            let ks = budgets(config, test.graph.n());
            let netest = if config.methods.iter().any(|m| m.needs_netest()) {
                Some(selected_checkpoint(&paths.netest_dir(seed, beta)).and_then(|p| read_json::<NetEstCheckpoint>(p)?.model()))
            } else {
                None
            };
            let tarnet = if config.methods.contains(&Method::Tarnet) {
                Some(selected_checkpoint(&paths.tarnet_dir(seed, beta)).and_then(|p| read_json::<TarnetCheckpoint>(p)?.model()))
            } else {
                None
            };
            let oracle = if config.methods.contains(&Method::UpperBound) {
                Some(load_instance(&paths, seed, beta, load_split(&paths, seed, "test")?))
            } else {
                None
            };
            let mut timings = String::from("method,k,seconds\n");
            for &method in &config.methods {
                for &(_, k) in &ks {
                    let start = Instant::now();
                    let produced = run_method(
                        config,
                        method,
                        k,
                        seed,
                        beta,
                        &test,
                        netest.as_ref(),
                        tarnet.as_ref(),
                        oracle.as_ref(),
                    );
                    let seconds = start.elapsed().as_secs_f64();
                    match produced {
                        Ok(p) => {
                            let record = AllocationRecord {
                                method: method.as_str().into(),
                                n: test.graph.n(),
                                k,
                                selected: p.allocation.selected(),
                                objective_value: p.objective_value,
                                seed: p.seed,
                            };
                            let ap = paths.allocation(seed, beta, method, k);
                            write_json(&ap, &record)?;
                            rec.output(&ap, Some(p.seed))?;
                            if let Some(rows) = p.trace {
                                let tp = paths.trace(seed, beta, method, k);
                                save_trace(&rows, &tp)?;
                                rec.output(&tp, Some(p.seed))?;
                            }
                            timings.push_str(&format!("{method},{k},{seconds}\n"));
                        }
                        Err(e) => rec.fail(seed, beta, Some(method), Some(k), e),
                    }
                }
            }
            let tp = paths.timings(seed, beta);
            write_bytes(&tp, timings.as_bytes())?;
            rec.output(&tp, None)?;
        }
    }
    rec.finish(Stage::Allocate)
}

fn model_ref<T>(model: Option<&Result<T>>) -> Result<&T> {
    match model {
        Some(Ok(m)) => Ok(m),
        Some(Err(e)) => Err(Error::format("model", e.to_string())),
        None => Err(Error::format("model", "not loaded")),
    }
}

#[allow(clippy::too_many_arguments)]
fn run_method(
    config: &ExperimentConfig,
    method: Method,
    k: usize,
    seed: u64,
    beta: f64,
    test: &Split,
    netest: Option<&Result<NetEst>>,
    tarnet: Option<&Result<TarnetModel>>,
    oracle: Option<&Result<DgpInstance>>,
) -> Result<Produced> {
    let g = &test.graph;
    let tag = |name: &str| derive(seed, &format!("{name}/beta={beta}/k={k}"));
    Ok(match method {
        Method::Greedy => {
            let model = model_ref(netest)?;
            let objective = TotalEffect::new(model.fitted(g, &test.features)?);
            let path = greedy(&objective, k, GreedyMode::Incremental)?;
            Produced {
                allocation: path.allocation(k),
                objective_value: Some(path.value(k)),
                seed,
                trace: Some(path_trace(&path.order, &path.values[1..])),
            }
        }
        Method::Genetic => {
            let model = model_ref(netest)?;
            let objective = TotalEffect::new(model.fitted(g, &test.features)?);
            let seeds = [degree_topk(g, k)?, single_discount(g, k)?];
            let rng_seed = tag("genetic");
            let out = genetic(&objective, k, &config.genetic, &seeds, &mut stream(rng_seed, 0))?;
            let trace = out.history.iter().enumerate().map(|(s, &value)| TraceRow { step: s, node: None, value }).collect();
            Produced { allocation: out.allocation, objective_value: Some(out.value), seed: rng_seed, trace: Some(trace) }
        }
        Method::Deg => Produced { allocation: degree_topk(g, k)?, objective_value: None, seed, trace: None },
        Method::Sd => Produced { allocation: single_discount(g, k)?, objective_value: None, seed, trace: None },
        Method::Celf => {
            let mc_seed = derive(seed, "celf");
            let out = celf(g, k, config.celf.p, config.celf.simulations, mc_seed)?;
            Produced {
                objective_value: Some(out.spreads.last().copied().unwrap_or(0.0)),
                trace: Some(path_trace(&out.order, &out.spreads)),
                allocation: out.allocation,
                seed: mc_seed,
            }
        }
        Method::Tarnet => {
            let model = model_ref(tarnet)?;
            let ite = model.ite(&test.features)?;
            let allocation = uplift_topk(&ite, k)?;
            let value = allocation.selected().iter().map(|&i| ite[i]).sum();
            Produced { allocation, objective_value: Some(value), seed, trace: None }
        }
        Method::Random => {
            let rng_seed = tag("random");
            Produced {
                allocation: random_allocation(g.n(), k, &mut stream(rng_seed, 0))?,
                objective_value: None,
                seed: rng_seed,
                trace: None,
            }
        }
        Method::UpperBound => {
            let inst = model_ref(oracle)?;
            let path = greedy(&TotalEffect::new(inst), k, GreedyMode::Incremental)?;
            Produced {
                allocation: path.allocation(k),
                objective_value: Some(path.value(k)),
                seed,
                trace: Some(path_trace(&path.order, &path.values[1..])),
            }
        }
    })
}

fn run_label(config: &ExperimentConfig, seed: u64, beta: f64) -> String {
    format!("{}/seed={seed}/beta={beta}", config.run_id)
}

/// Splits a results-table run id into `(run, seed, beta)`.
pub fn parse_run_label(label: &str) -> Option<(&str, u64, f64)> {
    let mut parts = label.split('/');
    let run = parts.next()?;
    let seed = parts.next()?.strip_prefix("seed=")?.parse().ok()?;
    let beta = parts.next()?.strip_prefix("beta=")?.parse().ok()?;
    parts.next().is_none().then_some((run, seed, beta))
}

fn load_allocation(path: &Path, n: usize) -> Result<Allocation> {
    let r: AllocationRecord = read_json(path)?;
    if r.n != n {
        return Err(Error::format(path, format!("allocation covers {} nodes, graph has {n}", r.n)));
    }
    Ok(Allocation::from_selected(r.n, r.k, &r.selected)?)
}

fn load_timings(path: &Path) -> Result<BTreeMap<(String, usize), f64>> {
    let mut out = BTreeMap::new();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    for (i, line) in text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let parsed = match cols.as_slice() {
            [m, k, s] => k.parse().ok().zip(s.parse().ok()).map(|(k, s)| ((m.to_string(), k), s)),
            _ => None,
        };
        let (key, secs) =
            parsed.ok_or_else(|| Error::Parse { path: path.to_path_buf(), line: i + 1, message: "expected method,k,seconds".into() })?;
        out.insert(key, secs);
    }
    Ok(out)
}

/// Scores every allocation with the noise-free true outcome model and
/// writes results.csv plus one similarity matrix per cell and budget.
pub fn evaluate(config: &ExperimentConfig) -> Result<StageRecord> {
    let paths = Paths::new(&config.output);
    require(&paths.stage_record(Stage::Allocate), "allocation record", "allocate")?;
    let mut rec = Recorder::new(&paths, Stage::Evaluate);
    let mut rows = Vec::new();
    for &seed in &config.seeds {
        for &beta in &config.beta_spillover {
            let inst = load_instance(&paths, seed, beta, load_split(&paths, seed, "test")?)?;
            let timings = if config.timings { load_timings(&paths.timings(seed, beta))? } else { BTreeMap::new() };
            let label = run_label(config, seed, beta);
            for (pct, k) in budgets(config, inst.n()) {
                let baseline = random_baseline(&inst, k, config.random_samples, &mut stream(derive(seed, &format!("baseline/beta={beta}/k={k}")), 0))?;
                let mut names = Vec::new();
                let mut allocations = Vec::new();
                for &method in &config.methods {
                    let ap = paths.allocation(seed, beta, method, k);
                    if !ap.exists() {
                        continue;
                    }
                    let allocation = match load_allocation(&ap, inst.n()) {
                        Ok(a) => a,
                        Err(e) => {
                            rec.fail(seed, beta, Some(method), Some(k), e);
                            continue;
                        }
                    };
                    let scored = score(&inst, method.as_str(), allocation, &baseline, 0.0)?;
                    rows.push(ResultRow {
                        run_id: label.clone(),
                        method: method.as_str().into(),
                        k,
                        k_pct: pct,
                        tte: scored.true_tte,
                        liftup: scored.liftup,
                        riseo: scored.riseo,
                        seconds: timings.get(&(method.as_str().to_string(), k)).copied(),
                    });
                    names.push(method.as_str().to_string());
                    allocations.push(scored.allocation);
                }
                let matrix: Vec<Vec<f64>> = allocations
                    .iter()
                    .map(|a| allocations.iter().map(|b| allocation_similarity(a, b)).collect::<Result<Vec<_>, _>>())
                    .collect::<Result<_, _>>()?;
                let sp = paths.similarity(seed, beta, pct);
                write_bytes(&sp, similarity_string(&names, &matrix).as_bytes())?;
                rec.output(&sp, Some(seed))?;
            }
        }
    }
    let rp = paths.results();
    write_bytes(&rp, results_string(&rows).as_bytes())?;
    rec.output(&rp, None)?;
    rec.finish(Stage::Evaluate)
}

#[derive(Default)]
struct Accum {
    k: usize,
    liftup: Vec<f64>,
    tte: Vec<f64>,
    riseo: Vec<f64>,
}

fn fmt_mean_sem(xs: &[f64]) -> (String, String) {
    if xs.is_empty() {
        return (String::new(), String::new());
    }
    let (m, s) = mean_and_sem(xs);
    (m.to_string(), s.to_string())
}

/// Long-format tables: one file per spillover panel (liftup vs k), one per
/// budget (liftup vs spillover), degree histograms and seed-averaged
/// similarity matrices.
pub fn report(config: &ExperimentConfig) -> Result<StageRecord> {
    let paths = Paths::new(&config.output);
    let rp = require(&paths.results(), "results table", "evaluate")?;
    let rows = crate::formats::load_results(&rp)?;
    let mut rec = Recorder::new(&paths, Stage::Report);
    let dir = paths.report_dir();

    let mut methods: Vec<String> = Vec::new();
    let mut cells: BTreeMap<(u64, usize, u64), Accum> = BTreeMap::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut pcts: Vec<f64> = Vec::new();
    for r in &rows {
        let Some((_, _, beta)) = parse_run_label(&r.run_id) else {
            return Err(Error::format(&rp, format!("unrecognized run_id `{}`", r.run_id)));
        };
        let mi = match methods.iter().position(|m| *m == r.method) {
            Some(i) => i,
            None => {
                methods.push(r.method.clone());
                methods.len() - 1
            }
        };
        if !betas.contains(&beta) {
            betas.push(beta);
        }
        if !pcts.contains(&r.k_pct) {
            pcts.push(r.k_pct);
        }
        let a = cells.entry((key(beta), mi, key(r.k_pct))).or_default();
        a.k = r.k;
        a.liftup.extend(r.liftup);
        a.riseo.extend(r.riseo);
        a.tte.push(r.tte);
    }
    pcts.sort_by(f64::total_cmp);
    betas.sort_by(f64::total_cmp);

    for &beta in &betas {
        let mut out = String::from("method,k_pct,k,liftup_mean,liftup_sem,tte_mean,tte_sem,riseo_mean,seeds\n");
        for (mi, m) in methods.iter().enumerate() {
            for &pct in &pcts {
                if let Some(a) = cells.get(&(key(beta), mi, key(pct))) {
                    let (lm, ls) = fmt_mean_sem(&a.liftup);
                    let (tm, ts) = fmt_mean_sem(&a.tte);
                    let (rm, _) = fmt_mean_sem(&a.riseo);
                    out.push_str(&format!("{m},{pct},{},{lm},{ls},{tm},{ts},{rm},{}\n", a.k, a.tte.len()));
                }
            }
        }
        let p = dir.join(format!("liftup-vs-k-beta-{beta}.csv"));
        write_bytes(&p, out.as_bytes())?;
        rec.output(&p, None)?;
    }
    for &pct in &pcts {
        let mut out = String::from("method,beta_spillover,liftup_mean,liftup_sem,seeds\n");
        for (mi, m) in methods.iter().enumerate() {
            for &beta in &betas {
                if let Some(a) = cells.get(&(key(beta), mi, key(pct))) {
                    let (lm, ls) = fmt_mean_sem(&a.liftup);
                    out.push_str(&format!("{m},{beta},{lm},{ls},{}\n", a.tte.len()));
                }
            }
        }
        let p = dir.join(format!("liftup-vs-beta-k{pct}.csv"));
        write_bytes(&p, out.as_bytes())?;
        rec.output(&p, None)?;
    }

    for &seed in &config.seeds {
        for split in SPLITS {
            let g = load_edge_list(require(&paths.graph(seed, split), "edge list", "generate")?)?;
            let mut out = String::from("degree,count\n");
            for (d, c) in degree_histogram(&g) {
                out.push_str(&format!("{d},{c}\n"));
            }
            let p = dir.join(format!("degree-histogram-seed-{seed}-{split}.csv"));
            write_bytes(&p, out.as_bytes())?;
            rec.output(&p, Some(seed))?;
        }
    }

    for &beta in &config.beta_spillover {
        let n = load_edge_list(require(&paths.graph(config.seeds[0], "test"), "edge list", "generate")?)?.n();
        for (pct, k) in budgets(config, n) {
            let present: Vec<Method> = config
                .methods
                .iter()
                .copied()
                .filter(|&m| config.seeds.iter().all(|&s| paths.allocation(s, beta, m, k).exists()))
                .collect();
            if present.is_empty() {
                continue;
            }
            let mut sum = vec![vec![0.0; present.len()]; present.len()];
            for &seed in &config.seeds {
                let allocs = present
                    .iter()
                    .map(|&m| load_allocation(&paths.allocation(seed, beta, m, k), n))
                    .collect::<Result<Vec<_>>>()?;
                for (i, a) in allocs.iter().enumerate() {
                    for (j, b) in allocs.iter().enumerate() {
                        sum[i][j] += allocation_similarity(a, b)?;
                    }
                }
            }
            let s = config.seeds.len() as f64;
            let mean: Vec<Vec<f64>> = sum.into_iter().map(|r| r.into_iter().map(|v| v / s).collect()).collect();
            let names: Vec<String> = present.iter().map(|m| m.as_str().to_string()).collect();
            let p = dir.join(format!("similarity-beta-{beta}-k{pct}.csv"));
            write_bytes(&p, similarity_string(&names, &mean).as_bytes())?;
            rec.output(&p, None)?;
        }
    }
    rec.finish(Stage::Report)
}

fn key(x: f64) -> u64 {
    x.to_bits()
}

pub fn run_stage(config: &ExperimentConfig, stage: Stage) -> Result<Manifest> {
    let warnings = config.validate()?;
    match stage {
        Stage::Generate => generate(config)?,
        Stage::Train => train(config)?,
        Stage::Allocate => allocate(config)?,
        Stage::Evaluate => evaluate(config)?,
        Stage::Report => report(config)?,
    };
    write_manifest(config, &warnings)
}

/// All stages in order. Per-method failures are recorded in the manifest
/// and do not stop the run.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Manifest> {
    let warnings = config.validate()?;
    clear_stage_records(config)?;
    generate(config)?;
    train(config)?;
    allocate(config)?;
    evaluate(config)?;
    report(config)?;
    write_manifest(config, &warnings)
}

/// Removes stale stage records so the manifest only lists this run.
fn clear_stage_records(config: &ExperimentConfig) -> Result<()> {
    let paths = Paths::new(&config.output);
    for stage in Stage::ALL {
        let p = paths.stage_record(stage);
        if p.exists() {
            std::fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
        }
    }
    Ok(())
}

/// Re-runs the experiment recorded in a manifest, optionally into a
/// different directory.
pub fn replay(manifest: &Path, output: Option<&Path>) -> Result<Manifest> {
    let m = Manifest::load(manifest)?;
    let mut config = m.config;
    if let Some(out) = output {
        config.output = out.to_path_buf();
    }
    run_experiment(&config)
}
