//! Serialized artifacts produced by the pipeline stages.

use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use netalloc_core::dgp::{DgpParams, DgpWeights};
use netalloc_core::netest::{Architecture, EpochLosses, NetEst, TrainingConfig};
use netalloc_core::rng::stream;
use netalloc_core::tarnet::{TarnetConfig, TarnetModel};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::write_bytes;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerShape {
    pub name: String,
    pub inputs: usize,
    pub outputs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetEstCheckpoint {
    pub architecture: Architecture,
    pub config: TrainingConfig,
    pub seed: u64,
    pub layers: Vec<LayerShape>,
    /// Flat parameters; each dense block is row-major weights then biases.
    pub params: Vec<f64>,
    pub validation_bce: f64,
}

impl NetEstCheckpoint {
    pub fn new(model: &NetEst, architecture: Architecture, config: TrainingConfig, seed: u64, validation_bce: f64) -> Self {
        let layers = model
            .layer_shapes()
            .into_iter()
            .map(|(name, inputs, outputs)| LayerShape { name: name.to_string(), inputs, outputs })
            .collect();
        Self { architecture, config, seed, layers, params: model.params().to_vec(), validation_bce }
    }

    pub fn model(&self) -> Result<NetEst> {
        let mut model = NetEst::new(self.architecture, &mut stream(0, 0))?;
        let expect: Vec<(String, usize, usize)> =
            model.layer_shapes().into_iter().map(|(n, i, o)| (n.to_string(), i, o)).collect();
        let found: Vec<(String, usize, usize)> =
            self.layers.iter().map(|l| (l.name.clone(), l.inputs, l.outputs)).collect();
        if expect != found {
            return Err(Error::Core(netalloc_core::Error::Shape("checkpoint layer shapes do not match its architecture".into())));
        }
        model.set_params(self.params.clone())?;
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TarnetCheckpoint {
    pub features: usize,
    pub config: TarnetConfig,
    pub seed: u64,
    pub params: Vec<f64>,
    pub validation_bce: f64,
}

impl TarnetCheckpoint {
    pub fn model(&self) -> Result<TarnetModel> {
        let mut model = TarnetModel::new(self.features, &self.config, &mut stream(0, 0))?;
        model.set_params(self.params.clone())?;
        Ok(model)
    }
}

/// Which grid cell won, by validation BCE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub candidates: Vec<Candidate>,
    pub selected: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub checkpoint: String,
    pub validation_bce: f64,
}

/// Ground-truth world for one (seed, spillover) cell, shared by all splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpRecord {
    pub seed: u64,
    pub params: DgpParams,
    pub weights: DgpWeights,
    pub weights_seed: u64,
    pub feature_seeds: SplitSeeds,
    pub data_seeds: SplitSeeds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSeeds {
    pub train: u64,
    pub valid: u64,
    pub test: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocationRecord {
    pub method: String,
    pub n: usize,
    pub k: usize,
    pub selected: Vec<usize>,
    /// The method's own objective at the returned allocation, when it has one.
    pub objective_value: Option<f64>,
    pub seed: u64,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn loss_trace_string(history: &[EpochLosses]) -> String {
    let mut out = String::from("epoch,L_Y,L_uT,L_uZ,L_dT,L_dZ\n");
    for h in history {
        let _ = writeln!(out, "{},{},{},{},{},{}", h.epoch, h.outcome, h.balance_t, h.balance_z, h.disc_t, h.disc_z);
    }
    out
}

/// One row of an allocation-search trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub node: Option<usize>,
    pub value: f64,
}

pub fn save_trace(rows: &[TraceRow], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("step,node,best_value\n");
    for r in rows {
        let node = r.node.map_or_else(String::new, |n| n.to_string());
        let _ = writeln!(out, "{},{},{}", r.step, node, r.value);
    }
    write_bytes(path, out.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub run_id: String,
    pub method: String,
    pub k: usize,
    pub k_pct: f64,
    pub tte: f64,
    pub liftup: Option<f64>,
    pub riseo: Option<f64>,
    pub seconds: Option<f64>,
}

pub const RESULTS_HEADER: &str = "run_id,method,k,k_pct,tte,liftup,riseo,seconds";

pub fn results_string(rows: &[ResultRow]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.run_id,
            r.method,
            r.k,
            r.k_pct,
            r.tte,
            opt(r.liftup),
            opt(r.riseo),
            opt(r.seconds)
        );
    }
    out
}

pub fn load_results(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr.headers().map_err(|e| Error::format(path, e))?.clone();
    if header.iter().collect::<Vec<_>>().join(",") != RESULTS_HEADER {
        return Err(Error::Parse { path: path.to_path_buf(), line: 1, message: format!("expected header `{RESULTS_HEADER}`") });
    }
    rdr.deserialize()
        .map(|r| {
            r.map_err(|e: csv::Error| Error::Parse {
                path: path.to_path_buf(),
                line: e.position().map_or(0, |p| p.line() as usize),
                message: e.to_string(),
            })
        })
        .collect()
}

/// Square matrix with a header row and a leading name column.
pub fn similarity_string(names: &[String], matrix: &[Vec<f64>]) -> String {
    let mut out = String::from("method");
    for n in names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for (name, row) in names.iter().zip(matrix) {
        out.push_str(name);
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}
