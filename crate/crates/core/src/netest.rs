//! Relational causal estimator with adversarial representation balancing.
//!
//! ```text
//! g_i  = ReLU(W_g · agg_{j∈N_i} x_j + b_g)          one graph convolution
//! φ_i  = ReLU(W_e · [x_i ‖ g_i] + b_e)              encoder
//! ŷ_i  = σ(p_Y([φ_i ‖ t_i ‖ z_i]))                  outcome predictor
//! t̂_i  = σ(d_T(φ_i))                                treatment discriminator
//! ẑ_i  = d_Z([φ_i ‖ t_i])                           exposure discriminator
//! ```
//!
//! Each epoch first fits the discriminators (BCE on t, MSE on z), then
//! freezes them and updates p_Y with the outcome loss and the GCN plus
//! encoder with `L_Y + α·L_uT + γ·L_uZ`, where the balancing terms push t̂
//! toward 0.5 and ẑ toward fresh uniform targets.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dgp::Dataset;
use crate::error::{invalid_param, Error, Result};
use crate::graph::Graph;
use crate::linalg::Matrix;
use crate::math::{ln, sigmoid, softplus, sqrt};
use crate::nn::{relu_backward, relu_in_place, Adam, Dense, Layout, Mlp, MlpTrace};
use crate::objective::{PotentialOutcomes, TotalEffect, TteObjective};

/// Widest layer supported by the allocation-free prediction path.
const MAX_WIDTH: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Mean over neighbors, self excluded.
    #[default]
    Mean,
    /// Σ_j x_j / sqrt(|N_i| |N_j|), self excluded.
    Symmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub features: usize,
    /// Width of g_i and φ_i.
    pub hidden: usize,
    /// Hidden width of p_Y, d_T and d_Z.
    pub head_hidden: usize,
    pub aggregation: Aggregation,
}

impl Architecture {
    pub fn new(features: usize) -> Self {
        Self { features, hidden: 16, head_hidden: 16, aggregation: Aggregation::Mean }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub seed: u64,
    pub hidden: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, epochs: 500, alpha: 0.5, gamma: 0.5, seed: 0, hidden: 16 }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(invalid_param!("learning rate must be a finite non-negative number"));
        }
        if self.epochs == 0 {
            return Err(invalid_param!("epochs must be positive"));
        }
        if !(self.alpha >= 0.0) || !(self.gamma >= 0.0) {
            return Err(invalid_param!("alpha and gamma must be non-negative"));
        }
        if self.hidden == 0 || self.hidden > MAX_WIDTH {
            return Err(invalid_param!("hidden width must be in 1..={MAX_WIDTH}"));
        }
        Ok(())
    }
}

/// Loss selector for [`NetEst::loss_and_gradient`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    /// BCE(ŷ, y).
    Outcome,
    /// mean((t̂ − 0.5)²).
    BalanceTreatment,
    /// mean((ẑ − c)²).
    BalanceExposure,
    /// BCE(t̂, t).
    TreatmentDiscriminator,
    /// MSE(ẑ, z).
    ExposureDiscriminator,
}

impl Loss {
    pub const ALL: [Loss; 5] = [
        Loss::Outcome,
        Loss::BalanceTreatment,
        Loss::BalanceExposure,
        Loss::TreatmentDiscriminator,
        Loss::ExposureDiscriminator,
    ];
}

/// Loss values recorded for one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub epoch: usize,
    pub outcome: f64,
    pub balance_t: f64,
    pub balance_z: f64,
    pub disc_t: f64,
    pub disc_z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetEst {
    pub arch: Architecture,
    gcn: Dense,
    encoder: Dense,
    predictor: Mlp,
    disc_t: Mlp,
    disc_z: Mlp,
    params: Vec<f64>,
}

/// Outputs of a full forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub y_hat: Vec<f64>,
    pub t_hat: Vec<f64>,
    pub z_hat: Vec<f64>,
    pub phi: Matrix,
}

struct Trace {
    agg: Matrix,
    enc_in: Matrix,
    g: Matrix,
    phi: Matrix,
    predictor: MlpTrace,
    disc_t: MlpTrace,
    disc_z: MlpTrace,
}

/// Observed inputs for one split.
#[derive(Debug, Clone, Copy)]
pub struct Batch<'a> {
    pub graph: &'a Graph,
    pub features: &'a Matrix,
    pub t: &'a [bool],
    pub z: &'a [f64],
    pub y: &'a [f64],
}

impl<'a> Batch<'a> {
    pub fn new(graph: &'a Graph, features: &'a Matrix, data: &'a Dataset) -> Self {
        Self { graph, features, t: &data.t, z: &data.z, y: &data.y }
    }
}

fn bool_col(t: &[bool]) -> Matrix {
    Matrix::from_vec(t.len(), 1, t.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()).unwrap()
}

fn col(v: &[f64]) -> Matrix {
    Matrix::from_vec(v.len(), 1, v.to_vec()).unwrap()
}

/// Mean BCE of probabilities given as logits.
fn bce_logits(logits: &[f64], targets: &[f64]) -> f64 {
    let n = logits.len().max(1) as f64;
    logits.iter().zip(targets).map(|(&l, &y)| softplus(l) - y * l).sum::<f64>() / n
}

pub fn aggregate(graph: &Graph, features: &Matrix, mode: Aggregation) -> Matrix {
    let mut out = Matrix::zeros(features.rows(), features.cols());
    for i in 0..graph.n() {
        let nbrs = graph.neighbors(i);
        if nbrs.is_empty() {
            continue;
        }
        let di = nbrs.len() as f64;
        let row = out.row_mut(i);
        for &j in nbrs {
            let w = match mode {
                Aggregation::Mean => 1.0 / di,
                Aggregation::Symmetric => 1.0 / sqrt(di * graph.degree(j) as f64),
            };
            for (o, &x) in row.iter_mut().zip(features.row(j)) {
                *o += w * x;
            }
        }
    }
    out
}

impl NetEst {
    /// Freshly initialized model.
    pub fn new<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        if arch.features == 0 || arch.hidden == 0 || arch.head_hidden == 0 {
            return Err(invalid_param!("layer widths must be positive"));
        }
        if arch.hidden + 2 > MAX_WIDTH || arch.head_hidden > MAX_WIDTH {
            return Err(invalid_param!("layer widths above {MAX_WIDTH} are not supported"));
        }
        let (d, h, k) = (arch.features, arch.hidden, arch.head_hidden);
        let mut layout = Layout::default();
        let gcn = layout.dense(d, h);
        let encoder = layout.dense(d + h, h);
        let predictor = layout.mlp(&[h + 2, k, k, 1], false);
        let disc_t = layout.mlp(&[h, k, k, 1], false);
        let disc_z = layout.mlp(&[h + 1, k, k, 1], false);
        let mut params = vec![0.0; layout.position()];
        gcn.init(&mut params, rng);
        encoder.init(&mut params, rng);
        predictor.init(&mut params, rng);
        disc_t.init(&mut params, rng);
        disc_z.init(&mut params, rng);
        Ok(Self { arch, gcn, encoder, predictor, disc_t, disc_z, params })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Replaces all parameters; length must match the layout.
    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput(String::from("parameters must be finite")));
        }
        self.params = params;
        Ok(())
    }

    /// Layer shapes `(name, inputs, outputs)` in parameter order.
    pub fn layer_shapes(&self) -> Vec<(&'static str, usize, usize)> {
        let mut out = vec![("gcn", self.gcn.inputs, self.gcn.outputs), ("encoder", self.encoder.inputs, self.encoder.outputs)];
        for (name, mlp) in [("predictor", &self.predictor), ("disc_t", &self.disc_t), ("disc_z", &self.disc_z)] {
            out.extend(mlp.layers.iter().map(|l| (name, l.inputs, l.outputs)));
        }
        out
    }

    fn representation_range(&self) -> Range<usize> {
        self.gcn.range().start..self.encoder.range().end
    }

    fn check_shapes(&self, graph: &Graph, features: &Matrix, t: &[bool], z: &[f64]) -> Result<()> {
        let n = graph.n();
        if features.rows() != n || features.cols() != self.arch.features {
            return Err(Error::Shape(format!(
                "features are {}x{}, expected {n}x{}",
                features.rows(),
                features.cols(),
                self.arch.features
            )));
        }
        if t.len() != n || z.len() != n {
            return Err(Error::Shape(format!("treatment and exposure vectors must have length {n}")));
        }
        Ok(())
    }

    /// φ for every node; independent of treatments.
    pub fn representation(&self, graph: &Graph, features: &Matrix) -> Result<Matrix> {
        self.check_shapes(graph, features, &vec![false; graph.n()], &vec![0.0; graph.n()])?;
        Ok(self.representation_trace(graph, features).3)
    }

    fn representation_trace(&self, graph: &Graph, features: &Matrix) -> (Matrix, Matrix, Matrix, Matrix) {
        let agg = aggregate(graph, features, self.arch.aggregation);
        let mut g = self.gcn.apply(&self.params, &agg);
        relu_in_place(&mut g);
        let enc_in = features.hcat(&g).expect("row counts match");
        let mut phi = self.encoder.apply(&self.params, &enc_in);
        relu_in_place(&mut phi);
        (agg, g, enc_in, phi)
    }

    fn trace(&self, graph: &Graph, features: &Matrix, t: &[bool], z: &[f64]) -> Trace {
        let (agg, g, enc_in, phi) = self.representation_trace(graph, features);
        let tc = bool_col(t);
        let pred_in = phi.hcat(&tc).unwrap().hcat(&col(z)).unwrap();
        let predictor = self.predictor.forward(&self.params, pred_in);
        let disc_t = self.disc_t.forward(&self.params, phi.clone());
        let disc_z = self.disc_z.forward(&self.params, phi.hcat(&tc).unwrap());
        Trace { agg, enc_in, g, phi, predictor, disc_t, disc_z }
    }

    pub fn forward(&self, graph: &Graph, features: &Matrix, t: &[bool], z: &[f64]) -> Result<Forward> {
        self.check_shapes(graph, features, t, z)?;
        let tr = self.trace(graph, features, t, z);
        Ok(Forward {
            y_hat: tr.predictor.output().as_slice().iter().map(|&l| sigmoid(l)).collect(),
            t_hat: tr.disc_t.output().as_slice().iter().map(|&l| sigmoid(l)).collect(),
            z_hat: tr.disc_z.output().as_slice().to_vec(),
            phi: tr.phi,
        })
    }

    fn loss_value(&self, tr: &Trace, batch: &Batch<'_>, c: &[f64], loss: Loss) -> f64 {
        let n = batch.t.len().max(1) as f64;
        match loss {
            Loss::Outcome => bce_logits(tr.predictor.output().as_slice(), batch.y),
            Loss::BalanceTreatment => {
                tr.disc_t.output().as_slice().iter().map(|&l| { let d = sigmoid(l) - 0.5; d * d }).sum::<f64>() / n
            }
            Loss::BalanceExposure => {
                tr.disc_z.output().as_slice().iter().zip(c).map(|(&zh, &ci)| { let d = zh - ci; d * d }).sum::<f64>() / n
            }
            Loss::TreatmentDiscriminator => {
                let t: Vec<f64> = batch.t.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
                bce_logits(tr.disc_t.output().as_slice(), &t)
            }
            Loss::ExposureDiscriminator => {
                tr.disc_z.output().as_slice().iter().zip(batch.z).map(|(&zh, &zi)| { let d = zh - zi; d * d }).sum::<f64>() / n
            }
        }
    }

    /// d(loss)/d(head output) for each head, as `(predictor, disc_t, disc_z)`.
    fn head_seeds(
        &self,
        tr: &Trace,
        batch: &Batch<'_>,
        c: &[f64],
        weights: &[(Loss, f64)],
    ) -> (Option<Matrix>, Option<Matrix>, Option<Matrix>) {
        let n = batch.t.len();
        let nf = n.max(1) as f64;
        let mut dy: Option<Vec<f64>> = None;
        let mut dt: Option<Vec<f64>> = None;
        let mut dz: Option<Vec<f64>> = None;
        let acc = |slot: &mut Option<Vec<f64>>, f: &dyn Fn(usize) -> f64| {
            let v = slot.get_or_insert_with(|| vec![0.0; n]);
            for (i, s) in v.iter_mut().enumerate() {
                *s += f(i);
            }
        };
        let ly = tr.predictor.output().as_slice();
        let lt = tr.disc_t.output().as_slice();
        let zh = tr.disc_z.output().as_slice();
        for &(loss, w) in weights {
            if w == 0.0 {
                continue;
            }
            match loss {
                Loss::Outcome => acc(&mut dy, &|i| w * (sigmoid(ly[i]) - batch.y[i]) / nf),
                Loss::BalanceTreatment => acc(&mut dt, &|i| {
                    let s = sigmoid(lt[i]);
                    w * 2.0 * (s - 0.5) * s * (1.0 - s) / nf
                }),
                Loss::BalanceExposure => acc(&mut dz, &|i| w * 2.0 * (zh[i] - c[i]) / nf),
                Loss::TreatmentDiscriminator => acc(&mut dt, &|i| {
                    let t = if batch.t[i] { 1.0 } else { 0.0 };
                    w * (sigmoid(lt[i]) - t) / nf
                }),
                Loss::ExposureDiscriminator => acc(&mut dz, &|i| w * 2.0 * (zh[i] - batch.z[i]) / nf),
            }
        }
        (dy.map(|v| col(&v)), dt.map(|v| col(&v)), dz.map(|v| col(&v)))
    }

    /// Gradient over all parameters of Σ w·loss. Backpropagation into the
    /// encoder and GCN is skipped when `through_phi` is false.
    fn gradient(&self, tr: &Trace, batch: &Batch<'_>, c: &[f64], weights: &[(Loss, f64)], through_phi: bool) -> Vec<f64> {
        let h = self.arch.hidden;
        let mut grad = vec![0.0; self.params.len()];
        let (dy, dt, dz) = self.head_seeds(tr, batch, c, weights);
        let mut dphi = Matrix::zeros(tr.phi.rows(), h);
        let add_cols = |dphi: &mut Matrix, m: &Matrix| {
            for r in 0..m.rows() {
                for (a, &b) in dphi.row_mut(r).iter_mut().zip(&m.row(r)[..h]) {
                    *a += b;
                }
            }
        };
        if let Some(dy) = dy {
            if let Some(dx) = self.predictor.backward(&self.params, &tr.predictor, dy, &mut grad, through_phi) {
                add_cols(&mut dphi, &dx);
            }
        }
        if let Some(dt) = dt {
            if let Some(dx) = self.disc_t.backward(&self.params, &tr.disc_t, dt, &mut grad, through_phi) {
                add_cols(&mut dphi, &dx);
            }
        }
        if let Some(dz) = dz {
            if let Some(dx) = self.disc_z.backward(&self.params, &tr.disc_z, dz, &mut grad, through_phi) {
                add_cols(&mut dphi, &dx);
            }
        }
        if through_phi {
            relu_backward(&tr.phi, &mut dphi);
            let d_enc = self.encoder.backward(&self.params, &tr.enc_in, &dphi, &mut grad, true).unwrap();
            let mut dg = d_enc.columns(self.arch.features, self.arch.features + h);
            relu_backward(&tr.g, &mut dg);
            self.gcn.backward(&self.params, &tr.agg, &dg, &mut grad, false);
        }
        grad
    }

    /// Value and full gradient of one loss. `c` holds the uniform targets of
    /// the exposure balancing loss and is ignored by the others.
    pub fn loss_and_gradient(&self, batch: &Batch<'_>, loss: Loss, c: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_shapes(batch.graph, batch.features, batch.t, batch.z)?;
        if batch.y.len() != batch.t.len() || c.len() != batch.t.len() {
            return Err(Error::Shape(String::from("outcome and target vectors must match node count")));
        }
        let tr = self.trace(batch.graph, batch.features, batch.t, batch.z);
        let value = self.loss_value(&tr, batch, c, loss);
        Ok((value, self.gradient(&tr, batch, c, &[(loss, 1.0)], true)))
    }

    pub fn loss(&self, batch: &Batch<'_>, loss: Loss, c: &[f64]) -> Result<f64> {
        self.check_shapes(batch.graph, batch.features, batch.t, batch.z)?;
        let tr = self.trace(batch.graph, batch.features, batch.t, batch.z);
        Ok(self.loss_value(&tr, batch, c, loss))
    }

    /// Full-batch adversarial training. Returns the per-epoch loss trace.
    pub fn train<R: Rng + ?Sized>(
        &mut self,
        batch: &Batch<'_>,
        config: &TrainingConfig,
        rng: &mut R,
    ) -> Result<Vec<EpochLosses>> {
        config.validate()?;
        self.check_shapes(batch.graph, batch.features, batch.t, batch.z)?;
        let n = batch.t.len();
        let lr = config.learning_rate;
        let mut adam_dt = Adam::new(self.disc_t.range(), lr);
        let mut adam_dz = Adam::new(self.disc_z.range(), lr);
        let mut adam_py = Adam::new(self.predictor.range(), lr);
        let mut adam_rep = Adam::new(self.representation_range(), lr);
        let no_c = vec![0.0; n];
        let mut history = Vec::with_capacity(config.epochs);
        for epoch in 0..config.epochs {
            // Step 1: discriminators only.
            let tr = self.trace(batch.graph, batch.features, batch.t, batch.z);
            let disc_t = self.loss_value(&tr, batch, &no_c, Loss::TreatmentDiscriminator);
            let disc_z = self.loss_value(&tr, batch, &no_c, Loss::ExposureDiscriminator);
            check_finite(epoch, "treatment discriminator", disc_t)?;
            check_finite(epoch, "exposure discriminator", disc_z)?;
            let grad = self.gradient(
                &tr,
                batch,
                &no_c,
                &[(Loss::TreatmentDiscriminator, 1.0), (Loss::ExposureDiscriminator, 1.0)],
                false,
            );
            adam_dt.step(&mut self.params, &grad);
            adam_dz.step(&mut self.params, &grad);

            // Step 2: frozen discriminators, balancing targets redrawn.
            let c: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
            let tr = self.trace(batch.graph, batch.features, batch.t, batch.z);
            let outcome = self.loss_value(&tr, batch, &c, Loss::Outcome);
            let balance_t = self.loss_value(&tr, batch, &c, Loss::BalanceTreatment);
            let balance_z = self.loss_value(&tr, batch, &c, Loss::BalanceExposure);
            check_finite(epoch, "outcome", outcome)?;
            check_finite(epoch, "treatment balancing", balance_t)?;
            check_finite(epoch, "exposure balancing", balance_z)?;
            let grad = self.gradient(
                &tr,
                batch,
                &c,
                &[
                    (Loss::Outcome, 1.0),
                    (Loss::BalanceTreatment, config.alpha),
                    (Loss::BalanceExposure, config.gamma),
                ],
                true,
            );
            // Only L_Y reaches the predictor, so its slice of `grad` is ∇L_Y.
            adam_py.step(&mut self.params, &grad);
            adam_rep.step(&mut self.params, &grad);
            if self.params.iter().any(|p| !p.is_finite()) {
                return Err(Error::TrainingDiverged { epoch, loss: "parameter" });
            }
            history.push(EpochLosses { epoch, outcome, balance_t, balance_z, disc_t, disc_z });
        }
        Ok(history)
    }

    /// BCE of predicted factual outcomes; the model-selection criterion.
    pub fn outcome_bce(&self, graph: &Graph, features: &Matrix, data: &Dataset) -> Result<f64> {
        let batch = Batch::new(graph, features, data);
        self.loss(&batch, Loss::Outcome, &vec![0.0; data.n()])
    }

    /// Fits a fresh treatment discriminator on the frozen representation
    /// and reports its final BCE. Values near ln 2 mean φ carries little
    /// information about t.
    pub fn probe_treatment_bce<R: Rng + ?Sized>(
        &self,
        graph: &Graph,
        features: &Matrix,
        t: &[bool],
        epochs: usize,
        learning_rate: f64,
        rng: &mut R,
    ) -> Result<f64> {
        let phi = self.representation(graph, features)?;
        let mut layout = Layout::default();
        let k = self.arch.head_hidden;
        let probe = layout.mlp(&[self.arch.hidden, k, k, 1], false);
        let mut p = vec![0.0; layout.position()];
        probe.init(&mut p, rng);
        let mut adam = Adam::new(probe.range(), learning_rate);
        let target: Vec<f64> = t.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let nf = t.len().max(1) as f64;
        let mut last = ln(2.0);
        for _ in 0..epochs {
            let tr = probe.forward(&p, phi.clone());
            let logits = tr.output().as_slice();
            last = bce_logits(logits, &target);
            let d: Vec<f64> = logits.iter().zip(&target).map(|(&l, &y)| (sigmoid(l) - y) / nf).collect();
            let mut grad = vec![0.0; p.len()];
            probe.backward(&p, &tr, col(&d), &mut grad, false);
            adam.step(&mut p, &grad);
        }
        let tr = probe.forward(&p, phi);
        let final_bce = bce_logits(tr.output().as_slice(), &target);
        Ok(if final_bce.is_finite() { final_bce } else { last })
    }

    /// Caches φ so that outcomes can be queried for arbitrary (t, z).
    pub fn fitted<'a>(&'a self, graph: &'a Graph, features: &Matrix) -> Result<FittedNetEst<'a>> {
        let phi = self.representation(graph, features)?;
        let first = &self.predictor.layers[0];
        let h = self.arch.hidden;
        let w = first.weights(&self.params);
        let b = first.biases(&self.params);
        let width = first.outputs;
        let mut pre = Matrix::zeros(graph.n(), width);
        for i in 0..graph.n() {
            let p = phi.row(i);
            let row = pre.row_mut(i);
            for (o, slot) in row.iter_mut().enumerate() {
                let wr = &w[o * first.inputs..o * first.inputs + h];
                *slot = b[o] + wr.iter().zip(p).map(|(a, c)| a * c).sum::<f64>();
            }
        }
        let w_t = (0..width).map(|o| w[o * first.inputs + h]).collect();
        let w_z = (0..width).map(|o| w[o * first.inputs + h + 1]).collect();
        Ok(FittedNetEst { model: self, graph, pre, w_t, w_z })
    }

    /// ω̂_i = M(i, t_i, z_i) − M(i, 0, 0) with z from the graph.
    pub fn predict_itte(&self, graph: &Graph, features: &Matrix, t: &[bool]) -> Result<Vec<f64>> {
        if t.len() != graph.n() {
            return Err(Error::Shape(format!("allocation has length {}, graph has {} nodes", t.len(), graph.n())));
        }
        Ok(TotalEffect::new(self.fitted(graph, features)?).itte(t))
    }

    pub fn predict_tte(&self, graph: &Graph, features: &Matrix, t: &[bool]) -> Result<f64> {
        if t.len() != graph.n() {
            return Err(Error::Shape(format!("allocation has length {}, graph has {} nodes", t.len(), graph.n())));
        }
        Ok(TotalEffect::new(self.fitted(graph, features)?).evaluate(t))
    }
}

fn check_finite(epoch: usize, loss: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::TrainingDiverged { epoch, loss })
    }
}

/// A trained model bound to one graph, with φ and the first predictor
/// layer precomputed.
#[derive(Debug, Clone)]
pub struct FittedNetEst<'a> {
    model: &'a NetEst,
    graph: &'a Graph,
    pre: Matrix,
    w_t: Vec<f64>,
    w_z: Vec<f64>,
}

impl PotentialOutcomes for FittedNetEst<'_> {
    fn graph(&self) -> &Graph {
        self.graph
    }

    fn outcome(&self, i: usize, treated: bool, z: f64) -> f64 {
        let t = if treated { 1.0 } else { 0.0 };
        let params = &self.model.params;
        let mut a = [0.0; MAX_WIDTH];
        let mut width = self.w_t.len();
        for (o, slot) in a[..width].iter_mut().enumerate() {
            let v = self.pre.get(i, o) + t * self.w_t[o] + z * self.w_z[o];
            *slot = if v > 0.0 { v } else { 0.0 };
        }
        let layers = &self.model.predictor.layers;
        for (l, layer) in layers.iter().enumerate().skip(1) {
            let mut b = [0.0; MAX_WIDTH];
            layer.apply_row(params, &a[..width], &mut b[..layer.outputs]);
            if l + 1 < layers.len() {
                for v in &mut b[..layer.outputs] {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            a = b;
            width = layer.outputs;
        }
        sigmoid(a[0])
    }
}

/// Largest relative error between analytic and central-difference
/// gradients of `loss`, over every parameter. Relative error is
/// `|a − f| / max(|a|, |f|, 1e-6)`.
pub fn gradient_check(model: &NetEst, batch: &Batch<'_>, loss: Loss, c: &[f64]) -> Result<f64> {
    const STEP: f64 = 1e-5;
    let (_, analytic) = model.loss_and_gradient(batch, loss, c)?;
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for k in 0..analytic.len() {
        let orig = probe.params[k];
        probe.params[k] = orig + STEP;
        let up = probe.loss(batch, loss, c)?;
        probe.params[k] = orig - STEP;
        let down = probe.loss(batch, loss, c)?;
        probe.params[k] = orig;
        let fd = (up - down) / (2.0 * STEP);
        let a = analytic[k];
        let err = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{exposure, DgpInstance, DgpParams, OutcomeMode};
    use crate::graph::{barabasi_albert, path};
    use crate::rng::stream;

    fn toy(n: usize, seed: u64) -> (DgpInstance, Dataset) {
        let g = barabasi_albert(n, 2, &mut stream(seed, 0)).unwrap();
        let inst = DgpInstance::sample(g, DgpParams { d: 4, ..DgpParams::default() }, &mut stream(seed, 1)).unwrap();
        let ds = inst.sample_dataset(OutcomeMode::Bernoulli, &mut stream(seed, 2)).unwrap();
        (inst, ds)
    }

    #[test]
    fn zero_parameters_give_constant_output() {
        let (inst, ds) = toy(30, 1);
        let mut m = NetEst::new(Architecture::new(4), &mut stream(0, 0)).unwrap();
        m.params_mut().iter_mut().for_each(|p| *p = 0.0);
        let f = m.forward(inst.graph(), inst.features(), &ds.t, &ds.z).unwrap();
        assert!(f.y_hat.iter().all(|&y| y == 0.5));
        assert!(f.t_hat.iter().all(|&y| y == 0.5));
    }

    #[test]
    fn outputs_stay_in_unit_interval() {
        let (inst, ds) = toy(40, 2);
        let m = NetEst::new(Architecture::new(4), &mut stream(1, 0)).unwrap();
        let f = m.forward(inst.graph(), inst.features(), &ds.t, &ds.z).unwrap();
        assert!(f.y_hat.iter().chain(&f.t_hat).all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn shape_errors() {
        let (inst, ds) = toy(20, 3);
        let m = NetEst::new(Architecture::new(5), &mut stream(1, 0)).unwrap();
        assert!(matches!(m.forward(inst.graph(), inst.features(), &ds.t, &ds.z), Err(Error::Shape(_))));
        let m = NetEst::new(Architecture::new(4), &mut stream(1, 0)).unwrap();
        assert!(m.forward(inst.graph(), inst.features(), &ds.t[..5], &ds.z).is_err());
    }

    #[test]
    fn isolated_node_sees_zero_aggregate() {
        let g = Graph::from_edges(3, [(0, 1)]).unwrap();
        let x = Matrix::from_vec(3, 2, vec![1.0, 2.0, -1.0, 0.5, 3.0, 3.0]).unwrap();
        let agg = aggregate(&g, &x, Aggregation::Mean);
        assert_eq!(agg.row(2), &[0.0, 0.0]);
        assert_eq!(agg.row(0), &[-1.0, 0.5]);
        // Changing the isolated node's own neighbors' features cannot exist;
        // its g_i is ReLU(b_g) regardless of everyone else.
        let m = NetEst::new(Architecture { features: 2, ..Architecture::new(2) }, &mut stream(2, 0)).unwrap();
        let x2 = Matrix::from_vec(3, 2, vec![9.0, -9.0, 4.0, 4.0, 3.0, 3.0]).unwrap();
        let a = m.representation(&g, &x).unwrap();
        let b = m.representation(&g, &x2).unwrap();
        assert_eq!(a.row(2), b.row(2));
    }

    #[test]
    fn permutation_equivariance() {
        let (inst, ds) = toy(25, 4);
        let m = NetEst::new(Architecture::new(4), &mut stream(3, 0)).unwrap();
        let f = m.forward(inst.graph(), inst.features(), &ds.t, &ds.z).unwrap();
        let perm: Vec<usize> = (0..25).rev().collect();
        let g2 = inst.graph().permute(&perm);
        let x2 = inst.features().permute_rows(&perm);
        let t2: Vec<bool> = perm.iter().map(|&p| ds.t[p]).collect();
        let z2: Vec<f64> = perm.iter().map(|&p| ds.z[p]).collect();
        let f2 = m.forward(&g2, &x2, &t2, &z2).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            assert!((f2.y_hat[new] - f.y_hat[old]).abs() < 1e-12);
            assert!((f2.z_hat[new] - f.z_hat[old]).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_aggregation_weights() {
        let g = path(3);
        let x = Matrix::from_vec(3, 1, vec![1.0, 2.0, 4.0]).unwrap();
        let agg = aggregate(&g, &x, Aggregation::Symmetric);
        assert!((agg.get(0, 0) - 2.0 / sqrt(2.0)).abs() < 1e-15);
        assert!((agg.get(1, 0) - (1.0 + 4.0) / sqrt(2.0)).abs() < 1e-15);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (inst, ds) = toy(15, 5);
        for agg in [Aggregation::Mean, Aggregation::Symmetric] {
            let arch = Architecture { aggregation: agg, ..Architecture::new(4) };
            let m = NetEst::new(arch, &mut stream(4, 0)).unwrap();
            let c: Vec<f64> = (0..15).map(|i| (i as f64 * 0.37) % 1.0).collect();
            let batch = Batch::new(inst.graph(), inst.features(), &ds);
            for loss in Loss::ALL {
                let err = gradient_check(&m, &batch, loss, &c).unwrap();
                assert!(err < 1e-4, "{loss:?} with {agg:?}: {err}");
            }
        }
    }

    #[test]
    fn balance_gradient_vanishes_at_half() {
        let (inst, ds) = toy(12, 6);
        let mut m = NetEst::new(Architecture::new(4), &mut stream(5, 0)).unwrap();
        // Zero the discriminator's output layer: t̂ ≡ σ(0) = 0.5.
        let last = *m.disc_t.layers.last().unwrap();
        for k in last.range() {
            m.params[k] = 0.0;
        }
        let batch = Batch::new(inst.graph(), inst.features(), &ds);
        let (v, g) = m.loss_and_gradient(&batch, Loss::BalanceTreatment, &vec![0.0; 12]).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn zero_lr_keeps_parameters() {
        let (inst, ds) = toy(10, 7);
        let mut m = NetEst::new(Architecture::new(4), &mut stream(6, 0)).unwrap();
        let before = m.params.clone();
        let cfg = TrainingConfig { learning_rate: 0.0, epochs: 5, ..TrainingConfig::default() };
        let trace = m.train(&Batch::new(inst.graph(), inst.features(), &ds), &cfg, &mut stream(6, 1)).unwrap();
        assert_eq!(m.params, before);
        for e in &trace {
            assert_eq!(e.outcome, trace[0].outcome);
            assert_eq!(e.balance_t, trace[0].balance_t);
            assert_eq!(e.disc_t, trace[0].disc_t);
            assert_eq!(e.disc_z, trace[0].disc_z);
        }
    }

    #[test]
    fn plain_supervised_training_reduces_outcome_loss() {
        let (inst, ds) = toy(100, 8);
        let mut m = NetEst::new(Architecture::new(4), &mut stream(7, 0)).unwrap();
        let cfg = TrainingConfig { learning_rate: 5e-3, epochs: 200, alpha: 0.0, gamma: 0.0, ..TrainingConfig::default() };
        let trace = m.train(&Batch::new(inst.graph(), inst.features(), &ds), &cfg, &mut stream(7, 1)).unwrap();
        assert!(trace.last().unwrap().outcome < trace[0].outcome);
    }

    #[test]
    fn divergence_is_reported() {
        let (inst, ds) = toy(10, 9);
        let mut m = NetEst::new(Architecture::new(4), &mut stream(8, 0)).unwrap();
        m.params[0] = f64::NAN;
        let cfg = TrainingConfig { epochs: 3, ..TrainingConfig::default() };
        let err = m.train(&Batch::new(inst.graph(), inst.features(), &ds), &cfg, &mut stream(8, 1)).unwrap_err();
        assert!(matches!(err, Error::TrainingDiverged { epoch: 0, .. }));
    }

    #[test]
    fn itte_prediction_properties() {
        let (inst, _) = toy(40, 10);
        let m = NetEst::new(Architecture::new(4), &mut stream(9, 0)).unwrap();
        let zero = vec![false; 40];
        assert!(m.predict_itte(inst.graph(), inst.features(), &zero).unwrap().iter().all(|&w| w == 0.0));
        assert_eq!(m.predict_tte(inst.graph(), inst.features(), &zero).unwrap(), 0.0);

        let mut t = zero.clone();
        t[3] = true;
        t[17] = true;
        let itte = m.predict_itte(inst.graph(), inst.features(), &t).unwrap();
        let tte = m.predict_tte(inst.graph(), inst.features(), &t).unwrap();
        assert!((itte.iter().sum::<f64>() - tte).abs() < 1e-12);

        // Fitted path agrees with the batch forward pass.
        let z = exposure(inst.graph(), &t).unwrap();
        let f = m.forward(inst.graph(), inst.features(), &t, &z).unwrap();
        let fit = m.fitted(inst.graph(), inst.features()).unwrap();
        for i in 0..40 {
            assert!((fit.outcome(i, t[i], z[i]) - f.y_hat[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn flipping_one_treatment_is_local() {
        let (inst, _) = toy(50, 11);
        let m = NetEst::new(Architecture::new(4), &mut stream(10, 0)).unwrap();
        let g = inst.graph();
        let mut rng = stream(10, 1);
        for _ in 0..10 {
            let t: Vec<bool> = (0..50).map(|_| rng.random_bool(0.3)).collect();
            let j = rng.random_range(0..50);
            let mut t2 = t.clone();
            t2[j] = !t2[j];
            let a = m.predict_itte(g, inst.features(), &t).unwrap();
            let b = m.predict_itte(g, inst.features(), &t2).unwrap();
            for i in 0..50 {
                if i != j && !g.has_edge(i, j) {
                    assert_eq!(a[i], b[i]);
                }
            }
        }
    }
}
