//! Two-headed individual-level outcome model (shared representation, one
//! head per arm). Sees node features only, never the graph.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Error, Result};
use crate::linalg::Matrix;
use crate::math::{sigmoid, softplus};
use crate::nn::{Adam, Layout, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TarnetConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub rep_layers: usize,
    pub head_layers: usize,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TarnetConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, epochs: 500, rep_layers: 1, head_layers: 1, hidden: 16, seed: 0 }
    }
}

impl TarnetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.rep_layers) || !(1..=2).contains(&self.head_layers) {
            return Err(invalid_param!("representation and head depth must be 1 or 2"));
        }
        if self.hidden == 0 || self.epochs == 0 {
            return Err(invalid_param!("hidden width and epochs must be positive"));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(invalid_param!("learning rate must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TarnetModel {
    pub features: usize,
    rep: Mlp,
    control: Mlp,
    treated: Mlp,
    params: Vec<f64>,
}

impl TarnetModel {
    pub fn new<R: Rng + ?Sized>(features: usize, config: &TarnetConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        let mut layout = Layout::default();
        let mut rep_w = vec![features];
        rep_w.extend(core::iter::repeat(h).take(config.rep_layers));
        let rep = layout.mlp(&rep_w, true);
        let mut head_w = vec![h; config.head_layers + 1];
        head_w.push(1);
        let control = layout.mlp(&head_w, false);
        let treated = layout.mlp(&head_w, false);
        let mut params = vec![0.0; layout.position()];
        rep.init(&mut params, rng);
        control.init(&mut params, rng);
        treated.init(&mut params, rng);
        Ok(Self { features, rep, control, treated, params })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: Vec<f64>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Shape(format!("expected {} parameters, got {}", self.params.len(), params.len())));
        }
        self.params = params;
        Ok(())
    }

    /// Makes the treated head a copy of the control head.
    pub fn tie_heads(&mut self) {
        let src = self.control.range();
        let dst = self.treated.range();
        let copy: Vec<f64> = self.params[src].to_vec();
        self.params[dst].copy_from_slice(&copy);
    }

    fn check(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.features {
            return Err(Error::Shape(format!("features have {} columns, model expects {}", x.cols(), self.features)));
        }
        Ok(())
    }

    /// Per-arm predicted outcome probabilities `(control, treated)`.
    pub fn predict(&self, x: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check(x)?;
        let rep = self.rep.forward(&self.params, x.clone());
        let y0 = self.control.forward(&self.params, rep.output().clone());
        let y1 = self.treated.forward(&self.params, rep.output().clone());
        Ok((
            y0.output().as_slice().iter().map(|&l| sigmoid(l)).collect(),
            y1.output().as_slice().iter().map(|&l| sigmoid(l)).collect(),
        ))
    }

    /// ITE_i = ŷ_i(1) − ŷ_i(0).
    pub fn ite(&self, x: &Matrix) -> Result<Vec<f64>> {
        let (y0, y1) = self.predict(x)?;
        Ok(y1.iter().zip(&y0).map(|(a, b)| a - b).collect())
    }

    /// BCE of the factual-arm prediction.
    pub fn factual_bce(&self, x: &Matrix, t: &[bool], y: &[f64]) -> Result<f64> {
        self.check(x)?;
        let (l0, l1) = self.logits(x);
        let n = t.len().max(1) as f64;
        Ok(t.iter()
            .enumerate()
            .map(|(i, &ti)| {
                let l = if ti { l1[i] } else { l0[i] };
                softplus(l) - y[i] * l
            })
            .sum::<f64>()
            / n)
    }

    fn logits(&self, x: &Matrix) -> (Vec<f64>, Vec<f64>) {
        let rep = self.rep.forward(&self.params, x.clone());
        let a = self.control.forward(&self.params, rep.output().clone());
        let b = self.treated.forward(&self.params, rep.output().clone());
        (a.output().as_slice().to_vec(), b.output().as_slice().to_vec())
    }

    /// Full-batch Adam on the factual BCE. Returns the loss per epoch.
    pub fn train<R: Rng + ?Sized>(
        &mut self,
        x: &Matrix,
        t: &[bool],
        y: &[f64],
        config: &TarnetConfig,
        _rng: &mut R,
    ) -> Result<Vec<f64>> {
        config.validate()?;
        self.check(x)?;
        let n = x.rows();
        if t.len() != n || y.len() != n {
            return Err(Error::Shape(format!("treatments and outcomes must have length {n}")));
        }
        let mut adam = Adam::new(0..self.params.len(), config.learning_rate);
        let nf = n.max(1) as f64;
        let mut losses = Vec::with_capacity(config.epochs);
        for epoch in 0..config.epochs {
            let rep = self.rep.forward(&self.params, x.clone());
            let h0 = self.control.forward(&self.params, rep.output().clone());
            let h1 = self.treated.forward(&self.params, rep.output().clone());
            let l0 = h0.output().as_slice();
            let l1 = h1.output().as_slice();
            let mut loss = 0.0;
            let mut d0 = Matrix::zeros(n, 1);
            let mut d1 = Matrix::zeros(n, 1);
            for i in 0..n {
                let l = if t[i] { l1[i] } else { l0[i] };
                loss += softplus(l) - y[i] * l;
                let g = (sigmoid(l) - y[i]) / nf;
                if t[i] {
                    d1.set(i, 0, g);
                } else {
                    d0.set(i, 0, g);
                }
            }
            loss /= nf;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch, loss: "outcome" });
            }
            losses.push(loss);
            let mut grad = vec![0.0; self.params.len()];
            let dr0 = self.control.backward(&self.params, &h0, d0, &mut grad, true).unwrap();
            let dr1 = self.treated.backward(&self.params, &h1, d1, &mut grad, true).unwrap();
            let mut drep = dr0;
            for r in 0..n {
                for (a, &b) in drep.row_mut(r).iter_mut().zip(dr1.row(r)) {
                    *a += b;
                }
            }
            self.rep.backward(&self.params, &rep, drep, &mut grad, false);
            adam.step(&mut self.params, &grad);
        }
        Ok(losses)
    }
}

/// Initializes and trains a model with `config.seed`.
pub fn train_tarnet<R: Rng + ?Sized>(
    x: &Matrix,
    t: &[bool],
    y: &[f64],
    config: &TarnetConfig,
    rng: &mut R,
) -> Result<TarnetModel> {
    let mut model = TarnetModel::new(x.cols(), config, rng)?;
    model.train(x, t, y, config, rng)?;
    Ok(model)
}
