//! Small dense networks with hand-written backpropagation.
//!
//! Parameters of a whole model live in one flat buffer. A [`Dense`] layer is
//! a view into it: an `outputs × inputs` row-major weight block followed by
//! `outputs` biases. Gradients use the same layout.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::math::sqrt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub offset: usize,
}

impl Dense {
    pub fn len(&self) -> usize {
        self.outputs * self.inputs + self.outputs
    }

    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.len()
    }

    #[inline]
    fn bias_offset(&self) -> usize {
        self.offset + self.outputs * self.inputs
    }

    #[inline]
    pub fn weights<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.offset..self.bias_offset()]
    }

    #[inline]
    pub fn biases<'a>(&self, params: &'a [f64]) -> &'a [f64] {
        &params[self.bias_offset()..self.offset + self.len()]
    }

    /// `out = W x + b` for one row.
    #[inline]
    pub fn apply_row(&self, params: &[f64], x: &[f64], out: &mut [f64]) {
        let w = self.weights(params);
        let b = self.biases(params);
        for (o, slot) in out.iter_mut().enumerate() {
            let row = &w[o * self.inputs..(o + 1) * self.inputs];
            *slot = b[o] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
        }
    }

    pub fn apply(&self, params: &[f64], x: &Matrix) -> Matrix {
        let mut out = Matrix::zeros(x.rows(), self.outputs);
        for r in 0..x.rows() {
            self.apply_row(params, x.row(r), out.row_mut(r));
        }
        out
    }

    /// Accumulates parameter gradients for `out = W x + b` given `dout`,
    /// returning the gradient with respect to `x`; skipped if `want_input`
    /// is false.
    pub fn backward(
        &self,
        params: &[f64],
        x: &Matrix,
        dout: &Matrix,
        grad: &mut [f64],
        want_input: bool,
    ) -> Option<Matrix> {
        let (wi, bi) = (self.offset, self.bias_offset());
        for r in 0..x.rows() {
            let xr = x.row(r);
            for (o, &g) in dout.row(r).iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                grad[bi + o] += g;
                let base = wi + o * self.inputs;
                for (k, &xv) in xr.iter().enumerate() {
                    grad[base + k] += g * xv;
                }
            }
        }
        if !want_input {
            return None;
        }
        let w = self.weights(params);
        let mut dx = Matrix::zeros(x.rows(), self.inputs);
        for r in 0..x.rows() {
            let dxr = dx.row_mut(r);
            for (o, &g) in dout.row(r).iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let row = &w[o * self.inputs..(o + 1) * self.inputs];
                for (k, &wv) in row.iter().enumerate() {
                    dxr[k] += g * wv;
                }
            }
        }
        Some(dx)
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init<R: Rng + ?Sized>(&self, params: &mut [f64], rng: &mut R) {
        let a = sqrt(6.0 / (self.inputs + self.outputs) as f64);
        for w in &mut params[self.offset..self.bias_offset()] {
            *w = rng.random_range(-a..=a);
        }
        for b in &mut params[self.bias_offset()..self.offset + self.len()] {
            *b = 0.0;
        }
    }
}

/// Hands out consecutive offsets in a flat parameter buffer.
#[derive(Debug, Default)]
pub struct Layout {
    next: usize,
}

impl Layout {
    pub fn dense(&mut self, inputs: usize, outputs: usize) -> Dense {
        let d = Dense { inputs, outputs, offset: self.next };
        self.next += d.len();
        d
    }

    pub fn mlp(&mut self, widths: &[usize], activate_last: bool) -> Mlp {
        let layers = widths.windows(2).map(|w| self.dense(w[0], w[1])).collect();
        Mlp { layers, activate_last }
    }

    pub fn position(&self) -> usize {
        self.next
    }
}

pub fn relu_in_place(m: &mut Matrix) {
    for r in 0..m.rows() {
        for v in m.row_mut(r) {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
}

/// Zeroes `dout` wherever the ReLU output was not positive.
pub fn relu_backward(out: &Matrix, dout: &mut Matrix) {
    for r in 0..out.rows() {
        let o = out.row(r);
        for (g, &a) in dout.row_mut(r).iter_mut().zip(o) {
            if a <= 0.0 {
                *g = 0.0;
            }
        }
    }
}

/// Feed-forward stack with ReLU between layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    /// Apply ReLU after the final layer too.
    pub activate_last: bool,
}

/// Layer inputs recorded during a forward pass; the last entry is the output.
#[derive(Debug, Clone)]
pub struct MlpTrace {
    pub values: Vec<Matrix>,
}

impl MlpTrace {
    pub fn output(&self) -> &Matrix {
        self.values.last().expect("trace holds at least the input")
    }
}

impl Mlp {
    pub fn inputs(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn range(&self) -> Range<usize> {
        let start = self.layers.first().map_or(0, |l| l.offset);
        let end = self.layers.last().map_or(0, |l| l.offset + l.len());
        start..end
    }

    fn activated(&self, layer: usize) -> bool {
        layer + 1 < self.layers.len() || self.activate_last
    }

    pub fn forward(&self, params: &[f64], x: Matrix) -> MlpTrace {
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(x);
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = layer.apply(params, values.last().unwrap());
            if self.activated(l) {
                relu_in_place(&mut out);
            }
            values.push(out);
        }
        MlpTrace { values }
    }

    /// Single-row forward pass using caller-provided scratch buffers.
    pub fn forward_row(&self, params: &[f64], x: &[f64], scratch: &mut RowScratch) -> f64 {
        scratch.a.clear();
        scratch.a.extend_from_slice(x);
        for (l, layer) in self.layers.iter().enumerate() {
            scratch.b.clear();
            scratch.b.resize(layer.outputs, 0.0);
            layer.apply_row(params, &scratch.a, &mut scratch.b);
            if self.activated(l) {
                for v in &mut scratch.b {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            core::mem::swap(&mut scratch.a, &mut scratch.b);
        }
        scratch.a[0]
    }

    /// Backpropagates `dout` (gradient w.r.t. the output) through the
    /// recorded trace, accumulating into `grad`. Returns the gradient with
    /// respect to the input when requested.
    pub fn backward(
        &self,
        params: &[f64],
        trace: &MlpTrace,
        dout: Matrix,
        grad: &mut [f64],
        want_input: bool,
    ) -> Option<Matrix> {
        let mut g = dout;
        for l in (0..self.layers.len()).rev() {
            if self.activated(l) {
                relu_backward(&trace.values[l + 1], &mut g);
            }
            let need = want_input || l > 0;
            match self.layers[l].backward(params, &trace.values[l], &g, grad, need) {
                Some(dx) => g = dx,
                None => return None,
            }
        }
        Some(g)
    }

    pub fn init<R: Rng + ?Sized>(&self, params: &mut [f64], rng: &mut R) {
        for layer in &self.layers {
            layer.init(params, rng);
        }
    }
}

#[derive(Debug, Default, Clone)]
pub struct RowScratch {
    a: Vec<f64>,
    b: Vec<f64>,
}

/// Adam over one contiguous parameter range.
#[derive(Debug, Clone)]
pub struct Adam {
    range: Range<usize>,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(range: Range<usize>, lr: f64) -> Self {
        let len = range.len();
        Self { range, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; len], v: vec![0.0; len], step: 0 }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let c1 = 1.0 - libm::pow(self.beta1, f64::from(self.step));
        let c2 = 1.0 - libm::pow(self.beta2, f64::from(self.step));
        for (k, idx) in self.range.clone().enumerate() {
            let g = grad[idx];
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[k] / c1;
            let vhat = self.v[k] / c2;
            params[idx] -= self.lr * mhat / (sqrt(vhat) + self.eps);
        }
    }
}
