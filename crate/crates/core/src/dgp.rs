//! Synthetic data generation with network interference, and the
//! ground-truth potential-outcome oracle.
//!
//! Node `i` with features `x_i` has
//!
//! ```text
//! p_i   = σ(w_XT · x_i)                      propensity
//! u_i   = σ(w_XY · x_i)                      baseline driver
//! h_i   = σ(w_TY · x_i) + b_TY               effect heterogeneity
//! E[Y_i(t, z)] = σ(β0 + h_i β_ind t + h_i β_spill z + β_XY u_i + β_NY ū_i)
//! ```
//!
//! where `ū_i` is the neighbor mean of `u`. Means over an empty
//! neighborhood are zero.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_input, invalid_param, Error, Result};
use crate::graph::Graph;
use crate::linalg::{dot, Matrix};
use crate::math::sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DgpParams {
    pub beta0: f64,
    pub beta_xy: f64,
    pub beta_ny: f64,
    pub beta_individual: f64,
    pub beta_spillover: f64,
    pub beta_xt: f64,
    pub beta_nt: f64,
    pub b_ty: f64,
    pub beta_eps: f64,
    pub d: usize,
}

impl Default for DgpParams {
    fn default() -> Self {
        Self {
            beta0: -3.0,
            beta_xy: 0.7,
            beta_ny: 0.2,
            beta_individual: 1.0,
            beta_spillover: 0.3,
            beta_xt: 1.0,
            beta_nt: 0.5,
            b_ty: 4.0,
            beta_eps: 0.05,
            d: 10,
        }
    }
}

impl DgpParams {
    pub fn with_spillover(self, beta_spillover: f64) -> Self {
        Self { beta_spillover, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d < 1 {
            return Err(invalid_param!("feature dimension must be at least 1"));
        }
        if !(self.beta_eps >= 0.0) {
            return Err(invalid_param!("beta_eps must be non-negative, got {}", self.beta_eps));
        }
        let all = [
            self.beta0,
            self.beta_xy,
            self.beta_ny,
            self.beta_individual,
            self.beta_spillover,
            self.beta_xt,
            self.beta_nt,
            self.b_ty,
        ];
        if all.iter().any(|b| !b.is_finite()) {
            return Err(invalid_param!("DGP coefficients must be finite"));
        }
        Ok(())
    }
}

/// Weight vectors of the treatment and outcome equations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpWeights {
    pub w_xt: Vec<f64>,
    pub w_xy: Vec<f64>,
    pub w_ty: Vec<f64>,
}

impl DgpWeights {
    /// Each component i.i.d. uniform on `[-1, 1)`.
    pub fn sample<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        let mut draw = || (0..d).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
        let w_xt = draw();
        let w_xy = draw();
        let w_ty = draw();
        Self { w_xt, w_xy, w_ty }
    }

    pub fn zeros(d: usize) -> Self {
        Self { w_xt: alloc::vec![0.0; d], w_xy: alloc::vec![0.0; d], w_ty: alloc::vec![0.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.w_xt.len()
    }
}

/// `n × d` matrix of i.i.d. standard normal features.
pub fn sample_features<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Matrix {
    let data = (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Matrix::from_vec(n, d, data).expect("length matches")
}

/// z_i = treated neighbors / |N_i|, zero for isolated nodes.
pub fn exposure(graph: &Graph, t: &[bool]) -> Result<Vec<f64>> {
    if t.len() != graph.n() {
        return Err(invalid_input!("treatment vector has length {}, graph has {} nodes", t.len(), graph.n()));
    }
    Ok((0..graph.n()).map(|i| exposure_of(graph, t, i)).collect())
}

#[inline]
pub(crate) fn exposure_of(graph: &Graph, t: &[bool], i: usize) -> f64 {
    let nbrs = graph.neighbors(i);
    if nbrs.is_empty() {
        0.0
    } else {
        nbrs.iter().filter(|&&j| t[j]).count() as f64 / nbrs.len() as f64
    }
}

/// Converts a numeric 0/1 vector, rejecting anything else.
pub fn binary_vector(values: &[f64]) -> Result<Vec<bool>> {
    values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v == 0.0 {
                Ok(false)
            } else if v == 1.0 {
                Ok(true)
            } else {
                Err(invalid_input!("treatment of node {i} is {v}, expected 0 or 1"))
            }
        })
        .collect()
}

fn neighbor_mean(graph: &Graph, values: &[f64], i: usize) -> f64 {
    let nbrs = graph.neighbors(i);
    if nbrs.is_empty() {
        0.0
    } else {
        nbrs.iter().map(|&j| values[j]).sum::<f64>() / nbrs.len() as f64
    }
}

/// A sampled ground-truth world: graph, features, weights and coefficients.
#[derive(Debug, Clone)]
pub struct DgpInstance {
    graph: Graph,
    features: Matrix,
    weights: DgpWeights,
    params: DgpParams,
    propensity: Vec<f64>,
    heterogeneity: Vec<f64>,
    // β0 + β_XY u_i + β_NY ū_i
    base_logit: Vec<f64>,
    baseline: Vec<f64>,
}

impl DgpInstance {
    pub fn new(graph: Graph, features: Matrix, weights: DgpWeights, params: DgpParams) -> Result<Self> {
        params.validate()?;
        if features.rows() != graph.n() {
            return Err(Error::Shape(format!(
                "{} feature rows for a graph with {} nodes",
                features.rows(),
                graph.n()
            )));
        }
        if features.cols() != params.d {
            return Err(Error::Shape(format!("features have {} columns, d = {}", features.cols(), params.d)));
        }
        let d = params.d;
        if weights.w_xt.len() != d || weights.w_xy.len() != d || weights.w_ty.len() != d {
            return Err(Error::Shape(format!("weight vectors must have length {d}")));
        }
        let n = graph.n();
        let propensity: Vec<f64> = (0..n).map(|i| sigmoid(dot(&weights.w_xt, features.row(i)))).collect();
        let u: Vec<f64> = (0..n).map(|i| sigmoid(dot(&weights.w_xy, features.row(i)))).collect();
        let heterogeneity: Vec<f64> =
            (0..n).map(|i| sigmoid(dot(&weights.w_ty, features.row(i))) + params.b_ty).collect();
        let base_logit: Vec<f64> = (0..n)
            .map(|i| params.beta0 + params.beta_xy * u[i] + params.beta_ny * neighbor_mean(&graph, &u, i))
            .collect();
        let baseline = base_logit.iter().map(|&a| sigmoid(a)).collect();
        Ok(Self { graph, features, weights, params, propensity, heterogeneity, base_logit, baseline })
    }

    /// Samples weights, then features.
    pub fn sample<R: Rng + ?Sized>(graph: Graph, params: DgpParams, rng: &mut R) -> Result<Self> {
        params.validate()?;
        let weights = DgpWeights::sample(params.d, rng);
        let features = sample_features(graph.n(), params.d, rng);
        Self::new(graph, features, weights, params)
    }

    /// Same world under different coefficients.
    pub fn with_params(&self, params: DgpParams) -> Result<Self> {
        Self::new(self.graph.clone(), self.features.clone(), self.weights.clone(), params)
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn weights(&self) -> &DgpWeights {
        &self.weights
    }

    pub fn params(&self) -> &DgpParams {
        &self.params
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    /// Treatment probability: clamp(β_XT p_i + β_NT p̄_i, 0, 1).
    pub fn treatment_probability(&self, i: usize) -> f64 {
        let p = self.params.beta_xt * self.propensity[i]
            + self.params.beta_nt * neighbor_mean(&self.graph, &self.propensity, i);
        p.clamp(0.0, 1.0)
    }

    #[inline]
    pub(crate) fn logit(&self, i: usize, treated: bool, z: f64) -> f64 {
        let h = self.heterogeneity[i];
        let t = if treated { 1.0 } else { 0.0 };
        self.base_logit[i] + h * self.params.beta_individual * t + h * self.params.beta_spillover * z
    }

    /// Unchecked oracle value at ε = 0.
    #[inline]
    pub(crate) fn outcome_unchecked(&self, i: usize, treated: bool, z: f64) -> f64 {
        if !treated && z == 0.0 {
            return self.baseline[i];
        }
        sigmoid(self.logit(i, treated, z))
    }

    /// E[Y_i(t, z)] with the noise term at ε = 0.
    pub fn expected_outcome(&self, i: usize, treated: bool, z: f64) -> Result<f64> {
        self.check(i, z)?;
        Ok(self.outcome_unchecked(i, treated, z))
    }

    /// Monte Carlo estimate of E_ε[σ(a + β_ε ε)] over `draws` noise samples.
    pub fn expected_outcome_mc<R: Rng + ?Sized>(
        &self,
        i: usize,
        treated: bool,
        z: f64,
        draws: usize,
        rng: &mut R,
    ) -> Result<f64> {
        self.check(i, z)?;
        if draws == 0 {
            return Err(invalid_param!("need at least one noise draw"));
        }
        let a = self.logit(i, treated, z);
        let s: f64 = (0..draws)
            .map(|_| sigmoid(a + self.params.beta_eps * rng.sample::<f64, _>(StandardNormal)))
            .sum();
        Ok(s / draws as f64)
    }

    fn check(&self, i: usize, z: f64) -> Result<()> {
        if i >= self.n() {
            return Err(invalid_input!("node {i} out of range"));
        }
        if !(0.0..=1.0).contains(&z) {
            return Err(invalid_input!("exposure {z} outside [0, 1]"));
        }
        Ok(())
    }

    /// Marginal individual treatment effect τ_i(z).
    pub fn mite(&self, i: usize, z: f64) -> Result<f64> {
        Ok(self.expected_outcome(i, true, z)? - self.expected_outcome(i, false, z)?)
    }

    /// Spillover effect δ_i(t, z).
    pub fn spillover(&self, i: usize, treated: bool, z: f64) -> Result<f64> {
        Ok(self.expected_outcome(i, treated, z)? - self.expected_outcome(i, treated, 0.0)?)
    }

    /// Individual total treatment effect ω_i(t, z).
    pub fn itte(&self, i: usize, treated: bool, z: f64) -> Result<f64> {
        Ok(self.expected_outcome(i, treated, z)? - self.expected_outcome(i, false, 0.0)?)
    }

    /// Total treatment effect of an allocation: Σ_i ω_i(t_i, z_i).
    pub fn tte(&self, t: &[bool]) -> Result<f64> {
        let z = exposure(&self.graph, t)?;
        Ok((0..self.n()).map(|i| self.outcome_unchecked(i, t[i], z[i]) - self.baseline[i]).sum())
    }

    /// Σ_i E[Y_i(t_i, z_i)].
    pub fn expected_outcome_sum(&self, t: &[bool]) -> Result<f64> {
        let z = exposure(&self.graph, t)?;
        Ok((0..self.n()).map(|i| self.outcome_unchecked(i, t[i], z[i])).sum())
    }

    /// Bernoulli draws with confounded propensities.
    pub fn assign_treatments<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<bool> {
        (0..self.n()).map(|i| rng.random::<f64>() < self.treatment_probability(i)).collect()
    }

    /// Factual outcomes for treatments `t`. Each node draws ε ~ N(0, 1),
    /// sets q_i = σ(logit + β_ε ε) and, in Bernoulli mode, y_i ~ Bern(q_i).
    pub fn sample_factual_outcomes<R: Rng + ?Sized>(
        &self,
        t: &[bool],
        mode: OutcomeMode,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let z = exposure(&self.graph, t)?;
        Ok((0..self.n())
            .map(|i| {
                let eps: f64 = rng.sample(StandardNormal);
                let q = sigmoid(self.logit(i, t[i], z[i]) + self.params.beta_eps * eps);
                match mode {
                    OutcomeMode::Bernoulli => {
                        if rng.random::<f64>() < q {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    OutcomeMode::Soft => q,
                }
            })
            .collect())
    }

    /// Factual slice of the world: treatments, exposures and outcomes.
    pub fn sample_dataset<R: Rng + ?Sized>(&self, mode: OutcomeMode, rng: &mut R) -> Result<Dataset> {
        let t = self.assign_treatments(rng);
        let z = exposure(&self.graph, &t)?;
        let y = self.sample_factual_outcomes(&t, mode, rng)?;
        let ds = Dataset { t, z, y };
        ds.validate(self)?;
        Ok(ds)
    }
}

/// How factual outcomes are reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeMode {
    /// y_i ∈ {0, 1}.
    #[default]
    Bernoulli,
    /// y_i = q_i, a soft label.
    Soft,
}

/// Observed data for one network split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub t: Vec<bool>,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.t.len()
    }

    /// Lengths match the instance and `z` equals the exposure of `t`.
    pub fn validate(&self, instance: &DgpInstance) -> Result<()> {
        self.validate_graph(instance.graph())
    }

    pub fn validate_graph(&self, graph: &Graph) -> Result<()> {
        let n = graph.n();
        if self.t.len() != n || self.z.len() != n || self.y.len() != n {
            return Err(Error::Shape(format!("dataset vectors must all have length {n}")));
        }
        let expect = exposure(graph, &self.t)?;
        if let Some(i) = (0..n).find(|&i| (expect[i] - self.z[i]).abs() > 1e-12) {
            return Err(invalid_input!(
                "exposure of node {i} is {}, treatments imply {}",
                self.z[i],
                expect[i]
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{barabasi_albert, path, Graph};
    use crate::rng::stream;
    use alloc::vec;

    fn zero_world(graph: Graph) -> DgpInstance {
        let n = graph.n();
        DgpInstance::new(graph, Matrix::zeros(n, 10), DgpWeights::zeros(10), DgpParams::default()).unwrap()
    }

    #[test]
    fn default_params() {
        let p = DgpParams::default();
        assert_eq!(
            (p.beta0, p.beta_xy, p.beta_ny, p.beta_individual, p.beta_xt, p.beta_nt, p.b_ty, p.beta_eps, p.d),
            (-3.0, 0.7, 0.2, 1.0, 1.0, 0.5, 4.0, 0.05, 10)
        );
    }

    #[test]
    fn sampled_shapes_and_support() {
        let g = barabasi_albert(5000, 2, &mut stream(0, 0)).unwrap();
        let inst = DgpInstance::sample(g, DgpParams::default(), &mut stream(0, 1)).unwrap();
        assert_eq!((inst.features().rows(), inst.features().cols()), (5000, 10));
        let w = inst.weights();
        for v in [&w.w_xt, &w.w_xy, &w.w_ty] {
            assert_eq!(v.len(), 10);
            assert!(v.iter().all(|x| (-1.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn exposure_ratios() {
        let g = crate::graph::star(5);
        assert_eq!(exposure(&g, &[false, true, true, true, true]).unwrap()[0], 1.0);
        assert_eq!(exposure(&g, &[false; 5]).unwrap()[0], 0.0);
        assert_eq!(exposure(&g, &[false, true, false, false, false]).unwrap()[0], 0.25);
        assert_eq!(exposure(&Graph::empty(2), &[true, true]).unwrap(), vec![0.0, 0.0]);
        assert!(exposure(&g, &[true]).is_err());
        assert!(binary_vector(&[0.0, 1.0, 0.5]).is_err());
    }

    #[test]
    fn propensity_closed_forms() {
        let inst = zero_world(Graph::empty(1));
        assert_eq!(inst.treatment_probability(0), 0.5);

        let inst = zero_world(Graph::empty(3))
            .with_params(DgpParams { beta_xt: 0.0, beta_nt: 0.0, ..DgpParams::default() })
            .unwrap();
        let t = inst.assign_treatments(&mut stream(1, 0));
        assert!(t.iter().all(|&x| !x));
    }

    #[test]
    fn propensity_clamps_at_one() {
        // w_XT large and positive with positive features pushes p_i and p̄_i to 1.
        let g = path(2);
        let features = Matrix::from_vec(2, 1, vec![100.0, 100.0]).unwrap();
        let weights = DgpWeights { w_xt: vec![1.0], w_xy: vec![0.0], w_ty: vec![0.0] };
        let params = DgpParams { d: 1, ..DgpParams::default() };
        let inst = DgpInstance::new(g, features, weights, params).unwrap();
        assert_eq!(inst.treatment_probability(0), 1.0);
    }

    #[test]
    fn outcome_closed_forms() {
        let iso = zero_world(Graph::empty(1));
        assert_eq!(iso.expected_outcome(0, false, 0.0).unwrap(), sigmoid(-3.0 + 0.7 * 0.5));
        let conn = zero_world(path(2));
        let expect = sigmoid(-3.0 + 0.35 + 0.1);
        assert!((conn.expected_outcome(0, false, 0.0).unwrap() - expect).abs() < 1e-15);
        assert!(conn.expected_outcome(0, false, 1.5).is_err());
        assert!(conn.expected_outcome(0, false, -0.1).is_err());
    }

    #[test]
    fn zero_spillover_ignores_exposure() {
        let g = barabasi_albert(40, 2, &mut stream(2, 0)).unwrap();
        let inst = DgpInstance::sample(g, DgpParams::default().with_spillover(0.0), &mut stream(2, 1)).unwrap();
        for i in 0..40 {
            for t in [false, true] {
                let a = inst.expected_outcome(i, t, 0.0).unwrap();
                let b = inst.expected_outcome(i, t, 0.8).unwrap();
                assert_eq!(a, b);
                assert_eq!(inst.spillover(i, t, 0.8).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn spillover_is_monotone_in_exposure() {
        let g = barabasi_albert(60, 2, &mut stream(3, 0)).unwrap();
        let inst = DgpInstance::sample(g, DgpParams::default().with_spillover(0.4), &mut stream(3, 1)).unwrap();
        for i in 0..60 {
            for t in [false, true] {
                let y: Vec<f64> =
                    [0.0, 0.5, 1.0].iter().map(|&z| inst.expected_outcome(i, t, z).unwrap()).collect();
                assert!(y[0] < y[1] && y[1] < y[2]);
            }
        }
    }

    #[test]
    fn tte_small_cases() {
        let inst = zero_world(Graph::empty(1));
        assert_eq!(inst.tte(&[true]).unwrap(), inst.mite(0, 0.0).unwrap());

        let g = barabasi_albert(30, 2, &mut stream(4, 0)).unwrap();
        let inst = DgpInstance::sample(g, DgpParams::default(), &mut stream(4, 1)).unwrap();
        assert_eq!(inst.tte(&[false; 30]).unwrap(), 0.0);
        assert_eq!(inst.itte(3, false, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn tte_on_path_by_hand() {
        // Zero weights: u = 0.5, h = 0.5 + 4 = 4.5, β_spill = 0.3.
        let inst = zero_world(path(3));
        let t = [false, true, false];
        let base = -3.0 + 0.35 + 0.1;
        let end = sigmoid(base + 4.5 * 0.3 * 1.0) - sigmoid(base);
        let mid = sigmoid(base + 4.5) - sigmoid(base);
        let want = 2.0 * end + mid;
        assert!((inst.tte(&t).unwrap() - want).abs() < 1e-14);
    }

    #[test]
    fn saturated_outcomes() {
        let g = Graph::empty(10_000);
        let mut params = DgpParams { beta0: 50.0, beta_eps: 0.0, ..DgpParams::default() };
        let inst = DgpInstance::new(g.clone(), Matrix::zeros(10_000, 10), DgpWeights::zeros(10), params).unwrap();
        let y = inst.sample_factual_outcomes(&vec![false; 10_000], OutcomeMode::Bernoulli, &mut stream(5, 0)).unwrap();
        assert!(crate::math::mean(&y) >= 0.999);

        params.beta0 = -800.0;
        params.beta_xy = 0.0;
        params.beta_ny = 0.0;
        let inst = DgpInstance::new(g, Matrix::zeros(10_000, 10), DgpWeights::zeros(10), params).unwrap();
        let y = inst.sample_factual_outcomes(&vec![false; 10_000], OutcomeMode::Bernoulli, &mut stream(5, 1)).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn factual_mean_tracks_oracle() {
        let g = barabasi_albert(5000, 2, &mut stream(6, 0)).unwrap();
        let inst = DgpInstance::sample(g, DgpParams::default(), &mut stream(6, 1)).unwrap();
        let mut rng = stream(6, 2);
        let t = inst.assign_treatments(&mut rng);
        let z = exposure(inst.graph(), &t).unwrap();
        let y = inst.sample_factual_outcomes(&t, OutcomeMode::Bernoulli, &mut rng).unwrap();
        let q: Vec<f64> = (0..5000).map(|i| inst.expected_outcome(i, t[i], z[i]).unwrap()).collect();
        let var: f64 = q.iter().map(|p| p * (1.0 - p)).sum::<f64>() / (5000.0 * 5000.0);
        let gap = (crate::math::mean(&y) - crate::math::mean(&q)).abs();
        assert!(gap < 3.0 * libm::sqrt(var) + 1e-3, "gap {gap}");
    }

    #[test]
    fn mc_oracle_close_to_deterministic() {
        let g = barabasi_albert(20, 2, &mut stream(7, 0)).unwrap();
        let inst = DgpInstance::sample(g, DgpParams::default(), &mut stream(7, 1)).unwrap();
        let mut rng = stream(7, 2);
        for i in 0..20 {
            let a = inst.expected_outcome(i, true, 0.5).unwrap();
            let b = inst.expected_outcome_mc(i, true, 0.5, 4000, &mut rng).unwrap();
            assert!((a - b).abs() < 2e-3);
        }
    }

    #[test]
    fn dataset_consistency() {
        let g = barabasi_albert(200, 2, &mut stream(8, 0)).unwrap();
        let inst = DgpInstance::sample(g, DgpParams::default(), &mut stream(8, 1)).unwrap();
        let mut ds = inst.sample_dataset(OutcomeMode::Bernoulli, &mut stream(8, 2)).unwrap();
        assert!(ds.y.iter().all(|&y| y == 0.0 || y == 1.0));
        ds.z[0] += 0.5;
        assert!(ds.validate(&inst).is_err());
        let soft = inst.sample_dataset(OutcomeMode::Soft, &mut stream(8, 2)).unwrap();
        assert!(soft.y.iter().all(|&y| y > 0.0 && y < 1.0));
    }
}
