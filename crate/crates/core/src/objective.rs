//! Total-treatment-effect objectives over binary allocations.

use alloc::vec::Vec;

use crate::dgp::{exposure_of, DgpInstance};
use crate::graph::Graph;

/// Anything that predicts E[Y_i(t, z)] for every node of a fixed graph.
pub trait PotentialOutcomes: Sync {
    fn graph(&self) -> &Graph;

    fn outcome(&self, i: usize, treated: bool, z: f64) -> f64;

    /// Outcome in the all-control world.
    fn baseline(&self, i: usize) -> f64 {
        self.outcome(i, false, 0.0)
    }
}

impl PotentialOutcomes for DgpInstance {
    fn graph(&self) -> &Graph {
        DgpInstance::graph(self)
    }

    fn outcome(&self, i: usize, treated: bool, z: f64) -> f64 {
        self.outcome_unchecked(i, treated, z)
    }
}

impl<P: PotentialOutcomes + ?Sized> PotentialOutcomes for &P {
    fn graph(&self) -> &Graph {
        (**self).graph()
    }

    fn outcome(&self, i: usize, treated: bool, z: f64) -> f64 {
        (**self).outcome(i, treated, z)
    }

    fn baseline(&self, i: usize) -> f64 {
        (**self).baseline(i)
    }
}

/// Objective maximized by the allocation search.
pub trait TteObjective: Sync {
    fn len(&self) -> usize;

    fn evaluate(&self, t: &[bool]) -> f64;

    /// `evaluate(t ∪ {j}) - evaluate(t)`.
    fn gain(&self, t: &[bool], j: usize) -> f64 {
        if t[j] {
            return 0.0;
        }
        let mut with = t.to_vec();
        with[j] = true;
        self.evaluate(&with) - self.evaluate(t)
    }
}

/// Σ_i [M(i, t_i, z_i) − M(i, 0, 0)] for a potential-outcome model `M`.
///
/// Gains only touch `j` and its neighbors, since z_l depends on direct
/// neighbors alone.
#[derive(Debug, Clone)]
pub struct TotalEffect<P> {
    model: P,
    baseline: Vec<f64>,
}

impl<P: PotentialOutcomes> TotalEffect<P> {
    pub fn new(model: P) -> Self {
        let baseline = (0..model.graph().n()).map(|i| model.baseline(i)).collect();
        Self { model, baseline }
    }

    pub fn model(&self) -> &P {
        &self.model
    }

    /// Per-node ITTE estimates under allocation `t`.
    pub fn itte(&self, t: &[bool]) -> Vec<f64> {
        let g = self.model.graph();
        (0..g.n())
            .map(|i| self.model.outcome(i, t[i], exposure_of(g, t, i)) - self.baseline[i])
            .collect()
    }
}

impl<P: PotentialOutcomes> TteObjective for TotalEffect<P> {
    fn len(&self) -> usize {
        self.baseline.len()
    }

    fn evaluate(&self, t: &[bool]) -> f64 {
        let g = self.model.graph();
        (0..g.n())
            .map(|i| self.model.outcome(i, t[i], exposure_of(g, t, i)) - self.baseline[i])
            .sum()
    }

    fn gain(&self, t: &[bool], j: usize) -> f64 {
        if t[j] {
            return 0.0;
        }
        let g = self.model.graph();
        let zj = exposure_of(g, t, j);
        let mut delta = self.model.outcome(j, true, zj) - self.model.outcome(j, false, zj);
        for &l in g.neighbors(j) {
            let deg = g.degree(l) as f64;
            let treated = g.neighbors(l).iter().filter(|&&m| t[m]).count() as f64;
            let before = treated / deg;
            let after = (treated + 1.0) / deg;
            delta += self.model.outcome(l, t[l], after) - self.model.outcome(l, t[l], before);
        }
        delta
    }
}

/// Modular objective Σ_{i ∈ S} v_i.
#[derive(Debug, Clone)]
pub struct Additive(pub Vec<f64>);

impl TteObjective for Additive {
    fn len(&self) -> usize {
        self.0.len()
    }

    fn evaluate(&self, t: &[bool]) -> f64 {
        self.0.iter().zip(t).filter(|(_, &s)| s).map(|(v, _)| v).sum()
    }

    fn gain(&self, t: &[bool], j: usize) -> f64 {
        if t[j] {
            0.0
        } else {
            self.0[j]
        }
    }
}
