use alloc::vec;
use alloc::vec::Vec;

use super::{argmax, check_budget, Allocation};
use crate::error::Result;
use crate::objective::TteObjective;
use crate::par::map_indices;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GreedyMode {
    /// Marginal gains from [`TteObjective::gain`].
    #[default]
    Incremental,
    /// Marginal gains from two full evaluations per candidate.
    FullRecompute,
}

/// Selection order of one greedy run. Serves every budget up to its length.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyPath {
    pub n: usize,
    pub order: Vec<usize>,
    /// `values[s]` is the objective after the first `s` picks.
    pub values: Vec<f64>,
}

impl GreedyPath {
    /// Allocation made of the first `k` picks.
    pub fn allocation(&self, k: usize) -> Allocation {
        let k = k.min(self.order.len());
        Allocation::from_selected(self.n, k, &self.order[..k]).expect("greedy picks are in range")
    }

    pub fn value(&self, k: usize) -> f64 {
        self.values[k.min(self.order.len())]
    }
}

/// Repeatedly adds the node with the largest marginal gain.
pub fn greedy<O: TteObjective + ?Sized>(objective: &O, k: usize, mode: GreedyMode) -> Result<GreedyPath> {
    let n = objective.len();
    check_budget(n, k)?;
    let mut t = vec![false; n];
    let mut order = Vec::with_capacity(k);
    let mut values = Vec::with_capacity(k + 1);
    let mut current = objective.evaluate(&t);
    values.push(current);
    for _ in 0..k {
        let gains = map_indices(n, |j| {
            if t[j] {
                return f64::NEG_INFINITY;
            }
            match mode {
                GreedyMode::Incremental => objective.gain(&t, j),
                GreedyMode::FullRecompute => {
                    let mut with = t.clone();
                    with[j] = true;
                    objective.evaluate(&with) - current
                }
            }
        });
        let Some(best) = argmax(&gains) else { break };
        t[best] = true;
        order.push(best);
        current = match mode {
            GreedyMode::Incremental => current + gains[best],
            GreedyMode::FullRecompute => objective.evaluate(&t),
        };
        values.push(current);
    }
    Ok(GreedyPath { n, order, values })
}
