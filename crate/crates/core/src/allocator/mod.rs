//! Budgeted allocation algorithms.
//!
//! Everything here returns an [`Allocation`] whose treated count never
//! exceeds its budget. Ties are broken by ascending node index.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_param, Error, Result};

mod diffusion;
mod exhaustive;
mod genetic;
mod greedy;
mod heuristics;

pub use diffusion::{celf, expected_spread, ic_simulate, mc_greedy, CelfOutcome};
pub use exhaustive::{brute_force, subset_count, DEFAULT_ENUMERATION_CAP};
pub use genetic::{fitness, genetic, GaConfig, GaOutcome};
pub use greedy::{greedy, GreedyMode, GreedyPath};
pub use heuristics::{degree_topk, random_allocation, single_discount, top_k_indices, uplift_topk};

/// Binary treatment vector with its budget.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    t: Vec<bool>,
    k: usize,
}

impl Allocation {
    pub fn empty(n: usize, k: usize) -> Self {
        Self { t: vec![false; n], k }
    }

    pub fn new(t: Vec<bool>, k: usize) -> Result<Self> {
        let count = t.iter().filter(|&&b| b).count();
        if count > k {
            return Err(Error::InvalidInput(format!("{count} treated nodes exceed budget {k}")));
        }
        Ok(Self { t, k })
    }

    pub fn from_selected(n: usize, k: usize, selected: &[usize]) -> Result<Self> {
        let mut t = vec![false; n];
        for &i in selected {
            if i >= n {
                return Err(invalid_param!("selected node {i} out of range for {n} nodes"));
            }
            t[i] = true;
        }
        Self::new(t, k)
    }

    pub fn treatments(&self) -> &[bool] {
        &self.t
    }

    pub fn budget(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.t.len()
    }

    pub fn count(&self) -> usize {
        self.t.iter().filter(|&&b| b).count()
    }

    /// Treated nodes in ascending order.
    pub fn selected(&self) -> Vec<usize> {
        self.t.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }

    pub fn is_feasible(&self) -> bool {
        self.count() <= self.k
    }
}

pub(crate) fn check_budget(n: usize, k: usize) -> Result<()> {
    if k > n {
        Err(invalid_param!("budget {k} exceeds node count {n}"))
    } else {
        Ok(())
    }
}

/// Index of the largest value; the lowest index wins ties.
pub(crate) fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_nan() {
            continue;
        }
        match best {
            Some(b) if values[b] >= v => {}
            _ => best = Some(i),
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn allocation_rejects_over_budget() {
        assert!(Allocation::new(vec![true, true, false], 1).is_err());
        let a = Allocation::from_selected(5, 2, &[4, 1]).unwrap();
        assert_eq!(a.selected(), vec![1, 4]);
        assert!(Allocation::from_selected(5, 2, &[5]).is_err());
    }

    #[test]
    fn argmax_prefers_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), Some(1));
        assert_eq!(argmax(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), Some(0));
        assert_eq!(argmax(&[]), None);
    }
}
