//! Ground-truth scoring of allocations against random targeting.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::allocator::{greedy, random_allocation, Allocation, GreedyMode};
use crate::dgp::DgpInstance;
use crate::error::{invalid_param, Error, Result};
use crate::math::mean_and_sem;
use crate::objective::TotalEffect;

/// Mean TTE and mean expected-outcome sum of uniform k-subsets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomBaseline {
    pub k: usize,
    pub samples: usize,
    pub tte_mean: f64,
    pub tte_sem: f64,
    pub outcome_mean: f64,
    pub outcome_sem: f64,
}

pub const DEFAULT_RANDOM_SAMPLES: usize = 100;

pub fn random_baseline<R: Rng + ?Sized>(
    instance: &DgpInstance,
    k: usize,
    samples: usize,
    rng: &mut R,
) -> Result<RandomBaseline> {
    if samples == 0 {
        return Err(invalid_param!("random baseline needs at least one sample"));
    }
    let mut ttes = Vec::with_capacity(samples);
    let mut sums = Vec::with_capacity(samples);
    for _ in 0..samples {
        let a = random_allocation(instance.n(), k, rng)?;
        ttes.push(instance.tte(a.treatments())?);
        sums.push(instance.expected_outcome_sum(a.treatments())?);
    }
    let (tte_mean, tte_sem) = mean_and_sem(&ttes);
    let (outcome_mean, outcome_sem) = mean_and_sem(&sums);
    Ok(RandomBaseline { k, samples, tte_mean, tte_sem, outcome_mean, outcome_sem })
}

/// TTE of a method divided by the mean random TTE at the same budget.
pub fn liftup(method_tte: f64, random_mean: f64) -> Result<f64> {
    if random_mean == 0.0 {
        return Err(Error::UndefinedMetric("liftup"));
    }
    Ok(method_tte / random_mean)
}

/// Σ_i E[Y_i(t_i, z_i)] under the allocation, relative to random targeting.
pub fn riseo(instance: &DgpInstance, allocation: &Allocation, random_outcome_mean: f64) -> Result<f64> {
    if random_outcome_mean == 0.0 {
        return Err(Error::UndefinedMetric("riseo"));
    }
    Ok(instance.expected_outcome_sum(allocation.treatments())? / random_outcome_mean)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    pub k: usize,
    pub allocation: Allocation,
    pub true_tte: f64,
    /// `None` when the random baseline TTE is zero.
    pub liftup: Option<f64>,
    pub riseo: Option<f64>,
    pub seconds: f64,
}

/// Scores an allocation with the ε = 0 oracle.
pub fn score(
    instance: &DgpInstance,
    method: &str,
    allocation: Allocation,
    baseline: &RandomBaseline,
    seconds: f64,
) -> Result<MethodResult> {
    let true_tte = instance.tte(allocation.treatments())?;
    Ok(MethodResult {
        method: String::from(method),
        k: allocation.budget(),
        liftup: liftup(true_tte, baseline.tte_mean).ok(),
        riseo: riseo(instance, &allocation, baseline.outcome_mean).ok(),
        allocation,
        true_tte,
        seconds,
    })
}

/// Greedy on the true outcome model. A heuristic bound: the exact optimum
/// can be higher.
pub fn upper_bound(instance: &DgpInstance, k: usize, baseline: &RandomBaseline) -> Result<MethodResult> {
    let path = greedy(&TotalEffect::new(instance), k, GreedyMode::Incremental)?;
    score(instance, "upper_bound", path.allocation(k), baseline, 0.0)
}

/// Shared selected nodes divided by the budget.
pub fn allocation_similarity(a: &Allocation, b: &Allocation) -> Result<f64> {
    if a.budget() != b.budget() {
        return Err(Error::InvalidComparison { left: a.budget(), right: b.budget() });
    }
    if a.n() != b.n() {
        return Err(invalid_param!("allocations cover {} and {} nodes", a.n(), b.n()));
    }
    if a.budget() == 0 {
        return Ok(1.0);
    }
    let common = a.treatments().iter().zip(b.treatments()).filter(|(&x, &y)| x && y).count();
    Ok(common as f64 / a.budget() as f64)
}

/// Pairwise similarity matrix in the given order.
pub fn similarity_matrix(allocations: &[&Allocation]) -> Result<Vec<Vec<f64>>> {
    allocations
        .iter()
        .map(|a| allocations.iter().map(|b| allocation_similarity(a, b)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::{brute_force, DEFAULT_ENUMERATION_CAP};
    use crate::dgp::DgpParams;
    use crate::graph::barabasi_albert;
    use crate::rng::stream;

    fn world(n: usize, seed: u64) -> DgpInstance {
        let g = barabasi_albert(n, 2, &mut stream(seed, 0)).unwrap();
        DgpInstance::sample(g, DgpParams::default(), &mut stream(seed, 1)).unwrap()
    }

    #[test]
    fn zero_budget_baseline() {
        let inst = world(50, 1);
        let b = random_baseline(&inst, 0, 10, &mut stream(1, 2)).unwrap();
        assert_eq!(b.tte_mean, 0.0);
        let none = Allocation::empty(50, 0);
        assert_eq!(riseo(&inst, &none, b.outcome_mean).unwrap(), 1.0);
        assert!(liftup(0.0, b.tte_mean).is_err());
        assert!(random_baseline(&inst, 0, 0, &mut stream(1, 2)).is_err());
    }

    #[test]
    fn liftup_of_the_mean_is_one() {
        assert_eq!(liftup(3.5, 3.5).unwrap(), 1.0);
    }

    #[test]
    fn baseline_is_stable_across_seeds() {
        let inst = world(500, 2);
        let a = random_baseline(&inst, 25, 100, &mut stream(2, 10)).unwrap();
        let b = random_baseline(&inst, 25, 100, &mut stream(2, 11)).unwrap();
        let se = libm::sqrt(a.tte_sem * a.tte_sem + b.tte_sem * b.tte_sem);
        assert!((a.tte_mean - b.tte_mean).abs() < 3.0 * se);
    }

    #[test]
    fn upper_bound_respects_exact_optimum() {
        let inst = world(8, 3);
        let b = random_baseline(&inst, 3, 100, &mut stream(3, 2)).unwrap();
        let ub = upper_bound(&inst, 3, &b).unwrap();
        let (_, opt) = brute_force(&TotalEffect::new(&inst), 3, DEFAULT_ENUMERATION_CAP).unwrap();
        assert!(ub.true_tte <= opt + 1e-12);
        let zero = upper_bound(&inst, 0, &b).unwrap();
        assert_eq!(zero.true_tte, 0.0);
    }

    #[test]
    fn similarity_basics() {
        let a = Allocation::from_selected(10, 3, &[1, 2, 3]).unwrap();
        let b = Allocation::from_selected(10, 3, &[5, 6, 7]).unwrap();
        let c = Allocation::from_selected(10, 3, &[1, 2, 9]).unwrap();
        assert_eq!(allocation_similarity(&a, &a).unwrap(), 1.0);
        assert_eq!(allocation_similarity(&a, &b).unwrap(), 0.0);
        assert!((allocation_similarity(&a, &c).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let d = Allocation::from_selected(10, 4, &[1]).unwrap();
        assert!(matches!(allocation_similarity(&a, &d), Err(Error::InvalidComparison { .. })));
        let m = similarity_matrix(&[&a, &b, &c]).unwrap();
        for i in 0..3 {
            assert_eq!(m[i][i], 1.0);
            for j in 0..3 {
                assert_eq!(m[i][j], m[j][i]);
            }
        }
    }
}
