use alloc::vec::Vec;

use super::{check_budget, Allocation};
use crate::error::{Error, Result};
use crate::objective::TteObjective;

pub const DEFAULT_ENUMERATION_CAP: u128 = 2_000_000;

/// Σ_{s ≤ k} C(n, s).
pub fn subset_count(n: usize, k: usize) -> u128 {
    let mut total: u128 = 0;
    let mut c: u128 = 1;
    for s in 0..=k.min(n) {
        if s > 0 {
            c = c * (n - s + 1) as u128 / s as u128;
        }
        total = total.saturating_add(c);
    }
    total
}

/// Exact maximizer over every subset of size at most `k`. Subsets are
/// visited by size, then lexicographically; the first maximum wins.
pub fn brute_force<O: TteObjective + ?Sized>(objective: &O, k: usize, cap: u128) -> Result<(Allocation, f64)> {
    let n = objective.len();
    check_budget(n, k)?;
    let count = subset_count(n, k);
    if count > cap {
        return Err(Error::EnumerationCap { count, cap });
    }
    let mut t = alloc::vec![false; n];
    let mut best_set: Vec<usize> = Vec::new();
    let mut best = objective.evaluate(&t);
    for size in 1..=k {
        let mut combo: Vec<usize> = (0..size).collect();
        loop {
            for &i in &combo {
                t[i] = true;
            }
            let v = objective.evaluate(&t);
            if v > best {
                best = v;
                best_set.clone_from(&combo);
            }
            for &i in &combo {
                t[i] = false;
            }
            // Advance to the next combination in lexicographic order.
            let mut pos = size;
            while pos > 0 && combo[pos - 1] == n - size + pos - 1 {
                pos -= 1;
            }
            if pos == 0 {
                break;
            }
            combo[pos - 1] += 1;
            for q in pos..size {
                combo[q] = combo[q - 1] + 1;
            }
        }
    }
    Ok((Allocation::from_selected(n, k, &best_set)?, best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::uplift_topk;
    use crate::objective::Additive;
    use alloc::vec;

    #[test]
    fn counts() {
        assert_eq!(subset_count(10, 3), 1 + 10 + 45 + 120);
        assert_eq!(subset_count(4, 4), 16);
    }

    #[test]
    fn modular_matches_topk() {
        let s = vec![0.3, 2.0, 1.5, -4.0, 0.9, 1.6];
        let obj = Additive(s.clone());
        let (a, v) = brute_force(&obj, 3, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(a.selected(), uplift_topk(&s, 3).unwrap().selected());
        assert!((v - 5.1).abs() < 1e-12);
    }

    #[test]
    fn empty_budget_and_cap() {
        let obj = Additive(vec![1.0; 30]);
        let (a, v) = brute_force(&obj, 0, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!((a.count(), v), (0, 0.0));
        assert!(matches!(brute_force(&obj, 15, 1000), Err(Error::EnumerationCap { .. })));
    }

    #[test]
    fn smaller_subsets_can_win() {
        let obj = Additive(vec![2.0, -1.0, -1.0]);
        let (a, v) = brute_force(&obj, 2, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(a.selected(), vec![0]);
        assert_eq!(v, 2.0);
    }
}
