use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use super::{check_budget, Allocation};
use crate::error::Result;
use crate::graph::Graph;

/// Indices of the `k` largest scores, ties by ascending index.
pub fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// The `k` highest-degree nodes.
pub fn degree_topk(graph: &Graph, k: usize) -> Result<Allocation> {
    check_budget(graph.n(), k)?;
    let deg: Vec<f64> = graph.degrees().into_iter().map(|d| d as f64).collect();
    Allocation::from_selected(graph.n(), k, &top_k_indices(&deg, k))
}

/// Single discount: pick the node of highest remaining degree, delete its
/// edges, repeat.
pub fn single_discount(graph: &Graph, k: usize) -> Result<Allocation> {
    let n = graph.n();
    check_budget(n, k)?;
    let mut deg = graph.degrees();
    let mut chosen = alloc::vec![false; n];
    let mut picks = Vec::with_capacity(k);
    for _ in 0..k {
        let v = (0..n)
            .filter(|&i| !chosen[i])
            .max_by(|&a, &b| deg[a].cmp(&deg[b]).then(b.cmp(&a)))
            .expect("k <= n leaves a candidate");
        chosen[v] = true;
        picks.push(v);
        for &u in graph.neighbors(v) {
            if !chosen[u] {
                deg[u] -= 1;
            }
        }
        deg[v] = 0;
    }
    Allocation::from_selected(n, k, &picks)
}

/// Treats the `k` nodes with the highest individual effect scores.
pub fn uplift_topk(scores: &[f64], k: usize) -> Result<Allocation> {
    check_budget(scores.len(), k)?;
    Allocation::from_selected(scores.len(), k, &top_k_indices(scores, k))
}

/// Uniform k-subset without replacement.
pub fn random_allocation<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Allocation> {
    check_budget(n, k)?;
    let picks = index::sample(rng, n, k).into_vec();
    Allocation::from_selected(n, k, &picks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::star;
    use crate::rng::stream;
    use alloc::vec;

    #[test]
    fn star_center_first() {
        assert_eq!(degree_topk(&star(6), 1).unwrap().selected(), vec![0]);
        assert_eq!(single_discount(&star(6), 1).unwrap().selected(), vec![0]);
    }

    #[test]
    fn degree_and_discount_disagree_on_hub_with_triangles() {
        // Hub 0 with spokes 1..=4, edges 1-2 and 3-4, plus triangle 5-6-7.
        let g = Graph::from_edges(8, [(0, 1), (0, 2), (0, 3), (0, 4), (1, 2), (3, 4), (5, 6), (6, 7), (5, 7)]).unwrap();
        assert_eq!(degree_topk(&g, 2).unwrap().selected(), vec![0, 1]);
        assert_eq!(single_discount(&g, 2).unwrap().selected(), vec![0, 5]);
    }

    #[test]
    fn full_budget_takes_everyone() {
        let g = star(5);
        assert_eq!(degree_topk(&g, 5).unwrap().count(), 5);
        assert_eq!(single_discount(&g, 5).unwrap().count(), 5);
        assert_eq!(random_allocation(5, 5, &mut stream(0, 0)).unwrap().count(), 5);
        assert!(degree_topk(&g, 6).is_err());
    }

    #[test]
    fn uplift_ties_and_order() {
        assert_eq!(uplift_topk(&[1.0; 6], 3).unwrap().selected(), vec![0, 1, 2]);
        let s: Vec<f64> = (0..6).map(|i| i as f64).collect();
        assert_eq!(uplift_topk(&s, 2).unwrap().selected(), vec![4, 5]);
    }

    #[test]
    fn random_allocation_has_exact_size() {
        let mut rng = stream(1, 0);
        for k in 0..10 {
            assert_eq!(random_allocation(10, k, &mut rng).unwrap().count(), k);
        }
    }

    #[test]
    fn random_inclusion_frequency() {
        let (n, k, draws) = (20usize, 5usize, 100_000usize);
        let mut counts = vec![0usize; n];
        let mut rng = stream(2, 0);
        for _ in 0..draws {
            for i in random_allocation(n, k, &mut rng).unwrap().selected() {
                counts[i] += 1;
            }
        }
        let p = k as f64 / n as f64;
        let sd = libm::sqrt(draws as f64 * p * (1.0 - p));
        for c in counts {
            assert!((c as f64 - draws as f64 * p).abs() < 3.0 * sd);
        }
    }
}
