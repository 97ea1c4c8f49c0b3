//! Independent Cascade simulation and the influence-maximization baselines
//! built on it.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

use rand::Rng;

use super::{argmax, check_budget, Allocation};
use crate::error::{invalid_param, Result};
use crate::graph::Graph;
use crate::par::map_indices;
use crate::rng::{mix, stream};

struct Cascade {
    active: Vec<bool>,
    touched: Vec<usize>,
}

impl Cascade {
    fn new(n: usize) -> Self {
        Self { active: vec![false; n], touched: Vec::new() }
    }

    fn run<R: Rng + ?Sized>(&mut self, graph: &Graph, seeds: &[usize], p: f64, rng: &mut R) -> usize {
        for &i in &self.touched {
            self.active[i] = false;
        }
        self.touched.clear();
        for &s in seeds {
            if !self.active[s] {
                self.active[s] = true;
                self.touched.push(s);
            }
        }
        let mut head = 0;
        while head < self.touched.len() {
            let u = self.touched[head];
            head += 1;
            for &v in graph.neighbors(u) {
                if !self.active[v] && rng.random_bool(p) {
                    self.active[v] = true;
                    self.touched.push(v);
                }
            }
        }
        self.touched.len()
    }
}

/// One Independent Cascade run: every newly activated node gets a single
/// chance to activate each inactive neighbor with probability `p`.
/// Returns the number of active nodes, seeds included.
pub fn ic_simulate<R: Rng + ?Sized>(graph: &Graph, seeds: &[usize], p: f64, rng: &mut R) -> Result<usize> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid_param!("activation probability {p} outside [0, 1]"));
    }
    if let Some(&s) = seeds.iter().find(|&&s| s >= graph.n()) {
        return Err(invalid_param!("seed node {s} out of range"));
    }
    Ok(Cascade::new(graph.n()).run(graph, seeds, p, rng))
}

/// Mean spread over `sims` runs; run `s` uses stream `(seed, s)`.
pub fn expected_spread(graph: &Graph, seeds: &[usize], p: f64, sims: usize, seed: u64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid_param!("activation probability {p} outside [0, 1]"));
    }
    if sims == 0 {
        return Err(invalid_param!("need at least one simulation"));
    }
    let chunks = 64.min(sims);
    let totals = map_indices(chunks, |c| {
        let mut cascade = Cascade::new(graph.n());
        let mut total = 0u64;
        let mut s = c;
        while s < sims {
            total += cascade.run(graph, seeds, p, &mut stream(seed, s as u64)) as u64;
            s += chunks;
        }
        total
    });
    Ok(totals.iter().sum::<u64>() as f64 / sims as f64)
}

/// Fixed live-edge samples of the cascade. In sample `s` each undirected
/// edge is live with probability `p`, decided by a hash of `(seed, s, edge)`;
/// the spread of a seed set is the number of nodes it reaches over live
/// edges. This has the same distribution as an Independent Cascade run, and
/// because every sample is a coverage function the averaged estimate is
/// submodular, so lazy evaluation returns exactly the plain greedy picks.
struct LiveSamples<'g> {
    graph: &'g Graph,
    keys: Vec<u64>,
    threshold: f64,
    covered: Vec<Vec<bool>>,
    total: u64,
}

impl<'g> LiveSamples<'g> {
    fn new(graph: &'g Graph, p: f64, sims: usize, seed: u64) -> Self {
        Self {
            graph,
            keys: (0..sims as u64).map(|s| mix(seed, s)).collect(),
            threshold: p,
            covered: vec![vec![false; graph.n()]; sims],
            total: 0,
        }
    }

    #[inline]
    fn live(&self, sample: usize, u: usize, v: usize) -> bool {
        let (a, b) = if u < v { (u, v) } else { (v, u) };
        let h = mix(self.keys[sample], (a as u64) * (self.graph.n() as u64) + b as u64);
        ((h >> 11) as f64) * (1.0 / (1u64 << 53) as f64) < self.threshold
    }

    /// Nodes `v` reaches in one sample outside the covered set. They are
    /// left in `scratch`.
    fn reach(&self, sample: usize, v: usize, scratch: &mut Vec<usize>, seen: &mut [bool]) -> u64 {
        let covered = &self.covered[sample];
        scratch.clear();
        if covered[v] {
            return 0;
        }
        scratch.push(v);
        seen[v] = true;
        let mut head = 0;
        while head < scratch.len() {
            let u = scratch[head];
            head += 1;
            for &w in self.graph.neighbors(u) {
                if !covered[w] && !seen[w] && self.live(sample, u, w) {
                    seen[w] = true;
                    scratch.push(w);
                }
            }
        }
        for &u in scratch.iter() {
            seen[u] = false;
        }
        scratch.len() as u64
    }

    /// Summed marginal coverage of `v` over all samples.
    fn gain(&self, v: usize) -> u64 {
        let mut scratch = Vec::new();
        let mut seen = vec![false; self.graph.n()];
        (0..self.keys.len()).map(|s| self.reach(s, v, &mut scratch, &mut seen)).sum()
    }

    fn add(&mut self, v: usize) {
        let mut scratch = Vec::new();
        let mut seen = vec![false; self.graph.n()];
        for s in 0..self.keys.len() {
            self.total += self.reach(s, v, &mut scratch, &mut seen);
            for &u in &scratch {
                self.covered[s][u] = true;
            }
        }
    }

    fn spread(&self) -> f64 {
        self.total as f64 / self.keys.len() as f64
    }
}

#[derive(Debug, Clone)]
pub struct CelfOutcome {
    pub allocation: Allocation,
    pub order: Vec<usize>,
    /// Estimated spread after each pick.
    pub spreads: Vec<f64>,
    /// Number of marginal-gain evaluations performed.
    pub evaluations: usize,
}

fn check_cascade(p: f64, sims: usize) -> Result<()> {
    if !(0.0..=1.0).contains(&p) || sims == 0 {
        return Err(invalid_param!("need p in [0, 1] and at least one simulation"));
    }
    Ok(())
}

/// Lazy greedy (CELF) on Monte Carlo spread estimates.
///
/// Cached gains sit in a max-heap stamped with the round they were computed
/// in. A popped entry from an earlier round is re-evaluated and pushed
/// back; a current one is selected.
pub fn celf(graph: &Graph, k: usize, p: f64, sims: usize, seed: u64) -> Result<CelfOutcome> {
    let n = graph.n();
    check_budget(n, k)?;
    check_cascade(p, sims)?;
    if k == 0 {
        return Ok(CelfOutcome { allocation: Allocation::empty(n, 0), order: Vec::new(), spreads: Vec::new(), evaluations: 0 });
    }
    let mut samples = LiveSamples::new(graph, p, sims, seed);
    let first = map_indices(n, |v| samples.gain(v));
    let mut heap: BinaryHeap<(u64, Reverse<usize>, usize)> =
        first.iter().enumerate().map(|(v, &g)| (g, Reverse(v), 0)).collect();
    let mut evaluations = n;
    let mut order = Vec::with_capacity(k);
    let mut spreads = Vec::with_capacity(k);
    while order.len() < k {
        let Some((_, Reverse(v), stamp)) = heap.pop() else { break };
        let round = order.len();
        if stamp == round {
            order.push(v);
            samples.add(v);
            spreads.push(samples.spread());
            continue;
        }
        evaluations += 1;
        heap.push((samples.gain(v), Reverse(v), round));
    }
    let allocation = Allocation::from_selected(n, k, &order)?;
    Ok(CelfOutcome { allocation, order, spreads, evaluations })
}

/// Plain greedy on the same spread estimates; the reference for [`celf`].
pub fn mc_greedy(graph: &Graph, k: usize, p: f64, sims: usize, seed: u64) -> Result<CelfOutcome> {
    let n = graph.n();
    check_budget(n, k)?;
    check_cascade(p, sims)?;
    let mut samples = LiveSamples::new(graph, p, sims, seed);
    let mut order: Vec<usize> = Vec::with_capacity(k);
    let mut spreads = Vec::with_capacity(k);
    let mut chosen = vec![false; n];
    let mut evaluations = 0;
    for round in 0..k {
        let gains = map_indices(n, |v| if chosen[v] { f64::NEG_INFINITY } else { samples.gain(v) as f64 });
        evaluations += n - round;
        let best = argmax(&gains).expect("candidates remain while round < k <= n");
        chosen[best] = true;
        order.push(best);
        samples.add(best);
        spreads.push(samples.spread());
    }
    let allocation = Allocation::from_selected(n, k, &order)?;
    Ok(CelfOutcome { allocation, order, spreads, evaluations })
}
