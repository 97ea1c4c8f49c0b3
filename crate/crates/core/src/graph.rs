//! Undirected simple graphs and the random-network generators used to build
//! synthetic splits.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{invalid_param, Error, Result};

/// Immutable undirected graph without self-loops or parallel edges.
///
/// Neighbor lists are sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    adjacency: Vec<Vec<usize>>,
    edge_count: usize,
}

impl Graph {
    /// `n` isolated nodes.
    pub fn empty(n: usize) -> Self {
        Self { adjacency: vec![Vec::new(); n], edge_count: 0 }
    }

    /// Builds a graph from an edge list. Each undirected edge must appear
    /// once, in either orientation.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut adjacency = vec![Vec::new(); n];
        let mut edge_count = 0;
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({i}, {j}) out of range for {n} nodes"
                )));
            }
            if i == j {
                return Err(Error::InvalidGraph(format!("self-loop at node {i}")));
            }
            adjacency[i].push(j);
            adjacency[j].push(i);
            edge_count += 1;
        }
        for (i, nbrs) in adjacency.iter_mut().enumerate() {
            nbrs.sort_unstable();
            if let Some(w) = nbrs.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge ({}, {})",
                    i.min(w[0]),
                    i.max(w[0])
                )));
            }
        }
        Ok(Self { adjacency, edge_count })
    }

    fn from_sets(sets: Vec<BTreeSet<usize>>) -> Self {
        let adjacency: Vec<Vec<usize>> =
            sets.into_iter().map(|s| s.into_iter().collect()).collect();
        let edge_count = adjacency.iter().map(Vec::len).sum::<usize>() / 2;
        Self { adjacency, edge_count }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.adjacency.len()
    }

    #[inline]
    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    #[inline]
    pub fn degree(&self, i: usize) -> usize {
        self.adjacency[i].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adjacency.iter().map(Vec::len).collect()
    }

    pub fn mean_degree(&self) -> f64 {
        if self.n() == 0 {
            0.0
        } else {
            2.0 * self.edge_count as f64 / self.n() as f64
        }
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].binary_search(&j).is_ok()
    }

    /// Edges as `(i, j)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(i, nbrs)| nbrs.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
    }

    /// Re-checks symmetry, sortedness, absence of loops/duplicates and the
    /// stored edge count.
    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let mut total = 0;
        for (i, nbrs) in self.adjacency.iter().enumerate() {
            total += nbrs.len();
            for w in nbrs.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::InvalidGraph(format!(
                        "neighbors of {i} not strictly increasing"
                    )));
                }
            }
            for &j in nbrs {
                if j >= n {
                    return Err(Error::InvalidGraph(format!("neighbor {j} of {i} out of range")));
                }
                if j == i {
                    return Err(Error::InvalidGraph(format!("self-loop at node {i}")));
                }
                if !self.has_edge(j, i) {
                    return Err(Error::InvalidGraph(format!("edge ({i}, {j}) is not symmetric")));
                }
            }
        }
        if total != 2 * self.edge_count {
            return Err(Error::InvalidGraph(format!(
                "edge count {} disagrees with adjacency total {total}",
                self.edge_count
            )));
        }
        Ok(())
    }

    /// Graph with node `perm[i]` renamed to `i`.
    pub fn permute(&self, perm: &[usize]) -> Graph {
        let mut inverse = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let mut adjacency: Vec<Vec<usize>> = perm
            .iter()
            .map(|&old| self.adjacency[old].iter().map(|&j| inverse[j]).collect())
            .collect();
        for nbrs in &mut adjacency {
            nbrs.sort_unstable();
        }
        Graph { adjacency, edge_count: self.edge_count }
    }
}

/// Barabási–Albert preferential attachment.
///
/// Starts from `m` isolated seed nodes. The first new node links to every
/// seed; each later node draws `m` distinct targets from an urn holding one
/// ticket per edge endpoint, rejecting repeats within a step. The result has
/// exactly `m * (n - m)` edges.
pub fn barabasi_albert<R: Rng + ?Sized>(n: usize, m: usize, rng: &mut R) -> Result<Graph> {
    if m < 1 || n <= m {
        return Err(invalid_param!("Barabási-Albert needs n > m >= 1, got n={n}, m={m}"));
    }
    let mut sets = vec![BTreeSet::new(); n];
    let mut urn: Vec<usize> = Vec::with_capacity(2 * m * (n - m));
    let mut targets: Vec<usize> = Vec::with_capacity(m);
    for v in m..n {
        targets.clear();
        if urn.is_empty() {
            targets.extend(0..m);
        } else {
            while targets.len() < m {
                let t = urn[rng.random_range(0..urn.len())];
                if !targets.contains(&t) {
                    targets.push(t);
                }
            }
        }
        for &t in &targets {
            sets[v].insert(t);
            sets[t].insert(v);
            urn.push(v);
            urn.push(t);
        }
    }
    Ok(Graph::from_sets(sets))
}

/// Watts–Strogatz small world: a ring where each node links to its
/// `ring_degree` nearest neighbors, then every lattice edge `(u, u + j)` has
/// its far endpoint rewired with probability `rewire_prob`, avoiding
/// self-loops and duplicates. The edge count stays `n * ring_degree / 2`.
pub fn watts_strogatz<R: Rng + ?Sized>(
    n: usize,
    ring_degree: usize,
    rewire_prob: f64,
    rng: &mut R,
) -> Result<Graph> {
    if ring_degree % 2 != 0 {
        return Err(invalid_param!("ring degree must be even, got {ring_degree}"));
    }
    if !(0.0..=1.0).contains(&rewire_prob) {
        return Err(invalid_param!("rewire probability {rewire_prob} outside [0, 1]"));
    }
    if n <= ring_degree {
        return Err(invalid_param!("need n > ring degree, got n={n}, ring degree={ring_degree}"));
    }
    let half = ring_degree / 2;
    let mut sets = vec![BTreeSet::new(); n];
    for u in 0..n {
        for j in 1..=half {
            let v = (u + j) % n;
            sets[u].insert(v);
            sets[v].insert(u);
        }
    }
    for j in 1..=half {
        for u in 0..n {
            if !rng.random_bool(rewire_prob) {
                continue;
            }
            let v = (u + j) % n;
            if sets[u].len() >= n - 1 {
                continue;
            }
            let w = loop {
                let w = rng.random_range(0..n);
                if w != u && !sets[u].contains(&w) {
                    break w;
                }
            };
            sets[u].remove(&v);
            sets[v].remove(&u);
            sets[u].insert(w);
            sets[w].insert(u);
        }
    }
    Ok(Graph::from_sets(sets))
}

/// Star with center 0 and `n - 1` leaves.
pub fn star(n: usize) -> Graph {
    Graph::from_edges(n, (1..n).map(|j| (0, j))).expect("star edges are valid")
}

/// Path `0 - 1 - ... - (n-1)`.
pub fn path(n: usize) -> Graph {
    Graph::from_edges(n, (1..n).map(|j| (j - 1, j))).expect("path edges are valid")
}

/// Degree → number of nodes with that degree. Degrees absent from the map
/// have count zero.
pub fn degree_histogram(g: &Graph) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for i in 0..g.n() {
        *hist.entry(g.degree(i)).or_insert(0) += 1;
    }
    hist
}
