//! Commutativity graphs over Hamiltonian terms and colorings of their complements.
//!
//! A minimum clique cover of the commutativity graph is a proper coloring of
//! the complement graph, so every grouping in this crate is represented as a
//! [`Coloring`] of the complement: nodes joined by an edge do not commute and
//! must receive different colors.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hamiltonian::QubitHamiltonian;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Fully commuting.
    Fc,
    /// Qubit-wise commuting.
    Qwc,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Fc => "fc",
            Scheme::Qwc => "qwc",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fc" => Ok(Scheme::Fc),
            "qwc" => Ok(Scheme::Qwc),
            other => Err(format!("unknown scheme `{other}` (expected fc or qwc)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("coloring has {got} entries, graph has {expected} nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("node {0} is uncolored")]
    Uncolored(usize),
}

/// Fixed-size bitset over node indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSet {
    words: Vec<u64>,
}

impl NodeSet {
    pub fn new(n: usize) -> Self {
        NodeSet { words: vec![0; n.div_ceil(64)] }
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// `|self ∩ other|`
    pub fn intersection_len(&self, other: &NodeSet) -> usize {
        self.words.iter().zip(&other.words).map(|(a, b)| (a & b).count_ones() as usize).sum()
    }
}

#[derive(Debug, Clone)]
pub struct CommutGraph {
    n: usize,
    scheme: Scheme,
    is_complement: bool,
    adjacency: Vec<NodeSet>,
    neighbors: Vec<Vec<u32>>,
}

impl CommutGraph {
    /// Applies the scheme's commutation predicate to every pair `i < j`. On the
    /// complement graph an edge means the pair does NOT commute.
    pub fn build(h: &QubitHamiltonian, scheme: Scheme, complement: bool) -> Self {
        let terms = h.terms();
        let n = terms.len();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let (p, q) = (&terms[i].word, &terms[j].word);
                let commute = match scheme {
                    Scheme::Fc => p.commutes_fc_unchecked(q),
                    Scheme::Qwc => p.commutes_qwc_unchecked(q),
                };
                if commute != complement {
                    edges.push((i, j));
                }
            }
        }
        Self::from_edges(n, &edges, scheme, complement)
    }

    /// Graph from an explicit edge list; self-loops are ignored and duplicate
    /// edges collapse.
    pub fn from_edges(n: usize, edges: &[(usize, usize)], scheme: Scheme, complement: bool) -> Self {
        let mut adjacency = vec![NodeSet::new(n); n];
        for &(i, j) in edges {
            assert!(i < n && j < n, "edge ({i},{j}) out of range for {n} nodes");
            if i != j {
                adjacency[i].insert(j);
                adjacency[j].insert(i);
            }
        }
        let neighbors = adjacency
            .iter()
            .map(|set| (0..n).filter(|&j| set.contains(j)).map(|j| j as u32).collect())
            .collect();
        CommutGraph { n, scheme, is_complement: complement, adjacency, neighbors }
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn is_complement(&self) -> bool {
        self.is_complement
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i].contains(j)
    }

    #[inline]
    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[i]
    }

    /// Sorted neighbor lists of every node.
    pub fn neighbor_lists(&self) -> &[Vec<u32>] {
        &self.neighbors
    }

    pub fn neighbor_set(&self, i: usize) -> &NodeSet {
        &self.adjacency[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn mean_degree(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        2.0 * self.n_edges() as f64 / self.n as f64
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n).map(|i| self.degree(i)).max().unwrap_or(0)
    }

    /// Edge list with `i < j`, sorted lexicographically.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|i| {
                self.neighbors[i].iter().map(|&j| j as usize).filter(move |&j| j > i).map(move |j| (i, j))
            })
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n": self.n,
            "scheme": self.scheme.as_str(),
            "complement": self.is_complement,
            "edges": self.edges().into_iter().map(|(i, j)| [i, j]).collect::<Vec<_>>(),
        })
    }

    /// Checks that no edge joins two equal nonzero colors. Uncolored (0)
    /// endpoints are ignored, so prefixes of a trajectory can be checked too.
    pub fn is_valid(&self, coloring: &Coloring) -> Result<bool, GraphError> {
        let colors = coloring.colors();
        if colors.len() != self.n {
            return Err(GraphError::LengthMismatch { expected: self.n, got: colors.len() });
        }
        Ok((0..self.n).all(|i| {
            let c = colors[i];
            c == 0 || self.neighbors[i].iter().all(|&j| colors[j as usize] != c)
        }))
    }
}

/// Per-node colors: 0 is uncolored, valid colors are `1..=k`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Coloring {
    colors: Vec<u32>,
    k: u32,
}

impl Coloring {
    pub fn uncolored(n: usize, k: u32) -> Self {
        Coloring { colors: vec![0; n], k }
    }

    /// Wraps explicit colors; `k` becomes the largest color present.
    pub fn from_colors(colors: Vec<u32>) -> Self {
        let k = colors.iter().copied().max().unwrap_or(0);
        Coloring { colors, k }
    }

    pub fn with_bound(colors: Vec<u32>, k: u32) -> Self {
        Coloring { colors, k }
    }

    pub fn colors(&self) -> &[u32] {
        &self.colors
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    pub fn bound(&self) -> u32 {
        self.k
    }

    pub fn set(&mut self, node: usize, color: u32) {
        self.colors[node] = color;
    }

    pub fn is_terminal(&self) -> bool {
        self.colors.iter().all(|&c| c != 0)
    }

    /// `N_G`: number of distinct nonzero colors used.
    pub fn n_groups(&self) -> usize {
        let mut seen: Vec<u32> = self.colors.iter().copied().filter(|&c| c != 0).collect();
        seen.sort_unstable();
        seen.dedup();
        seen.len()
    }

    /// One group per used color (ascending color id), members ascending.
    pub fn groups(&self) -> Result<Vec<Vec<usize>>, GraphError> {
        if let Some(i) = self.colors.iter().position(|&c| c == 0) {
            return Err(GraphError::Uncolored(i));
        }
        let mut used: Vec<u32> = self.colors.clone();
        used.sort_unstable();
        used.dedup();
        let mut groups = vec![Vec::new(); used.len()];
        for (node, c) in self.colors.iter().enumerate() {
            let g = used.binary_search(c).expect("color listed");
            groups[g].push(node);
        }
        Ok(groups)
    }

    /// Colors relabeled by first appearance, so colorings inducing the same
    /// partition compare equal.
    pub fn canonical(&self) -> Vec<u32> {
        let mut map = std::collections::HashMap::new();
        let mut next = 0u32;
        self.colors
            .iter()
            .map(|&c| {
                if c == 0 {
                    0
                } else {
                    *map.entry(c).or_insert_with(|| {
                        next += 1;
                        next
                    })
                }
            })
            .collect()
    }

    /// Builds the coloring induced by a partition of `0..n`; group `g` gets color `g + 1`.
    pub fn from_groups(n: usize, groups: &[Vec<usize>]) -> Self {
        let mut colors = vec![0u32; n];
        for (g, members) in groups.iter().enumerate() {
            for &m in members {
                colors[m] = g as u32 + 1;
            }
        }
        Coloring { colors, k: groups.len() as u32 }
    }
}

/// Random-sequential greedy coloring: visit nodes in a seeded uniform
/// permutation and give each the smallest color unused by colored neighbors.
/// Returns the number of colors used and the witness coloring.
pub fn greedy_color_bound(g: &CommutGraph, seed: u64) -> (u32, Coloring) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..g.n_nodes()).collect();
    order.shuffle(&mut rng);
    let coloring = first_fit(g, &order);
    (coloring.bound(), coloring)
}

/// Best of `repeats` random-sequential runs (seeds `seed, seed+1, ...`).
pub fn greedy_color_bound_repeated(g: &CommutGraph, seed: u64, repeats: usize) -> (u32, Coloring) {
    (0..repeats.max(1) as u64)
        .map(|r| greedy_color_bound(g, seed.wrapping_add(r)))
        .min_by_key(|(k, _)| *k)
        .expect("at least one repeat")
}

/// First-fit coloring in the given visiting order.
pub fn first_fit(g: &CommutGraph, order: &[usize]) -> Coloring {
    let n = g.n_nodes();
    let mut colors = vec![0u32; n];
    let mut taken: Vec<bool> = Vec::new();
    let mut k = 0u32;
    for &v in order {
        taken.clear();
        taken.resize(k as usize + 2, false);
        for &u in g.neighbors(v) {
            let c = colors[u as usize] as usize;
            if c != 0 {
                taken[c] = true;
            }
        }
        let c = (1..).find(|&c| !taken[c]).expect("a free color exists") as u32;
        colors[v] = c;
        k = k.max(c);
    }
    Coloring { colors, k }
}

/// The relaxed color bound: the maximum node degree itself (not degree + 1).
/// Callers lift 0 to 1.
pub fn max_degree_bound(g: &CommutGraph) -> u32 {
    g.max_degree() as u32
}
