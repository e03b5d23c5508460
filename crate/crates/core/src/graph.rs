//! Sparse undirected graphs with node features and labels, symmetric
//! normalization, connectivity utilities and a stochastic block model
//! generator for desk-scale experiments.

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Undirected graph. Edges are stored once with u < v, no self-loops,
/// no duplicates. Features are a nonnegative n×f sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
    pub features: CsrMatrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Graph {
    pub fn new(
        n: usize,
        edges: Vec<(usize, usize)>,
        features: CsrMatrix,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        let edges = canonical_edges(n, &edges)?;
        if labels.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} nodes",
                labels.len(),
                n
            )));
        }
        if features.n_rows != n {
            return Err(Error::ShapeMismatch(format!(
                "feature matrix has {} rows for {} nodes",
                features.n_rows, n
            )));
        }
        for (i, &l) in labels.iter().enumerate() {
            if l >= num_classes {
                return Err(Error::InvalidParameter(format!(
                    "label {l} of node {i} outside [0, {num_classes})"
                )));
            }
        }
        Ok(Graph {
            n,
            edges,
            features,
            labels,
            num_classes,
        })
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_features(&self) -> usize {
        self.features.n_cols
    }

    /// Nodes whose feature row is entirely zero. Legal but worth a warning.
    pub fn featureless_nodes(&self) -> Vec<usize> {
        (0..self.n)
            .filter(|&i| self.features.row(i).1.iter().all(|&v| v == 0.0))
            .collect()
    }

    /// Adjacency as symmetric CSR with unit values, no self-loops.
    pub fn adjacency_csr(&self) -> CsrMatrix {
        let mut triplets = Vec::with_capacity(2 * self.edges.len());
        for &(u, v) in &self.edges {
            triplets.push((u, v, 1.0));
            triplets.push((v, u, 1.0));
        }
        CsrMatrix::from_triplets(self.n, self.n, &triplets)
    }

    pub fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(u, v) in &self.edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        adj
    }
}

/// Symmetrize, dedup and drop self-loops; errors on out-of-range endpoints.
fn canonical_edges(n: usize, edges: &[(usize, usize)]) -> Result<Vec<(usize, usize)>> {
    let mut out = Vec::with_capacity(edges.len());
    for &(u, v) in edges {
        if u >= n {
            return Err(Error::NodeOutOfRange { id: u, n });
        }
        if v >= n {
            return Err(Error::NodeOutOfRange { id: v, n });
        }
        if u == v {
            continue;
        }
        out.push((u.min(v), u.max(v)));
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Â = D̃^{-1/2} (A + I) D̃^{-1/2} in CSR form, with the D̃ diagonal kept
/// alongside. Symmetric with dominant eigenvalue 1 and eigenvector D̃^{1/2}·1.
#[derive(Debug, Clone)]
pub struct NormalizedAdjacency {
    pub n: usize,
    pub csr: CsrMatrix,
    pub degrees: Vec<f64>,
}

impl NormalizedAdjacency {
    /// Normalizes a raw symmetric adjacency (unit values, no stored
    /// self-loops). Rejects asymmetric input.
    pub fn from_adjacency(adj: &CsrMatrix) -> Result<Self> {
        if adj.n_rows != adj.n_cols {
            return Err(Error::ShapeMismatch(format!(
                "adjacency {}x{}",
                adj.n_rows, adj.n_cols
            )));
        }
        let n = adj.n_rows;
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        for i in 0..n {
            let (cols, vals) = adj.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if i == j {
                    return Err(Error::InvalidParameter(format!(
                        "stored self-loop at node {i}"
                    )));
                }
                if (adj.get(j, i) - v).abs() > 0.0 {
                    return Err(Error::AsymmetricAdjacency(i, j));
                }
            }
        }
        let mut degrees = vec![1.0f64; n]; // self-loop contributes 1
        for i in 0..n {
            degrees[i] += adj.row(i).1.iter().sum::<f64>();
        }
        let inv_sqrt: Vec<f64> = degrees.iter().map(|&d| 1.0 / d.sqrt()).collect();
        let mut triplets = Vec::with_capacity(adj.nnz() + n);
        for i in 0..n {
            triplets.push((i, i, inv_sqrt[i] * inv_sqrt[i]));
            let (cols, vals) = adj.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                triplets.push((i, j, v * inv_sqrt[i] * inv_sqrt[j]));
            }
        }
        Ok(NormalizedAdjacency {
            n,
            csr: CsrMatrix::from_triplets(n, n, &triplets),
            degrees,
        })
    }

    /// Â · H
    pub fn matmul(&self, h: &Array2<f64>) -> Result<Array2<f64>> {
        self.csr.matmul(h)
    }

    /// (Â ∘ mask) · H with one multiplier per stored nonzero.
    pub fn matmul_masked(&self, h: &Array2<f64>, mask: &[f64]) -> Result<Array2<f64>> {
        self.csr.matmul_masked(h, mask)
    }

    /// (Â ∘ mask)ᵀ · H
    pub fn matmul_masked_transposed(&self, h: &Array2<f64>, mask: &[f64]) -> Result<Array2<f64>> {
        self.csr.matmul_masked_transposed(h, mask)
    }

    /// Inverted-dropout mask over stored nonzeros: each entry is dropped
    /// independently with probability `rate`, survivors scaled by 1/(1-rate).
    pub fn sample_edge_mask(&self, rate: f64, rng: &mut impl Rng) -> Vec<f64> {
        debug_assert!((0.0..1.0).contains(&rate));
        let keep = 1.0 / (1.0 - rate);
        (0..self.csr.nnz())
            .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
            .collect()
    }

    /// D̃^{1/2}·1, the eigenvalue-1 eigenvector of Â.
    pub fn sqrt_degree_vector(&self) -> Vec<f64> {
        self.degrees.iter().map(|&d| d.sqrt()).collect()
    }

    /// Power-iteration estimate of the dominant eigenvalue magnitude.
    pub fn dominant_eigenvalue(&self, iters: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = Array2::from_shape_fn((self.n, 1), |_| rng.random::<f64>() + 0.1);
        let mut lambda = 0.0;
        for _ in 0..iters {
            let w = self.csr.matmul(&v).expect("square operator");
            let num: f64 = v.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
            let den: f64 = v.iter().map(|a| a * a).sum();
            lambda = num / den;
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            v = w / norm;
        }
        lambda
    }
}

/// Â for a graph.
pub fn normalize_adjacency(g: &Graph) -> Result<NormalizedAdjacency> {
    NormalizedAdjacency::from_adjacency(&g.adjacency_csr())
}

/// Connected component id per node, ids assigned in discovery order.
pub fn connected_components(g: &Graph) -> Vec<usize> {
    let adj = g.neighbor_lists();
    let mut comp = vec![usize::MAX; g.n];
    let mut next = 0;
    for start in 0..g.n {
        if comp[start] != usize::MAX {
            continue;
        }
        let mut queue = VecDeque::from([start]);
        comp[start] = next;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if comp[v] == usize::MAX {
                    comp[v] = next;
                    queue.push_back(v);
                }
            }
        }
        next += 1;
    }
    comp
}

/// Induced subgraph on the largest connected component, nodes remapped to
/// contiguous ids. Also returns the original ids of the kept nodes.
pub fn largest_connected_component(g: &Graph) -> Result<(Graph, Vec<usize>)> {
    if g.n == 0 {
        return Err(Error::EmptyGraph);
    }
    let comp = connected_components(g);
    let n_comp = comp.iter().max().unwrap() + 1;
    let mut sizes = vec![0usize; n_comp];
    for &c in &comp {
        sizes[c] += 1;
    }
    let best = sizes
        .iter()
        .enumerate()
        .max_by_key(|&(_, &s)| s)
        .map(|(i, _)| i)
        .unwrap();

    let kept: Vec<usize> = (0..g.n).filter(|&i| comp[i] == best).collect();
    let mut new_id = vec![usize::MAX; g.n];
    for (new, &old) in kept.iter().enumerate() {
        new_id[old] = new;
    }
    let edges: Vec<(usize, usize)> = g
        .edges
        .iter()
        .filter(|&&(u, v)| comp[u] == best && comp[v] == best)
        .map(|&(u, v)| (new_id[u], new_id[v]))
        .collect();
    let mut triplets = Vec::new();
    for &old in &kept {
        let (cols, vals) = g.features.row(old);
        for (&j, &v) in cols.iter().zip(vals) {
            triplets.push((new_id[old], j, v));
        }
    }
    let features = CsrMatrix::from_triplets(kept.len(), g.num_features(), &triplets);
    let labels = kept.iter().map(|&i| g.labels[i]).collect();
    let sub = Graph::new(kept.len(), edges, features, labels, g.num_classes)?;
    Ok((sub, kept))
}

/// Hop count for unreachable nodes: `g.n`, one more than any valid distance,
/// so distance bins stay plain integers.
pub fn unreachable_distance(g: &Graph) -> usize {
    g.n
}

/// Multi-source BFS hop distances. Sources get 0, unreachable nodes get `n`.
pub fn bfs_distances(g: &Graph, sources: &[usize]) -> Result<Vec<usize>> {
    if sources.is_empty() {
        return Err(Error::InvalidParameter("empty BFS source set".into()));
    }
    for &s in sources {
        if s >= g.n {
            return Err(Error::NodeOutOfRange { id: s, n: g.n });
        }
    }
    let adj = g.neighbor_lists();
    let mut dist = vec![g.n; g.n];
    let mut queue = VecDeque::new();
    for &s in sources {
        if dist[s] != 0 {
            dist[s] = 0;
            queue.push_back(s);
        }
    }
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v] == g.n {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    Ok(dist)
}

/// Mean hop distance over ordered node pairs (u ≠ v). Exact all-pairs BFS
/// for n ≤ 1000, otherwise `sample_pairs` sampled pairs. Errors if the graph
/// is disconnected.
pub fn avg_shortest_path(g: &Graph, sample_pairs: usize, seed: u64) -> Result<f64> {
    if g.n == 0 {
        return Err(Error::EmptyGraph);
    }
    if g.n == 1 {
        return Err(Error::InvalidParameter(
            "average shortest path needs at least two nodes".into(),
        ));
    }
    let comp = connected_components(g);
    if comp.iter().any(|&c| c != 0) {
        return Err(Error::Disconnected);
    }
    if g.n <= 1000 {
        let mut total = 0.0;
        for u in 0..g.n {
            let dist = bfs_distances(g, &[u])?;
            total += dist.iter().map(|&d| d as f64).sum::<f64>();
        }
        Ok(total / (g.n * (g.n - 1)) as f64)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut total = 0.0;
        let mut count = 0usize;
        while count < sample_pairs {
            let u = rng.random_range(0..g.n);
            let v = rng.random_range(0..g.n);
            if u == v {
                continue;
            }
            let dist = bfs_distances(g, &[u])?;
            total += dist[v] as f64;
            count += 1;
        }
        Ok(total / count as f64)
    }
}

/// Stochastic block model with per-class feature signatures. Labels are the
/// block ids; each node draws `tokens_per_node` feature tokens, each from its
/// class signature with probability 1 - noise, else uniformly over all
/// features.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SbmConfig {
    pub blocks: usize,
    pub nodes_per_block: usize,
    pub p_intra: f64,
    pub p_inter: f64,
    pub features_per_class: usize,
    #[serde(default = "default_tokens")]
    pub tokens_per_node: usize,
    pub noise: f64,
    pub seed: u64,
}

fn default_tokens() -> usize {
    10
}

impl SbmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 || self.nodes_per_block == 0 {
            return Err(Error::InvalidParameter(
                "SBM needs at least one block and one node per block".into(),
            ));
        }
        for (name, p) in [("p_intra", self.p_intra), ("p_inter", self.p_inter)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidParameter(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if self.p_intra <= self.p_inter {
            return Err(Error::InvalidParameter(
                "p_intra must exceed p_inter".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::InvalidParameter(format!(
                "noise = {} outside [0, 1]",
                self.noise
            )));
        }
        if self.features_per_class == 0 || self.tokens_per_node == 0 {
            return Err(Error::InvalidParameter(
                "features_per_class and tokens_per_node must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.blocks * self.nodes_per_block
    }
}

/// Deterministic per seed: same config gives bit-identical graphs.
pub fn generate_sbm(cfg: &SbmConfig) -> Result<Graph> {
    cfg.validate()?;
    let n = cfg.num_nodes();
    let f = cfg.blocks * cfg.features_per_class;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let labels: Vec<usize> = (0..n).map(|i| i / cfg.nodes_per_block).collect();

    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if labels[u] == labels[v] {
                cfg.p_intra
            } else {
                cfg.p_inter
            };
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    let mut triplets = Vec::new();
    for u in 0..n {
        let class = labels[u];
        for _ in 0..cfg.tokens_per_node {
            let feat = if rng.random::<f64>() < cfg.noise {
                rng.random_range(0..f)
            } else {
                class * cfg.features_per_class + rng.random_range(0..cfg.features_per_class)
            };
            triplets.push((u, feat, 1.0));
        }
    }
    let mut features = CsrMatrix::from_triplets(n, f, &triplets);
    features.l1_normalize_rows();

    Graph::new(n, edges, features, labels, cfg.blocks)
}
