//! Personalized-PageRank propagation operators.
//!
//! Two interchangeable implementations: `ExactPpr` materializes the dense
//! matrix α(I − (1−α)Â)^{-1} via an LU solve, `IterativePpr` applies K
//! steps of Z ← (1−α)ÂZ + αH and never forms an n×n matrix. Both expose
//! adjoints so gradients can flow through the propagation during training.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;

/// Default node-count cap for the dense operator.
pub const DEFAULT_DENSE_CAP: usize = 5000;

/// Where propagation is applied relative to training and inference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagationMode {
    Never,
    TrainingOnly,
    InferenceOnly,
    Both,
}

/// Dense fully personalized PageRank matrix Π = α(I − (1−α)Â)^{-1}.
#[derive(Debug, Clone)]
pub struct ExactPpr {
    pub n: usize,
    pub alpha: f64,
    pub matrix: Array2<f64>,
}

/// LU factorization with partial pivoting, in place.
fn lu_factor(a: &mut Array2<f64>) -> Result<Vec<usize>> {
    let n = a.nrows();
    let mut pivots = Vec::with_capacity(n);
    for k in 0..n {
        let mut p = k;
        let mut best = a[[k, k]].abs();
        for i in (k + 1)..n {
            if a[[i, k]].abs() > best {
                best = a[[i, k]].abs();
                p = i;
            }
        }
        if best == 0.0 {
            return Err(Error::Invalid("singular propagation system".into()));
        }
        if p != k {
            for j in 0..n {
                let tmp = a[[k, j]];
                a[[k, j]] = a[[p, j]];
                a[[p, j]] = tmp;
            }
        }
        pivots.push(p);
        for i in (k + 1)..n {
            let factor = a[[i, k]] / a[[k, k]];
            a[[i, k]] = factor;
            for j in (k + 1)..n {
                a[[i, j]] -= factor * a[[k, j]];
            }
        }
    }
    Ok(pivots)
}

fn lu_solve_inplace(lu: &Array2<f64>, pivots: &[usize], b: &mut [f64]) {
    let n = lu.nrows();
    for k in 0..n {
        b.swap(k, pivots[k]);
    }
    for i in 1..n {
        for j in 0..i {
            b[i] -= lu[[i, j]] * b[j];
        }
    }
    for i in (0..n).rev() {
        for j in (i + 1)..n {
            b[i] -= lu[[i, j]] * b[j];
        }
        b[i] /= lu[[i, i]];
    }
}

/// Builds Π by solving (I − (1−α)Â)Π = αI column by column.
pub fn exact_ppr_matrix(
    adj: &NormalizedAdjacency,
    alpha: f64,
    dense_cap: usize,
) -> Result<ExactPpr> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha = {alpha} outside (0, 1]"
        )));
    }
    let n = adj.n;
    if n > dense_cap {
        return Err(Error::DenseCapExceeded { n, cap: dense_cap });
    }
    let mut system = adj.csr.to_dense();
    system.mapv_inplace(|v| -(1.0 - alpha) * v);
    for i in 0..n {
        system[[i, i]] += 1.0;
    }
    let pivots = lu_factor(&mut system)?;

    let mut pi = Array2::zeros((n, n));
    let mut col = vec![0.0; n];
    for j in 0..n {
        col.iter_mut().for_each(|x| *x = 0.0);
        col[j] = alpha;
        lu_solve_inplace(&system, &pivots, &mut col);
        for i in 0..n {
            pi[[i, j]] = col[i];
        }
    }
    Ok(ExactPpr {
        n,
        alpha,
        matrix: pi,
    })
}

impl ExactPpr {
    /// Π · H
    pub fn propagate(&self, h: &Array2<f64>) -> Result<Array2<f64>> {
        if h.nrows() != self.n {
            return Err(Error::ShapeMismatch(format!(
                "H has {} rows, operator has n = {}",
                h.nrows(),
                self.n
            )));
        }
        Ok(self.matrix.dot(h))
    }

    /// Πᵀ · G, which equals Π · G since Π is symmetric.
    pub fn adjoint(&self, g: &Array2<f64>) -> Result<Array2<f64>> {
        self.propagate(g)
    }

    /// Largest entrywise residual of (I − (1−α)Â)Π − αI.
    pub fn max_residual(&self, adj: &NormalizedAdjacency) -> f64 {
        let ap = adj.csr.matmul(&self.matrix).expect("square operator");
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for j in 0..self.n {
                let lhs = self.matrix[[i, j]] - (1.0 - self.alpha) * ap[[i, j]];
                let rhs = if i == j { self.alpha } else { 0.0 };
                worst = worst.max((lhs - rhs).abs());
            }
        }
        worst
    }
}

/// Per-step edge-dropout masks recorded during a forward pass, needed to
/// replay the same pass in the adjoint.
#[derive(Debug, Clone, Default)]
pub struct PropagationTrace {
    pub masks: Vec<Vec<f64>>,
}

/// K-step power-iteration operator. alpha = 0 is only reachable through
/// `gcn_limit` and collapses the recurrence to Â^K H.
#[derive(Debug, Clone)]
pub struct IterativePpr<'a> {
    pub adj: &'a NormalizedAdjacency,
    pub alpha: f64,
    pub steps: usize,
    pub dropout: f64,
    pub resample_per_step: bool,
}

impl<'a> IterativePpr<'a> {
    pub fn new(adj: &'a NormalizedAdjacency, alpha: f64, steps: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha = {alpha} outside (0, 1]"
            )));
        }
        Ok(IterativePpr {
            adj,
            alpha,
            steps,
            dropout: 0.0,
            resample_per_step: true,
        })
    }

    /// The α = 0 degradation mode: pure repeated smoothing, Â^K H.
    pub fn gcn_limit(adj: &'a NormalizedAdjacency, steps: usize) -> Self {
        IterativePpr {
            adj,
            alpha: 0.0,
            steps,
            dropout: 0.0,
            resample_per_step: true,
        }
    }

    pub fn with_dropout(mut self, rate: f64, resample_per_step: bool) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::InvalidParameter(format!(
                "dropout rate = {rate} outside [0, 1)"
            )));
        }
        self.dropout = rate;
        self.resample_per_step = resample_per_step;
        Ok(self)
    }

    fn check_shape(&self, h: &Array2<f64>) -> Result<()> {
        if h.nrows() != self.adj.n {
            return Err(Error::ShapeMismatch(format!(
                "H has {} rows, graph has {} nodes",
                h.nrows(),
                self.adj.n
            )));
        }
        Ok(())
    }

    /// Z^(K) from Z^(0) = H, sampling fresh edge masks when dropout is on.
    /// The returned trace holds one mask per step.
    pub fn propagate(
        &self,
        h: &Array2<f64>,
        rng: &mut impl Rng,
    ) -> Result<(Array2<f64>, PropagationTrace)> {
        let mut trace = PropagationTrace::default();
        if self.dropout > 0.0 {
            let mut shared: Option<Vec<f64>> = None;
            for _ in 0..self.steps {
                let mask = if self.resample_per_step {
                    self.adj.sample_edge_mask(self.dropout, rng)
                } else {
                    shared
                        .get_or_insert_with(|| self.adj.sample_edge_mask(self.dropout, rng))
                        .clone()
                };
                trace.masks.push(mask);
            }
        }
        let z = self.propagate_with_trace(h, &trace)?;
        Ok((z, trace))
    }

    /// Replays a recorded pass: same masks, same output.
    pub fn propagate_with_trace(
        &self,
        h: &Array2<f64>,
        trace: &PropagationTrace,
    ) -> Result<Array2<f64>> {
        self.check_shape(h)?;
        if self.dropout > 0.0 && trace.masks.len() != self.steps {
            return Err(Error::MissingTrace);
        }
        let mut z = h.clone();
        for k in 0..self.steps {
            let az = if self.dropout > 0.0 {
                self.adj.matmul_masked(&z, &trace.masks[k])?
            } else {
                self.adj.matmul(&z)?
            };
            z = az * (1.0 - self.alpha) + h * self.alpha;
        }
        Ok(z)
    }

    /// Reverse-mode sweep of the K-step recurrence, replaying the recorded
    /// masks in reverse order. Without dropout the operator is a polynomial
    /// in the symmetric Â, so the adjoint equals the forward map.
    pub fn adjoint(&self, upstream: &Array2<f64>, trace: &PropagationTrace) -> Result<Array2<f64>> {
        self.check_shape(upstream)?;
        if self.dropout > 0.0 && trace.masks.len() != self.steps {
            return Err(Error::MissingTrace);
        }
        let mut grad = upstream.clone();
        let mut dh = Array2::zeros(upstream.raw_dim());
        for k in (0..self.steps).rev() {
            dh = dh + &grad * self.alpha;
            let at_g = if self.dropout > 0.0 {
                self.adj.matmul_masked_transposed(&grad, &trace.masks[k])?
            } else {
                self.adj.matmul(&grad)?
            };
            grad = at_g * (1.0 - self.alpha);
        }
        Ok(dh + grad)
    }
}

/// One GCN propagation step: Â · H.
pub fn gcn_step(adj: &NormalizedAdjacency, h: &Array2<f64>) -> Result<Array2<f64>> {
    adj.matmul(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, normalize_adjacency, Graph, SbmConfig};
    use crate::sparse::CsrMatrix;
    use ndarray::{array, Array2};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_node() -> NormalizedAdjacency {
        let g = Graph::new(2, vec![(0, 1)], CsrMatrix::zeros(2, 1), vec![0, 0], 1).unwrap();
        normalize_adjacency(&g).unwrap()
    }

    fn small_sbm(seed: u64) -> NormalizedAdjacency {
        let cfg = SbmConfig {
            blocks: 2,
            nodes_per_block: 12,
            p_intra: 0.4,
            p_inter: 0.08,
            features_per_class: 3,
            tokens_per_node: 3,
            noise: 0.1,
            seed,
        };
        normalize_adjacency(&generate_sbm(&cfg).unwrap()).unwrap()
    }

    fn frob(a: &Array2<f64>) -> f64 {
        a.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn single_node_ppr_is_one() {
        let g = Graph::new(1, vec![], CsrMatrix::zeros(1, 1), vec![0], 1).unwrap();
        let adj = normalize_adjacency(&g).unwrap();
        for alpha in [0.05, 0.3, 1.0] {
            let ppr = exact_ppr_matrix(&adj, alpha, DEFAULT_DENSE_CAP).unwrap();
            assert!((ppr.matrix[[0, 0]] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_node_ppr_matches_hand_solve() {
        let ppr = exact_ppr_matrix(&two_node(), 0.1, DEFAULT_DENSE_CAP).unwrap();
        let expect = array![[0.55, 0.45], [0.45, 0.55]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((ppr.matrix[[i, j]] - expect[[i, j]]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn alpha_one_gives_identity() {
        let adj = small_sbm(1);
        let ppr = exact_ppr_matrix(&adj, 1.0, DEFAULT_DENSE_CAP).unwrap();
        for i in 0..adj.n {
            for j in 0..adj.n {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((ppr.matrix[[i, j]] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn dense_cap_is_enforced() {
        let adj = two_node();
        assert!(matches!(
            exact_ppr_matrix(&adj, 0.1, 1),
            Err(Error::DenseCapExceeded { .. })
        ));
    }

    #[test]
    fn invalid_alpha_rejected() {
        let adj = two_node();
        assert!(exact_ppr_matrix(&adj, 0.0, 100).is_err());
        assert!(exact_ppr_matrix(&adj, 1.5, 100).is_err());
        assert!(IterativePpr::new(&adj, 0.0, 5).is_err());
    }

    #[test]
    fn exact_propagate_zero_is_zero() {
        let adj = small_sbm(2);
        let ppr = exact_ppr_matrix(&adj, 0.1, DEFAULT_DENSE_CAP).unwrap();
        let z = ppr.propagate(&Array2::zeros((adj.n, 3))).unwrap();
        assert!(frob(&z) == 0.0);
    }

    #[test]
    fn exact_propagate_identity_returns_pi() {
        let ppr = exact_ppr_matrix(&two_node(), 0.1, DEFAULT_DENSE_CAP).unwrap();
        let z = ppr.propagate(&Array2::eye(2)).unwrap();
        assert!((z[[0, 0]] - 0.55).abs() < 1e-10 && (z[[0, 1]] - 0.45).abs() < 1e-10);
    }

    #[test]
    fn exact_shape_mismatch_is_error() {
        let ppr = exact_ppr_matrix(&two_node(), 0.1, DEFAULT_DENSE_CAP).unwrap();
        assert!(ppr.propagate(&Array2::zeros((3, 1))).is_err());
    }

    #[test]
    fn iterative_zero_steps_returns_input() {
        let adj = two_node();
        let op = IterativePpr::new(&adj, 0.1, 0).unwrap();
        let h = array![[1.0, 2.0], [3.0, 4.0]];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (z, _) = op.propagate(&h, &mut rng).unwrap();
        assert_eq!(z, h);
    }

    #[test]
    fn iterative_one_step_matches_hand_computation() {
        let adj = two_node();
        let op = IterativePpr::new(&adj, 0.1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (z, _) = op.propagate(&Array2::eye(2), &mut rng).unwrap();
        let expect = array![[0.55, 0.45], [0.45, 0.55]];
        for i in 0..2 {
            for j in 0..2 {
                assert!((z[[i, j]] - expect[[i, j]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gcn_limit_is_matrix_power() {
        let adj = small_sbm(3);
        let k = 4;
        let op = IterativePpr::gcn_limit(&adj, k);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let h = Array2::from_shape_fn((adj.n, 2), |(i, j)| ((i + 2 * j) as f64).sin());
        let (z, _) = op.propagate(&h, &mut rng).unwrap();
        let mut want = h.clone();
        for _ in 0..k {
            want = adj.matmul(&want).unwrap();
        }
        for (a, b) in z.iter().zip(want.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fixed_point_of_exact_solution() {
        let adj = small_sbm(4);
        let alpha = 0.15;
        let ppr = exact_ppr_matrix(&adj, alpha, DEFAULT_DENSE_CAP).unwrap();
        let h = Array2::from_shape_fn((adj.n, 3), |(i, j)| ((i * 3 + j) as f64).cos());
        let z = ppr.propagate(&h).unwrap();
        let az = adj.matmul(&z).unwrap();
        let back = az * (1.0 - alpha) + &h * alpha;
        assert!(frob(&(&back - &z)) < 1e-9);
    }

    #[test]
    fn geometric_convergence_to_exact() {
        for seed in [0, 1, 2] {
            let adj = small_sbm(seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let mut h = Array2::from_shape_fn((adj.n, 2), |_| rng.random::<f64>() - 0.5);
            let norm = frob(&h);
            h.mapv_inplace(|x| x / norm);
            for &alpha in &[0.05, 0.1, 0.2] {
                let ppr = exact_ppr_matrix(&adj, alpha, DEFAULT_DENSE_CAP).unwrap();
                let pih = ppr.propagate(&h).unwrap();
                let base = frob(&(&h - &pih));
                for k in 1..=30 {
                    let op = IterativePpr::new(&adj, alpha, k).unwrap();
                    let (z, _) = op.propagate(&h, &mut rng).unwrap();
                    let err = frob(&(&z - &pih));
                    let bound = (1.0 - alpha).powi(k as i32) * base + 1e-9;
                    assert!(err <= bound, "alpha={alpha} k={k}: {err} > {bound}");
                }
            }
        }
    }

    #[test]
    fn adjoint_zero_upstream_is_zero() {
        let adj = small_sbm(5);
        let op = IterativePpr::new(&adj, 0.1, 5).unwrap();
        let g = Array2::zeros((adj.n, 2));
        let dh = op.adjoint(&g, &PropagationTrace::default()).unwrap();
        assert_eq!(frob(&dh), 0.0);
    }

    #[test]
    fn adjoint_equals_forward_without_dropout() {
        let adj = small_sbm(6);
        let op = IterativePpr::new(&adj, 0.2, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = Array2::from_shape_fn((adj.n, 2), |_| rng.random::<f64>() - 0.5);
        let (fwd, trace) = op.propagate(&g, &mut rng).unwrap();
        let adj_g = op.adjoint(&g, &trace).unwrap();
        assert!(frob(&(&fwd - &adj_g)) < 1e-12);
    }

    #[test]
    fn adjoint_inner_product_identity() {
        let adj = small_sbm(7);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let h = Array2::from_shape_fn((adj.n, 3), |_| rng.random::<f64>() - 0.5);
        let g = Array2::from_shape_fn((adj.n, 3), |_| rng.random::<f64>() - 0.5);
        let op = IterativePpr::new(&adj, 0.1, 6).unwrap();
        let (ph, trace) = op.propagate(&h, &mut rng).unwrap();
        let pg = op.adjoint(&g, &trace).unwrap();
        let lhs: f64 = ph.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
        let rhs: f64 = h.iter().zip(pg.iter()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(rhs.abs()).max(1.0));
    }

    #[test]
    fn adjoint_without_recorded_masks_is_error() {
        let adj = small_sbm(8);
        let op = IterativePpr::new(&adj, 0.1, 4)
            .unwrap()
            .with_dropout(0.3, true)
            .unwrap();
        let g = Array2::zeros((adj.n, 2));
        assert!(matches!(
            op.adjoint(&g, &PropagationTrace::default()),
            Err(Error::MissingTrace)
        ));
    }

    #[test]
    fn dropout_adjoint_matches_finite_differences() {
        // random 5-node graph, c = 2, fixed linear functional, masks frozen
        let g = Graph::new(
            5,
            vec![(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)],
            CsrMatrix::zeros(5, 1),
            vec![0; 5],
            1,
        )
        .unwrap();
        let adj = normalize_adjacency(&g).unwrap();
        let op = IterativePpr::new(&adj, 0.1, 4)
            .unwrap()
            .with_dropout(0.3, true)
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = Array2::from_shape_fn((5, 2), |_| rng.random::<f64>() - 0.5);
        let weights = Array2::from_shape_fn((5, 2), |_| rng.random::<f64>() - 0.5);

        let (_, trace) = op.propagate(&h, &mut rng).unwrap();
        let analytic = op.adjoint(&weights, &trace).unwrap();

        let eps = 1e-5;
        for i in 0..5 {
            for j in 0..2 {
                let mut hp = h.clone();
                hp[[i, j]] += eps;
                let mut hm = h.clone();
                hm[[i, j]] -= eps;
                let lp: f64 = op
                    .propagate_with_trace(&hp, &trace)
                    .unwrap()
                    .iter()
                    .zip(weights.iter())
                    .map(|(a, b)| a * b)
                    .sum();
                let lm: f64 = op
                    .propagate_with_trace(&hm, &trace)
                    .unwrap()
                    .iter()
                    .zip(weights.iter())
                    .map(|(a, b)| a * b)
                    .sum();
                let numeric = (lp - lm) / (2.0 * eps);
                let a = analytic[[i, j]];
                let denom = a.abs().max(numeric.abs()).max(1e-8);
                assert!(
                    (a - numeric).abs() / denom <= 1e-4,
                    "entry ({i},{j}): analytic {a} vs numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn exact_pi_is_symmetric_and_nonnegative() {
        let adj = small_sbm(9);
        let ppr = exact_ppr_matrix(&adj, 0.1, DEFAULT_DENSE_CAP).unwrap();
        for i in 0..adj.n {
            for j in 0..adj.n {
                assert!((ppr.matrix[[i, j]] - ppr.matrix[[j, i]]).abs() < 1e-9);
                assert!(ppr.matrix[[i, j]] >= -1e-12);
            }
        }
        // D̃^{1/2}·1 is fixed by Π
        let v = adj.sqrt_degree_vector();
        let m = Array2::from_shape_vec((adj.n, 1), v.clone()).unwrap();
        let pv = ppr.propagate(&m).unwrap();
        for i in 0..adj.n {
            assert!((pv[[i, 0]] - v[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn exact_residual_is_small() {
        let adj = small_sbm(10);
        for &alpha in &[0.01, 0.1, 0.5, 1.0] {
            let ppr = exact_ppr_matrix(&adj, alpha, DEFAULT_DENSE_CAP).unwrap();
            assert!(ppr.max_residual(&adj) <= 1e-8, "alpha = {alpha}");
        }
    }

    #[test]
    fn gcn_step_examples() {
        let g = Graph::new(1, vec![], CsrMatrix::zeros(1, 1), vec![0], 1).unwrap();
        let adj = normalize_adjacency(&g).unwrap();
        let h = array![[3.0, -1.0]];
        assert_eq!(gcn_step(&adj, &h).unwrap(), h);

        let adj2 = two_node();
        let z = gcn_step(&adj2, &Array2::eye(2)).unwrap();
        for v in z.iter() {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }
}
