//! Randomized invariant checks over generated SBM graphs.

use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pprop::experiment::{sample_splits, EvalMode, SplitSpec};
use pprop::graph::{generate_sbm, largest_connected_component, normalize_adjacency};
use pprop::neural::softmax_rows;
use pprop::propagation::{exact_ppr_matrix, IterativePpr, DEFAULT_DENSE_CAP};
use pprop::stats::{accuracy, bootstrap_ci, macro_f1, paired_t_test};
use pprop::{Graph, SbmConfig};

fn sbm_strategy(max_per_block: usize) -> impl Strategy<Value = SbmConfig> {
    (
        2usize..4,
        4usize..=max_per_block,
        0.3f64..0.8,
        0.01f64..0.15,
        2usize..6,
        1usize..8,
        0.0f64..0.5,
        any::<u64>(),
    )
        .prop_map(
            |(blocks, nodes_per_block, p_intra, p_inter, features_per_class, tokens, noise, seed)| {
                SbmConfig {
                    blocks,
                    nodes_per_block,
                    p_intra,
                    p_inter,
                    features_per_class,
                    tokens_per_node: tokens,
                    noise,
                    seed,
                }
            },
        )
}

fn random_h(n: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, cols), |_| rng.random_range(-1.0..1.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    /// Â fixes D̃^{1/2}·1 (eigenvalue-1 eigenvector) within 1e-10.
    #[test]
    fn normalized_adjacency_fixes_sqrt_degree_vector(cfg in sbm_strategy(20)) {
        let g = generate_sbm(&cfg).unwrap();
        let adj = normalize_adjacency(&g).unwrap();
        let d = adj.sqrt_degree_vector();
        let v = Array2::from_shape_fn((g.n, 1), |(i, _)| d[i]);
        let av = adj.matmul(&v).unwrap();
        for i in 0..g.n {
            prop_assert!((av[[i, 0]] - v[[i, 0]]).abs() <= 1e-10);
        }
    }

    /// |Â_ij − Â_ji| ≤ 1e-12 for every stored entry.
    #[test]
    fn normalized_adjacency_is_symmetric(cfg in sbm_strategy(20)) {
        let g = generate_sbm(&cfg).unwrap();
        let adj = normalize_adjacency(&g).unwrap();
        let m = &adj.csr;
        for i in 0..m.n_rows {
            let (cols, vals) = m.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                prop_assert!((v - m.get(j, i)).abs() <= 1e-12);
            }
        }
    }

    /// Power-iteration dominant eigenvalue of Â is 1 within 1e-6 (n ≤ 200).
    #[test]
    fn dominant_eigenvalue_is_one(cfg in sbm_strategy(50)) {
        let g = generate_sbm(&cfg).unwrap();
        let adj = normalize_adjacency(&g).unwrap();
        let lambda = adj.dominant_eigenvalue(500, cfg.seed);
        prop_assert!((lambda - 1.0).abs() <= 1e-6, "lambda = {lambda}");
    }

    /// LCC size matches an independent union-find oracle.
    #[test]
    fn lcc_matches_union_find(cfg in sbm_strategy(20)) {
        let g = generate_sbm(&cfg).unwrap();
        let mut parent: Vec<usize> = (0..g.n).collect();
        fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(u, v) in &g.edges {
            let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
            parent[ru] = rv;
        }
        let mut counts = vec![0usize; g.n];
        for i in 0..g.n {
            let r = find(&mut parent, i);
            counts[r] += 1;
        }
        let oracle = counts.iter().copied().max().unwrap();
        let (lcc, _) = largest_connected_component(&g).unwrap();
        prop_assert_eq!(lcc.n, oracle);
    }

    /// Z = ΠH is a fixed point of the power iteration to 1e-9, and the exact
    /// solve exists for any α ∈ (0, 1].
    #[test]
    fn exact_ppr_fixed_point(cfg in sbm_strategy(12), alpha in 0.01f64..=1.0) {
        let g = generate_sbm(&cfg).unwrap();
        let adj = normalize_adjacency(&g).unwrap();
        let pi = exact_ppr_matrix(&adj, alpha, DEFAULT_DENSE_CAP).unwrap();
        let h = random_h(g.n, 3, cfg.seed ^ 0xABCD);
        let z = pi.propagate(&h).unwrap();
        let rhs = adj.matmul(&z).unwrap() * (1.0 - alpha) + &(h * alpha);
        for (a, b) in z.iter().zip(rhs.iter()) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    /// ⟨propagate(H), G⟩ = ⟨H, adjoint(G)⟩ without dropout.
    #[test]
    fn iterative_operator_is_self_adjoint(cfg in sbm_strategy(12), steps in 1usize..15) {
        let g = generate_sbm(&cfg).unwrap();
        let adj = normalize_adjacency(&g).unwrap();
        let op = IterativePpr::new(&adj, 0.1, steps).unwrap();
        let h = random_h(g.n, 2, cfg.seed ^ 1);
        let gg = random_h(g.n, 2, cfg.seed ^ 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (zh, trace) = op.propagate(&h, &mut rng).unwrap();
        let back = op.adjoint(&gg, &trace).unwrap();
        let lhs: f64 = zh.iter().zip(gg.iter()).map(|(a, b)| a * b).sum();
        let rhs: f64 = h.iter().zip(back.iter()).map(|(a, b)| a * b).sum();
        let denom = lhs.abs().max(rhs.abs()).max(1.0);
        prop_assert!((lhs - rhs).abs() / denom <= 1e-9);
    }

    /// Softmax rows of predictions sum to 1 ± 1e-9.
    #[test]
    fn softmax_rows_sum_to_one(rows in 1usize..20, cols in 1usize..8, seed in any::<u64>()) {
        let z = random_h(rows, cols, seed) * 10.0;
        let s = softmax_rows(&z);
        for row in s.rows() {
            prop_assert!((row.sum() - 1.0).abs() <= 1e-9);
        }
    }

    /// accuracy equals micro-F1 for single-label multi-class predictions.
    #[test]
    fn accuracy_is_micro_f1(
        labels in prop::collection::vec(0usize..4, 5..40),
        preds in prop::collection::vec(0usize..4, 40),
        ) {
        let n = labels.len();
        let preds = &preds[..n];
        let idx: Vec<usize> = (0..n).collect();
        let acc = accuracy(preds, &labels, &idx).unwrap();
        // micro-F1 from pooled TP/FP/FN
        let mut tp = 0.0f64;
        let mut fp = 0.0f64;
        let mut fn_ = 0.0f64;
        for class in 0..4 {
            for i in 0..n {
                match (preds[i] == class, labels[i] == class) {
                    (true, true) => tp += 1.0,
                    (true, false) => fp += 1.0,
                    (false, true) => fn_ += 1.0,
                    _ => {}
                }
            }
        }
        let micro = 2.0 * tp / (2.0 * tp + fp + fn_);
        prop_assert!((acc - micro).abs() <= 1e-12);
    }

    /// macro-F1 is invariant under a joint class-label permutation.
    #[test]
    fn macro_f1_permutation_invariant(
        labels in prop::collection::vec(0usize..3, 5..30),
        preds in prop::collection::vec(0usize..3, 30),
        shift in 1usize..3,
        ) {
        let n = labels.len();
        let preds = &preds[..n];
        let idx: Vec<usize> = (0..n).collect();
        let base = macro_f1(preds, &labels, &idx, 3).unwrap();
        let perm = |v: &[usize]| -> Vec<usize> { v.iter().map(|&x| (x + shift) % 3).collect() };
        let permuted = macro_f1(&perm(preds), &perm(&labels), &idx, 3).unwrap();
        prop_assert!((base - permuted).abs() <= 1e-12);
    }

    /// bootstrap mean is the plain sample mean; low ≤ mean ≤ high.
    #[test]
    fn bootstrap_mean_and_ordering(
        values in prop::collection::vec(0.0f64..1.0, 2..50),
        seed in any::<u64>(),
        ) {
        let s = bootstrap_ci(&values, 200, 0.95, seed).unwrap();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        prop_assert!((s.mean - mean).abs() <= 1e-12);
        prop_assert!(s.ci_low <= s.mean + 1e-12 && s.mean <= s.ci_high + 1e-12);
    }

    /// swapping (a, b) negates t and preserves p.
    #[test]
    fn t_test_antisymmetry(
        diffs in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 3..30),
        ) {
        let a: Vec<(usize, f64)> = diffs.iter().enumerate().map(|(i, &(x, _))| (i, x)).collect();
        let b: Vec<(usize, f64)> = diffs.iter().enumerate().map(|(i, &(_, y))| (i, y)).collect();
        let ab = paired_t_test(&a, &b).unwrap();
        let ba = paired_t_test(&b, &a).unwrap();
        prop_assert!((ab.t_statistic + ba.t_statistic).abs() <= 1e-9
            || (ab.t_statistic.is_infinite() && ba.t_statistic.is_infinite()));
        prop_assert!((ab.p_value - ba.p_value).abs() <= 1e-9);
    }

    /// train / stop / eval are pairwise disjoint; train has exactly
    /// train-per-class nodes per class when the class is large enough.
    #[test]
    fn splits_are_disjoint_and_stratified(cfg in sbm_strategy(40), split_seed in any::<u64>()) {
        let g = generate_sbm(&cfg).unwrap();
        let spec = SplitSpec::scaled_for(&g, EvalMode::Validation);
        prop_assume!(spec.train_per_class * g.num_classes + spec.stop_size <= spec.visible_size);
        if let Ok(splits) = sample_splits(&g, &spec, split_seed) {
            let mut seen = vec![0u8; g.n];
            for &i in splits.train.iter().chain(&splits.stop).chain(&splits.eval) {
                seen[i] += 1;
            }
            prop_assert!(seen.iter().all(|&c| c <= 1), "overlapping splits");
            let mut per_class = vec![0usize; g.num_classes];
            for &i in &splits.train {
                per_class[g.labels[i]] += 1;
            }
            prop_assert!(per_class.iter().all(|&c| c == spec.train_per_class));
        }
    }

    /// geometric convergence of the power iteration toward ΠH.
    #[test]
    fn power_iteration_converges_geometrically(
        cfg in sbm_strategy(10),
        alpha in prop::sample::select(vec![0.05f64, 0.1, 0.2]),
        steps in 1usize..=30,
        ) {
        let g = generate_sbm(&cfg).unwrap();
        let adj = normalize_adjacency(&g).unwrap();
        let pi = exact_ppr_matrix(&adj, alpha, DEFAULT_DENSE_CAP).unwrap();
        let mut h = random_h(g.n, 2, cfg.seed ^ 99);
        let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
        h /= norm;
        let target = pi.propagate(&h).unwrap();
        let op = IterativePpr::new(&adj, alpha, steps).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (z, _) = op.propagate(&h, &mut rng).unwrap();
        let err: f64 = (&z - &target).iter().map(|v| v * v).sum::<f64>().sqrt();
        let init: f64 = (&h - &target).iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(err <= (1.0 - alpha).powi(steps as i32) * init + 1e-9);
    }
}

/// Save → load round trip preserves the graph exactly (plain test: file IO
/// under proptest shrinkage is slow).
#[test]
fn dataset_round_trip_preserves_graph() {
    use pprop::io::{load_dataset, save_dataset, DatasetBundle};
    for seed in 0..5u64 {
        let g = generate_sbm(&SbmConfig {
            blocks: 3,
            nodes_per_block: 15,
            p_intra: 0.4,
            p_inter: 0.05,
            features_per_class: 5,
            tokens_per_node: 6,
            noise: 0.3,
            seed,
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let bundle = DatasetBundle::in_dir(dir.path(), "rt");
        save_dataset(&g, &bundle).unwrap();
        let loaded = load_dataset(&bundle, &mut Vec::new()).unwrap();
        assert_eq!(loaded, g);
    }
}

/// Eval-mode forward passes are bit-identical across calls.
#[test]
fn eval_forward_is_deterministic() {
    use pprop::model::{Model, ModelSpec};
    use pprop::neural::MlpConfig;
    let g: Graph = generate_sbm(&SbmConfig {
        blocks: 2,
        nodes_per_block: 12,
        p_intra: 0.5,
        p_inter: 0.05,
        features_per_class: 4,
        tokens_per_node: 5,
        noise: 0.2,
        seed: 3,
    })
    .unwrap();
    let adj = normalize_adjacency(&g).unwrap();
    let spec = ModelSpec::Appnp {
        mlp: MlpConfig::new(g.num_features(), 8, g.num_classes),
        alpha: 0.1,
        steps: 10,
        adj_dropout: 0.5,
    };
    let model = Model::new(spec, &adj, &g.features, DEFAULT_DENSE_CAP).unwrap();
    let params = model.init_params(7).unwrap();
    assert_eq!(model.predict(&params).unwrap(), model.predict(&params).unwrap());
}
