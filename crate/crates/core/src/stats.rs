//! Metrics and statistical machinery: accuracy, macro F1, percentile
//! bootstrap confidence intervals, paired t-tests and the distance-binned
//! accuracy comparison.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::graph::{bfs_distances, Graph};

/// Fraction of correct predictions over the index set. Equals micro F1 for
/// single-label multi-class predictions.
pub fn accuracy(pred: &[usize], truth: &[usize], index_set: &[usize]) -> Result<f64> {
    if index_set.is_empty() {
        return Err(Error::InvalidParameter("empty accuracy index set".into()));
    }
    let correct = index_set.iter().filter(|&&i| pred[i] == truth[i]).count();
    Ok(correct as f64 / index_set.len() as f64)
}

/// Unweighted mean of per-class F1 over all `c` classes. A class absent from
/// both predictions and truth contributes 0; zero-denominator precision and
/// recall are taken as 0.
pub fn macro_f1(pred: &[usize], truth: &[usize], index_set: &[usize], c: usize) -> Result<f64> {
    if index_set.is_empty() {
        return Err(Error::InvalidParameter("empty F1 index set".into()));
    }
    let mut total = 0.0;
    for class in 0..c {
        let mut tp = 0.0;
        let mut fp = 0.0;
        let mut fn_ = 0.0;
        for &i in index_set {
            match (pred[i] == class, truth[i] == class) {
                (true, true) => tp += 1.0,
                (true, false) => fp += 1.0,
                (false, true) => fn_ += 1.0,
                _ => {}
            }
        }
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        total += f1;
    }
    Ok(total / c as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricSummary {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub values: Vec<f64>,
}

/// Percentile bootstrap of the mean, deterministic per seed. The reported
/// mean is the plain sample mean, not the bootstrap mean.
pub fn bootstrap_ci(
    values: &[f64],
    n_resamples: usize,
    level: f64,
    seed: u64,
) -> Result<MetricSummary> {
    if values.len() < 2 {
        return Err(Error::InvalidParameter(
            "bootstrap needs at least 2 values".into(),
        ));
    }
    if !(0.0..1.0).contains(&level) {
        return Err(Error::InvalidParameter(format!(
            "confidence level {level} outside (0, 1)"
        )));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means = Vec::with_capacity(n_resamples);
    for _ in 0..n_resamples {
        let mut acc = 0.0;
        for _ in 0..n {
            acc += values[rng.random_range(0..n)];
        }
        means.push(acc / n as f64);
    }
    means.sort_by(|a, b| a.total_cmp(b));
    let quantile = |q: f64| -> f64 {
        let pos = q * (means.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        let frac = pos - lo as f64;
        means[lo] * (1.0 - frac) + means[hi] * frac
    };
    let tail = (1.0 - level) / 2.0;
    Ok(MetricSummary {
        mean,
        ci_low: quantile(tail),
        ci_high: quantile(1.0 - tail),
        values: values.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct PairedTestResult {
    pub t_statistic: f64,
    pub p_value: f64,
    pub n_pairs: usize,
    pub mean_difference: f64,
}

/// Two-sided paired Student t-test on values matched by key. Degenerate
/// cases by convention: zero-variance zero-mean differences give p = 1,
/// zero-variance nonzero-mean give p = 0.
pub fn paired_t_test<K: Ord + std::fmt::Debug + Copy>(
    a: &[(K, f64)],
    b: &[(K, f64)],
) -> Result<PairedTestResult> {
    let mut a_sorted = a.to_vec();
    let mut b_sorted = b.to_vec();
    a_sorted.sort_by_key(|&(k, _)| k);
    b_sorted.sort_by_key(|&(k, _)| k);
    if a_sorted.len() != b_sorted.len() {
        return Err(Error::Unpaired(format!(
            "{} vs {} runs",
            a_sorted.len(),
            b_sorted.len()
        )));
    }
    for (&(ka, _), &(kb, _)) in a_sorted.iter().zip(&b_sorted) {
        if ka != kb {
            return Err(Error::Unpaired(format!("keys {ka:?} and {kb:?} differ")));
        }
    }
    if a_sorted.len() < 2 {
        return Err(Error::InvalidParameter(
            "paired t-test needs at least 2 pairs".into(),
        ));
    }
    let diffs: Vec<f64> = a_sorted
        .iter()
        .zip(&b_sorted)
        .map(|(&(_, va), &(_, vb))| va - vb)
        .collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);

    let (t, p) = if var == 0.0 {
        if mean == 0.0 {
            (0.0, 1.0)
        } else {
            (mean.signum() * f64::INFINITY, 0.0)
        }
    } else {
        let t = mean / (var / n).sqrt();
        let dist = StudentsT::new(0.0, 1.0, n - 1.0)
            .map_err(|e| Error::Invalid(format!("t-distribution: {e}")))?;
        let p = 2.0 * (1.0 - dist.cdf(t.abs()));
        (t, p)
    };
    Ok(PairedTestResult {
        t_statistic: t,
        p_value: p,
        n_pairs: diffs.len(),
        mean_difference: mean,
    })
}

/// One split's inputs for the distance comparison: the training nodes used
/// by both models, the node set to bin, and both models' per-node
/// predictions.
#[derive(Debug, Clone)]
pub struct DistanceSplit {
    pub train: Vec<usize>,
    pub nodes: Vec<usize>,
    pub pred_a: Vec<usize>,
    pub pred_b: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DistanceBinRow {
    pub distance: usize,
    /// Mean accuracy of model A minus model B in percentage points.
    pub delta_acc_pct: f64,
    /// Average number of nodes in this bin across splits.
    pub avg_nodes: f64,
}

/// Bins nodes by BFS hop distance from each split's training set and
/// reports the per-bin accuracy gap of model A over model B, averaged
/// across splits. The distance-0 bin is exactly the training nodes.
pub fn accuracy_by_distance(g: &Graph, splits: &[DistanceSplit]) -> Result<Vec<DistanceBinRow>> {
    if splits.is_empty() {
        return Err(Error::Unpaired("no splits provided".into()));
    }
    // per-distance accumulators: (sum of per-split delta, number of splits, sum of counts)
    let mut acc: std::collections::BTreeMap<usize, (f64, usize, usize)> =
        std::collections::BTreeMap::new();
    for split in splits {
        if split.pred_a.len() != g.n || split.pred_b.len() != g.n {
            return Err(Error::Unpaired(
                "predictions must cover every node of the graph".into(),
            ));
        }
        let dist = bfs_distances(g, &split.train)?;
        let mut bins: std::collections::BTreeMap<usize, Vec<usize>> =
            std::collections::BTreeMap::new();
        for &i in &split.nodes {
            bins.entry(dist[i]).or_default().push(i);
        }
        for (d, nodes) in bins {
            let acc_a = accuracy(&split.pred_a, &g.labels, &nodes)?;
            let acc_b = accuracy(&split.pred_b, &g.labels, &nodes)?;
            let entry = acc.entry(d).or_insert((0.0, 0, 0));
            entry.0 += (acc_a - acc_b) * 100.0;
            entry.1 += 1;
            entry.2 += nodes.len();
        }
    }
    Ok(acc
        .into_iter()
        .map(|(distance, (delta_sum, n_splits, node_sum))| DistanceBinRow {
            distance,
            delta_acc_pct: delta_sum / n_splits as f64,
            avg_nodes: node_sum as f64 / n_splits as f64,
        })
        .collect())
}
