//! Python bindings: graph construction and IO, PPR propagation, model
//! training matrices and the statistics helpers, with plain Python types
//! (lists of floats) at the boundary.

use ndarray::Array2;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use std::path::Path;

use pprop::experiment::{run_matrix, summarize, RunResult};
use pprop::graph::{generate_sbm, normalize_adjacency};
use pprop::io::{load_dataset, save_dataset, DatasetBundle, ExperimentConfig};
use pprop::model::Model;
use pprop::propagation::{exact_ppr_matrix, IterativePpr, DEFAULT_DENSE_CAP};
use pprop::{Graph as CoreGraph, SbmConfig};

fn err(e: pprop::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_array(h: Vec<Vec<f64>>, n: usize) -> PyResult<Array2<f64>> {
    if h.len() != n {
        return Err(PyValueError::new_err(format!(
            "expected {n} rows, got {}",
            h.len()
        )));
    }
    let cols = h.first().map(|r| r.len()).unwrap_or(0);
    if h.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("ragged row lengths"));
    }
    Ok(Array2::from_shape_fn((n, cols), |(i, j)| h[i][j]))
}

fn from_array(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Undirected attributed graph with integer class labels.
#[pyclass(name = "Graph")]
struct PyGraph {
    inner: CoreGraph,
}

#[pymethods]
impl PyGraph {
    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn num_edges(&self) -> usize {
        self.inner.num_edges()
    }

    #[getter]
    fn num_features(&self) -> usize {
        self.inner.num_features()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes
    }

    #[getter]
    fn labels(&self) -> Vec<usize> {
        self.inner.labels.clone()
    }

    #[getter]
    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges.clone()
    }

    /// Writes the bundle <dir>/<name>.{graph,features,labels}.tsv.
    fn save(&self, dir: &str, name: &str) -> PyResult<()> {
        let bundle = DatasetBundle::in_dir(Path::new(dir), name);
        std::fs::create_dir_all(dir)?;
        save_dataset(&self.inner, &bundle).map_err(err)
    }

    /// Exact PPR propagation: rows of `h` are per-node vectors.
    fn propagate_exact(&self, h: Vec<Vec<f64>>, alpha: f64) -> PyResult<Vec<Vec<f64>>> {
        let adj = normalize_adjacency(&self.inner).map_err(err)?;
        let pi = exact_ppr_matrix(&adj, alpha, DEFAULT_DENSE_CAP).map_err(err)?;
        let z = pi
            .propagate(&to_array(h, self.inner.n)?)
            .map_err(err)?;
        Ok(from_array(&z))
    }

    /// K-step power-iteration propagation without dropout.
    fn propagate_iterative(
        &self,
        h: Vec<Vec<f64>>,
        alpha: f64,
        steps: usize,
    ) -> PyResult<Vec<Vec<f64>>> {
        let adj = normalize_adjacency(&self.inner).map_err(err)?;
        let op = IterativePpr::new(&adj, alpha, steps).map_err(err)?;
        let mut rng = rand::rng();
        let (z, _) = op
            .propagate(&to_array(h, self.inner.n)?, &mut rng)
            .map_err(err)?;
        Ok(from_array(&z))
    }

    fn __repr__(&self) -> String {
        format!(
            "Graph(n={}, edges={}, features={}, classes={})",
            self.inner.n,
            self.inner.num_edges(),
            self.inner.num_features(),
            self.inner.num_classes
        )
    }
}

/// Generates a stochastic block model graph with class-signature features.
#[pyfunction]
#[pyo3(signature = (blocks, nodes_per_block, p_intra, p_inter, features_per_class, noise, seed, tokens_per_node=10))]
#[allow(clippy::too_many_arguments)]
fn sbm(
    blocks: usize,
    nodes_per_block: usize,
    p_intra: f64,
    p_inter: f64,
    features_per_class: usize,
    noise: f64,
    seed: u64,
    tokens_per_node: usize,
) -> PyResult<PyGraph> {
    let g = generate_sbm(&SbmConfig {
        blocks,
        nodes_per_block,
        p_intra,
        p_inter,
        features_per_class,
        tokens_per_node,
        noise,
        seed,
    })
    .map_err(err)?;
    Ok(PyGraph { inner: g })
}

/// Loads a dataset bundle saved by `Graph.save` or the CLI.
#[pyfunction]
fn load(dir: &str, name: &str) -> PyResult<PyGraph> {
    let bundle = DatasetBundle::in_dir(Path::new(dir), name);
    let mut warnings = Vec::new();
    let g = load_dataset(&bundle, &mut warnings).map_err(err)?;
    Ok(PyGraph { inner: g })
}

fn run_to_dict<'py>(py: Python<'py>, r: &RunResult) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let d = pyo3::types::PyDict::new(py);
    d.set_item("split_seed", r.split_seed)?;
    d.set_item("init_seed", r.init_seed)?;
    d.set_item("model", &r.model_tag)?;
    d.set_item("accuracy", r.eval_accuracy)?;
    d.set_item("macro_f1", r.eval_macro_f1)?;
    d.set_item("epochs", r.epochs_trained)?;
    d.set_item("best_epoch", r.best_epoch)?;
    d.set_item("failed", r.failed)?;
    Ok(d)
}

/// Runs the full seed matrix for a TOML experiment config; returns
/// (runs, summary) where runs is a list of per-run dicts.
#[pyfunction]
fn run_experiment<'py>(
    py: Python<'py>,
    graph: &PyGraph,
    config_toml: &str,
) -> PyResult<(Vec<Bound<'py, pyo3::types::PyDict>>, Bound<'py, pyo3::types::PyDict>)> {
    let config = ExperimentConfig::from_toml_str(config_toml).map_err(err)?;
    let g = &graph.inner;
    let adj = normalize_adjacency(g).map_err(err)?;
    let spec = config.model_spec(g.num_features(), g.num_classes);
    let model = Model::new(spec, &adj, &g.features, config.dense_cap).map_err(err)?;
    let tag = config.model.to_string();
    let results =
        run_matrix(g, &model, &model, &config.matrix_config(g), &tag).map_err(err)?;
    let summary = summarize(&results).map_err(err)?;
    let runs: Vec<_> = results
        .iter()
        .map(|r| run_to_dict(py, r))
        .collect::<PyResult<_>>()?;
    let s = pyo3::types::PyDict::new(py);
    s.set_item("accuracy_mean", summary.accuracy.mean)?;
    s.set_item("accuracy_ci", (summary.accuracy.ci_low, summary.accuracy.ci_high))?;
    s.set_item("macro_f1_mean", summary.macro_f1.mean)?;
    s.set_item("macro_f1_ci", (summary.macro_f1.ci_low, summary.macro_f1.ci_high))?;
    s.set_item("failed_runs", summary.failed_runs)?;
    Ok((runs, s))
}

/// Percentile bootstrap CI of the mean: returns (mean, low, high).
#[pyfunction]
#[pyo3(signature = (values, resamples=1000, level=0.95, seed=0))]
fn bootstrap_ci(
    values: Vec<f64>,
    resamples: usize,
    level: f64,
    seed: u64,
) -> PyResult<(f64, f64, f64)> {
    let s = pprop::stats::bootstrap_ci(&values, resamples, level, seed).map_err(err)?;
    Ok((s.mean, s.ci_low, s.ci_high))
}

/// Two-sided paired t-test on equal-length value lists (paired by index):
/// returns (t, p, mean_difference).
#[pyfunction]
fn paired_t_test(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    let ka: Vec<(usize, f64)> = a.into_iter().enumerate().collect();
    let kb: Vec<(usize, f64)> = b.into_iter().enumerate().collect();
    let r = pprop::stats::paired_t_test(&ka, &kb).map_err(err)?;
    Ok((r.t_statistic, r.p_value, r.mean_difference))
}

#[pymodule]
fn pprop_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_function(wrap_pyfunction!(sbm, m)?)?;
    m.add_function(wrap_pyfunction!(load, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap_ci, m)?)?;
    m.add_function(wrap_pyfunction!(paired_t_test, m)?)?;
    Ok(())
}
