//! Dataset bundle file formats, experiment configuration, result tables
//! and plot-data emission.
//!
//! All dataset files are UTF-8 text with LF line endings and a shared
//! header line `#n=<n> f=<f> c=<c>`:
//!   - graph:    `u<TAB>v` per edge, undirected, deduped on load
//!   - features: `node<TAB>feature<TAB>value`
//!   - labels:   `node<TAB>class`
//! Feature rows are L1-normalized once at load so every model sees the
//! same inputs.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::experiment::{
    EarlyStopConfig, EvalMode, MatrixConfig, MatrixSummary, RunResult, SplitSpec, SweepAxis,
    SweepRow, TrainSettings,
};
use crate::graph::Graph;
use crate::model::ModelSpec;
use crate::neural::{AdamConfig, GcnConfig, MlpConfig};
use crate::propagation::{PropagationMode, DEFAULT_DENSE_CAP};
use crate::sparse::CsrMatrix;
use crate::stats::DistanceBinRow;

/// Warn-level size guard for the text formats.
pub const EDGE_COUNT_WARNING: usize = 10_000_000;

/// Paths of the three files making up one dataset.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DatasetBundle {
    pub graph_path: PathBuf,
    pub features_path: PathBuf,
    pub labels_path: PathBuf,
}

impl DatasetBundle {
    /// `<dir>/<name>.{graph,features,labels}.tsv`
    pub fn in_dir(dir: &Path, name: &str) -> Self {
        DatasetBundle {
            graph_path: dir.join(format!("{name}.graph.tsv")),
            features_path: dir.join(format!("{name}.features.tsv")),
            labels_path: dir.join(format!("{name}.labels.tsv")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Header {
    n: usize,
    f: usize,
    c: usize,
}

fn parse_header(path: &Path, line: &str) -> Result<Header> {
    let parse = || -> Option<Header> {
        let rest = line.strip_prefix("#n=")?;
        let (n, rest) = rest.split_once(" f=")?;
        let (f, c) = rest.split_once(" c=")?;
        Some(Header {
            n: n.parse().ok()?,
            f: f.parse().ok()?,
            c: c.parse().ok()?,
        })
    };
    parse().ok_or_else(|| Error::Parse {
        path: path.display().to_string(),
        line: 1,
        msg: format!("bad header line {line:?}, expected #n=<n> f=<f> c=<c>"),
    })
}

fn parse_fields<'a, const N: usize>(
    path: &Path,
    line_no: usize,
    line: &'a str,
) -> Result<[&'a str; N]> {
    let fields: Vec<&str> = line.split('\t').collect();
    fields.try_into().map_err(|_| Error::Parse {
        path: path.display().to_string(),
        line: line_no,
        msg: format!("expected {N} tab-separated fields"),
    })
}

fn parse_num<T: std::str::FromStr>(path: &Path, line_no: usize, s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::Parse {
        path: path.display().to_string(),
        line: line_no,
        msg: format!("cannot parse {s:?}"),
    })
}

fn read_body(path: &Path) -> Result<(Header, Vec<(usize, String)>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| Error::Parse {
        path: path.display().to_string(),
        line: 1,
        msg: "empty file".into(),
    })?;
    let header = parse_header(path, first)?;
    let body = lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, l)| (i + 1, l.to_string()))
        .collect();
    Ok((header, body))
}

/// Loads a dataset bundle. Directed edges are symmetrized with a warning
/// collected into `warnings`; feature rows are L1-normalized.
pub fn load_dataset(bundle: &DatasetBundle, warnings: &mut Vec<String>) -> Result<Graph> {
    let (gh, graph_body) = read_body(&bundle.graph_path)?;
    let (fh, feat_body) = read_body(&bundle.features_path)?;
    let (lh, label_body) = read_body(&bundle.labels_path)?;
    for (h, path) in [
        (&fh, &bundle.features_path),
        (&lh, &bundle.labels_path),
    ] {
        if *h != gh {
            return Err(Error::CountMismatch {
                path: path.display().to_string(),
                msg: "header disagrees with graph file".into(),
            });
        }
    }
    let Header { n, f, c } = gh;

    let mut edges = Vec::with_capacity(graph_body.len());
    for (line_no, line) in &graph_body {
        let [u, v] = parse_fields(&bundle.graph_path, *line_no, line)?;
        let u: usize = parse_num(&bundle.graph_path, *line_no, u)?;
        let v: usize = parse_num(&bundle.graph_path, *line_no, v)?;
        if u >= n || v >= n {
            return Err(Error::NodeOutOfRange { id: u.max(v), n });
        }
        edges.push((u, v));
    }

    let mut triplets = Vec::with_capacity(feat_body.len());
    for (line_no, line) in &feat_body {
        let [node, feat, value] = parse_fields(&bundle.features_path, *line_no, line)?;
        let node: usize = parse_num(&bundle.features_path, *line_no, node)?;
        let feat: usize = parse_num(&bundle.features_path, *line_no, feat)?;
        let value: f64 = parse_num(&bundle.features_path, *line_no, value)?;
        if node >= n {
            return Err(Error::NodeOutOfRange { id: node, n });
        }
        if feat >= f {
            return Err(Error::CountMismatch {
                path: bundle.features_path.display().to_string(),
                msg: format!("feature id {feat} exceeds f={f}"),
            });
        }
        triplets.push((node, feat, value));
    }
    let mut features = CsrMatrix::from_triplets(n, f, &triplets);
    features.l1_normalize_rows();

    let mut labels = vec![usize::MAX; n];
    for (line_no, line) in &label_body {
        let [node, class] = parse_fields(&bundle.labels_path, *line_no, line)?;
        let node: usize = parse_num(&bundle.labels_path, *line_no, node)?;
        let class: usize = parse_num(&bundle.labels_path, *line_no, class)?;
        if node >= n {
            return Err(Error::NodeOutOfRange { id: node, n });
        }
        if class >= c {
            return Err(Error::CountMismatch {
                path: bundle.labels_path.display().to_string(),
                msg: format!("class {class} exceeds c={c}"),
            });
        }
        labels[node] = class;
    }
    if labels.iter().any(|&l| l == usize::MAX) {
        return Err(Error::CountMismatch {
            path: bundle.labels_path.display().to_string(),
            msg: format!(
                "{} of {} nodes have no label",
                labels.iter().filter(|&&l| l == usize::MAX).count(),
                n
            ),
        });
    }

    let g = Graph::new(n, edges, features, labels, c)?;
    let featureless = g.featureless_nodes();
    if !featureless.is_empty() {
        warnings.push(format!(
            "{} nodes have all-zero feature rows (first: {})",
            featureless.len(),
            featureless[0]
        ));
    }
    if g.num_edges() > EDGE_COUNT_WARNING {
        warnings.push(format!(
            "{} edges exceed the text-format comfort cap of {EDGE_COUNT_WARNING}",
            g.num_edges()
        ));
    }
    Ok(g)
}

/// Writes a graph as a dataset bundle. Feature values use the shortest
/// exact f64 representation, so save → load round-trips bit-identically.
pub fn save_dataset(g: &Graph, bundle: &DatasetBundle) -> Result<()> {
    let header = format!("#n={} f={} c={}\n", g.n, g.num_features(), g.num_classes);

    let mut graph_out = header.clone();
    for &(u, v) in &g.edges {
        let _ = writeln!(graph_out, "{u}\t{v}");
    }
    std::fs::write(&bundle.graph_path, graph_out)?;

    let mut feat_out = header.clone();
    for i in 0..g.n {
        let (cols, vals) = g.features.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            let _ = writeln!(feat_out, "{i}\t{j}\t{v:?}");
        }
    }
    std::fs::write(&bundle.features_path, feat_out)?;

    let mut label_out = header;
    for (i, &l) in g.labels.iter().enumerate() {
        let _ = writeln!(label_out, "{i}\t{l}");
    }
    std::fs::write(&bundle.labels_path, label_out)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelTag {
    Appnp,
    Ppnp,
    GcnVanilla,
    GcnOptimized,
    Mlp,
}

impl std::fmt::Display for ModelTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ModelTag::Appnp => "appnp",
            ModelTag::Ppnp => "ppnp",
            ModelTag::GcnVanilla => "gcn-vanilla",
            ModelTag::GcnOptimized => "gcn-optimized",
            ModelTag::Mlp => "mlp",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for ModelTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "appnp" => Ok(ModelTag::Appnp),
            "ppnp" => Ok(ModelTag::Ppnp),
            "gcn-vanilla" => Ok(ModelTag::GcnVanilla),
            "gcn-optimized" => Ok(ModelTag::GcnOptimized),
            "mlp" => Ok(ModelTag::Mlp),
            other => Err(Error::InvalidParameter(format!("unknown model tag {other:?}"))),
        }
    }
}

fn default_alpha() -> f64 {
    0.1
}
fn default_k() -> usize {
    10
}
fn default_hidden() -> usize {
    64
}
fn default_dropout() -> f64 {
    0.5
}
fn default_lambda() -> f64 {
    0.005
}
fn default_lr() -> f64 {
    0.01
}
fn default_adj_dropout() -> f64 {
    0.5
}
fn default_dense_cap() -> usize {
    DEFAULT_DENSE_CAP
}
fn default_patience() -> usize {
    100
}
fn default_max_epochs() -> usize {
    10_000
}
fn default_split_seeds() -> Vec<u64> {
    (1000..1020).collect()
}
fn default_test_split_seeds() -> Vec<u64> {
    (2000..2020).collect()
}
fn default_init_seeds() -> Vec<u64> {
    (1..=5).collect()
}
fn default_mode() -> EvalMode {
    EvalMode::Validation
}

/// Everything that shapes an experiment. The defaults are the reference
/// hyperparameters: α = 0.1, K = 10, h = 64, d = 0.5, λ = 0.005, l = 0.01.
/// Output paths are deliberately not part of this struct so they never
/// affect the config hash.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelTag,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_adj_dropout")]
    pub adj_dropout: f64,
    #[serde(default = "default_mode")]
    pub mode: EvalMode,
    #[serde(default)]
    pub propagation_mode: Option<PropagationMode>,
    /// Validation-mode split seeds.
    #[serde(default = "default_split_seeds")]
    pub split_seeds: Vec<u64>,
    /// Test-mode split seeds; disjoint from the validation list.
    #[serde(default = "default_test_split_seeds")]
    pub test_split_seeds: Vec<u64>,
    #[serde(default = "default_init_seeds")]
    pub init_seeds: Vec<u64>,
    #[serde(default)]
    pub visible_size: Option<usize>,
    #[serde(default)]
    pub stop_size: Option<usize>,
    #[serde(default)]
    pub train_per_class: Option<usize>,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_dense_cap")]
    pub dense_cap: usize,
    #[serde(default)]
    pub sweep_axis: Option<SweepAxis>,
    #[serde(default)]
    pub sweep_values: Vec<f64>,
}

impl ExperimentConfig {
    pub fn default_for(model: ModelTag) -> Self {
        ExperimentConfig {
            model,
            alpha: default_alpha(),
            k: default_k(),
            hidden: default_hidden(),
            dropout: default_dropout(),
            lambda: default_lambda(),
            lr: default_lr(),
            adj_dropout: default_adj_dropout(),
            mode: default_mode(),
            propagation_mode: None,
            split_seeds: default_split_seeds(),
            test_split_seeds: default_test_split_seeds(),
            init_seeds: default_init_seeds(),
            visible_size: None,
            stop_size: None,
            train_per_class: None,
            patience: default_patience(),
            max_epochs: default_max_epochs(),
            dense_cap: default_dense_cap(),
            sweep_axis: None,
            sweep_values: Vec::new(),
        }
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Parse { line, msg, .. } => Error::Parse {
                path: path.display().to_string(),
                line,
                msg,
            },
            other => other,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse {
            path: "<config>".into(),
            line: 0,
            msg: e.to_string(),
        })
    }

    /// SHA-256 over the canonical JSON form. Covers every field that
    /// affects results.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        let hex: String = digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
        hex
    }

    fn mlp_config(&self, num_features: usize, num_classes: usize) -> MlpConfig {
        MlpConfig {
            layer_sizes: vec![num_features, self.hidden, num_classes],
            dropout: self.dropout,
            l2: self.lambda,
            use_bias: true,
            input_dropout: true,
        }
    }

    pub fn model_spec(&self, num_features: usize, num_classes: usize) -> ModelSpec {
        match self.model {
            ModelTag::Appnp => ModelSpec::Appnp {
                mlp: self.mlp_config(num_features, num_classes),
                alpha: self.alpha,
                steps: self.k,
                adj_dropout: self.adj_dropout,
            },
            ModelTag::Ppnp => ModelSpec::Ppnp {
                mlp: self.mlp_config(num_features, num_classes),
                alpha: self.alpha,
            },
            ModelTag::Mlp => ModelSpec::Mlp(self.mlp_config(num_features, num_classes)),
            ModelTag::GcnVanilla => {
                let gcn = GcnConfig::vanilla();
                let mlp = gcn.as_mlp_config(num_features, num_classes);
                ModelSpec::Gcn { gcn, mlp }
            }
            ModelTag::GcnOptimized => {
                let gcn = GcnConfig::optimized();
                let mlp = gcn.as_mlp_config(num_features, num_classes);
                ModelSpec::Gcn { gcn, mlp }
            }
        }
    }

    pub fn split_spec(&self, g: &Graph) -> SplitSpec {
        let mut spec = SplitSpec::scaled_for(g, self.mode);
        if let Some(v) = self.visible_size {
            spec.visible_size = v;
        }
        if let Some(s) = self.stop_size {
            spec.stop_size = s;
        }
        if let Some(t) = self.train_per_class {
            spec.train_per_class = t;
        }
        spec
    }

    pub fn matrix_config(&self, g: &Graph) -> MatrixConfig {
        let split_seeds = match self.mode {
            EvalMode::Validation => self.split_seeds.clone(),
            EvalMode::Test => self.test_split_seeds.clone(),
        };
        MatrixConfig {
            split_seeds,
            init_seeds: self.init_seeds.clone(),
            split: self.split_spec(g),
            settings: TrainSettings {
                adam: AdamConfig {
                    lr: self.lr,
                    ..AdamConfig::default()
                },
                early_stop: EarlyStopConfig {
                    patience: self.patience,
                    max_epochs: self.max_epochs,
                },
            },
        }
    }
}

fn join_ids(ids: &[usize]) -> String {
    ids.iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn split_ids(path: &Path, line_no: usize, s: &str) -> Result<Vec<usize>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|x| parse_num(path, line_no, x)).collect()
}

const RESULT_COLUMNS: &str = "split_seed\tinit_seed\tmodel\taccuracy\tmacro_f1\tepochs\tbest_epoch\tfailed\tpredictions\ttrain_nodes\teval_nodes";

/// One run per row, preceded by the config hash. Rerunning an identical
/// config reproduces the file byte for byte.
pub fn write_results(results: &[RunResult], config_hash: &str, path: &Path) -> Result<()> {
    let mut out = format!("# config={config_hash}\n{RESULT_COLUMNS}\n");
    for r in results {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{:?}\t{:?}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.split_seed,
            r.init_seed,
            r.model_tag,
            r.eval_accuracy,
            r.eval_macro_f1,
            r.epochs_trained,
            r.best_epoch,
            r.failed,
            join_ids(&r.predictions),
            join_ids(&r.train_nodes),
            join_ids(&r.eval_nodes),
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<(String, Vec<RunResult>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let hash = match lines.next() {
        Some((_, l)) if l.starts_with("# config=") => l["# config=".len()..].to_string(),
        _ => {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: 1,
                msg: "missing config hash line".into(),
            })
        }
    };
    match lines.next() {
        Some((_, l)) if l == RESULT_COLUMNS => {}
        _ => {
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: 2,
                msg: "missing column header".into(),
            })
        }
    }
    let mut results = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let line_no = i + 1;
        let [split_seed, init_seed, model, acc, f1, epochs, best, failed, preds, train, eval] =
            parse_fields(path, line_no, line)?;
        results.push(RunResult {
            split_seed: parse_num(path, line_no, split_seed)?,
            init_seed: parse_num(path, line_no, init_seed)?,
            model_tag: model.to_string(),
            eval_accuracy: parse_num(path, line_no, acc)?,
            eval_macro_f1: parse_num(path, line_no, f1)?,
            epochs_trained: parse_num(path, line_no, epochs)?,
            best_epoch: parse_num(path, line_no, best)?,
            failed: parse_num(path, line_no, failed)?,
            predictions: split_ids(path, line_no, preds)?,
            train_nodes: split_ids(path, line_no, train)?,
            eval_nodes: split_ids(path, line_no, eval)?,
        });
    }
    Ok((hash, results))
}

/// Human-readable summary block.
pub fn format_summary(tag: &str, summary: &MatrixSummary) -> String {
    format!(
        "model {tag}: accuracy {:.4} [{:.4}, {:.4}] (95% bootstrap, {} runs, {} failed)\n\
         model {tag}: macro-F1 {:.4} [{:.4}, {:.4}]\n",
        summary.accuracy.mean,
        summary.accuracy.ci_low,
        summary.accuracy.ci_high,
        summary.accuracy.values.len(),
        summary.failed_runs,
        summary.macro_f1.mean,
        summary.macro_f1.ci_low,
        summary.macro_f1.ci_high,
    )
}

/// Per-run accuracy table: one row per run.
pub fn plot_accuracy_distribution(results: &[RunResult]) -> Result<String> {
    if results.is_empty() {
        return Err(Error::MissingTag("no results to plot".into()));
    }
    let mut out = String::from("model,split_seed,init_seed,accuracy\n");
    for r in results {
        let _ = writeln!(
            out,
            "{},{},{},{:?}",
            r.model_tag, r.split_seed, r.init_seed, r.eval_accuracy
        );
    }
    Ok(out)
}

/// Sweep-curve table: one row per sweep value with bootstrap CI.
pub fn plot_sweep(axis: SweepAxis, rows: &[SweepRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::MissingTag("empty sweep".into()));
    }
    let axis_name = match axis {
        SweepAxis::Steps => "k",
        SweepAxis::Alpha => "alpha",
        SweepAxis::TrainPerClass => "ntrain",
    };
    let mut out = format!("{axis_name},mean_accuracy,ci_low,ci_high,failed_runs\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{:?},{:?},{:?},{:?},{}",
            row.value,
            row.summary.accuracy.mean,
            row.summary.accuracy.ci_low,
            row.summary.accuracy.ci_high,
            row.summary.failed_runs
        );
    }
    Ok(out)
}

/// Mode-bar table: one bar per propagation mode.
pub fn plot_mode_bars(rows: &[(PropagationMode, MatrixSummary)]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::MissingTag("no ablation results".into()));
    }
    let mut out = String::from("mode,mean_accuracy,ci_low,ci_high\n");
    for (mode, summary) in rows {
        let name = match mode {
            PropagationMode::Never => "never",
            PropagationMode::TrainingOnly => "training",
            PropagationMode::InferenceOnly => "inference",
            PropagationMode::Both => "both",
        };
        let _ = writeln!(
            out,
            "{name},{:?},{:?},{:?}",
            summary.accuracy.mean, summary.accuracy.ci_low, summary.accuracy.ci_high
        );
    }
    Ok(out)
}

/// Distance-bin table: distance, Δaccuracy in percentage points, n̄.
pub fn plot_distance(rows: &[DistanceBinRow]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::MissingTag("no distance bins".into()));
    }
    let mut out = String::from("distance,delta_acc_pct,n_bar\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{:?},{:?}",
            row.distance, row.delta_acc_pct, row.avg_nodes
        );
    }
    Ok(out)
}
