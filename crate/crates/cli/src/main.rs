//! Command-line front end: dataset generation, training runs, run
//! matrices, sweeps, the propagation-mode ablation and result statistics.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pprop::experiment::{
    ablation_specs, run_matrix, sample_splits, summarize, sweep, train_with_early_stopping,
    RunResult, SweepAxis,
};
use pprop::graph::{generate_sbm, normalize_adjacency, NormalizedAdjacency, SbmConfig};
use pprop::io::{
    format_summary, load_dataset, plot_accuracy_distribution, plot_distance, plot_mode_bars,
    plot_sweep, read_results, save_dataset, write_results, DatasetBundle, ExperimentConfig,
};
use pprop::model::Model;
use pprop::propagation::PropagationMode;
use pprop::stats::{accuracy_by_distance, paired_t_test, DistanceSplit};
use pprop::{Error, Graph, Result};

#[derive(Parser)]
#[command(name = "pprop", about = "Personalized-PageRank propagation of neural predictions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Dataset bundle prefix: <dir>/<name> for <dir>/<name>.{graph,features,labels}.tsv
    #[arg(long)]
    data: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    K,
    Alpha,
    Ntrain,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Never,
    Training,
    Inference,
    Both,
}

impl From<ModeArg> for PropagationMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Never => PropagationMode::Never,
            ModeArg::Training => PropagationMode::TrainingOnly,
            ModeArg::Inference => PropagationMode::InferenceOnly,
            ModeArg::Both => PropagationMode::Both,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a stochastic block model dataset bundle
    GenSbm {
        /// SBM parameters (TOML)
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Bundle name (files <out>/<name>.*.tsv)
        #[arg(long, default_value = "sbm")]
        name: String,
    },
    /// Train one run (first split seed, first init seed) and report metrics
    Train {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the full seed matrix and write per-run results plus a summary
    Matrix {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sweep one hyperparameter axis over the run matrix
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// Comma-separated axis values; falls back to sweep_values in config
        #[arg(long)]
        values: Option<String>,
    },
    /// Propagation-mode ablation (all four modes unless --mode is given)
    Ablate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Paired t-test between two tagged result files in --out
    Compare {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
    },
    /// Distance-binned accuracy gap between two tagged result files
    Distance {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        a: String,
        #[arg(long)]
        b: String,
    },
    /// Summary statistics for an existing result file
    Stats {
        #[arg(long)]
        results: PathBuf,
    },
}

fn init_workers() {
    if let Ok(n) = std::env::var("PPROP_WORKERS") {
        if let Ok(n) = n.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn load_bundle(data: &Path) -> Result<Graph> {
    let dir = data.parent().unwrap_or(Path::new("."));
    let name = data
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::InvalidParameter(format!("bad data prefix {}", data.display())))?;
    let bundle = DatasetBundle::in_dir(dir, name);
    let mut warnings = Vec::new();
    let g = load_dataset(&bundle, &mut warnings)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok(g)
}

struct Workspace {
    config: ExperimentConfig,
    graph: Graph,
    adj: NormalizedAdjacency,
    out: PathBuf,
}

impl Workspace {
    fn open(common: &CommonArgs) -> Result<Self> {
        let config = ExperimentConfig::from_toml_file(&common.config)?;
        let graph = load_bundle(&common.data)?;
        let adj = normalize_adjacency(&graph)?;
        std::fs::create_dir_all(&common.out)?;
        Ok(Workspace {
            config,
            graph,
            adj,
            out: common.out.clone(),
        })
    }

    fn model(&self) -> Result<Model<'_>> {
        let spec = self
            .config
            .model_spec(self.graph.num_features(), self.graph.num_classes);
        Model::new(spec, &self.adj, &self.graph.features, self.config.dense_cap)
    }

    fn results_path(&self, tag: &str) -> PathBuf {
        self.out.join(format!("runs-{tag}.tsv"))
    }
}

fn run_matrix_cmd(ws: &Workspace) -> Result<()> {
    let tag = ws.config.model.to_string();
    let (train_spec, eval_spec) = match ws.config.propagation_mode {
        Some(mode) => ablation_specs(
            &ws.config
                .model_spec(ws.graph.num_features(), ws.graph.num_classes),
            mode,
        )?,
        None => {
            let s = ws
                .config
                .model_spec(ws.graph.num_features(), ws.graph.num_classes);
            (s.clone(), s)
        }
    };
    let train_model = Model::new(train_spec, &ws.adj, &ws.graph.features, ws.config.dense_cap)?;
    let eval_model = Model::new(eval_spec, &ws.adj, &ws.graph.features, ws.config.dense_cap)?;
    let cfg = ws.config.matrix_config(&ws.graph);
    let results = run_matrix(&ws.graph, &train_model, &eval_model, &cfg, &tag)?;
    let summary = summarize(&results)?;
    write_results(&results, &ws.config.hash(), &ws.results_path(&tag))?;
    std::fs::write(
        ws.out.join(format!("accuracy-{tag}.csv")),
        plot_accuracy_distribution(&results)?,
    )?;
    print!("{}", format_summary(&tag, &summary));
    Ok(())
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenSbm { config, out, name } => {
            let text = std::fs::read_to_string(&config)?;
            let sbm: SbmConfig = toml::from_str(&text).map_err(|e| Error::Parse {
                path: config.display().to_string(),
                line: 0,
                msg: e.to_string(),
            })?;
            let g = generate_sbm(&sbm)?;
            std::fs::create_dir_all(&out)?;
            let bundle = DatasetBundle::in_dir(&out, &name);
            save_dataset(&g, &bundle)?;
            println!(
                "wrote {} nodes, {} edges, {} classes to {}",
                g.n,
                g.num_edges(),
                g.num_classes,
                bundle.graph_path.display()
            );
        }
        Command::Train { common } => {
            let ws = Workspace::open(&common)?;
            let model = ws.model()?;
            let cfg = ws.config.matrix_config(&ws.graph);
            let (&split_seed, &init_seed) = (
                cfg.split_seeds.first().ok_or_else(|| {
                    Error::InvalidParameter("empty split seed list".into())
                })?,
                cfg.init_seeds.first().ok_or_else(|| {
                    Error::InvalidParameter("empty init seed list".into())
                })?,
            );
            let splits = sample_splits(&ws.graph, &cfg.split, split_seed)?;
            let tag = ws.config.model.to_string();
            let r = train_with_early_stopping(
                &model,
                &model,
                &ws.graph.labels,
                &splits,
                &cfg.settings,
                split_seed,
                init_seed,
                &tag,
            )?;
            write_results(
                std::slice::from_ref(&r),
                &ws.config.hash(),
                &ws.results_path(&tag),
            )?;
            if r.failed {
                println!("run failed (non-finite loss) after {} epochs", r.epochs_trained);
            } else {
                println!(
                    "accuracy {:.4}, macro-F1 {:.4} ({} epochs, best at {})",
                    r.eval_accuracy, r.eval_macro_f1, r.epochs_trained, r.best_epoch
                );
            }
        }
        Command::Matrix { common } => {
            let ws = Workspace::open(&common)?;
            run_matrix_cmd(&ws)?;
        }
        Command::Sweep {
            common,
            axis,
            values,
        } => {
            let ws = Workspace::open(&common)?;
            let axis = match axis {
                AxisArg::K => SweepAxis::Steps,
                AxisArg::Alpha => SweepAxis::Alpha,
                AxisArg::Ntrain => SweepAxis::TrainPerClass,
            };
            let values: Vec<f64> = match values {
                Some(list) => list
                    .split(',')
                    .map(|v| {
                        v.trim().parse().map_err(|_| {
                            Error::InvalidParameter(format!("bad sweep value {v:?}"))
                        })
                    })
                    .collect::<Result<_>>()?,
                None => ws.config.sweep_values.clone(),
            };
            let spec = ws
                .config
                .model_spec(ws.graph.num_features(), ws.graph.num_classes);
            let tag = ws.config.model.to_string();
            let rows = sweep(
                &ws.graph,
                &ws.adj,
                &spec,
                axis,
                &values,
                &ws.config.matrix_config(&ws.graph),
                &tag,
                ws.config.dense_cap,
            )?;
            let table = plot_sweep(axis, &rows)?;
            std::fs::write(ws.out.join(format!("sweep-{tag}.csv")), &table)?;
            print!("{table}");
        }
        Command::Ablate { common, mode } => {
            let ws = Workspace::open(&common)?;
            let base = ws
                .config
                .model_spec(ws.graph.num_features(), ws.graph.num_classes);
            let modes: Vec<PropagationMode> = match mode {
                Some(m) => vec![m.into()],
                None => vec![
                    PropagationMode::Never,
                    PropagationMode::TrainingOnly,
                    PropagationMode::InferenceOnly,
                    PropagationMode::Both,
                ],
            };
            let cfg = ws.config.matrix_config(&ws.graph);
            let mut bars = Vec::new();
            for mode in modes {
                let (train_spec, eval_spec) = ablation_specs(&base, mode)?;
                let train_model =
                    Model::new(train_spec, &ws.adj, &ws.graph.features, ws.config.dense_cap)?;
                let eval_model =
                    Model::new(eval_spec, &ws.adj, &ws.graph.features, ws.config.dense_cap)?;
                let tag = format!("ablate-{}", mode_name(mode));
                let results = run_matrix(&ws.graph, &train_model, &eval_model, &cfg, &tag)?;
                let summary = summarize(&results)?;
                write_results(&results, &ws.config.hash(), &ws.results_path(&tag))?;
                print!("{}", format_summary(&tag, &summary));
                bars.push((mode, summary));
            }
            std::fs::write(ws.out.join("modes.csv"), plot_mode_bars(&bars)?)?;
        }
        Command::Compare { out, a, b } => {
            let (_, ra) = read_results(&out.join(format!("runs-{a}.tsv")))?;
            let (_, rb) = read_results(&out.join(format!("runs-{b}.tsv")))?;
            let keyed = |rs: &[RunResult]| -> Vec<((u64, u64), f64)> {
                rs.iter()
                    .filter(|r| !r.failed)
                    .map(|r| ((r.split_seed, r.init_seed), r.eval_accuracy))
                    .collect()
            };
            let t = paired_t_test(&keyed(&ra), &keyed(&rb))?;
            println!(
                "{a} vs {b}: mean diff {:+.4}, t {:.3}, p {:.3e} over {} pairs",
                t.mean_difference, t.t_statistic, t.p_value, t.n_pairs
            );
        }
        Command::Distance { common, a, b } => {
            let ws = Workspace::open(&common)?;
            let (_, ra) = read_results(&ws.results_path(&a))?;
            let (_, rb) = read_results(&ws.results_path(&b))?;
            if ra.len() != rb.len() {
                return Err(Error::Unpaired(format!(
                    "{} vs {} runs",
                    ra.len(),
                    rb.len()
                )));
            }
            let mut splits = Vec::new();
            for (x, y) in ra.iter().zip(&rb) {
                if x.failed || y.failed {
                    continue;
                }
                if (x.split_seed, x.init_seed) != (y.split_seed, y.init_seed) {
                    return Err(Error::Unpaired(format!(
                        "seeds ({}, {}) vs ({}, {})",
                        x.split_seed, x.init_seed, y.split_seed, y.init_seed
                    )));
                }
                splits.push(DistanceSplit {
                    train: x.train_nodes.clone(),
                    nodes: x.eval_nodes.clone(),
                    pred_a: x.predictions.clone(),
                    pred_b: y.predictions.clone(),
                });
            }
            let rows = accuracy_by_distance(&ws.graph, &splits)?;
            let table = plot_distance(&rows)?;
            std::fs::write(ws.out.join(format!("distance-{a}-vs-{b}.csv")), &table)?;
            print!("{table}");
        }
        Command::Stats { results } => {
            let (hash, rs) = read_results(&results)?;
            let summary = summarize(&rs)?;
            let tag = rs
                .first()
                .map(|r| r.model_tag.clone())
                .unwrap_or_else(|| "?".into());
            println!("config hash {hash}");
            print!("{}", format_summary(&tag, &summary));
        }
    }
    Ok(())
}

fn mode_name(mode: PropagationMode) -> &'static str {
    match mode {
        PropagationMode::Never => "never",
        PropagationMode::TrainingOnly => "training",
        PropagationMode::InferenceOnly => "inference",
        PropagationMode::Both => "both",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_workers();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
