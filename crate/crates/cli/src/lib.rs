//! `gden` command-line driver.
//!
//! Every subcommand prints its results as `key=value` lines on stdout and
//! diagnostics on stderr. Exit codes: 0 success, 2 usage error, 1 runtime
//! error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gden::dataset::{benchmark_figures, features_tsv, load_dataset_with, DatasetBundle, LoadOptions};
use gden::model::{load_checkpoint, save_checkpoint, Checkpoint, Network, Task, DEFAULT_GAE_CAP};
use gden::train::{evaluate_accuracy, mean_std, split_edges, train_gae, train_semi, Architecture, TrainConfig};
use gden::{DiffusionKind, DiffusionOperator, Graph, SolveMode, SolverConfig, Variant};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "gden", version, about = "Graph diffusion-embedding networks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train the semi-supervised classifier and report test accuracy.
    TrainSemi(TrainSemiArgs),
    /// Evaluate a saved classifier on one of the dataset masks.
    Eval(EvalArgs),
    /// Apply a diffusion operator to the dataset features.
    Diffuse(DiffuseArgs),
    /// Train the graph auto-encoder on an edge split and report test AUC.
    TrainGae(TrainGaeArgs),
    /// Write the final hidden embedding of a saved model.
    ExportEmbed(ExportArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SelfLoops {
    /// Leave the graph as loaded.
    None,
    /// Add a unit self-loop to nodes without neighbours.
    Isolated,
    /// Add a unit self-loop to every node.
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MaskName {
    Train,
    Val,
    Test,
}

#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Dataset directory in the neutral format (required, no default).
    #[arg(long, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// Scale feature rows to unit L1 norm (default: off).
    #[arg(long)]
    pub row_normalize: bool,
    /// Self-loop repair applied to every graph before building the operator.
    #[arg(long, value_enum, default_value = "isolated")]
    pub self_loops: SelfLoops,
}

#[derive(Args, Debug, Clone)]
pub struct SolverArgs {
    /// Relative residual tolerance of the linear solves.
    #[arg(long, default_value_t = 1e-7)]
    pub tolerance: f64,
    /// Iteration cap per solve (default: 10 * n).
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Factor the system densely instead of iterating (n <= 2000; default: off).
    #[arg(long)]
    pub dense: bool,
    /// Solve feature columns one at a time (default: off).
    #[arg(long)]
    pub sequential: bool,
}

impl SolverArgs {
    fn config(&self) -> SolverConfig {
        SolverConfig {
            tolerance: self.tolerance,
            max_iterations: self.max_iter,
            mode: if self.dense { SolveMode::Dense } else { SolveMode::Iterative },
            parallel: !self.sequential,
            ..SolverConfig::default()
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct OperatorArgs {
    /// Diffusion kind: l, rwr, nl or multi-l.
    #[arg(long, default_value = "nl")]
    pub kind: DiffusionKind,
    /// Diffusion strength (default: l 4.5, rwr 0.91, nl 0.65, multi-l 4.5).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Closed form: paper or derived.
    #[arg(long, default_value = "paper")]
    pub variant: Variant,
}

impl OperatorArgs {
    fn alpha(&self) -> f64 {
        self.alpha.unwrap_or_else(|| self.kind.default_alpha())
    }

    fn validate(&self) -> anyhow::Result<()> {
        self.kind.check_alpha(self.alpha())?;
        Ok(())
    }
}

#[derive(Args, Debug, Clone)]
pub struct OptimArgs {
    /// Maximum number of epochs.
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    /// Adam learning rate.
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    /// Epochs without a new best validation metric before stopping.
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    /// First seed; also seeds the edge split for train-gae.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of consecutive seeds to run; the summary reports their mean.
    #[arg(long, default_value_t = 1)]
    pub seeds: usize,
}

#[derive(Args, Debug)]
pub struct TrainSemiArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub op: OperatorArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "16")]
    pub hidden: Vec<usize>,
    /// Diffuse again before the classification head: on or off.
    #[arg(long, default_value = "on", value_name = "on|off", action = clap::ArgAction::Set, value_parser = parse_switch)]
    pub head_diffusion: bool,
    /// L2 penalty on the first weight matrix.
    #[arg(long, default_value_t = 5e-4)]
    pub weight_decay: f64,
    /// Dropout rate applied after each diffusion.
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    /// Checkpoint written for the run with seed --seed.
    #[arg(long, default_value = "model.gden")]
    pub checkpoint: PathBuf,
    /// Per-epoch metrics (JSON lines) for the run with seed --seed.
    #[arg(long, default_value = "metrics.jsonl")]
    pub metrics: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Saved classifier (required, no default).
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Which mask to score.
    #[arg(long, value_enum, default_value = "test")]
    pub mask: MaskName,
}

#[derive(Args, Debug)]
pub struct DiffuseArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub op: OperatorArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output file, one tab-separated row per node.
    #[arg(long, default_value = "diffused.tsv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainGaeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub op: OperatorArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub optim: OptimArgs,
    /// Encoder widths, comma separated; the last is the embedding size.
    #[arg(long, value_delimiter = ',', default_value = "32,16")]
    pub hidden: Vec<usize>,
    /// L2 penalty on the first weight matrix.
    #[arg(long, default_value_t = 0.0)]
    pub weight_decay: f64,
    /// Dropout rate applied after each diffusion.
    #[arg(long, default_value_t = 0.0)]
    pub dropout: f64,
    /// Fraction of edges held out for validation.
    #[arg(long, default_value_t = 0.05)]
    pub val_frac: f64,
    /// Fraction of edges held out for testing.
    #[arg(long, default_value_t = 0.10)]
    pub test_frac: f64,
    /// Largest node count for the dense reconstruction.
    #[arg(long, default_value_t = DEFAULT_GAE_CAP)]
    pub gae_cap: usize,
    /// Checkpoint written for the run with seed --seed.
    #[arg(long, default_value = "gae.gden")]
    pub checkpoint: PathBuf,
    /// Per-epoch metrics (JSON lines) for the run with seed --seed.
    #[arg(long, default_value = "gae-metrics.jsonl")]
    pub metrics: PathBuf,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    /// Saved model, classifier or auto-encoder (required, no default).
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Output file, one tab-separated row per node.
    #[arg(long, default_value = "embedding.tsv")]
    pub out: PathBuf,
}

fn parse_switch(s: &str) -> Result<bool, String> {
    match s {
        "on" => Ok(true),
        "off" => Ok(false),
        other => Err(format!("expected on or off, got {other:?}")),
    }
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<gden::GdenError> for Failure {
    fn from(e: gden::GdenError) -> Self {
        Failure::Runtime(e.into())
    }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Usage(e.into())
}

/// Parse `argv` (including the program name), run, and return the exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let mut out = std::io::stdout().lock();
    match run(cli.command, &mut out) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e:#}");
            EXIT_USAGE
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            EXIT_RUNTIME
        }
    }
}

fn run(command: Command, out: &mut dyn std::io::Write) -> Result<(), Failure> {
    match command {
        Command::TrainSemi(a) => cmd_train_semi(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Diffuse(a) => cmd_diffuse(a, out),
        Command::TrainGae(a) => cmd_train_gae(a, out),
        Command::ExportEmbed(a) => cmd_export(a, out),
    }
}

fn emit(out: &mut dyn std::io::Write, line: String) -> anyhow::Result<()> {
    writeln!(out, "{line}").context("writing to stdout")
}

fn check_solver(s: &SolverArgs) -> Result<(), Failure> {
    if !(s.tolerance > 0.0) {
        return Err(usage(anyhow::anyhow!("--tolerance must be positive")));
    }
    if s.max_iter == Some(0) {
        return Err(usage(anyhow::anyhow!("--max-iter must be at least 1")));
    }
    Ok(())
}

fn check_hidden(hidden: &[usize]) -> Result<(), Failure> {
    if hidden.contains(&0) {
        return Err(usage(anyhow::anyhow!("hidden widths must be positive")));
    }
    Ok(())
}

fn require_data(d: &DataArgs) -> Result<&Path, Failure> {
    d.data
        .as_deref()
        .ok_or_else(|| usage(anyhow::anyhow!("--data DIR is required")))
}

fn repair(g: &Graph, mode: SelfLoops) -> gden::Result<Graph> {
    match mode {
        SelfLoops::None => Ok(g.clone()),
        SelfLoops::Isolated if g.isolated_nodes().is_empty() => Ok(g.clone()),
        SelfLoops::Isolated => g.add_self_loops(1.0, true),
        SelfLoops::All => g.add_self_loops(1.0, false),
    }
}

fn load(d: &DataArgs) -> Result<DatasetBundle, Failure> {
    let dir = require_data(d)?;
    let mut bundle = load_dataset_with(
        dir,
        LoadOptions {
            row_normalize: d.row_normalize,
        },
    )
    .with_context(|| format!("loading dataset {}", dir.display()))?;
    if let Some(fig) = benchmark_figures(&bundle.name) {
        let check = bundle.stats().check_against(&fig);
        for w in &check.warnings {
            eprintln!("warning: {w}");
        }
        if !check.errors.is_empty() {
            return Err(Failure::Runtime(anyhow::anyhow!(check.errors.join("; "))));
        }
    }
    let isolated: usize = bundle.graphs.iter().map(|g| g.isolated_nodes().len()).sum();
    if isolated > 0 && d.self_loops != SelfLoops::None {
        eprintln!("note: {isolated} isolated nodes in {}", bundle.name);
    }
    bundle.graphs = bundle
        .graphs
        .iter()
        .map(|g| repair(g, d.self_loops))
        .collect::<gden::Result<_>>()
        .context("adding self-loops")?;
    Ok(bundle)
}

fn operator_graphs(kind: DiffusionKind, graphs: &[Graph]) -> anyhow::Result<Vec<Graph>> {
    if kind != DiffusionKind::MultiLaplacian && graphs.len() != 1 {
        bail!(
            "dataset has {} graphs; kind {kind} takes one (use multi-l)",
            graphs.len()
        );
    }
    Ok(graphs.to_vec())
}

fn build_operator(
    kind: DiffusionKind,
    graphs: &[Graph],
    alpha: f64,
    variant: Variant,
    solver: &SolverArgs,
) -> anyhow::Result<DiffusionOperator> {
    DiffusionOperator::new(kind, operator_graphs(kind, graphs)?, alpha, variant, solver.config())
        .context("building diffusion operator")
}

/// `--seed`, `--seed + 1`, ... for `--seeds` runs. Only the first run writes
/// the checkpoint and metrics file.
fn seeds(o: &OptimArgs) -> Result<Vec<u64>, Failure> {
    if o.seeds == 0 {
        return Err(usage(anyhow::anyhow!("--seeds must be at least 1")));
    }
    Ok((0..o.seeds as u64).map(|k| o.seed + k).collect())
}

fn train_config(o: &OptimArgs, weight_decay: f64, dropout: f64, seed: u64) -> Result<TrainConfig, Failure> {
    let cfg = TrainConfig {
        epochs: o.epochs,
        learning_rate: o.lr,
        weight_decay,
        patience: o.patience,
        dropout,
        seed,
        ..TrainConfig::default()
    };
    if !(o.lr > 0.0) {
        return Err(usage(anyhow::anyhow!("--lr must be positive")));
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn cmd_train_semi(a: TrainSemiArgs, out: &mut dyn std::io::Write) -> Result<(), Failure> {
    a.op.validate().map_err(usage)?;
    check_solver(&a.solver)?;
    check_hidden(&a.hidden)?;
    let seeds = seeds(&a.optim)?;
    let configs = seeds
        .iter()
        .map(|&s| train_config(&a.optim, a.weight_decay, a.dropout, s))
        .collect::<Result<Vec<_>, _>>()?;
    let bundle = load(&a.data)?;
    let op = build_operator(a.op.kind, &bundle.graphs, a.op.alpha(), a.op.variant, &a.solver)?;
    let arch = Architecture {
        hidden: a.hidden.clone(),
        head_diffusion: a.head_diffusion,
    };
    let mut accs = Vec::with_capacity(seeds.len());
    for (i, cfg) in configs.iter().enumerate() {
        let (params, history) = train_semi(&bundle, &op, &arch, cfg).context("training")?;
        let acc = history
            .test_metric
            .ok_or_else(|| anyhow::anyhow!("dataset has an empty test mask"))?;
        if i == 0 {
            let ckpt = Checkpoint {
                task: Task::Semi,
                params,
                kind: a.op.kind,
                alpha: a.op.alpha(),
                variant: a.op.variant,
                head_diffusion: a.head_diffusion,
            };
            save_checkpoint(&ckpt, &a.checkpoint)
                .with_context(|| format!("writing {}", a.checkpoint.display()))?;
            history
                .write_metrics(&a.metrics)
                .with_context(|| format!("writing {}", a.metrics.display()))?;
        }
        if seeds.len() > 1 {
            emit(
                out,
                format!("seed={} best_epoch={} test_accuracy={acc}", cfg.seed, history.best_epoch),
            )?;
        }
        accs.push(acc);
    }
    let (mean, std) = mean_std(&accs);
    emit(out, format!("test_accuracy={mean}"))?;
    if seeds.len() > 1 {
        emit(out, format!("test_accuracy_std={std}"))?;
    }
    Ok(())
}

fn cmd_eval(a: EvalArgs, out: &mut dyn std::io::Write) -> Result<(), Failure> {
    check_solver(&a.solver)?;
    let ckpt = load_checkpoint(&a.checkpoint)
        .with_context(|| format!("reading checkpoint {}", a.checkpoint.display()))?;
    if ckpt.task != Task::Semi {
        return Err(usage(anyhow::anyhow!("eval needs a classifier checkpoint")));
    }
    let bundle = load(&a.data)?;
    let op = build_operator(ckpt.kind, &bundle.graphs, ckpt.alpha, ckpt.variant, &a.solver)?;
    let net = Network::new(&op, bundle.features.view(), ckpt.head_diffusion).context("preparing network")?;
    let (probs, _) = net.forward_semi(&ckpt.params, None).context("forward pass")?;
    let mask = match a.mask {
        MaskName::Train => &bundle.train,
        MaskName::Val => &bundle.val,
        MaskName::Test => &bundle.test,
    };
    let acc = evaluate_accuracy(&probs, &bundle.labels, mask).context("scoring")?;
    emit(out, format!("accuracy={acc}"))?;
    Ok(())
}

fn cmd_diffuse(a: DiffuseArgs, out: &mut dyn std::io::Write) -> Result<(), Failure> {
    a.op.validate().map_err(usage)?;
    check_solver(&a.solver)?;
    let bundle = load(&a.data)?;
    let op = build_operator(a.op.kind, &bundle.graphs, a.op.alpha(), a.op.variant, &a.solver)?;
    let z = op.diffuse(bundle.features.view()).context("diffusing features")?;
    fs::write(&a.out, features_tsv(&z)).with_context(|| format!("writing {}", a.out.display()))?;
    emit(out, format!("rows={} cols={} out={}", z.nrows(), z.ncols(), a.out.display()))?;
    Ok(())
}

fn cmd_train_gae(a: TrainGaeArgs, out: &mut dyn std::io::Write) -> Result<(), Failure> {
    a.op.validate().map_err(usage)?;
    check_solver(&a.solver)?;
    check_hidden(&a.hidden)?;
    if a.hidden.is_empty() {
        return Err(usage(anyhow::anyhow!("--hidden needs at least one width")));
    }
    if !(a.val_frac >= 0.0 && a.test_frac > 0.0 && a.val_frac + a.test_frac < 1.0) {
        return Err(usage(anyhow::anyhow!(
            "--val-frac and --test-frac must be non-negative, test positive, sum below 1"
        )));
    }
    let seeds = seeds(&a.optim)?;
    let configs = seeds
        .iter()
        .map(|&s| train_config(&a.optim, a.weight_decay, a.dropout, s))
        .collect::<Result<Vec<_>, _>>()?;
    let bundle = load(&a.data)?;
    if bundle.n() > a.gae_cap {
        return Err(Failure::Runtime(anyhow::anyhow!(
            "{} nodes exceed the auto-encoder cap of {} (--gae-cap)",
            bundle.n(),
            a.gae_cap
        )));
    }
    let graph = match operator_graphs(a.op.kind, &bundle.graphs)?.as_slice() {
        [g] => g.clone(),
        _ => Graph::sum(&bundle.graphs)?,
    };
    let arch = Architecture {
        hidden: a.hidden.clone(),
        head_diffusion: false,
    };
    let mut aucs = Vec::with_capacity(seeds.len());
    for (i, cfg) in configs.iter().enumerate() {
        let split = split_edges(&graph, a.val_frac, a.test_frac, cfg.seed).context("splitting edges")?;
        let train_graph = repair(&split.train_graph()?, a.data.self_loops)?;
        let op = build_operator(a.op.kind, &[train_graph], a.op.alpha(), a.op.variant, &a.solver)?;
        let (params, history) = train_gae(&bundle, &op, &arch, cfg, &split).context("training")?;
        let auc = history.test_metric.expect("test fraction is positive");
        if i == 0 {
            let ckpt = Checkpoint {
                task: Task::Gae,
                params,
                kind: a.op.kind,
                alpha: a.op.alpha(),
                variant: a.op.variant,
                head_diffusion: false,
            };
            save_checkpoint(&ckpt, &a.checkpoint)
                .with_context(|| format!("writing {}", a.checkpoint.display()))?;
            history
                .write_metrics(&a.metrics)
                .with_context(|| format!("writing {}", a.metrics.display()))?;
        }
        if seeds.len() > 1 {
            emit(out, format!("seed={} best_epoch={} test_auc={auc}", cfg.seed, history.best_epoch))?;
        }
        aucs.push(auc);
    }
    let (mean, std) = mean_std(&aucs);
    emit(out, format!("test_auc={mean}"))?;
    if seeds.len() > 1 {
        emit(out, format!("test_auc_std={std}"))?;
    }
    Ok(())
}

fn cmd_export(a: ExportArgs, out: &mut dyn std::io::Write) -> Result<(), Failure> {
    check_solver(&a.solver)?;
    let ckpt = load_checkpoint(&a.checkpoint)
        .with_context(|| format!("reading checkpoint {}", a.checkpoint.display()))?;
    let bundle = load(&a.data)?;
    let graphs = if ckpt.kind == DiffusionKind::MultiLaplacian || bundle.graphs.len() == 1 {
        bundle.graphs.clone()
    } else {
        vec![Graph::sum(&bundle.graphs)?]
    };
    let op = build_operator(ckpt.kind, &graphs, ckpt.alpha, ckpt.variant, &a.solver)?;
    let net = Network::new(&op, bundle.features.view(), ckpt.head_diffusion).context("preparing network")?;
    let z = match ckpt.task {
        Task::Semi => net.hidden_embedding(&ckpt.params),
        Task::Gae => net.embed(&ckpt.params),
    }
    .context("computing embedding")?;
    fs::write(&a.out, features_tsv(&z)).with_context(|| format!("writing {}", a.out.display()))?;
    emit(out, format!("rows={} cols={} out={}", z.nrows(), z.ncols(), a.out.display()))?;
    Ok(())
}
