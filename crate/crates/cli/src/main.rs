//! `anchorboost` command-line tool.

mod commands;
mod config;
mod io;

use anchorboost::{Error, ErrorKind, Task};
use clap::{Args, Parser, Subcommand};
use config::{ModelKind, RunConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "anchorboost", version, about = "Anchor regression and anchor boosting")]
struct Cli {
    /// JSON run configuration; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (defaults to the available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for simulation, fold assignment and subsampling (default 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a linear or boosted anchor model.
    Train(TrainArgs),
    /// Score a data file with a model.
    Predict(PredictArgs),
    /// Evaluate a model on labelled data, overall and per environment.
    Evaluate(EvaluateArgs),
    /// Leave-one-environment-out selection of γ.
    Cv(CvArgs),
    /// Refit source models on target data.
    Refit(RefitArgs),
    /// Sample-size curves and regime transition points.
    Regimes(RegimesArgs),
    /// Draw a dataset from a linear anchor structural causal model.
    Simulate(SimulateArgs),
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    outcome: Option<String>,
    /// Anchor column(s); repeat or separate with commas.
    #[arg(long = "anchor", value_delimiter = ',')]
    anchors: Vec<String>,
    /// Sampling-unit column (e.g. patient id).
    #[arg(long)]
    group: Option<String>,
    #[arg(long, value_parser = parse_task)]
    task: Option<Task>,
    /// Read a numeric single anchor column as environment labels.
    #[arg(long)]
    discrete_anchor: bool,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, value_enum)]
    model: Option<ModelKind>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    num_trees: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    min_gain_to_split: Option<f64>,
    #[arg(long)]
    min_samples_leaf: Option<usize>,
    #[arg(long)]
    first_order: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Per-round training loss CSV (boosted models).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long = "model-file")]
    model_file: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long = "model-file")]
    model_file: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_parser = parse_metric)]
    metric: Option<anchorboost::selection::Metric>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct CvArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_delimiter = ',')]
    gamma_grid: Vec<f64>,
    /// Score table CSV.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RefitArgs {
    /// Source model file(s); repeat or separate with commas.
    #[arg(long = "source", value_delimiter = ',')]
    sources: Vec<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    /// Fixed decay rate for boosted sources (skips the grid search).
    #[arg(long)]
    decay_rate: Option<f64>,
    /// Fixed prior width for linear sources (skips the grid search).
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    dr_grid: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    alpha_grid: Vec<f64>,
    #[arg(long)]
    folds: Option<usize>,
    /// Cross-validation table CSV.
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct RegimesArgs {
    /// Read curve points from this CSV instead of computing them.
    #[arg(long)]
    curves: Option<PathBuf>,
    /// Target data to subsample.
    #[arg(long)]
    pool: Option<PathBuf>,
    /// Held-out target data for evaluation.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long = "source", value_delimiter = ',')]
    sources: Vec<PathBuf>,
    #[arg(long)]
    outcome: Option<String>,
    #[arg(long = "anchor", value_delimiter = ',')]
    anchors: Vec<String>,
    #[arg(long)]
    group: Option<String>,
    #[arg(long, value_parser = parse_task)]
    task: Option<Task>,
    #[arg(long)]
    discrete_anchor: bool,
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<usize>,
    /// Number of subsampling seeds.
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long, value_parser = parse_metric)]
    metric: Option<anchorboost::selection::Metric>,
    #[arg(long)]
    tolerance_fraction: Option<f64>,
    #[arg(long, conflicts_with = "tolerance_fraction")]
    tolerance_absolute: Option<f64>,
    /// Where to write the computed curve points.
    #[arg(long)]
    curves_out: Option<PathBuf>,
    /// Transition points JSON.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// SCM specification JSON (default: the built-in canonical model).
    #[arg(long)]
    scm: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    shift_scale: Option<f64>,
    #[arg(long)]
    stream: Option<u64>,
    #[arg(long, value_parser = parse_task)]
    task: Option<Task>,
    /// Put every row into one environment with this label.
    #[arg(long)]
    env_label: Option<String>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write the SCM specification used.
    #[arg(long)]
    scm_out: Option<PathBuf>,
}

fn parse_task(s: &str) -> Result<Task, String> {
    match s {
        "regression" => Ok(Task::Regression),
        "classification" => Ok(Task::Classification),
        _ => Err(format!("unknown task '{s}' (regression | classification)")),
    }
}

fn parse_metric(s: &str) -> Result<anchorboost::selection::Metric, String> {
    use anchorboost::selection::Metric;
    match s {
        "mse" => Ok(Metric::Mse),
        "nll" => Ok(Metric::Nll),
        "auprc" => Ok(Metric::Auprc),
        _ => Err(format!("unknown metric '{s}' (mse | nll | auprc)")),
    }
}

fn set<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

fn set_list<T>(slot: &mut Option<Vec<T>>, flag: Vec<T>) {
    if !flag.is_empty() {
        *slot = Some(flag);
    }
}

impl DataArgs {
    fn apply(self, c: &mut RunConfig) {
        set(&mut c.data, self.data);
        set(&mut c.outcome, self.outcome);
        set_list(&mut c.anchors, self.anchors);
        set(&mut c.group, self.group);
        set(&mut c.task, self.task);
        if self.discrete_anchor {
            c.discrete_anchor = Some(true);
        }
    }
}

impl ModelArgs {
    fn apply(self, c: &mut RunConfig) {
        set(&mut c.model, self.model);
        set(&mut c.gamma, self.gamma);
        set(&mut c.lambda, self.lambda);
        set(&mut c.eta, self.eta);
        let boost = c.boost.get_or_insert_with(Default::default);
        if let Some(v) = self.num_trees {
            boost.num_trees = v;
        }
        if let Some(v) = self.learning_rate {
            boost.learning_rate = v;
        }
        if let Some(v) = self.max_depth {
            boost.max_depth = v;
        }
        if let Some(v) = self.min_gain_to_split {
            boost.min_gain_to_split = v;
        }
        if let Some(v) = self.min_samples_leaf {
            boost.min_samples_leaf = v;
        }
        if self.first_order {
            boost.leaf_update = anchorboost::boosting::LeafUpdate::FirstOrder;
        }
    }
}

fn run(cli: Cli) -> anchorboost::Result<()> {
    let mut c = match &cli.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default(),
    };
    set(&mut c.threads, cli.threads);
    set(&mut c.seed, cli.seed);
    if let Some(t) = c.threads {
        if t == 0 {
            return Err(Error::Config("threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Train(a) => {
            a.data.apply(&mut c);
            a.model.apply(&mut c);
            set(&mut c.output, a.output);
            set(&mut c.log, a.log);
            commands::train(&c)
        }
        Command::Predict(a) => {
            set(&mut c.model_file, a.model_file);
            set(&mut c.data, a.data);
            set(&mut c.output, a.output);
            commands::predict(&c)
        }
        Command::Evaluate(a) => {
            set(&mut c.model_file, a.model_file);
            a.data.apply(&mut c);
            set(&mut c.metric, a.metric);
            set(&mut c.output, a.output);
            commands::evaluate(&c)
        }
        Command::Cv(a) => {
            a.data.apply(&mut c);
            a.model.apply(&mut c);
            if !a.gamma_grid.is_empty() {
                c.grid.get_or_insert_with(Default::default).gamma_grid = a.gamma_grid;
            }
            set(&mut c.output, a.output);
            commands::cv(&c)
        }
        Command::Refit(a) => {
            set_list(&mut c.sources, a.sources);
            a.data.apply(&mut c);
            set(&mut c.decay_rate, a.decay_rate);
            set(&mut c.alpha, a.alpha);
            if !a.dr_grid.is_empty() {
                c.grid.get_or_insert_with(Default::default).dr_grid = a.dr_grid;
            }
            if !a.alpha_grid.is_empty() {
                c.grid.get_or_insert_with(Default::default).alpha_grid = a.alpha_grid;
            }
            set(&mut c.folds, a.folds);
            set(&mut c.table, a.table);
            set(&mut c.output, a.output);
            commands::refit(&c)
        }
        Command::Regimes(a) => {
            set(&mut c.curves, a.curves);
            set(&mut c.pool, a.pool);
            set(&mut c.test, a.test);
            set_list(&mut c.sources, a.sources);
            set(&mut c.outcome, a.outcome);
            set_list(&mut c.anchors, a.anchors);
            set(&mut c.group, a.group);
            set(&mut c.task, a.task);
            if a.discrete_anchor {
                c.discrete_anchor = Some(true);
            }
            set_list(&mut c.sizes, a.sizes);
            set(&mut c.seeds, a.seeds);
            set(&mut c.metric, a.metric);
            if let Some(f) = a.tolerance_fraction {
                c.tolerance = Some(anchorboost::regimes::Tolerance::BandFraction(f));
            }
            if let Some(t) = a.tolerance_absolute {
                c.tolerance = Some(anchorboost::regimes::Tolerance::Absolute(t));
            }
            set(&mut c.curves_out, a.curves_out);
            set(&mut c.output, a.output);
            commands::regimes(&c)
        }
        Command::Simulate(a) => {
            set(&mut c.scm, a.scm);
            set(&mut c.n, a.n);
            set(&mut c.shift_scale, a.shift_scale);
            set(&mut c.stream, a.stream);
            set(&mut c.task, a.task);
            set(&mut c.env_label, a.env_label);
            set(&mut c.output, a.output);
            set(&mut c.scm_out, a.scm_out);
            commands::simulate(&c)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numerical => 4,
            };
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            ExitCode::from(code)
        }
    }
}
