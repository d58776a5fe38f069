//! Command-line interface. Exit codes: 0 success, 1 usage error, 2 data
//! error, 3 training failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bench::{emit_table, fit, grid_search_cv, run_experiment, Algorithm, ConfigFile, HyperParams, Settings, TableFormat};
use crate::bench::{default_depths, evaluate, MetricKind, DEFAULT_LAMBDAS};
use crate::cart::PruneRule;
use crate::dataset::{load_csv_and_schema, load_libsvm, parse_csv_with_schema, parse_libsvm, Dataset, TargetColumn, TaskKind};
use crate::error::{Error, Result};
use crate::tree::{deserialize, export_rules, serialize, Output, Tree};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_TRAINING: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "taotree", version, about = "Train and evaluate CART and TAO decision trees")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a tree and write a model file.
    Train(TrainArgs),
    /// Write one prediction per input row as CSV.
    Predict(PredictArgs),
    /// Print accuracy or RMSE and the tree size.
    Eval(EvalArgs),
    /// Print a model as IF-THEN rules or as its raw JSON.
    Inspect(InspectArgs),
    /// Run the experiments of a TOML config and write a results table.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Libsvm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgoArg {
    Cart,
    TaoAxis,
    TaoOblique,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Cart => Algorithm::Cart,
            AlgoArg::TaoAxis => Algorithm::TaoAxis,
            AlgoArg::TaoOblique => Algorithm::TaoOblique,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RuleArg {
    Min,
    OneSe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Classification,
    Regression,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input file.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub input: DataArgs,
    /// Target column name or 0-based index (CSV).
    #[arg(long)]
    pub target: Option<String>,
    /// CSV columns to one-hot encode (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub categorical: Vec<String>,
    #[arg(long, value_enum)]
    pub task: TaskArg,
    #[arg(long, value_enum, default_value_t = AlgoArg::Cart)]
    pub algo: AlgoArg,
    /// l1 weight for oblique splits; grid-searched when omitted.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Depth of the random initial oblique tree; grid-searched when omitted.
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long, default_value_t = 30)]
    pub iters: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    /// Cross-validation folds (pruning and grid search).
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, value_enum, default_value_t = RuleArg::OneSe)]
    pub rule: RuleArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub input: DataArgs,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub input: DataArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InspectFormat {
    Rules,
    Json,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value_t = InspectFormat::Rules)]
    pub format: InspectFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableArg {
    Csv,
    Markdown,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// TOML experiment file.
    #[arg(long)]
    pub config: PathBuf,
    /// Results table; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TableArg::Csv)]
    pub table: TableArg,
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidArgument(_) => EXIT_USAGE,
        Error::Training(_) => EXIT_TRAINING,
        Error::Io { .. }
        | Error::Parse { .. }
        | Error::MissingColumn(_)
        | Error::Empty(_)
        | Error::DimensionMismatch { .. }
        | Error::MalformedModel(_)
        | Error::UnsupportedVersion(_)
        | Error::Config(_) => EXIT_DATA,
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code. Messages go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return exit_code(&e);
    }
    let mut stdout = std::io::stdout().lock();
    match execute(cli.command, &mut stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Applies `DTREE_THREADS` (0 or unset = one worker per core).
fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("DTREE_THREADS") else { return Ok(()) };
    let n: usize = value
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("DTREE_THREADS must be a non-negative integer, got `{value}`")))?;
    // A pool may already exist when called twice in one process; keep it.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Runs a parsed command, writing normal output to `out`.
pub fn execute(command: Command, out: &mut dyn Write) -> Result<()> {
    match command {
        Command::Train(args) => train(args, out),
        Command::Predict(args) => predict(args, out),
        Command::Eval(args) => eval(args, out),
        Command::Inspect(args) => inspect(args, out),
        Command::Bench(args) => bench(args, out),
    }
}

fn write_out(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|source| Error::Io { path: PathBuf::from("<stdout>"), source })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn train(args: TrainArgs, out: &mut dyn Write) -> Result<()> {
    if args.iters < 1 {
        return Err(Error::invalid("--iters must be at least 1"));
    }
    if args.tol.is_nan() || args.tol < 0.0 {
        return Err(Error::invalid("--tol must be non-negative"));
    }
    if args.folds < 2 {
        return Err(Error::invalid("--folds must be at least 2"));
    }
    if let Some(l) = args.lambda {
        if !(l.is_finite() && l >= 0.0) {
            return Err(Error::invalid("--lambda must be a finite non-negative number"));
        }
    }
    if args.depth.is_some() && args.algo != AlgoArg::TaoOblique {
        return Err(Error::invalid("--depth only applies to tao-oblique"));
    }
    let task = match args.task {
        TaskArg::Classification => TaskKind::Classification,
        TaskArg::Regression => TaskKind::Regression,
    };
    let (data, schema) = match args.input.format {
        Format::Csv => {
            let target = args.target.as_deref().ok_or_else(|| Error::invalid("CSV input needs --target"))?;
            let (data, schema) = load_csv_and_schema(&args.input.data, &TargetColumn::from(target), task, &args.categorical)?;
            (data, Some(schema))
        }
        Format::Libsvm => (load_libsvm(&args.input.data, task)?, None),
    };

    let algorithm = Algorithm::from(args.algo);
    let settings = Settings { max_iters: args.iters, tol: args.tol, cart_folds: args.folds, ..Settings::default() };
    let rule = match args.rule {
        RuleArg::Min => PruneRule::Min,
        RuleArg::OneSe => PruneRule::OneSe,
    };
    let mut hp = HyperParams { rule: Some(rule), depth: args.depth, lambda: args.lambda };
    if algorithm == Algorithm::TaoOblique && (hp.depth.is_none() || hp.lambda.is_none()) {
        let depths = hp.depth.map_or_else(|| default_depths(data.n_rows()), |d| vec![d]);
        let lambdas = hp.lambda.map_or_else(|| DEFAULT_LAMBDAS.to_vec(), |l| vec![l]);
        let points: Vec<HyperParams> = depths
            .iter()
            .flat_map(|&d| lambdas.iter().map(move |&l| HyperParams { depth: Some(d), lambda: Some(l), rule: None }))
            .collect();
        let res = grid_search_cv(&data, algorithm, &points, &settings, args.folds, args.seed).map_err(as_training)?;
        hp = res.best;
    }
    let mut tree = fit(algorithm, &data, &hp, &settings, args.seed).map_err(as_training)?;
    tree.meta.schema = schema;
    write_file(&args.out, &serialize(&tree))?;
    write_out(
        out,
        &format!("trained {algorithm} ({hp}): depth {}, {} leaves\n", tree.depth(), tree.num_leaves()),
    )
}

fn as_training(e: Error) -> Error {
    match e {
        Error::Training(_) => e,
        other if exit_code(&other) == EXIT_DATA => other,
        other => Error::Training(other.to_string()),
    }
}

fn load_model(path: &Path) -> Result<Tree> {
    deserialize(&read_file(path)?)
}

/// Loads rows for a model. With `need_targets`, a CSV without the target
/// column is an error.
fn load_for_model(tree: &Tree, input: &DataArgs, need_targets: bool) -> Result<Dataset> {
    let data = match (input.format, &tree.meta.schema) {
        (Format::Csv, Some(schema)) => {
            let text = read_file(&input.data)?;
            if need_targets {
                let mut reader = csv::Reader::from_reader(text.as_bytes());
                let headers = reader.headers().map_err(|e| Error::parse(1, 1, e.to_string()))?;
                if !headers.iter().any(|h| h.trim() == schema.target) {
                    return Err(Error::MissingColumn(schema.target.clone()));
                }
            }
            parse_csv_with_schema(&text, schema)?
        }
        (Format::Csv, None) => {
            return Err(Error::invalid("this model was not trained on CSV data; pass --format libsvm"));
        }
        (Format::Libsvm, _) => parse_libsvm(&read_file(&input.data)?, tree.task().kind(), tree.n_features())?,
    };
    if data.n_features() != tree.n_features() {
        return Err(Error::DimensionMismatch { expected: tree.n_features(), got: data.n_features() });
    }
    if data.task().kind() != tree.task().kind() {
        return Err(Error::invalid("data task does not match the model"));
    }
    Ok(data)
}

fn predict(args: PredictArgs, out: &mut dyn Write) -> Result<()> {
    let tree = load_model(&args.model)?;
    let data = load_for_model(&tree, &args.input, false)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::invalid(format!("CSV output failed: {e}"));
    let dim = tree.task().dim();
    match tree.task().kind() {
        TaskKind::Regression if dim > 1 => {
            let header: Vec<String> = (1..=dim).map(|k| format!("prediction_{k}")).collect();
            w.write_record(&header).map_err(csv_err)?;
        }
        _ => w.write_record(["prediction"]).map_err(csv_err)?,
    }
    for x in data.rows() {
        let record: Vec<String> = match tree.predict(x)? {
            Output::Class(c) => vec![tree.meta.class_names.get(c - 1).cloned().unwrap_or_else(|| c.to_string())],
            Output::Values(v) => v.iter().map(|v| format!("{v:?}")).collect(),
        };
        w.write_record(&record).map_err(csv_err)?;
    }
    let text = String::from_utf8(w.into_inner().map_err(|e| Error::invalid(e.to_string()))?).expect("UTF-8");
    match &args.out {
        Some(path) => write_file(path, &text),
        None => write_out(out, &text),
    }
}

fn eval(args: EvalArgs, out: &mut dyn Write) -> Result<()> {
    let tree = load_model(&args.model)?;
    let data = load_for_model(&tree, &args.input, true)?;
    let metric = evaluate(&tree, &data)?;
    let line = match MetricKind::for_task(data.task().kind()) {
        MetricKind::Accuracy => format!("accuracy: {:.4}", metric / 100.0),
        MetricKind::Rmse => format!("rmse: {metric:.4}"),
    };
    write_out(out, &format!("{line}\ndepth: {}\nleaves: {}\n", tree.depth(), tree.num_leaves()))
}

fn inspect(args: InspectArgs, out: &mut dyn Write) -> Result<()> {
    let tree = load_model(&args.model)?;
    match args.format {
        InspectFormat::Rules => write_out(out, &export_rules(&tree)),
        InspectFormat::Json => write_out(out, &format!("{}\n", serialize(&tree))),
    }
}

fn bench(args: BenchArgs, out: &mut dyn Write) -> Result<()> {
    let config = ConfigFile::load(&args.config)?;
    let mut rows = Vec::new();
    for exp in &config.experiment {
        eprintln!("running {} / {} ({} repeats)", exp.dataset, exp.algorithm, exp.repeats);
        let row = run_experiment(exp).map_err(|e| match e {
            Error::Training(msg) => Error::Training(format!("{}: {msg}", exp.dataset)),
            other => other,
        })?;
        rows.push(row);
    }
    let format = match args.table {
        TableArg::Csv => TableFormat::Csv,
        TableArg::Markdown => TableFormat::Markdown,
    };
    // Classification and regression rows go to separate tables.
    let (cls, reg): (Vec<_>, Vec<_>) = rows.into_iter().partition(|r| r.metric == MetricKind::Accuracy);
    let mut text = String::new();
    for group in [cls, reg] {
        if group.is_empty() {
            continue;
        }
        if !text.is_empty() {
            text.push('\n');
        }
        text.push_str(&emit_table(&group, format)?);
    }
    match &args.out {
        Some(path) => write_file(path, &text),
        None => write_out(out, &text),
    }
}
