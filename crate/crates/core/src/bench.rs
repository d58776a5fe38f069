//! Experiment protocol: repeated train/test splits, k-fold grid search on
//! each training split, metrics and result tables.
//!
//! Experiments are described in TOML. Paths are relative to the config
//! file's directory.
//!
//! ```toml
//! [[experiment]]
//! dataset = "iris"
//! path = "../data/iris.csv"
//! target = "species"
//! task = "classification"
//! algorithm = "tao_axis"        # cart | tao_axis | tao_oblique
//! repeats = 10                  # default 10
//! folds = 10                    # default 10
//! seed = 0
//! test_fraction = 0.2           # default 0.2; ignored with test_path
//!
//! [experiment.grid]             # every key optional
//! depth = [2, 3, 4]             # tao_oblique; default 2..=log2(N/10)
//! lambda = [0.001, 0.01]        # tao_oblique; default 1e-4..1 per decade
//! rule = ["one_se"]             # cart and tao_axis pruning rule
//!
//! [experiment.settings]         # every key optional
//! max_iters = 30
//! tol = 1e-5
//! cart_folds = 10
//! ```
//!
//! Other source keys: `format` (`csv` or `libsvm`), `categorical` (CSV
//! columns to one-hot encode) and `test_path` (a fixed test file).

use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cart::{prune_select, CartParams, PruneRule};
use crate::dataset::{
    load_csv_and_schema, load_csv_with_schema, load_libsvm, parse_libsvm, split_indices, stratified_kfold, Dataset,
    SplitSpec, TargetColumn, TargetRef, TaskKind,
};
use crate::error::{Error, Result};
use crate::solver::LogisticOptions;
use crate::tao::{tao_fit, Mode, TaoParams};
use crate::tree::{complete_tree, NodeKind, Output, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Cart,
    TaoAxis,
    TaoOblique,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Cart => "cart",
            Algorithm::TaoAxis => "tao-axis",
            Algorithm::TaoOblique => "tao-oblique",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cart" => Ok(Algorithm::Cart),
            "tao-axis" | "tao_axis" => Ok(Algorithm::TaoAxis),
            "tao-oblique" | "tao_oblique" => Ok(Algorithm::TaoOblique),
            other => Err(Error::invalid(format!(
                "unknown algorithm `{other}` (expected cart, tao-axis or tao-oblique)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    #[default]
    Csv,
    Libsvm,
}

/// Values to try for each hyperparameter. Empty lists fall back to the
/// algorithm's defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub depth: Vec<usize>,
    pub lambda: Vec<f64>,
    pub rule: Vec<PruneRule>,
}

/// Settings that are fixed rather than searched.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub max_iters: usize,
    pub tol: f64,
    /// Folds of the CV inside CART pruning (also for the TAO-axis init).
    pub cart_folds: usize,
    pub solver_tol: f64,
    pub solver_max_sweeps: usize,
    pub solver_rel_tol: f64,
    /// Random inits tried by `tao_oblique` when a fit collapses to a tree
    /// predicting a single output.
    pub restarts: usize,
}

impl Default for Settings {
    fn default() -> Self {
        let solver = TaoParams::new(TaskKind::Classification).solver;
        Settings {
            max_iters: 30,
            tol: 1e-5,
            cart_folds: 10,
            solver_tol: solver.tol,
            solver_max_sweeps: solver.max_sweeps,
            solver_rel_tol: solver.rel_objective_tol,
            restarts: 5,
        }
    }
}

impl Settings {
    pub fn tao_params(&self, task: TaskKind, lambda: f64) -> TaoParams {
        TaoParams {
            max_iters: self.max_iters,
            tol: self.tol,
            solver: LogisticOptions {
                tol: self.solver_tol,
                max_sweeps: self.solver_max_sweeps,
                rel_objective_tol: self.solver_rel_tol,
            },
            ..TaoParams::new(task).with_lambda(lambda)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub path: PathBuf,
    #[serde(default)]
    pub format: DataFormat,
    /// CSV target column (name or 0-based index); unused for LIBSVM.
    #[serde(default)]
    pub target: Option<String>,
    #[serde(default)]
    pub categorical: Vec<String>,
    pub task: TaskKind,
    #[serde(default)]
    pub test_path: Option<PathBuf>,
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub grid: Grid,
    #[serde(default)]
    pub settings: Settings,
    #[serde(default = "default_ten")]
    pub repeats: usize,
    #[serde(default = "default_ten")]
    pub folds: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_ten() -> usize {
    10
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repeats < 1 {
            return Err(Error::Config(format!("{}: repeats must be at least 1", self.dataset)));
        }
        if self.folds < 2 || self.settings.cart_folds < 2 {
            return Err(Error::Config(format!("{}: folds must be at least 2", self.dataset)));
        }
        if self.settings.max_iters < 1 {
            return Err(Error::Config(format!("{}: max_iters must be at least 1", self.dataset)));
        }
        if self.test_path.is_none() && !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!("{}: test_fraction must be in (0, 1)", self.dataset)));
        }
        if self.grid.lambda.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::Config(format!("{}: lambda values must be finite and non-negative", self.dataset)));
        }
        if self.format == DataFormat::Csv && self.target.is_none() {
            return Err(Error::Config(format!("{}: CSV sources need a `target` column", self.dataset)));
        }
        Ok(())
    }

    /// Resolves relative paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        if self.path.is_relative() {
            self.path = base.join(&self.path);
        }
        if let Some(p) = &self.test_path {
            if p.is_relative() {
                self.test_path = Some(base.join(p));
            }
        }
    }

    /// Loads the training source and, if configured, the fixed test set.
    pub fn load(&self) -> Result<(Dataset, Option<Dataset>)> {
        match self.format {
            DataFormat::Csv => {
                let target = TargetColumn::from(self.target.as_deref().unwrap_or_default());
                let (data, schema) = load_csv_and_schema(&self.path, &target, self.task, &self.categorical)?;
                let test = self.test_path.as_ref().map(|p| load_csv_with_schema(p, &schema)).transpose()?;
                Ok((data, test))
            }
            DataFormat::Libsvm => {
                let data = load_libsvm(&self.path, self.task)?;
                let test = match &self.test_path {
                    Some(p) => {
                        let text = std::fs::read_to_string(p).map_err(|source| Error::Io { path: p.clone(), source })?;
                        let test = parse_libsvm(&text, self.task, data.n_features())?;
                        if test.n_features() != data.n_features() {
                            return Err(Error::DimensionMismatch { expected: data.n_features(), got: test.n_features() });
                        }
                        Some(test)
                    }
                    None => None,
                };
                Ok((data, test))
            }
        }
    }
}

/// A TOML file with one or more `[[experiment]]` tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Vec<ExperimentConfig>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<ConfigFile> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for e in &file.experiment {
            e.validate()?;
        }
        Ok(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ConfigFile> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        let mut file = ConfigFile::parse(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        for e in &mut file.experiment {
            e.resolve_paths(base);
        }
        Ok(file)
    }
}

/// One point of a hyperparameter grid.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct HyperParams {
    pub depth: Option<usize>,
    pub lambda: Option<f64>,
    pub rule: Option<PruneRule>,
}

impl fmt::Display for HyperParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts = Vec::new();
        if let Some(d) = self.depth {
            parts.push(format!("depth={d}"));
        }
        if let Some(l) = self.lambda {
            parts.push(format!("lambda={l}"));
        }
        if let Some(r) = self.rule {
            parts.push(format!("rule={}", if r == PruneRule::Min { "min" } else { "one-se" }));
        }
        if parts.is_empty() {
            f.write_str("default")
        } else {
            f.write_str(&parts.join(" "))
        }
    }
}

pub const DEFAULT_LAMBDAS: [f64; 5] = [1e-4, 1e-3, 1e-2, 0.1, 1.0];

/// Initial depths `2..=D` with `D` the largest depth whose leaf count
/// `2^D` does not exceed `n / 10` (at least 2, at most 10).
pub fn default_depths(n: usize) -> Vec<usize> {
    let mut top = 2;
    while top < 10 && (1usize << (top + 1)) <= n / 10 {
        top += 1;
    }
    (2..=top).collect()
}

/// Grid points in order: depth outermost, then lambda, then rule.
pub fn expand_grid(grid: &Grid, algorithm: Algorithm, n_train: usize) -> Vec<HyperParams> {
    let mut points = Vec::new();
    match algorithm {
        Algorithm::TaoOblique => {
            let depths = if grid.depth.is_empty() { default_depths(n_train) } else { grid.depth.clone() };
            let lambdas = if grid.lambda.is_empty() { DEFAULT_LAMBDAS.to_vec() } else { grid.lambda.clone() };
            for &d in &depths {
                for &l in &lambdas {
                    points.push(HyperParams { depth: Some(d), lambda: Some(l), rule: None });
                }
            }
        }
        Algorithm::Cart | Algorithm::TaoAxis => {
            let rules = if grid.rule.is_empty() { vec![PruneRule::OneSe] } else { grid.rule.clone() };
            for r in rules {
                points.push(HyperParams { rule: Some(r), ..Default::default() });
            }
        }
    }
    points
}

/// Trains one model with fixed hyperparameters.
///
/// * `cart`: fully grown tree pruned by cross-validated cost-complexity.
/// * `tao_axis`: the `cart` tree refined by axis-aligned TAO.
/// * `tao_oblique`: a random complete oblique tree of the given depth
///   refined by oblique TAO with l1 weight `lambda`.
pub fn fit(algorithm: Algorithm, train: &Dataset, hp: &HyperParams, settings: &Settings, seed: u64) -> Result<Tree> {
    let task = train.task().kind();
    let rule = hp.rule.unwrap_or_default();
    let tree = match algorithm {
        Algorithm::Cart => prune_select(train, &CartParams::default(), settings.cart_folds, rule, seed)?.tree,
        Algorithm::TaoAxis => {
            let init = prune_select(train, &CartParams::default(), settings.cart_folds, rule, seed)?.tree;
            tao_fit(&init, train, &settings.tao_params(task, 0.0), Mode::Axis)?.0
        }
        Algorithm::TaoOblique => {
            let depth = hp.depth.ok_or_else(|| Error::invalid("tao-oblique needs an initial depth"))?;
            let lambda = hp.lambda.ok_or_else(|| Error::invalid("tao-oblique needs lambda"))?;
            fit_oblique(train, depth, &settings.tao_params(task, lambda), settings.restarts, seed)?
        }
    };
    let mut tree = tree;
    tree.meta.class_names = train.class_names().to_vec();
    Ok(tree)
}

const RESTART_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

/// Oblique TAO from random complete trees. Stops at the first fit whose
/// leaves do not all share one output; otherwise keeps the lowest
/// objective among `restarts` attempts.
fn fit_oblique(train: &Dataset, depth: usize, params: &TaoParams, restarts: usize, seed: u64) -> Result<Tree> {
    let mut best: Option<(f64, Tree)> = None;
    for r in 0..restarts.max(1) as u64 {
        let init = complete_tree(depth, train.n_features(), train.task(), seed.wrapping_add(r.wrapping_mul(RESTART_STRIDE)))?;
        let (tree, trace) = tao_fit(&init, train, params, Mode::Oblique)?;
        let value = trace.iterations.last().unwrap_or(&trace.initial).objective;
        let collapsed = is_constant(&tree);
        if best.as_ref().is_none_or(|(b, _)| value < *b) {
            best = Some((value, tree));
        }
        if !collapsed {
            break;
        }
    }
    Ok(best.expect("at least one attempt").1)
}

fn is_constant(tree: &Tree) -> bool {
    let mut outputs = tree.nodes().iter().filter_map(|n| match &n.kind {
        NodeKind::Leaf(o) => Some(o),
        _ => None,
    });
    let first = outputs.next();
    outputs.all(|o| Some(o) == first)
}

/// Fraction of exact matches.
pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: labels.len(), got: predictions.len() });
    }
    if labels.is_empty() {
        return Err(Error::Empty("accuracy of zero predictions".into()));
    }
    let hits = predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// `sqrt(1/(N K) * sum_n ||y_n - yhat_n||^2)` over flat row-major arrays
/// of `N` rows with `k` outputs each.
pub fn rmse(predictions: &[f64], targets: &[f64], k: usize) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::DimensionMismatch { expected: targets.len(), got: predictions.len() });
    }
    if k == 0 || !targets.len().is_multiple_of(k) {
        return Err(Error::invalid(format!("{} values do not split into rows of {k}", targets.len())));
    }
    if targets.is_empty() {
        return Err(Error::Empty("RMSE of zero predictions".into()));
    }
    let sse: f64 = predictions.iter().zip(targets).map(|(p, y)| (p - y) * (p - y)).sum();
    Ok((sse / targets.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    /// Accuracy in percent.
    Accuracy,
    Rmse,
}

impl MetricKind {
    pub fn for_task(task: TaskKind) -> MetricKind {
        match task {
            TaskKind::Classification => MetricKind::Accuracy,
            TaskKind::Regression => MetricKind::Rmse,
        }
    }

    /// True when `a` is strictly better than `b`.
    pub fn better(self, a: f64, b: f64) -> bool {
        match self {
            MetricKind::Accuracy => a > b,
            MetricKind::Rmse => a < b,
        }
    }
}

/// Accuracy (in percent) or RMSE of `tree` on `data`.
pub fn evaluate(tree: &Tree, data: &Dataset) -> Result<f64> {
    let outputs = tree.predict_all(data)?;
    match data.task().kind() {
        TaskKind::Classification => {
            let pred: Vec<usize> = outputs.iter().map(|o| o.as_class().expect("classification tree")).collect();
            let labels: Vec<usize> = (0..data.n_rows()).map(|i| data.class_of(i)).collect();
            Ok(100.0 * accuracy(&pred, &labels)?)
        }
        TaskKind::Regression => {
            let pred: Vec<f64> = outputs
                .into_iter()
                .flat_map(|o| match o {
                    Output::Values(v) => v,
                    Output::Class(_) => unreachable!("regression tree"),
                })
                .collect();
            let targets: Vec<f64> = (0..data.n_rows())
                .flat_map(|i| match data.target(i) {
                    TargetRef::Values(v) => v.to_vec(),
                    TargetRef::Class(_) => unreachable!("regression data"),
                })
                .collect();
            rmse(&pred, &targets, data.task().dim())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridScore {
    pub params: HyperParams,
    /// Mean validation metric over the folds.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub best: HyperParams,
    pub scores: Vec<GridScore>,
}

/// Scores every grid point by `folds`-fold CV on `train` and returns the
/// best (ties to the earliest point).
pub fn grid_search_cv(
    train: &Dataset,
    algorithm: Algorithm,
    points: &[HyperParams],
    settings: &Settings,
    folds: usize,
    seed: u64,
) -> Result<GridResult> {
    if points.is_empty() {
        return Err(Error::invalid("empty hyperparameter grid"));
    }
    let assignment = stratified_kfold(train, folds, seed)?;
    let splits: Vec<(Dataset, Dataset)> = (0..folds)
        .map(|f| {
            let (tr, va) = assignment.split(f);
            (train.subset(&tr), train.subset(&va))
        })
        .collect();
    let jobs: Vec<(usize, usize)> = (0..points.len()).flat_map(|p| (0..folds).map(move |f| (p, f))).collect();
    let metrics: Vec<f64> = jobs
        .par_iter()
        .map(|&(p, f)| {
            let (tr, va) = &splits[f];
            fit(algorithm, tr, &points[p], settings, seed)
                .and_then(|tree| evaluate(&tree, va))
                .map_err(|e| Error::Training(format!("grid point {} (fold {f}): {e}", points[p])))
        })
        .collect::<Result<_>>()?;
    let metric = MetricKind::for_task(train.task().kind());
    let scores: Vec<GridScore> = points
        .iter()
        .enumerate()
        .map(|(p, &params)| GridScore { params, score: metrics[p * folds..(p + 1) * folds].iter().sum::<f64>() / folds as f64 })
        .collect();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if metric.better(s.score, scores[best].score) {
            best = i;
        }
    }
    Ok(GridResult { best: scores[best].params, scores })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RepeatRecord {
    pub seed: u64,
    pub params: HyperParams,
    pub train_metric: f64,
    pub test_metric: f64,
    pub depth: usize,
    pub leaves: usize,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub dataset: String,
    pub algorithm: Algorithm,
    pub metric: MetricKind,
    pub train_mean: f64,
    pub train_std: f64,
    pub test_mean: f64,
    pub test_std: f64,
    pub depth: f64,
    pub leaves: f64,
    /// Most frequently chosen hyperparameters and how often.
    pub params: String,
    pub seconds_per_repeat: f64,
    pub repeats: Vec<RepeatRecord>,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Runs one repeat: split with `seed`, grid-search on the training part
/// (skipped for a single-point grid), refit on all of it and score both
/// parts.
pub fn run_repeat(config: &ExperimentConfig, data: &Dataset, fixed_test: Option<&Dataset>, seed: u64) -> Result<RepeatRecord> {
    let start = Instant::now();
    let (train, test) = match fixed_test {
        Some(test) => {
            let mut perm: Vec<usize> = (0..data.n_rows()).collect();
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut crate::dataset::seeded_rng(seed));
            (data.subset(&perm), test.clone())
        }
        None => {
            let (tr, te) = split_indices(data.n_rows(), SplitSpec::new(config.test_fraction, seed)?)?;
            (data.subset(&tr), data.subset(&te))
        }
    };
    let points = expand_grid(&config.grid, config.algorithm, train.n_rows());
    let chosen = match points.as_slice() {
        [only] => *only,
        _ => grid_search_cv(&train, config.algorithm, &points, &config.settings, config.folds, seed)?.best,
    };
    let tree = fit(config.algorithm, &train, &chosen, &config.settings, seed)?;
    Ok(RepeatRecord {
        seed,
        params: chosen,
        train_metric: evaluate(&tree, &train)?,
        test_metric: evaluate(&tree, &test)?,
        depth: tree.depth(),
        leaves: tree.num_leaves(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// All repeats of an experiment (seeds `seed`, `seed + 1`, ...) and their
/// aggregate.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultRow> {
    config.validate()?;
    let (data, test) = config.load()?;
    if data.task().kind() != config.task {
        return Err(Error::Config("loaded data does not match the configured task".into()));
    }
    let records: Vec<RepeatRecord> = (0..config.repeats)
        .into_par_iter()
        .map(|r| {
            let seed = config.seed.wrapping_add(r as u64);
            run_repeat(config, &data, test.as_ref(), seed).map_err(|e| match e {
                Error::Training(msg) => Error::Training(format!("repeat {r}: {msg}")),
                other => other,
            })
        })
        .collect::<Result<_>>()?;
    Ok(aggregate(config, records))
}

fn aggregate(config: &ExperimentConfig, records: Vec<RepeatRecord>) -> ResultRow {
    let col = |f: fn(&RepeatRecord) -> f64| -> Vec<f64> { records.iter().map(f).collect() };
    let (train_mean, train_std) = mean_std(&col(|r| r.train_metric));
    let (test_mean, test_std) = mean_std(&col(|r| r.test_metric));
    let mut counts: Vec<(String, usize)> = Vec::new();
    for r in &records {
        let key = r.params.to_string();
        match counts.iter_mut().find(|(k, _)| *k == key) {
            Some((_, c)) => *c += 1,
            None => counts.push((key, 1)),
        }
    }
    let (top, top_count) = counts.iter().fold(&counts[0], |best, c| if c.1 > best.1 { c } else { best });
    ResultRow {
        dataset: config.dataset.clone(),
        algorithm: config.algorithm,
        metric: MetricKind::for_task(config.task),
        train_mean,
        train_std,
        test_mean,
        test_std,
        depth: mean_std(&col(|r| r.depth as f64)).0,
        leaves: mean_std(&col(|r| r.leaves as f64)).0,
        params: format!("{top} ({top_count}/{})", records.len()),
        seconds_per_repeat: mean_std(&col(|r| r.seconds)).0,
        repeats: records,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Markdown,
}

impl FromStr for TableFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(TableFormat::Csv),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            other => Err(Error::invalid(format!("unknown table format `{other}` (expected csv or markdown)"))),
        }
    }
}

const CSV_HEADER: [&str; 10] =
    ["dataset", "algorithm", "train_mean", "train_std", "test_mean", "test_std", "depth", "leaves", "params", "seconds"];

/// Renders result rows; all rows must report the same metric.
pub fn emit_table(rows: &[ResultRow], format: TableFormat) -> Result<String> {
    if rows.windows(2).any(|w| w[0].metric != w[1].metric) {
        return Err(Error::invalid("a table cannot mix accuracy and RMSE rows"));
    }
    let digits = match rows.first().map(|r| r.metric) {
        Some(MetricKind::Rmse) => 3,
        _ => 2,
    };
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            let io = |e: csv::Error| Error::invalid(format!("CSV output failed: {e}"));
            w.write_record(CSV_HEADER).map_err(io)?;
            for r in rows {
                w.write_record([
                    r.dataset.clone(),
                    r.algorithm.to_string(),
                    format!("{:.*}", digits + 2, r.train_mean),
                    format!("{:.*}", digits + 2, r.train_std),
                    format!("{:.*}", digits + 2, r.test_mean),
                    format!("{:.*}", digits + 2, r.test_std),
                    format!("{:.2}", r.depth),
                    format!("{:.2}", r.leaves),
                    r.params.clone(),
                    format!("{:.3}", r.seconds_per_repeat),
                ])
                .map_err(io)?;
            }
            let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
            Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
        }
        TableFormat::Markdown => {
            let (train, test) = match rows.first().map(|r| r.metric) {
                Some(MetricKind::Rmse) => ("train RMSE", "test RMSE"),
                _ => ("train acc (%)", "test acc (%)"),
            };
            let mut out = String::new();
            writeln!(out, "| dataset | algorithm | {train} | {test} | depth | leaves | params | time (s) |").unwrap();
            writeln!(out, "|---|---|---|---|---|---|---|---|").unwrap();
            for r in rows {
                writeln!(
                    out,
                    "| {} | {} | {:.*}±{:.*} | {:.*}±{:.*} | {:.1} | {:.1} | {} | {:.2} |",
                    r.dataset,
                    r.algorithm,
                    digits,
                    r.train_mean,
                    digits,
                    r.train_std,
                    digits,
                    r.test_mean,
                    digits,
                    r.test_std,
                    r.depth,
                    r.leaves,
                    r.params.replace('|', "\\|"),
                    r.seconds_per_repeat
                )
                .unwrap();
            }
            Ok(out)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Targets, Task};

    #[test]
    fn accuracy_and_rmse() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert!((accuracy(&[1, 2, 1], &[1, 1, 1]).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(accuracy(&[1], &[1, 2]).is_err());
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0], 1).unwrap(), 0.0);
        assert_eq!(rmse(&[1.0, -1.0], &[0.0, 0.0], 1).unwrap(), 1.0);
        assert!(rmse(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 2).is_err());
        // N = 2, K = 2: sqrt((1 + 4 + 0 + 9) / 4)
        assert!((rmse(&[1.0, 2.0, 0.0, 3.0], &[0.0; 4], 2).unwrap() - (14.0f64 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn sample_std() {
        assert_eq!(mean_std(&[3.0]), (3.0, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn depth_grid() {
        assert_eq!(default_depths(10), vec![2]);
        assert_eq!(default_depths(120), vec![2, 3]);
        assert_eq!(default_depths(546), vec![2, 3, 4, 5]);
        assert_eq!(default_depths(1_000_000), (2..=10).collect::<Vec<_>>());
    }

    #[test]
    fn grid_order() {
        let g = Grid { depth: vec![2, 3], lambda: vec![0.1, 1.0], rule: vec![] };
        let pts = expand_grid(&g, Algorithm::TaoOblique, 100);
        let shown: Vec<String> = pts.iter().map(|p| p.to_string()).collect();
        assert_eq!(shown, ["depth=2 lambda=0.1", "depth=2 lambda=1", "depth=3 lambda=0.1", "depth=3 lambda=1"]);
        assert_eq!(expand_grid(&Grid::default(), Algorithm::Cart, 100).len(), 1);
    }

    #[test]
    fn config_parsing() {
        let text = r#"
            [[experiment]]
            dataset = "toy"
            path = "toy.csv"
            target = "y"
            task = "classification"
            algorithm = "tao_oblique"
            repeats = 2
            [experiment.grid]
            lambda = [0.01]
            [experiment.settings]
            max_iters = 5
        "#;
        let cfg = ConfigFile::parse(text).unwrap();
        let e = &cfg.experiment[0];
        assert_eq!((e.repeats, e.folds, e.settings.max_iters), (2, 10, 5));
        assert_eq!(e.test_fraction, 0.2);
        assert!(ConfigFile::parse(&text.replace("repeats = 2", "repeats = 0")).is_err());
        assert!(ConfigFile::parse(&text.replace("repeats = 2", "bogus = 1")).is_err());
    }

    #[test]
    fn huge_lambda_loses_grid_search() {
        let x: Vec<f64> = (0..60).flat_map(|i| [i as f64 / 60.0, ((i * 7) % 60) as f64 / 60.0]).collect();
        let y: Vec<usize> = (0..60).map(|i| if i < 30 { 1 } else { 2 }).collect();
        let data = Dataset::new(x, 2, Targets::Classes(y), Task::Classification { classes: 2 }).unwrap();
        let points = [
            HyperParams { depth: Some(2), lambda: Some(0.001), rule: None },
            HyperParams { depth: Some(2), lambda: Some(1000.0), rule: None },
        ];
        let res = grid_search_cv(&data, Algorithm::TaoOblique, &points, &Settings::default(), 3, 0).unwrap();
        assert_eq!(res.best.lambda, Some(0.001));
        assert!(res.scores[0].score > res.scores[1].score);
    }

    fn row(name: &str, metric: MetricKind) -> ResultRow {
        ResultRow {
            dataset: name.into(),
            algorithm: Algorithm::TaoAxis,
            metric,
            train_mean: 97.5,
            train_std: 0.6251,
            test_mean: 95.4125,
            test_std: 3.81,
            depth: 3.2,
            leaves: 5.5,
            params: "rule=one-se (10/10)".into(),
            seconds_per_repeat: 0.1251,
            repeats: vec![],
        }
    }

    #[test]
    fn table_shapes() {
        let csv = emit_table(&[], TableFormat::Csv).unwrap();
        assert_eq!(csv.lines().count(), 1);
        let csv = emit_table(&[row("iris", MetricKind::Accuracy)], TableFormat::Csv).unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert!(emit_table(&[row("a", MetricKind::Accuracy), row("b", MetricKind::Rmse)], TableFormat::Csv).is_err());
    }

    #[test]
    fn markdown_golden() {
        let rows = [row("iris", MetricKind::Accuracy), row("balance-scale", MetricKind::Accuracy)];
        let md = emit_table(&rows, TableFormat::Markdown).unwrap();
        assert_eq!(md, include_str!("../tests/fixtures/table_golden.md"));
    }
}
