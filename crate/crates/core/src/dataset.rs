//! Tabular datasets: loading (CSV, LIBSVM), train/test splitting and k-fold
//! assignment.
//!
//! Features are stored densely in row-major order. Classification targets
//! are class indices in `1..=K`; regression targets are real vectors of
//! dimension `K`, stored flattened.
//!
//! All randomness (shuffling for splits and folds) goes through
//! [`seeded_rng`], a ChaCha8 generator seeded with `seed_from_u64`, so a
//! given seed yields the same partition on every platform.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The pseudorandom generator used everywhere a seed is accepted.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Classification,
    Regression,
}

/// Task kind together with its output dimension `K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Task {
    Classification { classes: usize },
    Regression { outputs: usize },
}

impl Task {
    pub fn kind(&self) -> TaskKind {
        match self {
            Task::Classification { .. } => TaskKind::Classification,
            Task::Regression { .. } => TaskKind::Regression,
        }
    }

    /// `K`: number of classes or regression output dimension.
    pub fn dim(&self) -> usize {
        match *self {
            Task::Classification { classes } => classes,
            Task::Regression { outputs } => outputs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    /// One class index in `1..=K` per row.
    Classes(Vec<usize>),
    /// Row-major `N x K` real targets.
    Values(Vec<f64>),
}

/// Borrowed view of one row's target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetRef<'a> {
    Class(usize),
    Values(&'a [f64]),
}

/// How one input column is turned into features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ColumnSpec {
    Numeric { name: String },
    /// One-hot encoded; one indicator feature per level, in level order.
    Categorical { name: String, levels: Vec<String> },
}

impl ColumnSpec {
    pub fn name(&self) -> &str {
        match self {
            ColumnSpec::Numeric { name } | ColumnSpec::Categorical { name, .. } => name,
        }
    }

    fn width(&self) -> usize {
        match self {
            ColumnSpec::Numeric { .. } => 1,
            ColumnSpec::Categorical { levels, .. } => levels.len(),
        }
    }
}

/// The encoding learned while loading a CSV file. Stored in model files so
/// that prediction inputs are encoded exactly like the training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub target: String,
    pub task: TaskKind,
    pub columns: Vec<ColumnSpec>,
    /// Original class labels; `class_names[k - 1]` is the label of class `k`.
    #[serde(default)]
    pub class_names: Vec<String>,
}

impl CsvSchema {
    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for col in &self.columns {
            match col {
                ColumnSpec::Numeric { name } => names.push(name.clone()),
                ColumnSpec::Categorical { name, levels } => {
                    names.extend(levels.iter().map(|l| format!("{name}={l}")))
                }
            }
        }
        names
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_rows: usize,
    n_features: usize,
    targets: Targets,
    task: Task,
    feature_names: Vec<String>,
    class_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from row-major features and targets, checking every
    /// invariant (shape, label range, finiteness).
    pub fn new(features: Vec<f64>, n_features: usize, targets: Targets, task: Task) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::invalid("dataset needs at least one feature"));
        }
        if !features.len().is_multiple_of(n_features) {
            return Err(Error::invalid(format!(
                "feature buffer of length {} is not a multiple of D = {n_features}",
                features.len()
            )));
        }
        let n_rows = features.len() / n_features;
        if n_rows == 0 {
            return Err(Error::Empty("dataset has no rows".into()));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite feature value at row {}, feature {}",
                pos / n_features,
                pos % n_features
            )));
        }
        match (&targets, task) {
            (Targets::Classes(labels), Task::Classification { classes }) => {
                if classes == 0 {
                    return Err(Error::invalid("classification task needs K >= 1"));
                }
                if labels.len() != n_rows {
                    return Err(Error::DimensionMismatch { expected: n_rows, got: labels.len() });
                }
                if let Some(bad) = labels.iter().find(|&&c| c == 0 || c > classes) {
                    return Err(Error::invalid(format!("class label {bad} outside 1..={classes}")));
                }
            }
            (Targets::Values(values), Task::Regression { outputs }) => {
                if outputs == 0 {
                    return Err(Error::invalid("regression task needs K >= 1"));
                }
                if values.len() != n_rows * outputs {
                    return Err(Error::DimensionMismatch {
                        expected: n_rows * outputs,
                        got: values.len(),
                    });
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("non-finite regression target"));
                }
            }
            _ => return Err(Error::invalid("targets do not match the task kind")),
        }
        let feature_names = (0..n_features).map(|j| format!("x{j}")).collect();
        Ok(Dataset {
            features,
            n_rows,
            n_features,
            targets,
            task,
            feature_names,
            class_names: Vec::new(),
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, got: names.len() });
        }
        self.feature_names = names;
        Ok(self)
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Self {
        self.class_names = names;
        self
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.features.chunks_exact(self.n_features)
    }

    #[inline]
    pub fn target(&self, i: usize) -> TargetRef<'_> {
        match &self.targets {
            Targets::Classes(labels) => TargetRef::Class(labels[i]),
            Targets::Values(values) => {
                let k = self.task.dim();
                TargetRef::Values(&values[i * k..(i + 1) * k])
            }
        }
    }

    /// Class index of row `i`; panics on regression data.
    pub fn class_of(&self, i: usize) -> usize {
        match &self.targets {
            Targets::Classes(labels) => labels[i],
            Targets::Values(_) => panic!("class_of called on a regression dataset"),
        }
    }

    /// New dataset made of the given rows, in the given order. Metadata
    /// (task, names) is carried over unchanged.
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let d = self.n_features;
        let mut features = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            features.extend_from_slice(self.row(r));
        }
        let targets = match &self.targets {
            Targets::Classes(labels) => Targets::Classes(rows.iter().map(|&r| labels[r]).collect()),
            Targets::Values(values) => {
                let k = self.task.dim();
                let mut out = Vec::with_capacity(rows.len() * k);
                for &r in rows {
                    out.extend_from_slice(&values[r * k..(r + 1) * k]);
                }
                Targets::Values(out)
            }
        };
        Dataset {
            features,
            n_rows: rows.len(),
            n_features: d,
            targets,
            task: self.task,
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
        }
    }

    /// Stacks two datasets with the same columns and task.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.n_features != other.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, got: other.n_features });
        }
        if self.task.kind() != other.task.kind() {
            return Err(Error::invalid("cannot concatenate datasets of different task kinds"));
        }
        let mut features = self.features.clone();
        features.extend_from_slice(&other.features);
        let (targets, task) = match (&self.targets, &other.targets) {
            (Targets::Classes(a), Targets::Classes(b)) => {
                let classes = self.task.dim().max(other.task.dim());
                (Targets::Classes(a.iter().chain(b).copied().collect()), Task::Classification { classes })
            }
            (Targets::Values(a), Targets::Values(b)) => {
                if self.task.dim() != other.task.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: self.task.dim(),
                        got: other.task.dim(),
                    });
                }
                (Targets::Values(a.iter().chain(b).copied().collect()), self.task)
            }
            _ => unreachable!("task kinds checked above"),
        };
        Ok(Dataset {
            features,
            n_rows: self.n_rows + other.n_rows,
            n_features: self.n_features,
            targets,
            task,
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
        })
    }
}

/// Which CSV column holds the target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetColumn {
    Name(String),
    Index(usize),
}

impl From<&str> for TargetColumn {
    /// A name, or a 0-based index when the string is all digits.
    fn from(s: &str) -> Self {
        match s.parse::<usize>() {
            Ok(i) => TargetColumn::Index(i),
            Err(_) => TargetColumn::Name(s.to_string()),
        }
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn parse_real(cell: &str, row: usize, column: usize) -> Result<f64> {
    let trimmed = cell.trim();
    if trimmed.is_empty() {
        return Err(Error::parse(row, column, "missing value"));
    }
    match trimmed.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(Error::parse(row, column, format!("non-finite value `{trimmed}`"))),
        Err(_) => Err(Error::parse(row, column, format!("cannot parse `{trimmed}` as a number"))),
    }
}

struct CsvTable {
    header: Vec<String>,
    records: Vec<csv::StringRecord>,
}

fn read_csv_table(text: &str) -> Result<CsvTable> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::parse(1, 1, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::Empty("CSV file has no header row".into()));
    }
    let mut records = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(i + 2, 1, e.to_string()))?;
        if rec.len() != header.len() {
            return Err(Error::parse(
                i + 2,
                rec.len().min(header.len()) + 1,
                format!("expected {} fields, found {}", header.len(), rec.len()),
            ));
        }
        records.push(rec);
    }
    Ok(CsvTable { header, records })
}

/// Loads a CSV file with a header row.
///
/// Columns listed in `categorical` are one-hot encoded with levels in order
/// of first appearance; every other non-target column must be numeric.
/// Class labels are numbered `1..=K` in order of first appearance. Missing
/// values are parse errors.
pub fn load_csv(
    path: impl AsRef<Path>,
    target: &TargetColumn,
    task: TaskKind,
    categorical: &[String],
) -> Result<Dataset> {
    let text = read_to_string(path.as_ref())?;
    parse_csv(&text, target, task, categorical)
}

/// [`load_csv`] that also returns the learned encoding, for reuse on test
/// or prediction files.
pub fn load_csv_and_schema(
    path: impl AsRef<Path>,
    target: &TargetColumn,
    task: TaskKind,
    categorical: &[String],
) -> Result<(Dataset, CsvSchema)> {
    let text = read_to_string(path.as_ref())?;
    parse_csv_and_schema(&text, target, task, categorical)
}

/// [`load_csv`] on in-memory text.
pub fn parse_csv(text: &str, target: &TargetColumn, task: TaskKind, categorical: &[String]) -> Result<Dataset> {
    parse_csv_and_schema(text, target, task, categorical).map(|(data, _)| data)
}

pub fn parse_csv_and_schema(
    text: &str,
    target: &TargetColumn,
    task: TaskKind,
    categorical: &[String],
) -> Result<(Dataset, CsvSchema)> {
    let table = read_csv_table(text)?;
    let target_idx = match target {
        TargetColumn::Name(name) => table
            .header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.clone()))?,
        TargetColumn::Index(i) if *i < table.header.len() => *i,
        TargetColumn::Index(i) => return Err(Error::MissingColumn(format!("#{i}"))),
    };
    for c in categorical {
        if !table.header.contains(c) {
            return Err(Error::MissingColumn(c.clone()));
        }
    }
    if table.records.is_empty() {
        return Err(Error::Empty("CSV file has a header but no data rows".into()));
    }

    let mut columns = Vec::new();
    for (j, name) in table.header.iter().enumerate() {
        if j == target_idx {
            continue;
        }
        if categorical.contains(name) {
            let mut levels: Vec<String> = Vec::new();
            for rec in &table.records {
                let v = rec[j].trim();
                if !levels.iter().any(|l| l == v) {
                    levels.push(v.to_string());
                }
            }
            columns.push(ColumnSpec::Categorical { name: name.clone(), levels });
        } else {
            columns.push(ColumnSpec::Numeric { name: name.clone() });
        }
    }

    let mut class_names = Vec::new();
    if task == TaskKind::Classification {
        for rec in &table.records {
            let v = rec[target_idx].trim();
            if !class_names.iter().any(|c: &String| c == v) {
                class_names.push(v.to_string());
            }
        }
    }
    let schema = CsvSchema {
        target: table.header[target_idx].clone(),
        task,
        columns,
        class_names,
    };
    let data = encode_table(&table, &schema, true)?;
    Ok((data, schema))
}

/// Loads a CSV file using a previously learned encoding. The target column
/// may be absent, in which case every row gets a placeholder target
/// (class 1 or zeros) and only the features are meaningful.
pub fn load_csv_with_schema(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let text = read_to_string(path.as_ref())?;
    parse_csv_with_schema(&text, schema)
}

pub fn parse_csv_with_schema(text: &str, schema: &CsvSchema) -> Result<Dataset> {
    let table = read_csv_table(text)?;
    if table.records.is_empty() {
        return Err(Error::Empty("CSV file has a header but no data rows".into()));
    }
    let require_target = table.header.contains(&schema.target);
    encode_table(&table, schema, require_target)
}

fn encode_table(table: &CsvTable, schema: &CsvSchema, with_target: bool) -> Result<Dataset> {
    let lookup: HashMap<&str, usize> = table.header.iter().enumerate().map(|(i, h)| (h.as_str(), i)).collect();
    let mut col_idx = Vec::with_capacity(schema.columns.len());
    for col in &schema.columns {
        let idx = *lookup.get(col.name()).ok_or_else(|| Error::MissingColumn(col.name().to_string()))?;
        col_idx.push(idx);
    }
    let target_idx = if with_target {
        Some(*lookup.get(schema.target.as_str()).ok_or_else(|| Error::MissingColumn(schema.target.clone()))?)
    } else {
        None
    };

    let d: usize = schema.columns.iter().map(ColumnSpec::width).sum();
    if d == 0 {
        return Err(Error::invalid("no feature columns besides the target"));
    }
    let n = table.records.len();
    let mut features = Vec::with_capacity(n * d);
    let mut classes = Vec::new();
    let mut values = Vec::new();
    for (i, rec) in table.records.iter().enumerate() {
        let row_no = i + 2;
        for (col, &j) in schema.columns.iter().zip(&col_idx) {
            match col {
                ColumnSpec::Numeric { .. } => features.push(parse_real(&rec[j], row_no, j + 1)?),
                ColumnSpec::Categorical { levels, .. } => {
                    let v = rec[j].trim();
                    let hit = levels
                        .iter()
                        .position(|l| l == v)
                        .ok_or_else(|| Error::parse(row_no, j + 1, format!("unknown category `{v}`")))?;
                    features.extend((0..levels.len()).map(|l| if l == hit { 1.0 } else { 0.0 }));
                }
            }
        }
        match (schema.task, target_idx) {
            (TaskKind::Classification, Some(t)) => {
                let v = rec[t].trim();
                let k = schema
                    .class_names
                    .iter()
                    .position(|c| c == v)
                    .ok_or_else(|| Error::parse(row_no, t + 1, format!("unknown class label `{v}`")))?;
                classes.push(k + 1);
            }
            (TaskKind::Classification, None) => classes.push(1),
            (TaskKind::Regression, Some(t)) => values.push(parse_real(&rec[t], row_no, t + 1)?),
            (TaskKind::Regression, None) => values.push(0.0),
        }
    }
    let (targets, task) = match schema.task {
        TaskKind::Classification => (
            Targets::Classes(classes),
            Task::Classification { classes: schema.class_names.len().max(1) },
        ),
        TaskKind::Regression => (Targets::Values(values), Task::Regression { outputs: 1 }),
    };
    Ok(Dataset::new(features, d, targets, task)?
        .with_feature_names(schema.feature_names())?
        .with_class_names(schema.class_names.clone()))
}

/// Rebuilds the schema a CSV load would have produced for `data`, for
/// datasets whose column structure is plain numeric.
pub fn numeric_schema(data: &Dataset, target: &str) -> CsvSchema {
    CsvSchema {
        target: target.to_string(),
        task: data.task().kind(),
        columns: data
            .feature_names()
            .iter()
            .map(|n| ColumnSpec::Numeric { name: n.clone() })
            .collect(),
        class_names: data.class_names().to_vec(),
    }
}

/// Loads a LIBSVM / SVMlight file: `label index:value ...` with 1-based,
/// strictly increasing indices. `D` is the largest index seen; absent
/// entries are 0.
///
/// Classification labels must be integers. When every label is >= 1 the
/// labels are used as class indices directly (`K` = largest label);
/// otherwise (e.g. 0-based digits or -1/+1) the distinct labels are
/// renumbered `1..=K` in increasing order and kept as class names.
pub fn load_libsvm(path: impl AsRef<Path>, task: TaskKind) -> Result<Dataset> {
    let text = read_to_string(path.as_ref())?;
    parse_libsvm(&text, task, 0)
}

/// Parses LIBSVM text; `min_features` pads `D` up to a known width (useful
/// for test files whose trailing features are all zero).
pub fn parse_libsvm(text: &str, task: TaskKind, min_features: usize) -> Result<Dataset> {
    let mut entries: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut labels: Vec<f64> = Vec::new();
    let mut d = min_features;
    for (i, line) in text.lines().enumerate() {
        let row_no = i + 1;
        let line = match line.find('#') {
            Some(p) => &line[..p],
            None => line,
        };
        let mut tokens = line.split_whitespace();
        let Some(label_tok) = tokens.next() else { continue };
        let label = label_tok
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| Error::parse(row_no, 1, format!("bad label `{label_tok}`")))?;
        let mut row = Vec::new();
        let mut last = 0usize;
        for (t, tok) in tokens.enumerate() {
            let col = t + 2;
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| Error::parse(row_no, col, format!("expected index:value, got `{tok}`")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| Error::parse(row_no, col, format!("bad feature index `{idx}`")))?;
            if idx == 0 {
                return Err(Error::parse(row_no, col, "feature indices are 1-based"));
            }
            if idx <= last {
                return Err(Error::parse(row_no, col, format!("index {idx} does not increase (previous {last})")));
            }
            last = idx;
            let val = val
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(row_no, col, format!("bad feature value `{val}`")))?;
            row.push((idx - 1, val));
        }
        d = d.max(last);
        entries.push(row);
        labels.push(label);
    }
    if entries.is_empty() {
        return Err(Error::Empty("LIBSVM file has no instances".into()));
    }
    let d = d.max(1);
    let n = entries.len();
    let mut features = vec![0.0; n * d];
    for (i, row) in entries.iter().enumerate() {
        for &(j, v) in row {
            features[i * d + j] = v;
        }
    }
    match task {
        TaskKind::Regression => Dataset::new(features, d, Targets::Values(labels), Task::Regression { outputs: 1 }),
        TaskKind::Classification => {
            let mut ints = Vec::with_capacity(n);
            for (i, &l) in labels.iter().enumerate() {
                if l.fract() != 0.0 {
                    return Err(Error::parse(i + 1, 1, format!("class label {l} is not an integer")));
                }
                ints.push(l as i64);
            }
            if ints.iter().all(|&l| l >= 1) {
                let k = *ints.iter().max().unwrap() as usize;
                let classes = ints.iter().map(|&l| l as usize).collect();
                Dataset::new(features, d, Targets::Classes(classes), Task::Classification { classes: k })
            } else {
                let mut distinct = ints.clone();
                distinct.sort_unstable();
                distinct.dedup();
                let classes = ints.iter().map(|l| distinct.binary_search(l).unwrap() + 1).collect();
                let names = distinct.iter().map(|l| l.to_string()).collect();
                Ok(Dataset::new(
                    features,
                    d,
                    Targets::Classes(classes),
                    Task::Classification { classes: distinct.len() },
                )?
                .with_class_names(names))
            }
        }
    }
}

/// Writes `data` in LIBSVM format, eliding zeros. Real values use Rust's
/// shortest round-trip formatting. Only single-output targets can be written.
pub fn to_libsvm(data: &Dataset) -> Result<String> {
    if data.task().dim() != 1 && data.task().kind() == TaskKind::Regression {
        return Err(Error::invalid("LIBSVM holds a single target per row"));
    }
    let mut out = String::new();
    for i in 0..data.n_rows() {
        match data.target(i) {
            TargetRef::Class(c) => write!(out, "{c}").unwrap(),
            TargetRef::Values(v) => write!(out, "{:?}", v[0]).unwrap(),
        }
        for (j, &v) in data.row(i).iter().enumerate() {
            if v != 0.0 {
                write!(out, " {}:{:?}", j + 1, v).unwrap();
            }
        }
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(test_fraction: f64, seed: u64) -> Result<Self> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(Error::invalid(format!("test fraction {test_fraction} not in (0, 1)")));
        }
        Ok(SplitSpec { test_fraction, seed })
    }
}

/// Row indices of a seeded shuffle split: `(train, test)`.
pub fn split_indices(n: usize, spec: SplitSpec) -> Result<(Vec<usize>, Vec<usize>)> {
    SplitSpec::new(spec.test_fraction, spec.seed)?;
    if n < 2 {
        return Err(Error::invalid("need at least two rows to split"));
    }
    let n_test = (n as f64 * spec.test_fraction).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(Error::invalid(format!(
            "test fraction {} of {n} rows leaves an empty part",
            spec.test_fraction
        )));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seeded_rng(spec.seed));
    let train = perm.split_off(n_test);
    Ok((train, perm))
}

/// Shuffles and splits into `(train, test)` with `round(N * fraction)` test rows.
pub fn train_test_split(data: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    let (train, test) = split_indices(data.n_rows(), spec)?;
    Ok((data.subset(&train), data.subset(&test)))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: Vec<usize>,
}

impl FoldAssignment {
    /// `(train_rows, validation_rows)` for fold `f`.
    pub fn split(&self, f: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut valid = Vec::new();
        for (i, &g) in self.fold_of.iter().enumerate() {
            if g == f {
                valid.push(i);
            } else {
                train.push(i);
            }
        }
        (train, valid)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &g in &self.fold_of {
            sizes[g] += 1;
        }
        sizes
    }
}

/// Seeded balanced k-fold assignment: positions of a random permutation are
/// dealt round-robin, so fold sizes differ by at most one.
pub fn kfold(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::invalid(format!("k-fold needs k >= 2, got {k}")));
    }
    if k > n {
        return Err(Error::invalid(format!("cannot make {k} folds from {n} rows")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seeded_rng(seed));
    let mut fold_of = vec![0; n];
    for (pos, &row) in perm.iter().enumerate() {
        fold_of[row] = pos % k;
    }
    Ok(FoldAssignment { k, fold_of })
}

/// [`kfold`] that keeps class proportions: the permutation is stably
/// grouped by class before dealing, so every fold gets a near-equal share
/// of each class. Regression data falls back to [`kfold`].
pub fn stratified_kfold(data: &Dataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    let Targets::Classes(y) = data.targets() else {
        return kfold(data.n_rows(), k, seed);
    };
    let mut folds = kfold(data.n_rows(), k, seed)?;
    let mut perm: Vec<usize> = (0..data.n_rows()).collect();
    perm.shuffle(&mut seeded_rng(seed));
    perm.sort_by_key(|&i| y[i]);
    for (pos, &row) in perm.iter().enumerate() {
        folds.fold_of[row] = pos % k;
    }
    Ok(folds)
}

/// Per-feature min-max scaling to `[0, 1]`. Optional; nothing in the
/// training pipeline applies it unless asked.
#[derive(Debug, Clone, PartialEq)]
pub struct MinMaxScaler {
    min: Vec<f64>,
    range: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit(data: &Dataset) -> Self {
        let d = data.n_features();
        let mut min = vec![f64::INFINITY; d];
        let mut max = vec![f64::NEG_INFINITY; d];
        for row in data.rows() {
            for j in 0..d {
                min[j] = min[j].min(row[j]);
                max[j] = max[j].max(row[j]);
            }
        }
        let range = min.iter().zip(&max).map(|(lo, hi)| if hi > lo { hi - lo } else { 1.0 }).collect();
        MinMaxScaler { min, range }
    }

    pub fn transform(&self, data: &Dataset) -> Result<Dataset> {
        let d = data.n_features();
        if d != self.min.len() {
            return Err(Error::DimensionMismatch { expected: self.min.len(), got: d });
        }
        let mut out = data.clone();
        for (i, v) in out.features.iter_mut().enumerate() {
            let j = i % d;
            *v = (*v - self.min[j]) / self.range[j];
        }
        Ok(out)
    }
}
