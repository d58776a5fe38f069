//! C ABI over `taotree`.
//!
//! Datasets and models are opaque heap handles created by `tao_*` calls and
//! released with the matching `*_free`. Every fallible call returns a
//! [`TaoStatus`]; on failure the message is available from
//! [`tao_last_error_message`] until the next failing call on the same thread.
//! Panics never cross the boundary; they are reported as
//! [`TaoStatus::Internal`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use taotree::bench::{default_depths, evaluate, fit, grid_search_cv, Algorithm, HyperParams, Settings, DEFAULT_LAMBDAS};
use taotree::cart::PruneRule;
use taotree::dataset::{load_csv_and_schema, Dataset, TargetColumn, Targets, Task, TaskKind};
use taotree::tree::{deserialize, serialize, Output, Tree};
use taotree::Error;

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaoStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Unreadable or malformed input data or model file.
    Data = 3,
    Training = 4,
    /// A panic inside the library.
    Internal = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaoTask {
    Classification = 0,
    Regression = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaoAlgorithm {
    Cart = 0,
    TaoAxis = 1,
    TaoOblique = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaoPruneRule {
    Min = 0,
    OneSe = 1,
}

/// Training options. Start from [`tao_train_options_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaoTrainOptions {
    /// Initial depth for `TaoOblique`; 0 grid-searches it.
    pub depth: u32,
    /// l1 weight for `TaoOblique`; negative grid-searches it.
    pub lambda: f64,
    pub max_iters: u32,
    pub tol: f64,
    /// Folds for CART pruning and for the grid search.
    pub folds: u32,
    pub rule: TaoPruneRule,
    pub seed: u64,
}

/// Opaque dataset handle.
pub struct TaoDataset(Dataset);

/// Opaque model handle.
pub struct TaoModel(Tree);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> TaoStatus {
    match err {
        Error::InvalidArgument(_) => TaoStatus::InvalidArgument,
        Error::Training(_) => TaoStatus::Training,
        _ => TaoStatus::Data,
    }
}

struct Failure(TaoStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(TaoStatus::NullPointer, format!("`{what}` is null"))
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(TaoStatus::InvalidArgument, message.into())
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> TaoStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => TaoStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal error: {message}"));
            TaoStatus::Internal
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("`{what}` is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn checked_len(n_rows: usize, n_features: usize) -> Result<usize, Failure> {
    n_rows.checked_mul(n_features).ok_or_else(|| invalid("n_rows * n_features overflows"))
}

/// Message of the last failing call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tao_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Classification dataset from row-major features and 1-based class labels
/// in `1..=n_classes`.
///
/// # Safety
/// `features` must point to `n_rows * n_features` doubles, `labels` to
/// `n_rows` values and `out` to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn tao_dataset_classification(
    features: *const f64,
    n_rows: usize,
    n_features: usize,
    labels: *const u32,
    n_classes: u32,
    out: *mut *mut TaoDataset,
) -> TaoStatus {
    guard(|| {
        let x = slice_arg(features, checked_len(n_rows, n_features)?, "features")?.to_vec();
        let y = slice_arg(labels, n_rows, "labels")?.iter().map(|&c| c as usize).collect();
        let task = Task::Classification { classes: n_classes as usize };
        let data = Dataset::new(x, n_features, Targets::Classes(y), task)?;
        write_out(out, TaoDataset(data), "out")
    })
}

/// Single-output regression dataset from row-major features and targets.
///
/// # Safety
/// `features` must point to `n_rows * n_features` doubles, `targets` to
/// `n_rows` doubles and `out` to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn tao_dataset_regression(
    features: *const f64,
    n_rows: usize,
    n_features: usize,
    targets: *const f64,
    out: *mut *mut TaoDataset,
) -> TaoStatus {
    guard(|| {
        let x = slice_arg(features, checked_len(n_rows, n_features)?, "features")?.to_vec();
        let y = slice_arg(targets, n_rows, "targets")?.to_vec();
        let data = Dataset::new(x, n_features, Targets::Values(y), Task::Regression { outputs: 1 })?;
        write_out(out, TaoDataset(data), "out")
    })
}

/// Loads a CSV file with a header row. `target` is a column name or a
/// 0-based index. Categorical columns are not encoded through this call.
///
/// # Safety
/// `path` and `target` must be nul-terminated strings and `out` writable
/// storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn tao_dataset_load_csv(
    path: *const c_char,
    target: *const c_char,
    task: TaoTask,
    out: *mut *mut TaoDataset,
) -> TaoStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let target = TargetColumn::from(str_arg(target, "target")?);
        let kind = match task {
            TaoTask::Classification => TaskKind::Classification,
            TaoTask::Regression => TaskKind::Regression,
        };
        let (data, _) = load_csv_and_schema(path, &target, kind, &[])?;
        write_out(out, TaoDataset(data), "out")
    })
}

/// # Safety
/// `data` must be null or a handle from a `tao_dataset_*` constructor that
/// has not been freed.
#[no_mangle]
pub unsafe extern "C" fn tao_dataset_free(data: *mut TaoDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Number of rows; 0 for a null handle.
///
/// # Safety
/// `data` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn tao_dataset_n_rows(data: *const TaoDataset) -> usize {
    data.as_ref().map_or(0, |d| d.0.n_rows())
}

/// Number of features; 0 for a null handle.
///
/// # Safety
/// `data` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn tao_dataset_n_features(data: *const TaoDataset) -> usize {
    data.as_ref().map_or(0, |d| d.0.n_features())
}

#[no_mangle]
pub extern "C" fn tao_train_options_default() -> TaoTrainOptions {
    let settings = Settings::default();
    TaoTrainOptions {
        depth: 0,
        lambda: -1.0,
        max_iters: settings.max_iters as u32,
        tol: settings.tol,
        folds: settings.cart_folds as u32,
        rule: TaoPruneRule::OneSe,
        seed: 0,
    }
}

/// Fits a model. `options` may be null for the defaults.
///
/// # Safety
/// `data` must be a live dataset handle, `options` null or a valid pointer
/// and `out` writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn tao_train(
    data: *const TaoDataset,
    algorithm: TaoAlgorithm,
    options: *const TaoTrainOptions,
    out: *mut *mut TaoModel,
) -> TaoStatus {
    guard(|| {
        let data = &handle(data, "data")?.0;
        let opts = options.as_ref().copied().unwrap_or_else(|| tao_train_options_default());
        if opts.folds < 2 {
            return Err(invalid("folds must be at least 2"));
        }
        let algorithm = match algorithm {
            TaoAlgorithm::Cart => Algorithm::Cart,
            TaoAlgorithm::TaoAxis => Algorithm::TaoAxis,
            TaoAlgorithm::TaoOblique => Algorithm::TaoOblique,
        };
        let settings = Settings {
            max_iters: opts.max_iters as usize,
            tol: opts.tol,
            cart_folds: opts.folds as usize,
            ..Settings::default()
        };
        let rule = match opts.rule {
            TaoPruneRule::Min => PruneRule::Min,
            TaoPruneRule::OneSe => PruneRule::OneSe,
        };
        let depth = (opts.depth > 0).then_some(opts.depth as usize);
        let lambda = (opts.lambda >= 0.0).then_some(opts.lambda);
        let mut hp = HyperParams { depth, lambda, rule: Some(rule) };
        if algorithm == Algorithm::TaoOblique && (depth.is_none() || lambda.is_none()) {
            let depths = depth.map_or_else(|| default_depths(data.n_rows()), |d| vec![d]);
            let lambdas = lambda.map_or_else(|| DEFAULT_LAMBDAS.to_vec(), |l| vec![l]);
            let points: Vec<HyperParams> = depths
                .iter()
                .flat_map(|&d| lambdas.iter().map(move |&l| HyperParams { depth: Some(d), lambda: Some(l), rule: None }))
                .collect();
            hp = grid_search_cv(data, algorithm, &points, &settings, opts.folds as usize, opts.seed)?.best;
        }
        let tree = fit(algorithm, data, &hp, &settings, opts.seed).map_err(|e| match e {
            Error::InvalidArgument(m) => Failure(TaoStatus::Training, m),
            other => other.into(),
        })?;
        write_out(out, TaoModel(tree), "out")
    })
}

/// # Safety
/// `model` must be null or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn tao_model_free(model: *mut TaoModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Values written per row by [`tao_model_predict`]: 1 for classification,
/// the output dimension for regression. 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn tao_model_output_dim(model: *const TaoModel) -> usize {
    model.as_ref().map_or(0, |m| match m.0.task() {
        Task::Classification { .. } => 1,
        Task::Regression { outputs } => outputs,
    })
}

/// Number of input features the model expects; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn tao_model_n_features(model: *const TaoModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.n_features())
}

/// Maximum depth; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn tao_model_depth(model: *const TaoModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.depth())
}

/// Number of leaves; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn tao_model_leaves(model: *const TaoModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.num_leaves())
}

/// Predicts `n_rows` row-major rows. Classification writes the 1-based
/// class index of each row; regression writes its output vector. `out_len`
/// must equal `n_rows * tao_model_output_dim(model)`.
///
/// # Safety
/// `features` must point to `n_rows * n_features` doubles and `out` to
/// `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn tao_model_predict(
    model: *const TaoModel,
    features: *const f64,
    n_rows: usize,
    n_features: usize,
    out: *mut f64,
    out_len: usize,
) -> TaoStatus {
    guard(|| {
        let tree = &handle(model, "model")?.0;
        if n_features != tree.n_features() {
            return Err(Error::DimensionMismatch { expected: tree.n_features(), got: n_features }.into());
        }
        let k = tao_model_output_dim(model);
        if out_len != n_rows.checked_mul(k).ok_or_else(|| invalid("output length overflows"))? {
            return Err(invalid(format!("out_len must be {} (n_rows * output dim)", n_rows * k)));
        }
        let x = slice_arg(features, checked_len(n_rows, n_features)?, "features")?;
        if out_len > 0 && out.is_null() {
            return Err(null("out"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(invalid("features must be finite"));
        }
        for (i, row) in x.chunks(n_features.max(1)).take(n_rows).enumerate() {
            match tree.predict(row)? {
                Output::Class(c) => *out.add(i) = *c as f64,
                Output::Values(v) => {
                    for (j, value) in v.iter().enumerate() {
                        *out.add(i * k + j) = *value;
                    }
                }
            }
        }
        Ok(())
    })
}

/// Accuracy in percent (classification) or RMSE (regression) on `data`.
///
/// # Safety
/// `model` and `data` must be live handles and `metric` a writable double.
#[no_mangle]
pub unsafe extern "C" fn tao_model_evaluate(model: *const TaoModel, data: *const TaoDataset, metric: *mut f64) -> TaoStatus {
    guard(|| {
        let tree = &handle(model, "model")?.0;
        let data = &handle(data, "data")?.0;
        if metric.is_null() {
            return Err(null("metric"));
        }
        *metric = evaluate(tree, data)?;
        Ok(())
    })
}

/// Writes the model as a version-1 JSON model file.
///
/// # Safety
/// `model` must be a live handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tao_model_save(model: *const TaoModel, path: *const c_char) -> TaoStatus {
    guard(|| {
        let tree = &handle(model, "model")?.0;
        let path = str_arg(path, "path")?;
        std::fs::write(path, serialize(tree))
            .map_err(|source| Error::Io { path: path.into(), source })?;
        Ok(())
    })
}

/// Reads a JSON model file.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` writable storage for
/// one pointer.
#[no_mangle]
pub unsafe extern "C" fn tao_model_load(path: *const c_char, out: *mut *mut TaoModel) -> TaoStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
        write_out(out, TaoModel(deserialize(&text)?), "out")
    })
}

/// The model as JSON text. Release the string with [`tao_string_free`].
///
/// # Safety
/// `model` must be a live handle and `out` writable storage for one
/// pointer.
#[no_mangle]
pub unsafe extern "C" fn tao_model_to_json(model: *const TaoModel, out: *mut *mut c_char) -> TaoStatus {
    guard(|| {
        let tree = &handle(model, "model")?.0;
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CString::new(serialize(tree)).map_err(|_| invalid("model text contains a nul byte"))?;
        *out = text.into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library that has not been
/// freed.
#[no_mangle]
pub unsafe extern "C" fn tao_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
