//! Tree Alternating Optimization.
//!
//! Each iteration sweeps the depth levels of the tree from the deepest to
//! the root. Nodes on one level have disjoint reaching sets, so each is
//! optimized on its own: leaves take the majority class (or mean) of the
//! rows that reach them, and internal nodes solve a weighted binary
//! classification problem (the reduced problem) over their reaching rows.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cart::fit_leaf;
use crate::dataset::{Dataset, TaskKind};
use crate::error::{Error, Result};
use crate::solver::{best_axis_split, l1_logistic, weighted_error, HyperplaneSolution, LogisticOptions, WeightedBinarySample};
use crate::tree::{NodeId, NodeKind, Output, SplitFamily, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    ZeroOne,
    SquaredError,
}

impl LossKind {
    pub fn for_task(task: TaskKind) -> LossKind {
        match task {
            TaskKind::Classification => LossKind::ZeroOne,
            TaskKind::Regression => LossKind::SquaredError,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Axis,
    Oblique,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "axis" => Ok(Mode::Axis),
            "oblique" => Ok(Mode::Oblique),
            other => Err(Error::invalid(format!("unknown TAO mode `{other}` (expected axis or oblique)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaoParams {
    /// Weight of the l1 penalty on oblique split weights.
    pub lambda: f64,
    pub max_iters: usize,
    /// Axis mode stops once the relative training-loss improvement of an
    /// iteration falls below this.
    pub tol: f64,
    pub loss: LossKind,
    pub solver: LogisticOptions,
}

impl TaoParams {
    pub fn new(task: TaskKind) -> Self {
        TaoParams {
            lambda: 0.0,
            max_iters: 30,
            tol: 1e-5,
            loss: LossKind::for_task(task),
            solver: LogisticOptions { rel_objective_tol: 1e-7, ..LogisticOptions::default() },
        }
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn validate(&self, data: &Dataset) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::invalid("lambda must be a finite non-negative number"));
        }
        if self.max_iters < 1 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::invalid("tol must be non-negative"));
        }
        if LossKind::for_task(data.task().kind()) != self.loss {
            return Err(Error::invalid("loss kind does not match the dataset task"));
        }
        Ok(())
    }
}

/// Objective decomposition at one point of a fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEntry {
    /// `train_loss + lambda * penalty`.
    pub objective: f64,
    pub train_loss: f64,
    /// Sum of `||w||_1` over oblique nodes.
    pub penalty: f64,
    pub leaves: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitTrace {
    pub initial: TraceEntry,
    /// One entry per completed iteration.
    pub iterations: Vec<TraceEntry>,
    /// True when the run ended at a fixed point or on the tolerance rather
    /// than on the iteration budget.
    pub converged: bool,
}

impl FitTrace {
    /// Initial objective followed by every iteration's objective.
    pub fn objectives(&self) -> Vec<f64> {
        std::iter::once(self.initial.objective).chain(self.iterations.iter().map(|e| e.objective)).collect()
    }

    pub fn is_monotone(&self) -> bool {
        self.objectives().windows(2).all(|w| w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0))
    }
}

fn check_compatible(tree: &Tree, data: &Dataset) -> Result<()> {
    if tree.n_features() != data.n_features() {
        return Err(Error::DimensionMismatch { expected: tree.n_features(), got: data.n_features() });
    }
    if tree.task() != data.task() {
        return Err(Error::invalid("tree and dataset tasks differ"));
    }
    Ok(())
}

fn trace_entry(tree: &Tree, data: &Dataset, lambda: f64) -> TraceEntry {
    let train_loss: f64 = (0..data.n_rows())
        .map(|i| tree.output_from(tree.root(), data.row(i)).loss(data.target(i)))
        .sum();
    let penalty = tree.l1_penalty();
    TraceEntry { objective: train_loss + lambda * penalty, train_loss, penalty, leaves: tree.num_leaves() }
}

/// Training loss (misclassification count or summed squared error) plus
/// `lambda` times the l1 norms of all oblique weight vectors.
pub fn objective(tree: &Tree, data: &Dataset, params: &TaoParams) -> Result<f64> {
    check_compatible(tree, data)?;
    Ok(trace_entry(tree, data, params.lambda).objective)
}

/// Rows whose path from the root passes through `node`.
pub fn reaching_set(tree: &Tree, node: NodeId, data: &Dataset) -> Vec<usize> {
    (0..data.n_rows())
        .filter(|&i| {
            let x = data.row(i);
            let mut id = tree.root();
            loop {
                if id == node {
                    return true;
                }
                match tree.node(id).children {
                    Some([l, r]) => id = if tree.node(id).kind.goes_right(x) { r } else { l },
                    None => return false,
                }
            }
        })
        .collect()
}

/// Reaching sets of every node in one pass over the data.
pub fn reaching_sets(tree: &Tree, data: &Dataset) -> Vec<Vec<usize>> {
    let mut sets = vec![Vec::new(); tree.len()];
    for i in 0..data.n_rows() {
        let x = data.row(i);
        let mut id = tree.root();
        loop {
            sets[id].push(i);
            match tree.node(id).children {
                Some([l, r]) => id = if tree.node(id).kind.goes_right(x) { r } else { l },
                None => break,
            }
        }
    }
    sets
}

/// Binary problem of one internal node: which child each reaching row
/// should go to, and how much it matters. Rows for which both children
/// give the same loss are left out.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedProblem {
    pub node: NodeId,
    pub rows: Vec<usize>,
    /// `true` when the right subtree gives the lower loss.
    pub goes_right: Vec<bool>,
    /// `|loss_left - loss_right| > 0`.
    pub weights: Vec<f64>,
}

impl ReducedProblem {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn samples<'a>(&self, data: &'a Dataset) -> Vec<WeightedBinarySample<'a>> {
        self.rows
            .iter()
            .zip(&self.goes_right)
            .zip(&self.weights)
            .map(|((&i, &right), &w)| WeightedBinarySample::new(data.row(i), right, w))
            .collect()
    }
}

/// Reduced problem of internal node `node` over all rows reaching it.
pub fn build_internal_reduced(tree: &Tree, node: NodeId, data: &Dataset) -> Result<ReducedProblem> {
    check_compatible(tree, data)?;
    if tree.children(node).is_none() {
        return Err(Error::invalid(format!("node {node} is a leaf")));
    }
    Ok(reduced_over(tree, node, data, &reaching_set(tree, node, data)))
}

fn reduced_over(tree: &Tree, node: NodeId, data: &Dataset, rows: &[usize]) -> ReducedProblem {
    let [l, r] = tree.children(node).expect("internal node");
    let mut problem = ReducedProblem { node, rows: Vec::new(), goes_right: Vec::new(), weights: Vec::new() };
    for &i in rows {
        let x = data.row(i);
        let y = data.target(i);
        let loss_l = tree.output_from(l, x).loss(y);
        let loss_r = tree.output_from(r, x).loss(y);
        if loss_l != loss_r {
            problem.rows.push(i);
            problem.goes_right.push(loss_r < loss_l);
            problem.weights.push((loss_l - loss_r).abs());
        }
    }
    problem
}

/// Optimal constant for leaf `node` over its reaching rows; the current
/// output when no row reaches it.
pub fn optimize_leaf(tree: &Tree, node: NodeId, data: &Dataset) -> Result<Output> {
    check_compatible(tree, data)?;
    let NodeKind::Leaf(current) = &tree.node(node).kind else {
        return Err(Error::invalid(format!("node {node} is not a leaf")));
    };
    Ok(fit_leaf(data, &reaching_set(tree, node, data)).unwrap_or_else(|| current.clone()))
}

/// New parameters for one node, or `None` to keep the current ones.
fn update_node(tree: &Tree, id: NodeId, data: &Dataset, rows: &[usize], params: &TaoParams, mode: Mode) -> Result<Option<NodeKind>> {
    let node = tree.node(id);
    if let NodeKind::Leaf(current) = &node.kind {
        return Ok(fit_leaf(data, rows).filter(|o| o != current).map(NodeKind::Leaf));
    }
    let problem = reduced_over(tree, id, data, rows);
    if problem.is_empty() {
        return Ok(None);
    }
    let samples = problem.samples(data);
    let total: f64 = problem.weights.iter().sum();
    let eps = 1e-12 * total.max(1.0);
    let candidate = match mode {
        Mode::Axis => {
            let current = weighted_error(&node.kind, &samples);
            let best = best_axis_split(&samples)?;
            (best.weighted_error < current - eps).then(|| best.to_kind())
        }
        Mode::Oblique => {
            let NodeKind::Oblique { weights, bias } = &node.kind else {
                return Err(Error::invalid("oblique mode found an axis-aligned node"));
            };
            let current = weighted_error(&node.kind, &samples) + params.lambda * node.kind.l1_norm();
            let warm = HyperplaneSolution::from_split(weights, *bias);
            let sol = l1_logistic(&samples, params.lambda, Some(&warm), params.solver)?;
            let kind = sol.to_kind();
            let value = weighted_error(&kind, &samples) + params.lambda * kind.l1_norm();
            (value < current - eps).then_some(kind)
        }
    };
    Ok(candidate)
}

/// One bottom-up sweep over all depth levels. Returns the updated tree and
/// its objective.
pub fn tao_iteration(tree: &Tree, data: &Dataset, params: &TaoParams, mode: Mode) -> Result<(Tree, f64)> {
    check_compatible(tree, data)?;
    params.validate(data)?;
    let (next, _) = sweep(tree, data, params, mode)?;
    let obj = trace_entry(&next, data, params.lambda).objective;
    Ok((next, obj))
}

fn sweep(tree: &Tree, data: &Dataset, params: &TaoParams, mode: Mode) -> Result<(Tree, bool)> {
    let mut tree = tree.clone();
    // Ancestors are visited after their descendants, so the reaching sets
    // computed up front stay valid throughout the sweep.
    let reach = reaching_sets(&tree, data);
    let mut changed = false;
    for level in tree.levels().into_iter().rev() {
        let updates: Vec<(NodeId, Option<NodeKind>)> = level
            .par_iter()
            .map(|&id| update_node(&tree, id, data, &reach[id], params, mode).map(|k| (id, k)))
            .collect::<Result<_>>()?;
        for (id, kind) in updates {
            if let Some(kind) = kind {
                tree.set_kind(id, kind)?;
                changed = true;
            }
        }
    }
    Ok((tree, changed))
}

/// Runs TAO from `init` for up to `params.max_iters` iterations, then
/// removes branches no training row reaches. Axis mode also stops when an
/// iteration improves the training loss by less than `params.tol`
/// (relative). Both modes stop at a fixed point, where every further
/// iteration would return the same tree.
pub fn tao_fit(init: &Tree, data: &Dataset, params: &TaoParams, mode: Mode) -> Result<(Tree, FitTrace)> {
    check_compatible(init, data)?;
    params.validate(data)?;
    if data.n_rows() == 0 {
        return Err(Error::Empty("cannot fit on an empty dataset".into()));
    }
    match (mode, init.split_family()) {
        (_, SplitFamily::None) | (Mode::Axis, SplitFamily::Axis) | (Mode::Oblique, SplitFamily::Oblique) => {}
        (Mode::Axis, _) => return Err(Error::invalid("axis mode needs an axis-aligned initial tree")),
        (Mode::Oblique, _) => return Err(Error::invalid("oblique mode needs an oblique initial tree")),
    }
    let initial = trace_entry(init, data, params.lambda);
    let mut trace = FitTrace { initial, iterations: Vec::new(), converged: false };
    let mut tree = init.clone();
    let mut prev = initial;
    for _ in 0..params.max_iters {
        let (next, changed) = sweep(&tree, data, params, mode)?;
        let entry = trace_entry(&next, data, params.lambda);
        trace.iterations.push(entry);
        tree = next;
        if !changed {
            trace.converged = true;
            break;
        }
        if mode == Mode::Axis {
            let gain = prev.train_loss - entry.train_loss;
            if prev.train_loss <= 0.0 || gain < params.tol * prev.train_loss {
                trace.converged = true;
                break;
            }
        }
        prev = entry;
    }
    Ok((tree.prune_dead(data), trace))
}
