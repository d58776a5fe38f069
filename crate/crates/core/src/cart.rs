//! Greedy axis-aligned tree induction with cost-complexity pruning.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{stratified_kfold, Dataset, Targets, Task};
use crate::error::{Error, Result};
use crate::solver::midpoint;
use crate::tree::{Node, NodeId, NodeKind, Output, Tree};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartParams {
    pub max_depth: usize,
    /// Nodes with fewer rows than this become leaves.
    pub min_split: usize,
    /// A split must cut the impurity by at least this fraction of the root
    /// impurity. 0 grows the tree until the leaves are pure.
    pub complexity: f64,
}

impl Default for CartParams {
    fn default() -> Self {
        CartParams { max_depth: 30, min_split: 1, complexity: 0.0 }
    }
}

impl CartParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_split < 1 {
            return Err(Error::invalid("min_split must be at least 1"));
        }
        if !(self.complexity.is_finite() && self.complexity >= 0.0) {
            return Err(Error::invalid("complexity must be a finite non-negative number"));
        }
        Ok(())
    }
}

/// `1 - sum_k p_k^2`.
pub fn gini(class_counts: &[usize]) -> Result<f64> {
    let total: usize = class_counts.iter().sum();
    if total == 0 {
        return Err(Error::invalid("gini of an empty node"));
    }
    let t = total as f64;
    Ok(1.0 - class_counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>())
}

/// Majority class (ties go to the smallest index) or mean target of the
/// given rows; `None` when `rows` is empty.
pub fn fit_leaf(data: &Dataset, rows: &[usize]) -> Option<Output> {
    if rows.is_empty() {
        return None;
    }
    Some(match (data.task(), data.targets()) {
        (Task::Classification { classes }, Targets::Classes(y)) => {
            let mut counts = vec![0usize; classes + 1];
            for &i in rows {
                counts[y[i]] += 1;
            }
            Output::Class(majority(&counts))
        }
        (Task::Regression { outputs }, Targets::Values(y)) => {
            let mut mean = vec![0.0; outputs];
            for &i in rows {
                for (m, v) in mean.iter_mut().zip(&y[i * outputs..(i + 1) * outputs]) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= rows.len() as f64);
            Output::Values(mean)
        }
        _ => unreachable!("dataset targets always match its task"),
    })
}

/// Index of the largest count over classes `1..`, ties to the smallest.
fn majority(counts: &[usize]) -> usize {
    let mut best = 1;
    for k in 2..counts.len() {
        if counts[k] > counts[best] {
            best = k;
        }
    }
    best
}

/// Training loss of a constant output over `rows`.
fn leaf_loss(data: &Dataset, rows: &[usize], output: &Output) -> f64 {
    rows.iter().map(|&i| output.loss(data.target(i))).sum()
}

/// Fits an axis-aligned tree by recursive partitioning: each node takes the
/// (feature, midpoint threshold) that minimizes the children's summed
/// impurity (count-weighted Gini, or squared error for regression).
pub fn grow(data: &Dataset, params: &CartParams) -> Result<Tree> {
    params.validate()?;
    if data.n_rows() == 0 {
        return Err(Error::Empty("cannot grow a tree on an empty dataset".into()));
    }
    let mut grower = Grower { data, params, nodes: Vec::new(), min_gain: 0.0 };
    let rows: Vec<usize> = (0..data.n_rows()).collect();
    grower.min_gain = params.complexity * grower.impurity(&rows);
    grower.build(rows, 0, None);
    let tree = Tree::from_nodes(grower.nodes, 0, data.task(), data.n_features())?;
    Ok(tree.with_meta(crate::tree::Metadata { class_names: data.class_names().to_vec(), schema: None }))
}

struct Grower<'a> {
    data: &'a Dataset,
    params: &'a CartParams,
    nodes: Vec<Node>,
    min_gain: f64,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

impl Grower<'_> {
    fn build(&mut self, rows: Vec<usize>, depth: usize, parent: Option<NodeId>) -> NodeId {
        let id = self.nodes.len();
        let output = fit_leaf(self.data, &rows).expect("nodes are never empty");
        self.nodes.push(Node { kind: NodeKind::Leaf(output), children: None, parent });
        if depth >= self.params.max_depth || rows.len() < self.params.min_split.max(2) {
            return id;
        }
        let current = self.impurity(&rows);
        if current <= 0.0 {
            return id;
        }
        let Some(best) = self.best_split(&rows) else { return id };
        if current - best.impurity < self.min_gain {
            return id;
        }
        let (right, left): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| self.data.row(i)[best.feature] >= best.threshold);
        self.nodes[id].kind = NodeKind::Axis { feature: best.feature, threshold: best.threshold };
        let l = self.build(left, depth + 1, Some(id));
        let r = self.build(right, depth + 1, Some(id));
        self.nodes[id].children = Some([l, r]);
        id
    }

    /// Count-weighted Gini or sum of squared errors around the mean.
    fn impurity(&self, rows: &[usize]) -> f64 {
        match (self.data.task(), self.data.targets()) {
            (Task::Classification { classes }, Targets::Classes(y)) => {
                let mut counts = vec![0usize; classes + 1];
                rows.iter().for_each(|&i| counts[y[i]] += 1);
                let n = rows.len() as f64;
                n - counts.iter().map(|&c| (c * c) as f64).sum::<f64>() / n
            }
            _ => {
                let out = fit_leaf(self.data, rows).expect("non-empty");
                leaf_loss(self.data, rows, &out)
            }
        }
    }

    fn best_split(&self, rows: &[usize]) -> Option<Candidate> {
        let data = self.data;
        let n = rows.len() as f64;
        let mut best: Option<Candidate> = None;
        let mut order = rows.to_vec();
        let tol = 1e-12 * n.max(1.0);
        for j in 0..data.n_features() {
            order.sort_unstable_by(|&a, &b| data.row(a)[j].total_cmp(&data.row(b)[j]));
            let mut scan = Scan::new(data, rows);
            for (pos, &i) in order.iter().enumerate().take(order.len() - 1) {
                scan.move_left(data, i);
                let (v, next) = (data.row(i)[j], data.row(order[pos + 1])[j]);
                if v == next {
                    continue;
                }
                let imp = scan.impurity();
                if best.as_ref().is_none_or(|b| imp < b.impurity - tol) {
                    best = Some(Candidate { feature: j, threshold: midpoint(v, next), impurity: imp });
                }
            }
        }
        best
    }
}

/// Running left/right sufficient statistics for a sorted sweep.
enum Scan {
    Classes { left: Vec<f64>, right: Vec<f64>, nl: f64, nr: f64, sq_l: f64, sq_r: f64 },
    Values { dim: usize, sum_l: Vec<f64>, sum_r: Vec<f64>, ss_l: f64, ss_r: f64, nl: f64, nr: f64 },
}

impl Scan {
    fn new(data: &Dataset, rows: &[usize]) -> Scan {
        match (data.task(), data.targets()) {
            (Task::Classification { classes }, Targets::Classes(y)) => {
                let mut right = vec![0.0; classes + 1];
                rows.iter().for_each(|&i| right[y[i]] += 1.0);
                let sq_r = right.iter().map(|c| c * c).sum();
                Scan::Classes { left: vec![0.0; classes + 1], right, nl: 0.0, nr: rows.len() as f64, sq_l: 0.0, sq_r }
            }
            (Task::Regression { outputs }, Targets::Values(y)) => {
                let mut sum_r = vec![0.0; outputs];
                let mut ss_r = 0.0;
                for &i in rows {
                    for (s, v) in sum_r.iter_mut().zip(&y[i * outputs..(i + 1) * outputs]) {
                        *s += v;
                        ss_r += v * v;
                    }
                }
                Scan::Values {
                    dim: outputs,
                    sum_l: vec![0.0; outputs],
                    sum_r,
                    ss_l: 0.0,
                    ss_r,
                    nl: 0.0,
                    nr: rows.len() as f64,
                }
            }
            _ => unreachable!("dataset targets always match its task"),
        }
    }

    fn move_left(&mut self, data: &Dataset, i: usize) {
        match (self, data.targets()) {
            (Scan::Classes { left, right, nl, nr, sq_l, sq_r }, Targets::Classes(y)) => {
                let k = y[i];
                *sq_l += 2.0 * left[k] + 1.0;
                *sq_r -= 2.0 * right[k] - 1.0;
                left[k] += 1.0;
                right[k] -= 1.0;
                *nl += 1.0;
                *nr -= 1.0;
            }
            (Scan::Values { dim, sum_l, sum_r, ss_l, ss_r, nl, nr }, Targets::Values(y)) => {
                for (o, v) in y[i * *dim..(i + 1) * *dim].iter().enumerate() {
                    sum_l[o] += v;
                    sum_r[o] -= v;
                    *ss_l += v * v;
                    *ss_r -= v * v;
                }
                *nl += 1.0;
                *nr -= 1.0;
            }
            _ => unreachable!(),
        }
    }

    fn impurity(&self) -> f64 {
        match self {
            Scan::Classes { nl, nr, sq_l, sq_r, .. } => nl - sq_l / nl + nr - sq_r / nr,
            Scan::Values { sum_l, sum_r, ss_l, ss_r, nl, nr, .. } => {
                let l = ss_l - sum_l.iter().map(|s| s * s).sum::<f64>() / nl;
                let r = ss_r - sum_r.iter().map(|s| s * s).sum::<f64>() / nr;
                l.max(0.0) + r.max(0.0)
            }
        }
    }
}

/// Nested sequence of pruned subtrees with their complexity thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct PruningPath {
    pub entries: Vec<PathEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathEntry {
    pub alpha: f64,
    pub tree: Tree,
}

impl PruningPath {
    /// The subtree minimizing `loss + alpha * leaves`: the last entry whose
    /// threshold does not exceed `alpha`.
    pub fn at(&self, alpha: f64) -> &Tree {
        let idx = self.entries.iter().rposition(|e| e.alpha <= alpha).unwrap_or(0);
        &self.entries[idx].tree
    }

    pub fn alphas(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.alpha).collect()
    }
}

/// Weakest-link cost-complexity pruning. Each internal node `t` has link
/// strength `g(t) = (R(t) - R(T_t)) / (|leaves(T_t)| - 1)` where `R` is the
/// training loss (misclassification count or squared error) of collapsing
/// `t` into a leaf and `R(T_t)` that of its current subtree. All nodes at
/// the minimum strength collapse together. The first entry is the smallest
/// subtree that is optimal at `alpha = 0`, the last is the root alone.
pub fn pruning_path(tree: &Tree, data: &Dataset) -> Result<PruningPath> {
    if data.n_features() != tree.n_features() || data.task() != tree.task() {
        return Err(Error::invalid("dataset does not match the tree"));
    }
    let n = tree.len();
    let mut reach: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..data.n_rows() {
        let x = data.row(i);
        let mut id = tree.root();
        loop {
            reach[id].push(i);
            match tree.node(id).children {
                Some([l, r]) => id = if tree.node(id).kind.goes_right(x) { r } else { l },
                None => break,
            }
        }
    }
    // Collapsed outputs, falling back to the parent's for unreached nodes.
    let mut collapsed: Vec<Option<Output>> = vec![None; n];
    let mut own_loss = vec![0.0; n];
    for id in tree.preorder() {
        let out = match &tree.node(id).kind {
            NodeKind::Leaf(o) => o.clone(),
            _ => fit_leaf(data, &reach[id])
                .or_else(|| tree.node(id).parent.and_then(|p| collapsed[p].clone()))
                .ok_or_else(|| Error::Empty("pruning needs at least one row".into()))?,
        };
        own_loss[id] = leaf_loss(data, &reach[id], &out);
        collapsed[id] = Some(out);
    }

    let mut is_cut = vec![false; n];
    let snapshot = |is_cut: &[bool]| -> Tree {
        tree.rebuild_with(&|id| {
            is_cut[id].then(|| NodeKind::Leaf(collapsed[id].clone().expect("set for every node")))
        })
    };
    let mut entries: Vec<PathEntry> = Vec::new();
    loop {
        // (subtree loss, leaf count) per live node, bottom up.
        let mut sub = vec![(0.0, 0usize); n];
        let mut strengths: Vec<(NodeId, f64)> = Vec::new();
        for &id in tree.preorder().iter().rev() {
            if is_cut[id] || tree.node(id).children.is_none() {
                sub[id] = (own_loss[id], 1);
                continue;
            }
            let [l, r] = tree.node(id).children.unwrap();
            sub[id] = (sub[l].0 + sub[r].0, sub[l].1 + sub[r].1);
            let g = ((own_loss[id] - sub[id].0) / (sub[id].1 - 1) as f64).max(0.0);
            strengths.push((id, g));
        }
        // Only nodes not hidden below a cut node count.
        strengths.retain(|&(id, _)| !has_cut_ancestor(tree, &is_cut, id));
        let Some(g_min) = strengths.iter().map(|&(_, g)| g).min_by(f64::total_cmp) else {
            if entries.is_empty() {
                entries.push(PathEntry { alpha: 0.0, tree: snapshot(&is_cut) });
            }
            break;
        };
        let eps = 1e-10 * own_loss[tree.root()].abs().max(1.0);
        let alpha = if g_min <= eps { 0.0 } else { g_min };
        if entries.is_empty() && alpha > 0.0 {
            entries.push(PathEntry { alpha: 0.0, tree: snapshot(&is_cut) });
        }
        for &(id, g) in &strengths {
            if g <= g_min + eps {
                is_cut[id] = true;
            }
        }
        match entries.last_mut() {
            Some(last) if last.alpha >= alpha => last.tree = snapshot(&is_cut),
            _ => entries.push(PathEntry { alpha, tree: snapshot(&is_cut) }),
        }
        if is_cut[tree.root()] {
            break;
        }
    }
    Ok(PruningPath { entries })
}

fn has_cut_ancestor(tree: &Tree, is_cut: &[bool], id: NodeId) -> bool {
    let mut cur = tree.node(id).parent;
    while let Some(p) = cur {
        if is_cut[p] {
            return true;
        }
        cur = tree.node(p).parent;
    }
    false
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneRule {
    /// Complexity with the lowest mean CV loss.
    Min,
    /// Largest complexity within one standard error of the minimum.
    #[default]
    OneSe,
}

impl FromStr for PruneRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min" => Ok(PruneRule::Min),
            "one-se" | "one_se" | "1se" => Ok(PruneRule::OneSe),
            other => Err(Error::invalid(format!("unknown pruning rule `{other}` (expected min or one-se)"))),
        }
    }
}

/// Cross-validated loss of one complexity value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvPoint {
    pub alpha: f64,
    pub leaves: usize,
    /// Mean per-row validation loss.
    pub mean: f64,
    /// Standard error of `mean`.
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneSelection {
    pub tree: Tree,
    pub alpha: f64,
    pub cv: Vec<CvPoint>,
}

/// Grows on all of `data`, then picks a point of its pruning path by
/// `folds`-fold cross-validation. Each path interval is represented by the
/// geometric mean of its endpoints; every fold re-grows a tree with the
/// same parameters and prunes it at that value.
pub fn prune_select(data: &Dataset, params: &CartParams, folds: usize, rule: PruneRule, seed: u64) -> Result<PruneSelection> {
    if folds < 2 {
        return Err(Error::invalid("pruning needs at least 2 folds"));
    }
    let full = grow(data, params)?;
    let path = pruning_path(&full, data)?;
    let alphas = path.alphas();
    let probes: Vec<f64> = (0..alphas.len())
        .map(|i| match alphas.get(i + 1) {
            Some(next) => (alphas[i] * next).sqrt(),
            None => alphas[i],
        })
        .collect();

    let assignment = stratified_kfold(data, folds, seed)?;
    let per_fold: Vec<Vec<(usize, Vec<f64>)>> = (0..folds)
        .into_par_iter()
        .map(|f| -> Result<Vec<(usize, Vec<f64>)>> {
            let (train_idx, valid_idx) = assignment.split(f);
            let train = data.subset(&train_idx);
            let fold_path = pruning_path(&grow(&train, params)?, &train)?;
            let trees: Vec<&Tree> = probes.iter().map(|&a| fold_path.at(a)).collect();
            Ok(valid_idx
                .iter()
                .map(|&i| {
                    let x = data.row(i);
                    let losses = trees.iter().map(|t| t.output_from(t.root(), x).loss(data.target(i))).collect();
                    (i, losses)
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let n = data.n_rows() as f64;
    let mut cv: Vec<CvPoint> = Vec::with_capacity(probes.len());
    for (p, &alpha) in probes.iter().enumerate() {
        let losses: Vec<f64> = per_fold.iter().flatten().map(|(_, l)| l[p]).collect();
        let mean = losses.iter().sum::<f64>() / n;
        let var = if losses.len() > 1 {
            losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        cv.push(CvPoint { alpha, leaves: path.entries[p].tree.num_leaves(), mean, se: (var / n).sqrt() });
    }

    let scale = cv.iter().map(|c| c.mean.abs()).fold(1.0, f64::max);
    let best_mean = cv.iter().map(|c| c.mean).fold(f64::INFINITY, f64::min);
    let i_min = cv.iter().rposition(|c| c.mean <= best_mean + 1e-12 * scale).expect("path is never empty");
    let chosen = match rule {
        PruneRule::Min => i_min,
        PruneRule::OneSe => {
            let bound = cv[i_min].mean + cv[i_min].se + 1e-12 * scale;
            cv.iter().rposition(|c| c.mean <= bound).expect("the minimum satisfies its own bound")
        }
    };
    Ok(PruneSelection { tree: path.entries[chosen].tree.clone(), alpha: alphas[chosen], cv })
}
