//! Independent oracles shared by the property tests and the acceptance run.
#![allow(dead_code)]

use rand::Rng;
use taotree::cart::{grow, pruning_path, CartParams};
use taotree::dataset::{seeded_rng, Dataset, Targets, Task};
use taotree::solver::{best_axis_split, l1_logistic, logistic_objective, LogisticOptions, WeightedBinarySample};
use taotree::tao::build_internal_reduced;
use taotree::tree::{complete_tree, NodeId, NodeKind, Output, Tree};

/// Random weighted binary problem with `n` rows and `d` features. Feature
/// values come from a small integer grid so that ties are common.
pub fn random_binary_problem(seed: u64, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<bool>, Vec<f64>) {
    let mut rng = seeded_rng(seed);
    let xs = (0..n).map(|_| (0..d).map(|_| rng.gen_range(0..6) as f64 * 0.5).collect()).collect();
    let ys = (0..n).map(|_| rng.gen_bool(0.5)).collect();
    let ws = (0..n).map(|_| rng.gen_range(1..=5) as f64 * 0.25).collect();
    (xs, ys, ws)
}

pub fn samples<'a>(xs: &'a [Vec<f64>], ys: &[bool], ws: &[f64]) -> Vec<WeightedBinarySample<'a>> {
    xs.iter().zip(ys).zip(ws).map(|((x, &y), &w)| WeightedBinarySample::new(x, y, w)).collect()
}

/// Minimum weighted misrouting error over every feature and every
/// candidate threshold, by direct double loop.
pub fn brute_force_axis_error(xs: &[Vec<f64>], ys: &[bool], ws: &[f64]) -> f64 {
    let d = xs[0].len();
    let mut best = f64::INFINITY;
    for j in 0..d {
        let mut values: Vec<f64> = xs.iter().map(|x| x[j]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        let mut thresholds = vec![f64::NEG_INFINITY, f64::INFINITY];
        thresholds.extend(values.windows(2).map(|w| (w[0] + w[1]) / 2.0));
        for t in thresholds {
            let err: f64 = (0..xs.len()).filter(|&i| (xs[i][j] >= t) != ys[i]).map(|i| ws[i]).sum();
            best = best.min(err);
        }
    }
    best
}

/// Checks one random instance; returns a description of the mismatch.
pub fn check_axis_split(seed: u64) -> Result<(), String> {
    let mut rng = seeded_rng(seed ^ 0xA5A5);
    let n = rng.gen_range(1..=30);
    let d = rng.gen_range(1..=5);
    let (xs, ys, ws) = random_binary_problem(seed, n, d);
    let s = samples(&xs, &ys, &ws);
    let got = best_axis_split(&s).map_err(|e| e.to_string())?;
    let expected = brute_force_axis_error(&xs, &ys, &ws);
    let achieved: f64 = (0..n)
        .filter(|&i| (xs[i][got.feature] >= got.threshold) != ys[i])
        .map(|i| ws[i])
        .sum();
    if (got.weighted_error - expected).abs() > 1e-9 || (achieved - expected).abs() > 1e-9 {
        return Err(format!(
            "seed {seed}: reported {} achieved {achieved} brute force {expected}",
            got.weighted_error
        ));
    }
    Ok(())
}

/// Logistic problem with overlapping classes so the optimum is finite.
pub fn logistic_problem(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<bool>, Vec<f64>) {
    let mut rng = seeded_rng(seed);
    let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5)]).collect();
    let ys = xs
        .iter()
        .map(|x| {
            let z: f64 = 1.5 * x[0] - x[1] + 0.3;
            rng.gen::<f64>() < 1.0 / (1.0 + (-z).exp())
        })
        .collect();
    let ws = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
    (xs, ys, ws)
}

/// Minimum of the l1-logistic objective over `(w1, w2, b)`: a coarse grid
/// over `[-5, 5]^3` followed by compass search with shrinking steps.
pub fn grid_zoom_minimum(s: &[WeightedBinarySample<'_>], lambda: f64) -> f64 {
    let f = |p: &[f64; 3]| logistic_objective(s, &p[..2], p[2], lambda);
    let mut best = ([0.0; 3], f64::INFINITY);
    let steps: Vec<f64> = (0..=40).map(|k| -5.0 + 0.25 * k as f64).collect();
    for &a in &steps {
        for &b in &steps {
            for &c in &steps {
                let p = [a, b, c];
                let v = f(&p);
                if v < best.1 {
                    best = (p, v);
                }
            }
        }
    }
    let (mut p, mut v) = best;
    let mut step = 0.25;
    while step > 1e-10 {
        let mut moved = false;
        for k in 0..3 {
            for dir in [-1.0, 1.0] {
                let mut q = p;
                q[k] += dir * step;
                let fq = f(&q);
                if fq < v {
                    p = q;
                    v = fq;
                    moved = true;
                }
            }
        }
        if !moved {
            step /= 2.0;
        }
    }
    v
}

pub fn check_logistic(seed: u64) -> Result<(), String> {
    let lambda = 0.1;
    let (xs, ys, ws) = logistic_problem(seed, 50);
    let s = samples(&xs, &ys, &ws);
    let sol = l1_logistic(&s, lambda, None, LogisticOptions::default()).map_err(|e| e.to_string())?;
    let got = sol.objective(lambda);
    let oracle = grid_zoom_minimum(&s, lambda);
    if (got - oracle).abs() > 1e-4 {
        return Err(format!("seed {seed}: solver {got} oracle {oracle}"));
    }
    Ok(())
}

/// Random classification dataset on a coarse grid.
pub fn random_classification(seed: u64, n: usize, d: usize, classes: usize) -> Dataset {
    let mut rng = seeded_rng(seed);
    let x = (0..n * d).map(|_| rng.gen_range(0..8) as f64).collect();
    let y = (0..n).map(|_| rng.gen_range(1..=classes)).collect();
    Dataset::new(x, d, Targets::Classes(y), Task::Classification { classes }).unwrap()
}

fn errors_of_majority(data: &Dataset, rows: &[usize]) -> f64 {
    let k = data.task().dim();
    let mut counts = vec![0usize; k + 1];
    for &i in rows {
        counts[data.class_of(i)] += 1;
    }
    (rows.len() - counts.iter().copied().max().unwrap_or(0)) as f64
}

fn reach(tree: &Tree, data: &Dataset) -> Vec<Vec<usize>> {
    let mut sets = vec![Vec::new(); tree.len()];
    for i in 0..data.n_rows() {
        let mut id = tree.root();
        loop {
            sets[id].push(i);
            match tree.node(id).children {
                Some([l, r]) => id = if tree.node(id).kind.goes_right(data.row(i)) { r } else { l },
                None => break,
            }
        }
    }
    sets
}

/// `(loss, leaves)` of every pruned subtree rooted at `id`.
fn pruned_options(tree: &Tree, id: NodeId, sets: &[Vec<usize>], data: &Dataset) -> Vec<(f64, usize)> {
    let mut out = vec![(errors_of_majority(data, &sets[id]), 1)];
    if let Some([l, r]) = tree.node(id).children {
        let left = pruned_options(tree, l, sets, data);
        let right = pruned_options(tree, r, sets, data);
        for a in &left {
            for b in &right {
                out.push((a.0 + b.0, a.1 + b.1));
            }
        }
    }
    out
}

fn training_errors(tree: &Tree, data: &Dataset) -> f64 {
    (0..data.n_rows())
        .filter(|&i| tree.predict(data.row(i)).unwrap().as_class() != Some(data.class_of(i)))
        .count() as f64
}

/// Grows a tree of at most 15 nodes and compares the path's subtree at
/// several alphas against exhaustive enumeration of pruned subtrees.
pub fn check_pruning(seed: u64) -> Result<(), String> {
    let mut rng = seeded_rng(seed ^ 0x5EED);
    let n = rng.gen_range(8..=24);
    let data = random_classification(seed, n, 2, 2);
    let tree = grow(&data, &CartParams { max_depth: 3, ..CartParams::default() }).map_err(|e| e.to_string())?;
    if tree.len() > 15 {
        return Err(format!("seed {seed}: grown tree has {} nodes", tree.len()));
    }
    let path = pruning_path(&tree, &data).map_err(|e| e.to_string())?;
    let options = pruned_options(&tree, tree.root(), &reach(&tree, &data), &data);
    let top = path.alphas().last().copied().unwrap_or(0.0);
    let mut alphas = path.alphas();
    alphas.extend((0..5).map(|_| rng.gen_range(0.0..=top * 1.5 + 1.0)));
    for alpha in alphas {
        let chosen = path.at(alpha);
        let got = training_errors(chosen, &data) + alpha * chosen.num_leaves() as f64;
        let best = options.iter().map(|(l, k)| l + alpha * *k as f64).fold(f64::INFINITY, f64::min);
        if (got - best).abs() > 1e-9 {
            return Err(format!("seed {seed}, alpha {alpha}: path {got} exhaustive {best}"));
        }
    }
    Ok(())
}

/// Random depth-2 tree over random rows. Regression leaves are randomized
/// so that the children differ.
pub fn random_depth2(seed: u64, regression: bool) -> (Tree, Dataset) {
    let mut rng = seeded_rng(seed);
    let n = rng.gen_range(1..=16);
    let d = 2;
    let x: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    if regression {
        let task = Task::Regression { outputs: 1 };
        let y = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let data = Dataset::new(x, d, Targets::Values(y), task).unwrap();
        let base = complete_tree(2, d, task, seed).unwrap();
        let values: Vec<f64> = (0..base.len()).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let tree = base.rebuild_with(&|id| match base.node(id).kind {
            NodeKind::Leaf(_) => Some(NodeKind::Leaf(Output::Values(vec![values[id]]))),
            _ => None,
        });
        (tree, data)
    } else {
        let task = Task::Classification { classes: 3 };
        let y = (0..n).map(|_| rng.gen_range(1..=3)).collect();
        let data = Dataset::new(x, d, Targets::Classes(y), task).unwrap();
        (complete_tree(2, d, task, seed).unwrap(), data)
    }
}

/// For every internal node and every routing of its reaching rows, the tree
/// loss minus the weighted misrouting of the reduced problem is constant.
pub fn check_reduced_faithfulness(seed: u64) -> Result<(), String> {
    let (tree, data) = random_depth2(seed, seed % 2 == 1);
    let sets = reach(&tree, &data);
    let row_loss = |from: NodeId, i: usize| tree.output_from(from, data.row(i)).loss(data.target(i));
    for (node, rows) in sets.iter().enumerate() {
        let Some([l, r]) = tree.children(node) else { continue };
        let reduced = build_internal_reduced(&tree, node, &data).map_err(|e| e.to_string())?;
        if reduced.rows.iter().any(|i| !rows.contains(i)) {
            return Err(format!("seed {seed}, node {node}: reduced row outside the reaching set"));
        }
        let outside: f64 = (0..data.n_rows()).filter(|i| !rows.contains(i)).map(|i| row_loss(tree.root(), i)).sum();
        let left: Vec<f64> = rows.iter().map(|&i| row_loss(l, i)).collect();
        let right: Vec<f64> = rows.iter().map(|&i| row_loss(r, i)).collect();
        let mut constant = None;
        for mask in 0u32..(1 << rows.len()) {
            let goes_right = |k: usize| mask >> k & 1 == 1;
            let total: f64 = outside + (0..rows.len()).map(|k| if goes_right(k) { right[k] } else { left[k] }).sum::<f64>();
            let misrouted: f64 = reduced
                .rows
                .iter()
                .zip(&reduced.goes_right)
                .zip(&reduced.weights)
                .filter(|((row, want), _)| goes_right(rows.iter().position(|x| x == *row).unwrap()) != **want)
                .map(|(_, w)| w)
                .sum();
            let c = total - misrouted;
            match constant {
                None => constant = Some(c),
                Some(c0) if (c - c0).abs() > 1e-9 => {
                    return Err(format!("seed {seed}, node {node}, mask {mask:b}: {c} vs {c0}"));
                }
                _ => {}
            }
        }
    }
    Ok(())
}

pub type Check = fn(u64) -> Result<(), String>;

/// Runs `check` on `cases` consecutive seeds and collects the failures.
pub fn run_cases(cases: u64, check: Check) -> Vec<String> {
    (0..cases).filter_map(|s| check(s).err()).collect()
}
