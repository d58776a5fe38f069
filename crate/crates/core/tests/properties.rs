mod common;

use proptest::prelude::*;
use rand::Rng;
use taotree::bench::{fit, Algorithm, HyperParams, Settings};
use taotree::cart::{grow, prune_select, CartParams, PruneRule};
use taotree::dataset::{kfold, seeded_rng, stratified_kfold, Dataset, Targets, Task};
use taotree::solver::{best_axis_split, l1_logistic, LogisticOptions};
use taotree::tao::{build_internal_reduced, tao_fit, Mode, TaoParams};
use taotree::tree::{complete_tree, Node, NodeKind, Output, Tree};

fn blobs(seed: u64, n: usize) -> Dataset {
    let mut rng = seeded_rng(seed);
    let mut x = Vec::with_capacity(2 * n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = 1 + i % 2;
        let centre = if c == 1 { -1.0 } else { 1.0 };
        x.push(centre + rng.gen_range(-1.2..1.2));
        x.push(-centre + rng.gen_range(-1.2..1.2));
        y.push(c);
    }
    Dataset::new(x, 2, Targets::Classes(y), Task::Classification { classes: 2 }).unwrap()
}

fn wavy_regression(seed: u64, n: usize) -> Dataset {
    let mut rng = seeded_rng(seed);
    let x: Vec<f64> = (0..2 * n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let y = x.chunks(2).map(|r| (r[0] * 1.5).sin() + r[1] + rng.gen_range(-0.2..0.2)).collect();
    Dataset::new(x, 2, Targets::Values(y), Task::Regression { outputs: 1 }).unwrap()
}

fn random_axis_depth2(seed: u64) -> Tree {
    let mut rng = seeded_rng(seed ^ 0xAB);
    let nodes = (0..7)
        .map(|i| {
            let parent = if i == 0 { None } else { Some((i - 1) / 2) };
            if i < 3 {
                let kind = NodeKind::Axis { feature: rng.gen_range(0..2), threshold: rng.gen_range(-1.0..1.0) };
                Node { kind, children: Some([2 * i + 1, 2 * i + 2]), parent }
            } else {
                Node { kind: NodeKind::Leaf(Output::Class(rng.gen_range(1..=3))), children: None, parent }
            }
        })
        .collect();
    Tree::from_nodes(nodes, 0, Task::Classification { classes: 3 }, 2).unwrap()
}

/// One guarded axis update of `node`, as TAO applies it.
fn axis_update(tree: &Tree, node: usize, data: &Dataset) -> Tree {
    let reduced = build_internal_reduced(tree, node, data).unwrap();
    if reduced.is_empty() {
        return tree.clone();
    }
    let samples = reduced.samples(data);
    let split = best_axis_split(&samples).unwrap();
    let current = taotree::solver::weighted_error(&tree.node(node).kind, &samples);
    let mut out = tree.clone();
    if split.weighted_error < current {
        out.set_kind(node, split.to_kind()).unwrap();
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn axis_split_matches_brute_force(seed in any::<u64>()) {
        prop_assert_eq!(common::check_axis_split(seed), Ok(()));
    }

    #[test]
    fn axis_split_beats_trivial_splits(seed in any::<u64>(), n in 1usize..30, d in 1usize..5) {
        let (xs, ys, ws) = common::random_binary_problem(seed, n, d);
        let s = common::samples(&xs, &ys, &ws);
        let got = best_axis_split(&s).unwrap().weighted_error;
        let right_wrong: f64 = (0..n).filter(|&i| !ys[i]).map(|i| ws[i]).sum();
        let left_wrong: f64 = (0..n).filter(|&i| ys[i]).map(|i| ws[i]).sum();
        prop_assert!(got <= right_wrong.min(left_wrong) + 1e-12);
    }

    #[test]
    fn fold_assignment_is_deterministic(n in 2usize..200, k in 2usize..10, seed in any::<u64>()) {
        prop_assume!(k <= n);
        prop_assert_eq!(kfold(n, k, seed).unwrap(), kfold(n, k, seed).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn reduced_problem_is_faithful(seed in any::<u64>()) {
        prop_assert_eq!(common::check_reduced_faithfulness(seed), Ok(()));
    }

    #[test]
    fn same_depth_updates_commute(seed in any::<u64>()) {
        let (_, data) = common::random_depth2(seed, false);
        let tree = random_axis_depth2(seed);
        let a = axis_update(&axis_update(&tree, 1, &data), 2, &data);
        let b = axis_update(&axis_update(&tree, 2, &data), 1, &data);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn tao_trace_is_monotone(seed in any::<u64>(), lambda in 0.0f64..0.5) {
        let data = blobs(seed, 40);
        let init = complete_tree(2, 2, data.task(), seed).unwrap();
        let params = TaoParams::new(data.task().kind()).with_lambda(lambda);
        let (tree, trace) = tao_fit(&init, &data, &params, Mode::Oblique).unwrap();
        prop_assert!(trace.is_monotone(), "{:?}", trace.objectives());
        prop_assert!(tree.reach_counts(&data).iter().all(|&c| c > 0));

        let reg = wavy_regression(seed, 60);
        let cart = grow(&reg, &CartParams { max_depth: 3, ..CartParams::default() }).unwrap();
        let (tree, trace) = tao_fit(&cart, &reg, &TaoParams::new(reg.task().kind()), Mode::Axis).unwrap();
        prop_assert!(trace.is_monotone(), "{:?}", trace.objectives());
        prop_assert!(tree.reach_counts(&reg).iter().all(|&c| c > 0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn pruning_path_is_optimal(seed in any::<u64>()) {
        prop_assert_eq!(common::check_pruning(seed), Ok(()));
    }

    #[test]
    fn l1_norm_shrinks_with_lambda(seed in any::<u64>()) {
        let (xs, ys, ws) = common::logistic_problem(seed, 60);
        let s = common::samples(&xs, &ys, &ws);
        let norms: Vec<f64> = [0.01, 0.1, 1.0, 10.0, 100.0]
            .iter()
            .map(|&l| l1_logistic(&s, l, None, LogisticOptions::default()).unwrap().weights.iter().map(|w| w.abs()).sum())
            .collect();
        prop_assert!(norms.windows(2).all(|w| w[1] <= w[0] + 1e-4), "{:?}", norms);
        prop_assert_eq!(*norms.last().unwrap(), 0.0);
    }

    #[test]
    fn fits_are_reproducible(seed in any::<u64>()) {
        let data = blobs(seed, 60);
        let hp = HyperParams { depth: Some(2), lambda: Some(0.1), rule: None };
        let settings = Settings::default();
        for algo in [Algorithm::Cart, Algorithm::TaoAxis, Algorithm::TaoOblique] {
            let hp = if algo == Algorithm::TaoOblique { hp } else { HyperParams { rule: Some(PruneRule::OneSe), ..Default::default() } };
            prop_assert_eq!(fit(algo, &data, &hp, &settings, seed).unwrap(), fit(algo, &data, &hp, &settings, seed).unwrap());
        }
        prop_assert_eq!(stratified_kfold(&data, 5, seed).unwrap(), stratified_kfold(&data, 5, seed).unwrap());
        let a = prune_select(&data, &CartParams::default(), 5, PruneRule::OneSe, seed).unwrap();
        let b = prune_select(&data, &CartParams::default(), 5, PruneRule::OneSe, seed).unwrap();
        prop_assert_eq!(a.tree, b.tree);
    }

    #[test]
    fn tao_axis_never_worse_than_cart(seed in any::<u64>()) {
        let data = common::random_classification(seed, 60, 3, 3);
        let cart = prune_select(&data, &CartParams::default(), 5, PruneRule::Min, seed).unwrap().tree;
        let (tao, trace) = tao_fit(&cart, &data, &TaoParams::new(data.task().kind()), Mode::Axis).unwrap();
        let errors = |t: &Tree| (0..data.n_rows()).filter(|&i| t.predict(data.row(i)).unwrap().as_class() != Some(data.class_of(i))).count();
        prop_assert!(errors(&tao) <= errors(&cart));
        prop_assert!(trace.is_monotone());
    }
}

#[test]
fn logistic_matches_grid_zoom_oracle() {
    let failures = common::run_cases(20, common::check_logistic);
    assert!(failures.is_empty(), "{failures:#?}");
}
