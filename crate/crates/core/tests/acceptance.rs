//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero when any criterion fails. Criterion 10 (MNIST smoke) only
//! runs with `--ignored` or `--include-ignored`.

mod common;

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use taotree::bench::{evaluate, fit, run_experiment, Algorithm, ConfigFile, ExperimentConfig, HyperParams, ResultRow, Settings};
use taotree::cart::{prune_select, CartParams, PruneRule};
use taotree::dataset::{load_libsvm, parse_libsvm, seeded_rng, Dataset, TaskKind};
use taotree::tao::{tao_fit, Mode, TaoParams};
use taotree::tree::{complete_tree, Tree};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

struct Suite {
    experiments: Vec<ExperimentConfig>,
}

impl Suite {
    fn load() -> Suite {
        let file = ConfigFile::load(root().join("configs/acceptance.toml")).expect("acceptance config parses");
        Suite { experiments: file.experiment }
    }

    fn config(&self, dataset: &str, algorithm: Algorithm) -> &ExperimentConfig {
        self.experiments
            .iter()
            .find(|e| e.dataset == dataset && e.algorithm == algorithm)
            .unwrap_or_else(|| panic!("no {dataset}/{algorithm} experiment in the acceptance config"))
    }

    fn run(&self, dataset: &str, algorithm: Algorithm) -> Result<(ResultRow, Duration), String> {
        let config = self.config(dataset, algorithm);
        if !config.path.exists() {
            return Err(format!("{} not found", config.path.display()));
        }
        let start = Instant::now();
        let row = run_experiment(config).map_err(|e| e.to_string())?;
        Ok((row, start.elapsed()))
    }

    fn load_data(&self, dataset: &str) -> Option<Dataset> {
        let config = self.experiments.iter().find(|e| e.dataset == dataset)?;
        config.path.exists().then(|| config.load().expect("dataset loads").0)
    }
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn iris(suite: &Suite) -> Verdict {
    match suite.run("iris", Algorithm::TaoAxis) {
        Ok((row, t)) => verdict(
            row.test_mean >= 90.4 && secs(t) < 30.0,
            format!("test acc {:.2}±{:.2}% (>= 90.4), {:.1}s (< 30)", row.test_mean, row.test_std, secs(t)),
        ),
        Err(e) => verdict(false, e),
    }
}

fn balance(suite: &Suite) -> Verdict {
    let (tao, cart) = match (suite.run("balance-scale", Algorithm::TaoAxis), suite.run("balance-scale", Algorithm::Cart)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return verdict(false, e),
    };
    let total = secs(tao.1) + secs(cart.1);
    verdict(
        tao.0.test_mean >= 78.0 && (cart.0.test_mean - 79.0).abs() <= 4.0 && total < 60.0,
        format!(
            "TAO test acc {:.2}% (>= 78), CART {:.2}% (79±4), {total:.1}s (< 60)",
            tao.0.test_mean, cart.0.test_mean
        ),
    )
}

fn banknote(result: &Result<(ResultRow, Duration), String>) -> Verdict {
    match result {
        Ok((row, t)) => verdict(
            row.test_mean >= 97.5 && secs(*t) < 120.0,
            format!("test acc {:.2}% (>= 97.5), {:.1}s (< 120)", row.test_mean, secs(*t)),
        ),
        Err(e) => verdict(false, e.clone()),
    }
}

fn breast_cancer(suite: &Suite) -> Verdict {
    match suite.run("breast-cancer", Algorithm::TaoOblique) {
        Ok((row, t)) => verdict(
            row.test_mean >= 95.0 && secs(t) < 120.0,
            format!("test acc {:.2}±{:.2}% (>= 95), {:.1}s (< 120)", row.test_mean, row.test_std, secs(t)),
        ),
        Err(e) => verdict(false, e),
    }
}

fn abalone(suite: &Suite) -> Verdict {
    let (oblique, axis) = match (suite.run("abalone", Algorithm::TaoOblique), suite.run("abalone", Algorithm::TaoAxis)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return verdict(false, e),
    };
    let total = secs(oblique.1) + secs(axis.1);
    verdict(
        oblique.0.test_mean <= 2.45 && axis.0.test_mean <= 2.7 && total < 300.0,
        format!(
            "oblique test RMSE {:.3} (<= 2.45), axis {:.3} (<= 2.7), {total:.1}s (< 300)",
            oblique.0.test_mean, axis.0.test_mean
        ),
    )
}

fn banknote_size(suite: &Suite, oblique: &Result<(ResultRow, Duration), String>) -> Verdict {
    let oblique = match oblique {
        Ok((row, _)) => row,
        Err(e) => return verdict(false, e.clone()),
    };
    let cart = match suite.run("banknote", Algorithm::Cart) {
        Ok((row, _)) => row,
        Err(e) => return verdict(false, e),
    };
    verdict(
        oblique.leaves <= 15.0 && oblique.depth <= 6.0 && oblique.leaves < cart.leaves,
        format!(
            "oblique leaves {:.1} (<= 15, CART {:.1}), depth {:.1} (<= 6)",
            oblique.leaves, cart.leaves, oblique.depth
        ),
    )
}

/// Axis TAO from the pruned CART tree and oblique TAO from a random complete
/// tree, on the full dataset.
struct DatasetFits {
    name: &'static str,
    axis_monotone: bool,
    oblique_monotone: bool,
    cart_loss: f64,
    tao_loss: f64,
}

fn training_loss(tree: &Tree, data: &Dataset) -> f64 {
    (0..data.n_rows()).map(|i| tree.predict(data.row(i)).unwrap().loss(data.target(i))).sum()
}

fn desk_fits(suite: &Suite) -> (Vec<DatasetFits>, Vec<&'static str>) {
    let mut fits = Vec::new();
    let mut missing = Vec::new();
    for name in ["iris", "balance-scale", "breast-cancer", "banknote", "abalone"] {
        let Some(data) = suite.load_data(name) else {
            missing.push(name);
            continue;
        };
        let task = data.task().kind();
        let cart = prune_select(&data, &CartParams::default(), 10, PruneRule::OneSe, 0).unwrap().tree;
        let (tao, axis_trace) = tao_fit(&cart, &data, &TaoParams::new(task), Mode::Axis).unwrap();
        let lambda = if task == TaskKind::Regression { 1.0 } else { 0.1 };
        let init = complete_tree(3, data.n_features(), data.task(), 0).unwrap();
        let (_, oblique_trace) = tao_fit(&init, &data, &TaoParams::new(task).with_lambda(lambda), Mode::Oblique).unwrap();
        fits.push(DatasetFits {
            name,
            axis_monotone: axis_trace.is_monotone(),
            oblique_monotone: oblique_trace.is_monotone(),
            cart_loss: training_loss(&cart, &data),
            tao_loss: training_loss(&tao, &data),
        });
    }
    (fits, missing)
}

fn missing_note(missing: &[&str]) -> String {
    if missing.is_empty() {
        String::new()
    } else {
        format!("; not checked (data absent): {}", missing.join(", "))
    }
}

fn monotonicity(fits: &[DatasetFits], missing: &[&str]) -> Verdict {
    let bad: Vec<String> = fits
        .iter()
        .filter(|f| !(f.axis_monotone && f.oblique_monotone))
        .map(|f| format!("{} (axis {}, oblique {})", f.name, f.axis_monotone, f.oblique_monotone))
        .collect();
    let names: Vec<&str> = fits.iter().map(|f| f.name).collect();
    verdict(
        bad.is_empty() && !fits.is_empty(),
        format!("non-increasing traces on {}{}{}", names.join(", "), if bad.is_empty() { String::new() } else { format!("; violated: {}", bad.join(", ")) }, missing_note(missing)),
    )
}

fn improvement(fits: &[DatasetFits], missing: &[&str]) -> Verdict {
    let parts: Vec<String> = fits.iter().map(|f| format!("{} {:.4} -> {:.4}", f.name, f.cart_loss, f.tao_loss)).collect();
    verdict(
        fits.iter().all(|f| f.tao_loss <= f.cart_loss + 1e-9) && !fits.is_empty(),
        format!("training loss CART -> TAO: {}{}", parts.join(", "), missing_note(missing)),
    )
}

fn oracles() -> Verdict {
    let start = Instant::now();
    let suites: [(&str, u64, common::Check); 4] = [
        ("axis split", 100, common::check_axis_split),
        ("l1 logistic", 20, common::check_logistic),
        ("pruning path", 20, common::check_pruning),
        ("reduced problem", 50, common::check_reduced_faithfulness),
    ];
    let mut failures = Vec::new();
    let mut parts = Vec::new();
    for (name, cases, check) in suites {
        let bad = common::run_cases(cases, check);
        parts.push(format!("{name} {}/{cases}", cases as usize - bad.len()));
        failures.extend(bad);
    }
    let t = secs(start.elapsed());
    verdict(
        failures.is_empty() && t < 120.0,
        format!("{}, {t:.1}s (< 120){}", parts.join(", "), failures.first().map(|f| format!("; first failure: {f}")).unwrap_or_default()),
    )
}

fn mnist() -> Verdict {
    let train_path = root().join("data/mnist.scale");
    let test_path = root().join("data/mnist.scale.t");
    if !train_path.exists() || !test_path.exists() {
        return verdict(false, format!("{} / {} not found", train_path.display(), test_path.display()));
    }
    let start = Instant::now();
    let full = load_libsvm(&train_path, TaskKind::Classification).unwrap();
    let text = std::fs::read_to_string(&test_path).unwrap();
    let test = parse_libsvm(&text, TaskKind::Classification, full.n_features()).unwrap();
    if test.class_names() != full.class_names() {
        return verdict(false, "train and test label sets differ");
    }
    let mut rows: Vec<usize> = (0..full.n_rows()).collect();
    rows.shuffle(&mut seeded_rng(0));
    rows.truncate(5000);
    let train = full.subset(&rows);
    let hp = HyperParams { depth: Some(6), lambda: Some(0.01), rule: None };
    let tree = fit(Algorithm::TaoOblique, &train, &hp, &Settings::default(), 0).unwrap();
    let acc = evaluate(&tree, &test).unwrap();
    let t = secs(start.elapsed());
    verdict(acc >= 85.0 && t < 900.0, format!("test acc {acc:.2}% (>= 85), {t:.0}s (< 900)"))
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return;
    }
    let include_ignored = args.iter().any(|a| a == "--ignored" || a == "--include-ignored");
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with("--")).collect();
    if !filters.is_empty() && !filters.iter().any(|f| "acceptance".contains(f.as_str())) {
        return;
    }

    let strict = std::env::var_os("ACCEPTANCE_STRICT").is_some();
    let suite = Suite::load();
    let (mut failed, mut absent) = (0, 0);
    let mut report = |n: u32, name: &str, v: Verdict| {
        println!("criterion {n:>2} {name:<22} {}  {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        match (v.pass, v.detail.ends_with("not found")) {
            (true, _) => {}
            (false, true) => absent += 1,
            (false, false) => failed += 1,
        }
    };
    report(1, "iris tao-axis", iris(&suite));
    report(2, "balance-scale", balance(&suite));
    let banknote_run = suite.run("banknote", Algorithm::TaoOblique);
    report(3, "banknote tao-oblique", banknote(&banknote_run));
    report(4, "breast-cancer oblique", breast_cancer(&suite));
    report(5, "abalone regression", abalone(&suite));
    report(6, "banknote tree size", banknote_size(&suite, &banknote_run));
    let (fits, missing) = desk_fits(&suite);
    report(7, "monotone objective", monotonicity(&fits, &missing));
    report(8, "improves on CART", improvement(&fits, &missing));
    report(9, "oracle suites", oracles());
    if include_ignored {
        report(10, "mnist smoke", mnist());
    } else {
        println!("criterion 10 {:<22} SKIP  ignored by default; run with --ignored", "mnist smoke");
    }
    if failed + absent > 0 {
        println!("{} criteria failed ({absent} for missing data)", failed + absent);
    }
    if failed > 0 || (strict && absent > 0) {
        std::process::exit(1);
    }
}
