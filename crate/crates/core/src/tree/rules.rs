use std::fmt::Write as _;

use super::{NodeKind, Output, Tree};

/// One IF-THEN rule per leaf, in preorder: the conjunction of the edge
/// conditions from the root, then `→` and the leaf output. Oblique
/// conditions list only nonzero weights.
///
/// ```text
/// x[2] < 2.45 → class 1
/// x[2] ≥ 2.45 AND 0.5·x[0] - 1.25·x[3] < 0.1 → class 2
/// ```
pub fn export_rules(tree: &Tree) -> String {
    let mut out = String::new();
    let mut path: Vec<String> = Vec::new();
    walk(tree, tree.root(), &mut path, &mut out);
    out
}

fn walk(tree: &Tree, id: usize, path: &mut Vec<String>, out: &mut String) {
    let node = tree.node(id);
    match node.children {
        None => {
            let cond = if path.is_empty() { "TRUE".to_string() } else { path.join(" AND ") };
            let NodeKind::Leaf(output) = &node.kind else { unreachable!() };
            writeln!(out, "{cond} → {}", describe(tree, output)).unwrap();
        }
        Some([l, r]) => {
            let (lhs, rhs) = split_sides(&node.kind);
            path.push(format!("{lhs} < {rhs}"));
            walk(tree, l, path, out);
            path.pop();
            path.push(format!("{lhs} ≥ {rhs}"));
            walk(tree, r, path, out);
            path.pop();
        }
    }
}

fn split_sides(kind: &NodeKind) -> (String, String) {
    match kind {
        NodeKind::Axis { feature, threshold } => (format!("x[{feature}]"), threshold.to_string()),
        NodeKind::Oblique { weights, bias } => {
            let mut lhs = String::new();
            for (j, &w) in weights.iter().enumerate().filter(|(_, w)| **w != 0.0) {
                if lhs.is_empty() {
                    write!(lhs, "{w}·x[{j}]").unwrap();
                } else if w < 0.0 {
                    write!(lhs, " - {}·x[{j}]", -w).unwrap();
                } else {
                    write!(lhs, " + {w}·x[{j}]").unwrap();
                }
            }
            if lhs.is_empty() {
                lhs.push('0');
            }
            (lhs, bias.to_string())
        }
        NodeKind::Leaf(_) => unreachable!("leaves have no condition"),
    }
}

fn describe(tree: &Tree, output: &Output) -> String {
    match output {
        Output::Class(c) => match tree.meta.class_names.get(c - 1) {
            Some(name) => format!("class {c} ({name})"),
            None => format!("class {c}"),
        },
        Output::Values(v) if v.len() == 1 => format!("value {}", v[0]),
        Output::Values(v) => {
            let parts: Vec<String> = v.iter().map(f64::to_string).collect();
            format!("value ({})", parts.join(", "))
        }
    }
}
