//! Versioned JSON model files.
//!
//! ```text
//! {
//!   "version": 1,
//!   "task": {"kind": "classification", "classes": 3},
//!   "n_features": 4,
//!   "root": 0,
//!   "class_names": ["setosa", ...],        (optional)
//!   "schema": {...},                       (optional, CSV encoding)
//!   "nodes": [
//!     {"id": 0, "kind": "axis", "params": {"feature": 2, "threshold": 2.45}, "left": 1, "right": 2},
//!     {"id": 1, "kind": "oblique", "params": {"weights": [0.5, -1.0], "bias": 0.1}, "left": 3, "right": 4},
//!     {"id": 2, "kind": "leaf", "params": {"class": 1}, "left": null, "right": null},
//!     {"id": 5, "kind": "leaf", "params": {"value": [1.25]}, "left": null, "right": null}
//!   ]
//! }
//! ```
//!
//! Reals are written with shortest round-trip formatting, so a load after a
//! save reproduces every bit. Non-finite thresholds (split sentinels that
//! send everything one way) are written as the strings `"inf"` / `"-inf"`.

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use super::{Metadata, Node, NodeKind, Output, Tree};
use crate::dataset::Task;
use crate::error::{Error, Result};

pub const MODEL_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Real(f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else if self.0.is_nan() {
            s.serialize_str("nan")
        } else if self.0 > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(Real(v)),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(Real(f64::INFINITY)),
                "-inf" => Ok(Real(f64::NEG_INFINITY)),
                "nan" => Ok(Real(f64::NAN)),
                other => Err(de::Error::custom(format!("invalid real `{other}`"))),
            },
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
enum Params {
    Axis { feature: usize, threshold: Real },
    Oblique { weights: Vec<Real>, bias: Real },
    Leaf(LeafParams),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum LeafParams {
    Class { class: usize },
    Value { value: Vec<Real> },
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: usize,
    #[serde(flatten)]
    params: Params,
    left: Option<usize>,
    right: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRecord {
    version: u64,
    task: Task,
    n_features: usize,
    root: usize,
    #[serde(flatten)]
    meta: Metadata,
    nodes: Vec<NodeRecord>,
}

/// Serializes a tree (with its metadata) to the version-1 model format.
pub fn serialize(tree: &Tree) -> String {
    let nodes = tree
        .nodes()
        .iter()
        .enumerate()
        .map(|(id, node)| {
            let params = match &node.kind {
                NodeKind::Axis { feature, threshold } => Params::Axis { feature: *feature, threshold: Real(*threshold) },
                NodeKind::Oblique { weights, bias } => Params::Oblique {
                    weights: weights.iter().copied().map(Real).collect(),
                    bias: Real(*bias),
                },
                NodeKind::Leaf(Output::Class(c)) => Params::Leaf(LeafParams::Class { class: *c }),
                NodeKind::Leaf(Output::Values(v)) => Params::Leaf(LeafParams::Value {
                    value: v.iter().copied().map(Real).collect(),
                }),
            };
            NodeRecord {
                id,
                params,
                left: node.children.map(|c| c[0]),
                right: node.children.map(|c| c[1]),
            }
        })
        .collect();
    let record = ModelRecord {
        version: MODEL_VERSION,
        task: tree.task(),
        n_features: tree.n_features(),
        root: tree.root(),
        meta: tree.meta.clone(),
        nodes,
    };
    serde_json::to_string_pretty(&record).expect("model records always serialize")
}

/// Parses a model file, checking the version first and the tree invariants
/// after.
pub fn deserialize(text: &str) -> Result<Tree> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::MalformedModel(e.to_string()))?;
    let version = value
        .get("version")
        .ok_or_else(|| Error::MalformedModel("missing `version` field".into()))?
        .as_u64()
        .ok_or_else(|| Error::MalformedModel("`version` is not an unsigned integer".into()))?;
    if version != MODEL_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let record: ModelRecord = serde_json::from_value(value).map_err(|e| Error::MalformedModel(e.to_string()))?;

    let n = record.nodes.len();
    let mut slots: Vec<Option<Node>> = vec![None; n];
    for rec in record.nodes {
        if rec.id >= n {
            return Err(Error::MalformedModel(format!("node id {} out of range (have {n} nodes)", rec.id)));
        }
        if slots[rec.id].is_some() {
            return Err(Error::MalformedModel(format!("duplicate node id {}", rec.id)));
        }
        let kind = match rec.params {
            Params::Axis { feature, threshold } => NodeKind::Axis { feature, threshold: threshold.0 },
            Params::Oblique { weights, bias } => NodeKind::Oblique {
                weights: weights.into_iter().map(|w| w.0).collect(),
                bias: bias.0,
            },
            Params::Leaf(LeafParams::Class { class }) => NodeKind::Leaf(Output::Class(class)),
            Params::Leaf(LeafParams::Value { value }) => {
                NodeKind::Leaf(Output::Values(value.into_iter().map(|v| v.0).collect()))
            }
        };
        let children = match (rec.left, rec.right) {
            (Some(l), Some(r)) => Some([l, r]),
            (None, None) => None,
            _ => return Err(Error::MalformedModel(format!("node {} has exactly one child", rec.id))),
        };
        slots[rec.id] = Some(Node { kind, children, parent: None });
    }
    let nodes: Vec<Node> = slots.into_iter().map(|s| s.expect("ids are a permutation of 0..n")).collect();
    Ok(Tree::from_nodes(nodes, record.root, record.task, record.n_features)?.with_meta(record.meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::complete_tree;

    #[test]
    fn round_trip_random_oblique_tree() {
        for seed in 0..5 {
            let tree = complete_tree(5, 7, Task::Classification { classes: 4 }, seed).unwrap();
            let back = deserialize(&serialize(&tree)).unwrap();
            assert_eq!(back, tree);
        }
        let tree = complete_tree(3, 2, Task::Regression { outputs: 2 }, 1).unwrap();
        assert_eq!(deserialize(&serialize(&tree)).unwrap(), tree);
    }

    #[test]
    fn infinite_thresholds_survive() {
        let mut tree = complete_tree(1, 2, Task::Classification { classes: 2 }, 0).unwrap();
        let t = Tree::from_nodes(
            vec![
                Node { kind: NodeKind::Axis { feature: 1, threshold: f64::NEG_INFINITY }, children: Some([1, 2]), parent: None },
                tree.node(1).clone(),
                tree.node(2).clone(),
            ],
            0,
            tree.task(),
            2,
        )
        .unwrap();
        let text = serialize(&t);
        assert!(text.contains("\"-inf\""));
        assert_eq!(deserialize(&text).unwrap(), t);
        tree.set_kind(0, NodeKind::Axis { feature: 0, threshold: f64::INFINITY }).unwrap();
        assert_eq!(deserialize(&serialize(&tree)).unwrap(), tree);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(deserialize(""), Err(Error::MalformedModel(_))));
        assert!(matches!(deserialize("{}"), Err(Error::MalformedModel(_))));
        let text = serialize(&complete_tree(1, 1, Task::Classification { classes: 2 }, 0).unwrap());
        let v2 = text.replacen("\"version\": 1", "\"version\": 2", 1);
        assert!(matches!(deserialize(&v2), Err(Error::UnsupportedVersion(2))));
        let broken = text.replacen("\"left\": 1", "\"left\": 7", 1);
        assert!(matches!(deserialize(&broken), Err(Error::MalformedModel(_))));
    }
}
