//! Binary decision trees stored as an index-addressed arena.
//!
//! Internal nodes hold an axis-aligned split (`x[j] >= t`) or an oblique
//! split (`w . x >= b`); an instance goes to the right child when the test
//! holds and to the left child otherwise. Leaves hold a constant output.

mod model_file;
mod rules;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{seeded_rng, CsvSchema, Dataset, Task, TargetRef};
use crate::error::{Error, Result};

pub use model_file::{deserialize, serialize, MODEL_VERSION};
pub use rules::export_rules;

pub type NodeId = usize;

/// Constant prediction stored at a leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Output {
    /// Class index in `1..=K`.
    Class(usize),
    /// Real output vector of dimension `K`.
    Values(Vec<f64>),
}

impl Output {
    /// 0/1 loss for classes, squared Euclidean distance for real vectors.
    #[inline]
    pub fn loss(&self, target: TargetRef<'_>) -> f64 {
        match (self, target) {
            (Output::Class(c), TargetRef::Class(y)) => (*c != y) as u8 as f64,
            (Output::Values(v), TargetRef::Values(y)) => v.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum(),
            _ => panic!("leaf output kind does not match the target kind"),
        }
    }

    pub fn as_class(&self) -> Option<usize> {
        match self {
            Output::Class(c) => Some(*c),
            Output::Values(_) => None,
        }
    }

    fn fits(&self, task: Task) -> bool {
        match (self, task) {
            (Output::Class(c), Task::Classification { classes }) => (1..=classes).contains(c),
            (Output::Values(v), Task::Regression { outputs }) => v.len() == outputs && v.iter().all(|x| x.is_finite()),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Axis { feature: usize, threshold: f64 },
    Oblique { weights: Vec<f64>, bias: f64 },
    Leaf(Output),
}

impl NodeKind {
    pub fn is_leaf(&self) -> bool {
        matches!(self, NodeKind::Leaf(_))
    }

    /// Routing rule of a split node: `true` means the right child. Leaves
    /// never route.
    #[inline]
    pub fn goes_right(&self, x: &[f64]) -> bool {
        match self {
            NodeKind::Axis { feature, threshold } => x[*feature] >= *threshold,
            NodeKind::Oblique { weights, bias } => dot(weights, x) >= *bias,
            NodeKind::Leaf(_) => panic!("leaves do not route"),
        }
    }

    /// `||w||_1` for oblique splits, 0 otherwise.
    pub fn l1_norm(&self) -> f64 {
        match self {
            NodeKind::Oblique { weights, .. } => weights.iter().map(|w| w.abs()).sum(),
            _ => 0.0,
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub kind: NodeKind,
    /// `[left, right]` for split nodes, `None` for leaves.
    pub children: Option<[NodeId; 2]>,
    pub parent: Option<NodeId>,
}

/// Labels carried alongside a tree so that model files are self-describing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub class_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<CsvSchema>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    root: NodeId,
    task: Task,
    n_features: usize,
    pub meta: Metadata,
}

/// Node-kind of a tree's splits, used to check TAO mode against the init.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitFamily {
    /// Only a leaf, no splits.
    None,
    Axis,
    Oblique,
    Mixed,
}

impl Tree {
    /// A one-leaf tree.
    pub fn leaf(task: Task, n_features: usize, output: Output) -> Result<Tree> {
        Tree::from_nodes(
            vec![Node { kind: NodeKind::Leaf(output), children: None, parent: None }],
            0,
            task,
            n_features,
        )
    }

    /// Builds a tree from raw nodes, recomputing parent links and checking
    /// every structural invariant.
    pub fn from_nodes(mut nodes: Vec<Node>, root: NodeId, task: Task, n_features: usize) -> Result<Tree> {
        if n_features == 0 {
            return Err(Error::invalid("tree needs D >= 1"));
        }
        if root >= nodes.len() {
            return Err(Error::MalformedModel(format!("root {root} out of range")));
        }
        for node in nodes.iter_mut() {
            node.parent = None;
        }
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![root];
        seen[root] = true;
        while let Some(id) = stack.pop() {
            let node = &nodes[id];
            match (&node.kind, node.children) {
                (NodeKind::Leaf(out), None) => {
                    if !out.fits(task) {
                        return Err(Error::MalformedModel(format!("leaf {id} output does not match the task")));
                    }
                }
                (NodeKind::Leaf(_), Some(_)) => {
                    return Err(Error::MalformedModel(format!("leaf {id} has children")));
                }
                (_, None) => return Err(Error::MalformedModel(format!("split node {id} lacks children"))),
                (kind, Some(children)) => {
                    match kind {
                        NodeKind::Axis { feature, threshold } => {
                            if *feature >= n_features {
                                return Err(Error::MalformedModel(format!(
                                    "node {id} splits on feature {feature} but D = {n_features}"
                                )));
                            }
                            if threshold.is_nan() {
                                return Err(Error::MalformedModel(format!("node {id} has a NaN threshold")));
                            }
                        }
                        NodeKind::Oblique { weights, bias } => {
                            if weights.len() != n_features {
                                return Err(Error::MalformedModel(format!(
                                    "node {id} has {} weights but D = {n_features}",
                                    weights.len()
                                )));
                            }
                            if weights.iter().any(|w| !w.is_finite()) || bias.is_nan() {
                                return Err(Error::MalformedModel(format!("node {id} has non-finite weights")));
                            }
                        }
                        NodeKind::Leaf(_) => unreachable!(),
                    }
                    for c in children {
                        if c >= nodes.len() {
                            return Err(Error::MalformedModel(format!("node {id} has child {c} out of range")));
                        }
                        if seen[c] {
                            return Err(Error::MalformedModel(format!("node {c} reached twice (cycle or shared child)")));
                        }
                        seen[c] = true;
                        stack.push(c);
                    }
                    for c in children {
                        nodes[c].parent = Some(id);
                    }
                }
            }
        }
        if let Some(orphan) = seen.iter().position(|s| !s) {
            return Err(Error::MalformedModel(format!("node {orphan} is unreachable from the root")));
        }
        Ok(Tree { nodes, root, task, n_features, meta: Metadata::default() })
    }

    pub fn with_meta(mut self, meta: Metadata) -> Tree {
        self.meta = meta;
        self
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn children(&self, id: NodeId) -> Option<[NodeId; 2]> {
        self.nodes[id].children
    }

    /// Replaces a node's parameters, keeping its place in the structure.
    /// Split nodes accept split kinds and leaves accept leaf outputs.
    pub fn set_kind(&mut self, id: NodeId, kind: NodeKind) -> Result<()> {
        let node = &self.nodes[id];
        match (&kind, node.children) {
            (NodeKind::Leaf(out), None) => {
                if !out.fits(self.task) {
                    return Err(Error::invalid("leaf output does not match the task"));
                }
            }
            (NodeKind::Axis { feature, .. }, Some(_)) if *feature < self.n_features => {}
            (NodeKind::Oblique { weights, .. }, Some(_)) if weights.len() == self.n_features => {}
            _ => return Err(Error::invalid(format!("incompatible parameters for node {id}"))),
        }
        self.nodes[id].kind = kind;
        Ok(())
    }

    /// Leaf reached by `x` starting from `from`. No dimension check.
    #[inline]
    pub fn leaf_from(&self, from: NodeId, x: &[f64]) -> NodeId {
        let mut id = from;
        while let Some([l, r]) = self.nodes[id].children {
            id = if self.nodes[id].kind.goes_right(x) { r } else { l };
        }
        id
    }

    #[inline]
    pub fn leaf_of(&self, x: &[f64]) -> NodeId {
        self.leaf_from(self.root, x)
    }

    /// Output of the subtree rooted at `from` for `x`.
    #[inline]
    pub fn output_from(&self, from: NodeId, x: &[f64]) -> &Output {
        match &self.nodes[self.leaf_from(from, x)].kind {
            NodeKind::Leaf(out) => out,
            _ => unreachable!("routing ends at a leaf"),
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<&Output> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, got: x.len() });
        }
        Ok(self.output_from(self.root, x))
    }

    pub fn predict_all(&self, data: &Dataset) -> Result<Vec<Output>> {
        if data.n_features() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, got: data.n_features() });
        }
        Ok(data.rows().map(|x| self.output_from(self.root, x).clone()).collect())
    }

    /// Depth of every node (root = 0), indexed by node id.
    pub fn node_depths(&self) -> Vec<usize> {
        let mut depth = vec![0; self.nodes.len()];
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            if let Some(children) = self.nodes[id].children {
                for c in children {
                    depth[c] = depth[id] + 1;
                    stack.push(c);
                }
            }
        }
        depth
    }

    /// Maximum root-to-leaf depth; a single leaf has depth 0.
    pub fn depth(&self) -> usize {
        self.node_depths().into_iter().max().unwrap_or(0)
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.children.is_none()).count()
    }

    /// Node ids grouped by depth, root level first; ids ascend within a level.
    pub fn levels(&self) -> Vec<Vec<NodeId>> {
        let depth = self.node_depths();
        let max = depth.iter().copied().max().unwrap_or(0);
        let mut levels = vec![Vec::new(); max + 1];
        for (id, &d) in depth.iter().enumerate() {
            levels[d].push(id);
        }
        levels
    }

    /// Node ids in preorder (node, left subtree, right subtree).
    pub fn preorder(&self) -> Vec<NodeId> {
        let mut order = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(id) = stack.pop() {
            order.push(id);
            if let Some([l, r]) = self.nodes[id].children {
                stack.push(r);
                stack.push(l);
            }
        }
        order
    }

    pub fn is_ancestor(&self, ancestor: NodeId, mut node: NodeId) -> bool {
        while let Some(p) = self.nodes[node].parent {
            if p == ancestor {
                return true;
            }
            node = p;
        }
        false
    }

    /// `lambda`-free penalty term: sum of `||w||_1` over oblique nodes.
    pub fn l1_penalty(&self) -> f64 {
        self.nodes.iter().map(|n| n.kind.l1_norm()).sum()
    }

    pub fn split_family(&self) -> SplitFamily {
        let mut axis = false;
        let mut oblique = false;
        for n in &self.nodes {
            match n.kind {
                NodeKind::Axis { .. } => axis = true,
                NodeKind::Oblique { .. } => oblique = true,
                NodeKind::Leaf(_) => {}
            }
        }
        match (axis, oblique) {
            (false, false) => SplitFamily::None,
            (true, false) => SplitFamily::Axis,
            (false, true) => SplitFamily::Oblique,
            (true, true) => SplitFamily::Mixed,
        }
    }

    /// Number of training rows reaching each node.
    pub fn reach_counts(&self, data: &Dataset) -> Vec<usize> {
        let mut counts = vec![0; self.nodes.len()];
        for x in data.rows() {
            let mut id = self.root;
            counts[id] += 1;
            while let Some([l, r]) = self.nodes[id].children {
                id = if self.nodes[id].kind.goes_right(x) { r } else { l };
                counts[id] += 1;
            }
        }
        counts
    }

    /// Copies the subtree at `id` into a fresh preorder arena.
    pub fn subtree(&self, id: NodeId) -> Tree {
        let mut nodes = Vec::new();
        self.copy_into(id, None, &mut nodes, &|_| None);
        Tree { nodes, root: 0, task: self.task, n_features: self.n_features, meta: self.meta.clone() }
    }

    /// Preorder copy of the tree where `replace` may substitute a node (and
    /// drop its subtree) by returning a new leaf kind.
    pub fn rebuild_with(&self, replace: &dyn Fn(NodeId) -> Option<NodeKind>) -> Tree {
        let mut nodes = Vec::new();
        self.copy_into(self.root, None, &mut nodes, replace);
        Tree { nodes, root: 0, task: self.task, n_features: self.n_features, meta: self.meta.clone() }
    }

    fn copy_into(
        &self,
        id: NodeId,
        parent: Option<NodeId>,
        out: &mut Vec<Node>,
        replace: &dyn Fn(NodeId) -> Option<NodeKind>,
    ) -> NodeId {
        let new_id = out.len();
        if let Some(kind) = replace(id) {
            out.push(Node { kind, children: None, parent });
            return new_id;
        }
        out.push(Node { kind: self.nodes[id].kind.clone(), children: None, parent });
        if let Some([l, r]) = self.nodes[id].children {
            let nl = self.copy_into(l, Some(new_id), out, replace);
            let nr = self.copy_into(r, Some(new_id), out, replace);
            out[new_id].children = Some([nl, nr]);
        }
        new_id
    }

    /// Removes branches that no training row reaches. An internal node
    /// with a single reached child is replaced by that child's (pruned)
    /// subtree, so predictions on `data` are unchanged. A tree without dead
    /// branches is returned as-is.
    pub fn prune_dead(&self, data: &Dataset) -> Tree {
        let counts = self.reach_counts(data);
        let dead = self.nodes.iter().enumerate().any(|(id, _)| counts[id] == 0);
        if !dead || counts[self.root] == 0 {
            return self.clone();
        }
        let mut nodes = Vec::new();
        self.copy_live(self.root, None, &counts, &mut nodes);
        Tree { nodes, root: 0, task: self.task, n_features: self.n_features, meta: self.meta.clone() }
    }

    fn copy_live(&self, id: NodeId, parent: Option<NodeId>, counts: &[usize], out: &mut Vec<Node>) -> NodeId {
        if let Some([l, r]) = self.nodes[id].children {
            if counts[l] == 0 && counts[r] > 0 {
                return self.copy_live(r, parent, counts, out);
            }
            if counts[r] == 0 && counts[l] > 0 {
                return self.copy_live(l, parent, counts, out);
            }
        }
        let new_id = out.len();
        out.push(Node { kind: self.nodes[id].kind.clone(), children: None, parent });
        if let Some([l, r]) = self.nodes[id].children {
            let nl = self.copy_live(l, Some(new_id), counts, out);
            let nr = self.copy_live(r, Some(new_id), counts, out);
            out[new_id].children = Some([nl, nr]);
        }
        new_id
    }
}

/// A complete binary tree of the given depth with random oblique splits
/// (weights and bias i.i.d. uniform on `[-1, 1]`) and random leaves
/// (uniform class for classification, zeros for regression). Nodes are laid
/// out heap-style: children of `i` are `2i + 1` and `2i + 2`.
pub fn complete_tree(depth: usize, n_features: usize, task: Task, seed: u64) -> Result<Tree> {
    let n_nodes = u32::try_from(depth + 1)
        .ok()
        .and_then(|s| 1usize.checked_shl(s))
        .filter(|&n| n <= u32::MAX as usize + 1)
        .map(|n| n - 1)
        .ok_or_else(|| Error::invalid(format!("depth {depth} overflows the node index type")))?;
    let n_internal = n_nodes / 2;
    let mut rng = seeded_rng(seed);
    let mut nodes = Vec::with_capacity(n_nodes);
    for i in 0..n_nodes {
        let parent = if i == 0 { None } else { Some((i - 1) / 2) };
        if i < n_internal {
            let weights = (0..n_features).map(|_| rng.gen_range(-1.0..=1.0)).collect();
            let bias = rng.gen_range(-1.0..=1.0);
            nodes.push(Node {
                kind: NodeKind::Oblique { weights, bias },
                children: Some([2 * i + 1, 2 * i + 2]),
                parent,
            });
        } else {
            let output = match task {
                Task::Classification { classes } => Output::Class(rng.gen_range(1..=classes)),
                Task::Regression { outputs } => Output::Values(vec![0.0; outputs]),
            };
            nodes.push(Node { kind: NodeKind::Leaf(output), children: None, parent });
        }
    }
    Tree::from_nodes(nodes, 0, task, n_features)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::dataset::Targets;

    const CLS2: Task = Task::Classification { classes: 2 };

    pub(crate) fn stump(kind: NodeKind, left: Output, right: Output, task: Task, d: usize) -> Tree {
        Tree::from_nodes(
            vec![
                Node { kind, children: Some([1, 2]), parent: None },
                Node { kind: NodeKind::Leaf(left), children: None, parent: None },
                Node { kind: NodeKind::Leaf(right), children: None, parent: None },
            ],
            0,
            task,
            d,
        )
        .unwrap()
    }

    #[test]
    fn single_leaf_predicts_constant() {
        let t = Tree::leaf(CLS2, 3, Output::Class(2)).unwrap();
        assert_eq!(t.predict(&[9.0, -1.0, 0.0]).unwrap(), &Output::Class(2));
        assert_eq!((t.depth(), t.num_leaves()), (0, 1));
    }

    #[test]
    fn axis_boundary_goes_right() {
        let t = stump(NodeKind::Axis { feature: 0, threshold: 0.5 }, Output::Class(1), Output::Class(2), CLS2, 2);
        assert_eq!(t.predict(&[0.4, 0.0]).unwrap(), &Output::Class(1));
        assert_eq!(t.predict(&[0.5, 0.0]).unwrap(), &Output::Class(2));
        assert!(matches!(t.predict(&[0.5]), Err(Error::DimensionMismatch { expected: 2, got: 1 })));
    }

    #[test]
    fn oblique_dot_product_routing() {
        let t = stump(
            NodeKind::Oblique { weights: vec![1.0, 1.0], bias: 1.0 },
            Output::Class(1),
            Output::Class(2),
            CLS2,
            2,
        );
        // 1*0.6 + 1*0.6 = 1.2 >= 1
        assert_eq!(t.predict(&[0.6, 0.6]).unwrap(), &Output::Class(2));
        assert_eq!(t.predict(&[0.4, 0.5]).unwrap(), &Output::Class(1));
    }

    #[test]
    fn complete_tree_shapes() {
        let t = complete_tree(0, 3, CLS2, 1).unwrap();
        assert_eq!((t.len(), t.num_leaves(), t.depth()), (1, 1, 0));
        let t = complete_tree(3, 3, CLS2, 1).unwrap();
        assert_eq!((t.num_leaves(), t.depth()), (8, 3));
        let t = complete_tree(8, 3, CLS2, 1).unwrap();
        assert_eq!((t.len(), t.num_leaves()), (511, 256));
        assert_eq!(complete_tree(5, 4, CLS2, 77).unwrap(), complete_tree(5, 4, CLS2, 77).unwrap());
        assert_ne!(complete_tree(5, 4, CLS2, 77).unwrap(), complete_tree(5, 4, CLS2, 78).unwrap());
        assert!(complete_tree(64, 3, CLS2, 1).is_err());
        for n in complete_tree(4, 3, CLS2, 9).unwrap().nodes() {
            match &n.kind {
                NodeKind::Oblique { weights, bias } => {
                    assert!(weights.iter().chain([bias]).all(|v| (-1.0..=1.0).contains(v)))
                }
                NodeKind::Leaf(Output::Class(c)) => assert!((1..=2).contains(c)),
                _ => panic!("unexpected node"),
            }
        }
        let r = complete_tree(2, 3, Task::Regression { outputs: 1 }, 1).unwrap();
        assert!(r.nodes().iter().all(|n| !matches!(&n.kind, NodeKind::Leaf(Output::Values(v)) if v != &[0.0])));
    }

    #[test]
    fn structural_validation() {
        let leaf = |c| Node { kind: NodeKind::Leaf(Output::Class(c)), children: None, parent: None };
        // cycle: node 1 points back at the root
        let bad = vec![
            Node { kind: NodeKind::Axis { feature: 0, threshold: 0.0 }, children: Some([1, 2]), parent: None },
            Node { kind: NodeKind::Axis { feature: 0, threshold: 0.0 }, children: Some([0, 2]), parent: None },
            leaf(1),
        ];
        assert!(Tree::from_nodes(bad, 0, CLS2, 1).is_err());
        // orphan node
        assert!(Tree::from_nodes(vec![leaf(1), leaf(2)], 0, CLS2, 1).is_err());
        // class out of range
        assert!(Tree::from_nodes(vec![leaf(3)], 0, CLS2, 1).is_err());
        // feature out of range
        let bad = vec![
            Node { kind: NodeKind::Axis { feature: 4, threshold: 0.0 }, children: Some([1, 2]), parent: None },
            leaf(1),
            leaf(2),
        ];
        assert!(Tree::from_nodes(bad, 0, CLS2, 2).is_err());
    }

    #[test]
    fn prune_dead_promotes_live_child() {
        // Root with zero weights and zero bias: 0 >= 0 sends everything right.
        let mut t = complete_tree(2, 2, CLS2, 3).unwrap();
        t.set_kind(0, NodeKind::Oblique { weights: vec![0.0, 0.0], bias: 0.0 }).unwrap();
        let data = Dataset::new(
            vec![0.1, 0.2, -0.5, 0.9, 0.3, -0.3],
            2,
            Targets::Classes(vec![1, 2, 1]),
            CLS2,
        )
        .unwrap();
        let pruned = t.prune_dead(&data);
        let right = t.subtree(2).prune_dead(&data);
        assert_eq!(pruned.node(pruned.root()).kind, right.node(right.root()).kind);
        for x in data.rows() {
            assert_eq!(pruned.predict(x).unwrap(), t.predict(x).unwrap());
        }
        assert!(pruned.num_leaves() <= 2);
    }

    #[test]
    fn prune_dead_is_identity_without_dead_branches() {
        let t = stump(NodeKind::Axis { feature: 0, threshold: 0.5 }, Output::Class(1), Output::Class(2), CLS2, 1);
        let data = Dataset::new(vec![0.0, 1.0], 1, Targets::Classes(vec![1, 2]), CLS2).unwrap();
        assert_eq!(t.prune_dead(&data), t);
    }

    #[test]
    fn axis_and_one_hot_oblique_route_identically() {
        let axis = NodeKind::Axis { feature: 1, threshold: 0.25 };
        let obl = NodeKind::Oblique { weights: vec![0.0, 1.0, 0.0], bias: 0.25 };
        let mut rng = seeded_rng(5);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            assert_eq!(axis.goes_right(&x), obl.goes_right(&x));
        }
        assert_eq!(axis.goes_right(&[0.0, 0.25, 0.0]), obl.goes_right(&[0.0, 0.25, 0.0]));
    }

    #[test]
    fn levels_and_ancestry() {
        let t = complete_tree(2, 1, CLS2, 0).unwrap();
        assert_eq!(t.levels(), vec![vec![0], vec![1, 2], vec![3, 4, 5, 6]]);
        assert!(t.is_ancestor(0, 6));
        assert!(t.is_ancestor(1, 4));
        assert!(!t.is_ancestor(1, 5));
        assert_eq!(t.preorder(), vec![0, 1, 3, 4, 2, 5, 6]);
    }
}
