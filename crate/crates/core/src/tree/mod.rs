//! The flexible neural tree.
//!
//! Internal nodes apply a Gaussian to the weighted sum of their children,
//! `y = exp(-((o - a) / b)^2)` with `o = Σ w_j z_j`; leaves return one input
//! feature. The root is always an internal node, so every model output of the
//! bare tree lies in `[0, 1]`. An optional affine output map rescales the root
//! output to target units.

mod text;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use text::ParseError;

/// Smallest admissible `|b|`.
pub const MIN_WIDTH: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TreeError {
    #[error("root must be a computational node")]
    LeafRoot,
    #[error("computational node has {0} children; need at least 2")]
    TooFewChildren(usize),
    #[error("leaf references feature {feature} but model has {arity} inputs")]
    FeatureOutOfRange { feature: usize, arity: usize },
    #[error("non-finite parameter")]
    NonFiniteParam,
    #[error("node width |b| = {0} below {MIN_WIDTH}")]
    ZeroWidth(f64),
    #[error("expected {expected} inputs, got {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("non-finite input feature")]
    NonFiniteInput,
    #[error("parameter vector length {found}, model needs {expected}")]
    ParamLength { expected: usize, found: usize },
    #[error("tree height {height} exceeds limit {limit}")]
    TooTall { height: usize, limit: usize },
    #[error("node with {arity} children exceeds arity limit {limit}")]
    TooWide { arity: usize, limit: usize },
    #[error(transparent)]
    Parse(#[from] ParseError),
}

/// Which Gaussian is applied at computational nodes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// `exp(-((o - a) / b)^2)`
    #[default]
    Squared,
    /// `exp(-((o - a) / b))`, the exponent without a square.
    Unsquared,
}

impl Activation {
    #[inline]
    pub fn apply(self, o: f64, a: f64, b: f64) -> f64 {
        let t = (o - a) / b;
        match self {
            Activation::Squared => (-(t * t)).exp(),
            Activation::Unsquared => (-t).exp(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Squared => "squared",
            Activation::Unsquared => "unsquared",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Edge {
    pub weight: f64,
    pub child: Node,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompNode {
    pub a: f64,
    pub b: f64,
    pub edges: Vec<Edge>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Leaf { feature: usize },
    Comp(CompNode),
}

impl Node {
    pub fn leaf(feature: usize) -> Self {
        Node::Leaf { feature }
    }

    pub fn comp(a: f64, b: f64, edges: Vec<(f64, Node)>) -> Self {
        Node::Comp(CompNode {
            a,
            b,
            edges: edges
                .into_iter()
                .map(|(weight, child)| Edge { weight, child })
                .collect(),
        })
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf { .. })
    }

    /// Number of nodes in this subtree.
    pub fn size(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Comp(c) => 1 + c.edges.iter().map(|e| e.child.size()).sum::<usize>(),
        }
    }

    /// Levels in this subtree; a leaf has height 1.
    pub fn height(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Comp(c) => 1 + c.edges.iter().map(|e| e.child.height()).max().unwrap_or(0),
        }
    }

    pub fn comp_count(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Comp(c) => 1 + c.edges.iter().map(|e| e.child.comp_count()).sum::<usize>(),
        }
    }

    pub fn edge_count(&self) -> usize {
        self.size() - 1
    }

    pub fn param_count(&self) -> usize {
        2 * self.comp_count() + self.edge_count()
    }

    pub fn max_arity(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Comp(c) => c
                .edges
                .iter()
                .map(|e| e.child.max_arity())
                .max()
                .unwrap_or(0)
                .max(c.edges.len()),
        }
    }

    pub fn collect_features(&self, out: &mut BTreeSet<usize>) {
        match self {
            Node::Leaf { feature } => {
                out.insert(*feature);
            }
            Node::Comp(c) => c.edges.iter().for_each(|e| e.child.collect_features(out)),
        }
    }

    fn eval(&self, x: &[f64], act: Activation) -> f64 {
        match self {
            Node::Leaf { feature } => x[*feature],
            Node::Comp(c) => {
                let o: f64 = c.edges.iter().map(|e| e.weight * e.child.eval(x, act)).sum();
                act.apply(o, c.a, c.b)
            }
        }
    }

    /// Evaluates using parameters read from `params` in flatten order instead
    /// of the stored ones. `cursor` advances past this subtree's parameters.
    fn eval_with(&self, params: &[f64], cursor: &mut usize, x: &[f64], act: Activation) -> f64 {
        match self {
            Node::Leaf { feature } => x[*feature],
            Node::Comp(c) => {
                let a = params[*cursor];
                let b = params[*cursor + 1];
                let wstart = *cursor + 2;
                *cursor = wstart + c.edges.len();
                let mut o = 0.0;
                for (j, e) in c.edges.iter().enumerate() {
                    o += params[wstart + j] * e.child.eval_with(params, cursor, x, act);
                }
                act.apply(o, a, b)
            }
        }
    }

    fn flatten_into(&self, out: &mut Vec<f64>) {
        if let Node::Comp(c) = self {
            out.push(c.a);
            out.push(c.b);
            out.extend(c.edges.iter().map(|e| e.weight));
            for e in &c.edges {
                e.child.flatten_into(out);
            }
        }
    }

    fn load_params(&mut self, params: &[f64], cursor: &mut usize) {
        if let Node::Comp(c) = self {
            c.a = params[*cursor];
            c.b = params[*cursor + 1];
            *cursor += 2;
            for e in c.edges.iter_mut() {
                e.weight = params[*cursor];
                *cursor += 1;
            }
            for e in c.edges.iter_mut() {
                e.child.load_params(params, cursor);
            }
        }
    }

    fn validate(&self, arity: usize) -> Result<(), TreeError> {
        match self {
            Node::Leaf { feature } => {
                if *feature >= arity {
                    return Err(TreeError::FeatureOutOfRange {
                        feature: *feature,
                        arity,
                    });
                }
            }
            Node::Comp(c) => {
                if c.edges.len() < 2 {
                    return Err(TreeError::TooFewChildren(c.edges.len()));
                }
                if !c.a.is_finite() || !c.b.is_finite() {
                    return Err(TreeError::NonFiniteParam);
                }
                if c.b.abs() < MIN_WIDTH {
                    return Err(TreeError::ZeroWidth(c.b));
                }
                for e in &c.edges {
                    if !e.weight.is_finite() {
                        return Err(TreeError::NonFiniteParam);
                    }
                    e.child.validate(arity)?;
                }
            }
        }
        Ok(())
    }

    /// Pre-order walk yielding (index, depth, node). Root depth is 1.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(usize, usize, &'a Node)) {
        fn go<'a>(n: &'a Node, depth: usize, idx: &mut usize, f: &mut impl FnMut(usize, usize, &'a Node)) {
            f(*idx, depth, n);
            *idx += 1;
            if let Node::Comp(c) = n {
                for e in &c.edges {
                    go(&e.child, depth + 1, idx, f);
                }
            }
        }
        let mut idx = 0;
        go(self, 1, &mut idx, f);
    }

    /// Subtree at pre-order index `idx`.
    pub fn get(&self, idx: usize) -> Option<&Node> {
        let mut found = None;
        self.walk(&mut |i, _, n| {
            if i == idx {
                found = Some(n);
            }
        });
        found
    }

    /// Mutable subtree at pre-order index `idx`.
    pub fn get_mut(&mut self, idx: usize) -> Option<&mut Node> {
        fn go(n: &mut Node, target: usize, base: usize) -> Option<&mut Node> {
            if target == base {
                return Some(n);
            }
            let mut next = base + 1;
            if let Node::Comp(c) = n {
                for e in c.edges.iter_mut() {
                    let size = e.child.size();
                    if target < next + size {
                        return go(&mut e.child, target, next);
                    }
                    next += size;
                }
            }
            None
        }
        go(self, idx, 0)
    }
}

/// Affine map from the root output to target units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputMap {
    pub scale: f64,
    pub offset: f64,
}

impl OutputMap {
    #[inline]
    pub fn apply(&self, y: f64) -> f64 {
        self.scale * y + self.offset
    }
}

/// Flat parameter view: for each computational node in pre-order, `a`, `b`,
/// then the weights of its edges.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// What role a flattened parameter plays; used to build search bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamRole {
    Center,
    Width,
    Weight,
}

/// A validated flexible neural tree.
#[derive(Clone, Debug, PartialEq)]
pub struct FntModel {
    root: Node,
    input_arity: usize,
    activation: Activation,
    output_map: Option<OutputMap>,
}

impl FntModel {
    pub fn new(root: Node, input_arity: usize) -> Result<Self, TreeError> {
        if root.is_leaf() {
            return Err(TreeError::LeafRoot);
        }
        root.validate(input_arity)?;
        Ok(Self {
            root,
            input_arity,
            activation: Activation::default(),
            output_map: None,
        })
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_output_map(mut self, map: Option<OutputMap>) -> Self {
        self.output_map = map;
        self
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn input_arity(&self) -> usize {
        self.input_arity
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn output_map(&self) -> Option<OutputMap> {
        self.output_map
    }

    /// Total node count, computational plus leaves.
    pub fn complexity(&self) -> usize {
        self.root.size()
    }

    pub fn height(&self) -> usize {
        self.root.height()
    }

    pub fn param_count(&self) -> usize {
        self.root.param_count()
    }

    pub fn selected_features(&self) -> BTreeSet<usize> {
        let mut out = BTreeSet::new();
        self.root.collect_features(&mut out);
        out
    }

    pub fn check_limits(&self, max_height: usize, max_arity: usize) -> Result<(), TreeError> {
        let height = self.height();
        if height > max_height {
            return Err(TreeError::TooTall {
                height,
                limit: max_height,
            });
        }
        let arity = self.root.max_arity();
        if arity > max_arity {
            return Err(TreeError::TooWide {
                arity,
                limit: max_arity,
            });
        }
        Ok(())
    }

    fn check_input(&self, features: &[f64]) -> Result<(), TreeError> {
        if features.len() != self.input_arity {
            return Err(TreeError::ArityMismatch {
                expected: self.input_arity,
                found: features.len(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(TreeError::NonFiniteInput);
        }
        Ok(())
    }

    /// Root output of the bare tree.
    pub fn evaluate(&self, features: &[f64]) -> Result<f64, TreeError> {
        self.check_input(features)?;
        Ok(self.root.eval(features, self.activation))
    }

    /// Root output passed through the output map, if any.
    pub fn predict(&self, features: &[f64]) -> Result<f64, TreeError> {
        let y = self.evaluate(features)?;
        Ok(self.output_map.map_or(y, |m| m.apply(y)))
    }

    /// Unchecked bare-tree evaluation with substitute parameters. `params`
    /// must have length [`param_count`](Self::param_count) and `features`
    /// the model arity.
    #[inline]
    pub fn evaluate_with(&self, params: &[f64], features: &[f64]) -> f64 {
        let mut cursor = 0;
        self.root.eval_with(params, &mut cursor, features, self.activation)
    }

    pub fn flatten(&self) -> ParamVector {
        let mut out = Vec::with_capacity(self.param_count());
        self.root.flatten_into(&mut out);
        ParamVector(out)
    }

    /// Roles of the flattened parameters, in flatten order.
    pub fn param_roles(&self) -> Vec<ParamRole> {
        fn go(n: &Node, out: &mut Vec<ParamRole>) {
            if let Node::Comp(c) = n {
                out.push(ParamRole::Center);
                out.push(ParamRole::Width);
                out.extend(std::iter::repeat_n(ParamRole::Weight, c.edges.len()));
                for e in &c.edges {
                    go(&e.child, out);
                }
            }
        }
        let mut out = Vec::with_capacity(self.param_count());
        go(&self.root, &mut out);
        out
    }

    /// Same structure carrying the parameters in `v`.
    pub fn unflatten(&self, v: &ParamVector) -> Result<FntModel, TreeError> {
        self.unflatten_slice(v.as_slice())
    }

    pub fn unflatten_slice(&self, v: &[f64]) -> Result<FntModel, TreeError> {
        let expected = self.param_count();
        if v.len() != expected {
            return Err(TreeError::ParamLength {
                expected,
                found: v.len(),
            });
        }
        let mut root = self.root.clone();
        let mut cursor = 0;
        root.load_params(v, &mut cursor);
        root.validate(self.input_arity)?;
        Ok(FntModel { root, ..self.clone() })
    }

    /// Replaces the tree, keeping arity, activation and output map.
    pub fn with_root(&self, root: Node) -> Result<FntModel, TreeError> {
        Ok(FntModel::new(root, self.input_arity)?
            .with_activation(self.activation)
            .with_output_map(self.output_map))
    }

    pub fn into_root(self) -> Node {
        self.root
    }

    pub fn to_text(&self) -> String {
        text::write_model(self)
    }

    pub fn from_text(s: &str) -> Result<FntModel, TreeError> {
        text::read_model(s)
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Four computational nodes, eight leaves over x0..x2 and eleven edges:
    /// a +3 root over a +2 and two +3 subtrees.
    pub fn figure_one_tree() -> FntModel {
        let root = Node::comp(
            0.5,
            0.8,
            vec![
                (0.3, Node::comp(0.1, 0.9, vec![(0.6, Node::leaf(0)), (-0.4, Node::leaf(1))])),
                (
                    -0.7,
                    Node::comp(
                        0.4,
                        0.5,
                        vec![(0.2, Node::leaf(0)), (0.9, Node::leaf(1)), (-0.1, Node::leaf(2))],
                    ),
                ),
                (
                    0.5,
                    Node::comp(
                        0.7,
                        0.3,
                        vec![(-0.8, Node::leaf(2)), (0.4, Node::leaf(1)), (0.25, Node::leaf(0))],
                    ),
                ),
            ],
        );
        FntModel::new(root, 3).unwrap()
    }

    fn two_leaf(a: f64, b: f64) -> FntModel {
        FntModel::new(
            Node::comp(a, b, vec![(1.0, Node::leaf(0)), (1.0, Node::leaf(1))]),
            2,
        )
        .unwrap()
    }

    #[test]
    fn node_evaluation_examples() {
        assert_eq!(two_leaf(1.0, 1.0).evaluate(&[0.5, 0.5]).unwrap(), 1.0);
        assert_relative_eq!(
            two_leaf(0.0, 1.0).evaluate(&[0.5, 0.5]).unwrap(),
            (-1.0f64).exp(),
            max_relative = 1e-15
        );
        assert_relative_eq!(
            two_leaf(0.0, 1.0).evaluate(&[0.5, 0.5]).unwrap(),
            0.367879,
            epsilon = 1e-6
        );
        // peak of the Gaussian wherever o == a
        assert_eq!(two_leaf(0.3, 0.2).evaluate(&[0.1, 0.2]).unwrap(), 1.0);
    }

    #[test]
    fn unsquared_form() {
        let m = two_leaf(0.0, 2.0).with_activation(Activation::Unsquared);
        assert_relative_eq!(m.evaluate(&[0.5, 0.5]).unwrap(), (-0.5f64).exp());
    }

    #[test]
    fn evaluate_errors() {
        let m = two_leaf(0.0, 1.0);
        assert!(matches!(
            m.evaluate(&[1.0]),
            Err(TreeError::ArityMismatch { expected: 2, found: 1 })
        ));
        assert_eq!(m.evaluate(&[1.0, f64::NAN]), Err(TreeError::NonFiniteInput));
    }

    #[test]
    fn complexity_examples() {
        let fig = figure_one_tree();
        assert_eq!(fig.complexity(), 12);
        assert_eq!(fig.root().comp_count(), 4);
        assert_eq!(fig.root().edge_count(), 11);
        assert_eq!(fig.flatten().len(), 19);
        assert_eq!(two_leaf(0.0, 1.0).complexity(), 3);
        assert_eq!(two_leaf(0.0, 1.0).flatten().len(), 4);
        assert_eq!(fig.height(), 3);
    }

    #[test]
    fn selected_feature_examples() {
        let m = FntModel::new(
            Node::comp(
                0.0,
                1.0,
                vec![(1.0, Node::leaf(3)), (1.0, Node::leaf(4)), (1.0, Node::leaf(3))],
            ),
            5,
        )
        .unwrap();
        assert_eq!(m.selected_features().into_iter().collect::<Vec<_>>(), vec![3, 4]);
        let m = FntModel::new(
            Node::comp(0.0, 1.0, vec![(1.0, Node::leaf(2)), (0.5, Node::leaf(2))]),
            5,
        )
        .unwrap();
        assert_eq!(m.selected_features().into_iter().collect::<Vec<_>>(), vec![2]);
        assert_eq!(
            figure_one_tree().selected_features().into_iter().collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
    }

    #[test]
    fn constructor_rejects_invalid_trees() {
        assert_eq!(FntModel::new(Node::leaf(0), 1), Err(TreeError::LeafRoot));
        assert_eq!(
            FntModel::new(Node::comp(0.0, 1.0, vec![(1.0, Node::leaf(0))]), 1),
            Err(TreeError::TooFewChildren(1))
        );
        assert!(matches!(
            FntModel::new(Node::comp(0.0, 1.0, vec![(1.0, Node::leaf(0)), (1.0, Node::leaf(3))]), 2),
            Err(TreeError::FeatureOutOfRange { feature: 3, .. })
        ));
        assert!(matches!(
            FntModel::new(Node::comp(0.0, 0.0, vec![(1.0, Node::leaf(0)), (1.0, Node::leaf(1))]), 2),
            Err(TreeError::ZeroWidth(_))
        ));
    }

    #[test]
    fn flatten_order_and_round_trip() {
        let fig = figure_one_tree();
        let v = fig.flatten();
        assert_eq!(&v.0[..5], &[0.5, 0.8, 0.3, -0.7, 0.5]);
        assert_eq!(&v.0[5..9], &[0.1, 0.9, 0.6, -0.4]);
        assert_eq!(fig.unflatten(&v).unwrap(), fig);
        assert!(matches!(
            fig.unflatten(&ParamVector(vec![0.0; 3])),
            Err(TreeError::ParamLength { expected: 19, found: 3 })
        ));
        let roles = fig.param_roles();
        assert_eq!(roles.len(), 19);
        assert_eq!(roles[0], ParamRole::Center);
        assert_eq!(roles[1], ParamRole::Width);
        assert_eq!(roles[2], ParamRole::Weight);
    }

    #[test]
    fn evaluate_with_matches_unflatten() {
        let fig = figure_one_tree();
        let mut v = fig.flatten().0;
        for (i, p) in v.iter_mut().enumerate() {
            *p = 0.05 + 0.9 * ((i * 7 % 11) as f64) / 11.0;
        }
        let moved = fig.unflatten_slice(&v).unwrap();
        let x = [0.2, 0.7, 0.4];
        assert_eq!(fig.evaluate_with(&v, &x), moved.evaluate(&x).unwrap());
    }

    #[test]
    fn subtree_indexing() {
        let fig = figure_one_tree();
        let root = fig.root();
        assert_eq!(root.get(0), Some(root));
        assert_eq!(root.get(2), Some(&Node::leaf(0)));
        assert!(root.get(12).is_none());
        let mut r = root.clone();
        *r.get_mut(4).unwrap() = Node::leaf(2);
        assert!(matches!(r.get(4), Some(Node::Leaf { feature: 2 })));
        assert!(r.get_mut(12).is_none());
    }

    #[test]
    fn output_map_applied_by_predict() {
        let m = two_leaf(1.0, 1.0).with_output_map(Some(OutputMap {
            scale: 3.0,
            offset: 2.0,
        }));
        assert_eq!(m.evaluate(&[0.5, 0.5]).unwrap(), 1.0);
        assert_eq!(m.predict(&[0.5, 0.5]).unwrap(), 5.0);
    }
}
