//! Regression trees and additive ensembles.

use crate::data::{lookup, DataMatrix, Entry};
use crate::error::{Error, Result};
use crate::objective::LossKind;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TreeNode {
    Split {
        feature: u32,
        threshold: f64,
        default_left: bool,
        left: u32,
        right: u32,
    },
    Leaf {
        weight: f64,
    },
}

/// A binary tree stored as a node array with the root at index 0. Children
/// always have larger indices than their parent.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf(weight: f64) -> Self {
        Self {
            nodes: vec![TreeNode::Leaf { weight }],
        }
    }

    pub fn from_nodes(nodes: Vec<TreeNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidInput("tree without nodes".into()));
        }
        let mut parents = vec![0usize; nodes.len()];
        for (i, node) in nodes.iter().enumerate() {
            match *node {
                TreeNode::Split {
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    for child in [left, right] {
                        let c = child as usize;
                        if c <= i || c >= nodes.len() {
                            return Err(Error::InvalidInput(format!(
                                "node {i} has bad child {child}"
                            )));
                        }
                        parents[c] += 1;
                    }
                    if threshold.is_nan() {
                        return Err(Error::InvalidInput(format!("node {i} has NaN threshold")));
                    }
                }
                TreeNode::Leaf { weight } => {
                    if !weight.is_finite() {
                        return Err(Error::InvalidInput(format!("leaf {i} weight {weight}")));
                    }
                }
            }
        }
        if let Some(i) = (1..nodes.len()).find(|&i| parents[i] != 1) {
            return Err(Error::InvalidInput(format!(
                "node {i} has {} parents",
                parents[i]
            )));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        let mut max = 0;
        for (i, n) in self.nodes.iter().enumerate() {
            if let TreeNode::Split { left, right, .. } = *n {
                depth[left as usize] = depth[i] + 1;
                depth[right as usize] = depth[i] + 1;
                max = max.max(depth[i] + 1);
            }
        }
        max
    }

    /// Index of the leaf a sparse row lands in.
    pub fn leaf_index(&self, row: &[Entry]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Leaf { .. } => return i,
                TreeNode::Split {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                } => {
                    let go_left = match lookup(row, feature) {
                        Some(v) => v < threshold,
                        None => default_left,
                    };
                    i = if go_left { left } else { right } as usize;
                }
            }
        }
    }

    pub fn predict_row(&self, row: &[Entry]) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            TreeNode::Leaf { weight } => weight,
            TreeNode::Split { .. } => unreachable!(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeEnsemble {
    trees: Vec<Tree>,
    base_score: f64,
    loss: LossKind,
    n_features: usize,
}

impl TreeEnsemble {
    pub fn new(loss: LossKind, n_features: usize, base_score: f64) -> Self {
        Self {
            trees: Vec::new(),
            base_score,
            loss,
            n_features,
        }
    }

    pub fn push(&mut self, tree: Tree) {
        self.trees.push(tree);
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    pub fn loss(&self) -> LossKind {
        self.loss
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// `base_score` plus every tree's output, added in tree order.
    pub fn predict_row_raw(&self, row: &[Entry]) -> f64 {
        self.trees
            .iter()
            .fold(self.base_score, |acc, t| acc + t.predict_row(row))
    }

    pub fn predict_raw(&self, matrix: &DataMatrix) -> Vec<f64> {
        matrix.rows().map(|r| self.predict_row_raw(r)).collect()
    }

    /// Predictions on the output scale (probabilities for logistic loss).
    pub fn predict(&self, matrix: &DataMatrix) -> Vec<f64> {
        matrix
            .rows()
            .map(|r| self.loss.transform(self.predict_row_raw(r)))
            .collect()
    }
}
