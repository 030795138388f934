//! Gradient boosting with squared loss and shallow CART learners.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::tree::{fit_tree, Presorted, Tree, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub learning_rate: f64,
    pub min_samples_leaf: usize,
}

impl Default for GbmParams {
    fn default() -> Self {
        Self {
            n_trees: 500,
            max_depth: 4,
            learning_rate: 0.05,
            min_samples_leaf: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gbm {
    pub init: f64,
    pub learning_rate: f64,
    pub stages: Vec<Tree>,
}

impl Gbm {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.init + self.stages.iter().map(|t| self.learning_rate * t.predict(x)).sum::<f64>()
    }
}

/// Each stage fits a tree to the current residuals and adds it, shrunk by
/// the learning rate. No row or column subsampling, so no seed is needed.
pub fn fit_gbm(data: &Presorted, y: &[f64], params: GbmParams) -> Gbm {
    let n = y.len();
    let init = y.iter().sum::<f64>() / n.max(1) as f64;
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        max_features: None,
    };
    let mut f: Vec<f64> = alloc::vec![init; n];
    let mut stages = Vec::with_capacity(params.n_trees);
    let mut residual = alloc::vec![0.0; n];
    let rows: Vec<Vec<f64>> = (0..n).map(|i| data.cols.iter().map(|c| c[i]).collect()).collect();
    for _ in 0..params.n_trees {
        for i in 0..n {
            residual[i] = y[i] - f[i];
        }
        let tree = fit_tree(data, &residual, None, tree_params, 0);
        for (fi, row) in f.iter_mut().zip(&rows) {
            *fi += params.learning_rate * tree.predict(row);
        }
        stages.push(tree);
    }
    Gbm {
        init,
        learning_rate: params.learning_rate,
        stages,
    }
}
