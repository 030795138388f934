//! Bagged random forest of CART trees.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree, Presorted, Tree, TreeParams};
use crate::math;
use crate::seed::derive_indexed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features tried per split; `None` uses `ceil(sqrt(M))`.
    #[serde(default)]
    pub max_features: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: 16,
            min_samples_leaf: 2,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    /// Mean of the tree predictions.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }
}

pub fn fit_forest(data: &Presorted, y: &[f64], params: ForestParams, seed: u64) -> Forest {
    let n = data.n_rows();
    let m = data.n_features();
    let mtry = params
        .max_features
        .unwrap_or_else(|| math::ceil(math::sqrt(m as f64)) as usize)
        .clamp(1, m.max(1));
    let tree_params = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        max_features: Some(mtry),
    };
    let trees = (0..params.n_trees.max(1))
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_indexed(seed, "bootstrap", t as u64));
            let mut w = vec![0u32; n];
            for _ in 0..n {
                w[rng.random_range(0..n)] += 1;
            }
            fit_tree(data, y, Some(&w), tree_params, derive_indexed(seed, "splits", t as u64))
        })
        .collect();
    Forest { trees }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..120)
            .map(|i| {
                let a = (i % 12) as f64 / 12.0;
                let b = (i / 12) as f64 / 10.0;
                vec![a, b, ((i * 37) % 17) as f64]
            })
            .collect();
        let y = x.iter().map(|r| libm::sin(3.0 * r[0]) + r[1] * r[1]).collect();
        (x, y)
    }

    #[test]
    fn prediction_is_mean_of_trees() {
        let (x, y) = data();
        let params = ForestParams { n_trees: 15, ..ForestParams::default() };
        let f = fit_forest(&Presorted::new(&x), &y, params, 11);
        assert_eq!(f.trees.len(), 15);
        for r in x.iter().take(20) {
            let mean = f.trees.iter().map(|t| t.predict(r)).sum::<f64>() / 15.0;
            assert_eq!(f.predict(r), mean);
        }
    }

    #[test]
    fn seeded_and_reasonably_accurate() {
        let (x, y) = data();
        let params = ForestParams { n_trees: 40, ..ForestParams::default() };
        let data = Presorted::new(&x);
        let a = fit_forest(&data, &y, params, 3);
        assert_eq!(a, fit_forest(&data, &y, params, 3));
        assert_ne!(a, fit_forest(&data, &y, params, 4));
        let mse = x.iter().zip(&y).map(|(r, v)| (a.predict(r) - v) * (a.predict(r) - v)).sum::<f64>() / 120.0;
        assert!(mse < 0.01, "mse {mse}");
    }
}
