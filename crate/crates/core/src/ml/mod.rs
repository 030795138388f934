//! Regressors for CCT prediction and the algorithm selection ladder.

pub mod forest;
pub mod gbm;
pub mod metrics;
pub mod mlp;
pub mod select;
pub mod tree;

use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};
use forest::{fit_forest, Forest, ForestParams};
use gbm::{fit_gbm, Gbm, GbmParams};
use mlp::{fit_mlp, Mlp, MlpParams};
use tree::{fit_tree, Presorted, Tree, TreeParams};

pub use metrics::{evaluate_predictions, Metrics, CRITICAL_CCT};

/// Fewest training rows accepted by [`train`].
pub const MIN_TRAINING_ROWS: usize = 20;

/// Anything that maps a feature vector to a prediction.
pub trait Predictor: Sync {
    fn predict(&self, x: &[f64]) -> f64;

    fn predict_rows(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        rows.iter().map(|r| self.predict(r)).collect()
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Predictor for F {
    fn predict(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Cart,
    RandomForest,
    Gbm,
    Mlp,
}

impl Algorithm {
    pub const LADDER: [Algorithm; 4] = [Algorithm::Cart, Algorithm::RandomForest, Algorithm::Gbm, Algorithm::Mlp];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Cart => "cart",
            Algorithm::RandomForest => "random_forest",
            Algorithm::Gbm => "gbm",
            Algorithm::Mlp => "mlp",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Hyperparameters for every tier of the ladder.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparameters {
    pub cart: TreeParams,
    pub random_forest: ForestParams,
    pub gbm: GbmParams,
    pub mlp: MlpParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Constant { value: f64 },
    Cart(Tree),
    RandomForest(Forest),
    Gbm(Gbm),
    Mlp(Mlp),
}

/// A trained model together with what is needed to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regressor {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub n_features: usize,
    pub hyperparameters: Hyperparameters,
    pub model: Model,
}

impl Regressor {
    pub fn try_predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch { expected: self.n_features, found: x.len() });
        }
        Ok(self.predict(x))
    }
}

impl Predictor for Regressor {
    /// Panics on a wrong-length input; use [`Regressor::try_predict`] to get
    /// an error instead.
    fn predict(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.n_features, "feature vector length");
        match &self.model {
            Model::Constant { value } => *value,
            Model::Cart(t) => t.predict(x),
            Model::RandomForest(f) => f.predict(x),
            Model::Gbm(g) => g.predict(x),
            Model::Mlp(m) => m.predict(x),
        }
    }
}

/// Fits one model. A target without spread yields a constant model.
pub fn train(algorithm: Algorithm, hyper: &Hyperparameters, x: &[Vec<f64>], y: &[f64], seed: u64) -> Result<Regressor> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    if x.len() < MIN_TRAINING_ROWS {
        return Err(Error::InsufficientData(format!(
            "{} training rows, need at least {MIN_TRAINING_ROWS}",
            x.len()
        )));
    }
    let n_features = x[0].len();
    if let Some(r) = x.iter().find(|r| r.len() != n_features) {
        return Err(Error::DimensionMismatch { expected: n_features, found: r.len() });
    }
    let first = y[0];
    let model = if y.iter().all(|&v| v == first) {
        log::warn!("{algorithm}: target has zero variance, using a constant model");
        Model::Constant { value: first }
    } else {
        match algorithm {
            Algorithm::Cart => Model::Cart(fit_tree(&Presorted::new(x), y, None, hyper.cart, seed)),
            Algorithm::RandomForest => Model::RandomForest(fit_forest(&Presorted::new(x), y, hyper.random_forest, seed)),
            Algorithm::Gbm => Model::Gbm(fit_gbm(&Presorted::new(x), y, hyper.gbm)),
            Algorithm::Mlp => Model::Mlp(fit_mlp(x, y, &hyper.mlp, seed)),
        }
    };
    Ok(Regressor {
        algorithm,
        seed,
        n_features,
        hyperparameters: hyper.clone(),
        model,
    })
}

/// Seeded disjoint train/test split of `n` rows. Both index lists are sorted.
pub fn train_test_split(n: usize, test_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&test_fraction) || test_fraction <= 0.0 {
        return Err(Error::InvalidConfig(format!("test fraction must be in (0, 1), got {test_fraction}")));
    }
    let n_test = crate::math::round(n as f64 * test_fraction) as usize;
    if n_test == 0 || n_test >= n {
        return Err(Error::InsufficientData(format!("cannot split {n} rows with test fraction {test_fraction}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn data() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let y = x.iter().map(|r| 0.01 * r[0] + 0.1 * r[1]).collect();
        (x, y)
    }

    fn fast() -> Hyperparameters {
        Hyperparameters {
            random_forest: ForestParams { n_trees: 10, ..ForestParams::default() },
            gbm: GbmParams { n_trees: 20, ..GbmParams::default() },
            mlp: MlpParams { hidden: vec![4, 4], epochs: 20, ..MlpParams::default() },
            ..Hyperparameters::default()
        }
    }

    #[test]
    fn constant_target_gives_constant_model_for_every_algorithm() {
        let (x, _) = data();
        let y = vec![0.42; x.len()];
        for algo in Algorithm::LADDER {
            let m = train(algo, &fast(), &x, &y, 1).unwrap();
            assert_eq!(m.model, Model::Constant { value: 0.42 });
            assert_eq!(m.predict(&[3.0, 1.0]), 0.42);
        }
    }

    #[test]
    fn training_is_reproducible() {
        let (x, y) = data();
        for algo in Algorithm::LADDER {
            let a = train(algo, &fast(), &x, &y, 9).unwrap();
            let b = train(algo, &fast(), &x, &y, 9).unwrap();
            assert_eq!(a, b, "{algo}");
        }
    }

    #[test]
    fn rejects_small_or_ragged_input() {
        let (x, y) = data();
        assert!(matches!(train(Algorithm::Cart, &fast(), &x[..5], &y[..5], 0), Err(Error::InsufficientData(_))));
        let m = train(Algorithm::Cart, &fast(), &x, &y, 0).unwrap();
        assert!(matches!(m.try_predict(&[1.0]), Err(Error::DimensionMismatch { expected: 2, found: 1 })));
    }

    #[test]
    fn split_is_disjoint_and_seeded() {
        let (train_idx, test_idx) = train_test_split(100, 0.2, 4).unwrap();
        assert_eq!(test_idx.len(), 20);
        assert_eq!(train_idx.len(), 80);
        assert!(test_idx.iter().all(|i| !train_idx.contains(i)));
        assert_eq!(train_test_split(100, 0.2, 4).unwrap(), (train_idx.clone(), test_idx.clone()));
        assert_ne!(train_test_split(100, 0.2, 5).unwrap().1, test_idx);
        assert!(train_test_split(3, 0.1, 0).is_err());
        assert!(train_test_split(10, 1.0, 0).is_err());
    }
}
