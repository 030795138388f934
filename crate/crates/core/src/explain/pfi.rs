//! Permutation feature importance.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ml::{evaluate_predictions, Predictor};
use crate::seed::derive_indexed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Score {
    #[default]
    Rsq,
    /// Negated mean squared error, so that higher is better for both scores.
    NegMse,
}

impl Score {
    pub fn evaluate(self, y: &[f64], y_hat: &[f64]) -> f64 {
        let m = evaluate_predictions(y, y_hat);
        match self {
            Score::Rsq => m.rsq,
            Score::NegMse => -m.mse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PfiReport {
    pub score: Score,
    /// Score of the unpermuted data.
    pub reference: f64,
    pub repeats: usize,
    pub seed: u64,
    pub importance: Vec<f64>,
}

/// Seed of the permutation applied to `feature` in repeat `k`.
pub fn permutation_seed(seed: u64, feature: usize, k: usize) -> u64 {
    derive_indexed(seed.wrapping_add(k as u64), "pfi", feature as u64)
}

/// Row order of the permuted copy of `feature` in repeat `k`.
pub fn permutation(n: usize, seed: u64, feature: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(permutation_seed(seed, feature, k)));
    idx
}

/// `imp_i = score - (1/K) sum_k score_k,i` where `score_k,i` is taken on a
/// copy of `x` whose column `i` is shuffled. `x` itself is never modified.
pub fn pfi<P: Predictor + ?Sized>(
    model: &P,
    x: &[Vec<f64>],
    y: &[f64],
    repeats: usize,
    seed: u64,
    score: Score,
) -> Result<PfiReport> {
    if repeats == 0 {
        return Err(Error::InvalidConfig("permutation repeats must be at least 1".into()));
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    if x.len() < 2 {
        return Err(Error::InsufficientData("permutation importance needs at least 2 rows".into()));
    }
    let m = x[0].len();
    if let Some(r) = x.iter().find(|r| r.len() != m) {
        return Err(Error::DimensionMismatch { expected: m, found: r.len() });
    }
    let reference = score.evaluate(y, &model.predict_rows(x));
    let mut work = x.to_vec();
    let mut importance = Vec::with_capacity(m);
    for i in 0..m {
        let mut drop = 0.0;
        for k in 0..repeats {
            for (row, &src) in work.iter_mut().zip(&permutation(x.len(), seed, i, k)) {
                row[i] = x[src][i];
            }
            drop += reference - score.evaluate(y, &model.predict_rows(&work));
        }
        for (row, orig) in work.iter_mut().zip(x) {
            row[i] = orig[i];
        }
        importance.push(drop / repeats as f64);
    }
    Ok(PfiReport { score, reference, repeats, seed, importance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn data() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![(i * 7 % 11) as f64, (i % 4) as f64, i as f64 * 0.1]).collect();
        let y = x.iter().map(|r| r[0]).collect();
        (x, y)
    }

    #[test]
    fn unread_feature_scores_zero() {
        let (x, y) = data();
        let model = |r: &[f64]| r[0] + 0.1 * r[2];
        let rep = pfi(&model, &x, &y, 3, 5, Score::Rsq).unwrap();
        assert_eq!(rep.importance[1], 0.0);
        assert!(rep.importance[0] > 0.5);
        assert_eq!(rep, pfi(&model, &x, &y, 3, 5, Score::Rsq).unwrap());
    }

    #[test]
    fn identity_model_matches_replayed_permutation() {
        let (x, y) = data();
        let model = |r: &[f64]| r[0];
        let rep = pfi(&model, &x, &y, 1, 17, Score::Rsq).unwrap();
        let perm = permutation(x.len(), 17, 0, 0);
        let y_perm: Vec<f64> = perm.iter().map(|&j| x[j][0]).collect();
        // independent rsq
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let ss_res: f64 = y.iter().zip(&y_perm).map(|(a, b)| (a - b) * (a - b)).sum();
        let ss_tot: f64 = y.iter().map(|a| (a - mean) * (a - mean)).sum();
        assert!((rep.importance[0] - ss_res / ss_tot).abs() < 1e-12);
        assert_eq!(rep.reference, 1.0);
    }

    #[test]
    fn repeats_average_single_runs() {
        let (x, y) = data();
        let model = |r: &[f64]| r[0] * r[1] - r[2];
        let two = pfi(&model, &x, &y, 2, 40, Score::NegMse).unwrap();
        let a = pfi(&model, &x, &y, 1, 40, Score::NegMse).unwrap();
        let b = pfi(&model, &x, &y, 1, 41, Score::NegMse).unwrap();
        for i in 0..3 {
            let mean = (a.importance[i] + b.importance[i]) / 2.0;
            assert!((two.importance[i] - mean).abs() < 1e-9 * mean.abs().max(1.0));
        }
    }

    #[test]
    fn rejects_zero_repeats() {
        let (x, y) = data();
        assert!(pfi(&|r: &[f64]| r[0], &x, &y, 0, 0, Score::Rsq).is_err());
    }
}
