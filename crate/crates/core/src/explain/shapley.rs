//! Exact Shapley values by enumerating every coalition.

use alloc::vec;
use alloc::vec::Vec;

use super::{check_inputs, Explanation};
use crate::ml::Predictor;
use crate::{Error, Result};

/// Largest feature count accepted by [`shapley_exact`].
pub const MAX_EXACT_FEATURES: usize = 15;

/// Value of coalition `mask`: the mean prediction over the background with
/// features in `mask` taken from `x` and the rest from each background row.
pub(crate) fn coalition_value<P: Predictor + ?Sized>(model: &P, x: &[f64], background: &[Vec<f64>], mask: &[bool], row: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for b in background {
        for j in 0..x.len() {
            row[j] = if mask[j] { x[j] } else { b[j] };
        }
        total += model.predict(row);
    }
    total / background.len() as f64
}

/// Shapley weight `|S|! (M - |S| - 1)! / M!` for every coalition size.
fn size_weights(m: usize) -> Vec<f64> {
    // w(s) = 1 / (M * C(M-1, s))
    let mut binom = vec![1.0f64; m];
    for s in 1..m {
        binom[s] = binom[s - 1] * (m - s) as f64 / s as f64;
    }
    binom.iter().map(|c| 1.0 / (m as f64 * c)).collect()
}

/// Interventional Shapley values over all `2^M` coalitions.
pub fn shapley_exact<P: Predictor + ?Sized>(model: &P, x: &[f64], background: &[Vec<f64>]) -> Result<Explanation> {
    check_inputs(x, background)?;
    let m = x.len();
    if m > MAX_EXACT_FEATURES {
        return Err(Error::TooManyFeatures { features: m, limit: MAX_EXACT_FEATURES });
    }
    let n_coalitions = 1usize << m;
    let mut values = vec![0.0; n_coalitions];
    let mut mask = vec![false; m];
    let mut row = vec![0.0; m];
    for (s, v) in values.iter_mut().enumerate() {
        for (j, b) in mask.iter_mut().enumerate() {
            *b = s >> j & 1 == 1;
        }
        *v = coalition_value(model, x, background, &mask, &mut row);
    }
    let w = size_weights(m);
    let mut phi = vec![0.0; m];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1usize << i;
        let mut acc = 0.0;
        for s in 0..n_coalitions {
            if s & bit == 0 {
                acc += w[(s as u32).count_ones() as usize] * (values[s | bit] - values[s]);
            }
        }
        *p = acc;
    }
    Ok(Explanation {
        base_value: values[0],
        phi,
        fx: model.predict(x),
        x: x.to_vec(),
    })
}
