//! Kernel SHAP: Shapley-kernel weighted least squares over feature
//! coalitions, constrained so the attributions add up to the prediction.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::shapley::coalition_value;
use super::{check_inputs, Explanation};
use crate::linalg::Matrix;
use crate::ml::Predictor;
use crate::{Error, Result};

/// Largest feature count for which full enumeration is accepted.
pub const MAX_FULL_FEATURES: usize = 20;

/// Full enumeration is used automatically up to this many features.
pub const AUTO_FULL_FEATURES: usize = 18;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    /// Every coalition.
    Full,
    /// At most this many coalitions besides the empty and full ones.
    Samples(usize),
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// Calls `f` with every `k`-subset of `0..n` in lexicographic order.
fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

struct Design {
    masks: Vec<Vec<bool>>,
    weights: Vec<f64>,
}

impl Design {
    fn push(&mut self, mask: Vec<bool>, w: f64) {
        self.masks.push(mask);
        self.weights.push(w);
    }
}

fn mask_of(m: usize, members: &[usize]) -> Vec<bool> {
    let mut mask = vec![false; m];
    for &j in members {
        mask[j] = true;
    }
    mask
}

fn full_design(m: usize) -> Design {
    let mut d = Design { masks: Vec::new(), weights: Vec::new() };
    for s in 1..m {
        let w = (m - 1) as f64 / (binomial(m, s) * (s * (m - s)) as f64);
        for_each_combination(m, s, |c| d.push(mask_of(m, c), w));
    }
    d
}

/// Smallest sampled budget accepted for `m` features. A coalition and its
/// complement carry the same information about the attributions, so at
/// least `m - 1` distinct pairs are needed to pin down the `m - 1` free ones.
pub fn min_budget(m: usize) -> usize {
    2 * m
}

/// Coalition members drawn from a cyclic stream over a shuffled feature
/// order, reshuffled on wrap-around, so every feature enters some sampled
/// coalition within the first `m` member slots.
struct MemberStream {
    order: Vec<usize>,
    pos: usize,
}

impl MemberStream {
    fn new(m: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(rng);
        Self { order, pos: 0 }
    }

    fn coalition(&mut self, s: usize, rng: &mut ChaCha8Rng) -> Vec<bool> {
        let mut mask = vec![false; self.order.len()];
        let mut count = 0;
        while count < s {
            if self.pos == self.order.len() {
                self.order.shuffle(rng);
                self.pos = 0;
            }
            let j = self.order[self.pos];
            self.pos += 1;
            if !mask[j] {
                mask[j] = true;
                count += 1;
            }
        }
        mask
    }
}

/// Enumerates whole coalition sizes from the outside in while the budget
/// covers them, then fills the rest with paired kernel-weighted samples.
fn sampled_design(m: usize, budget: usize, seed: u64) -> Design {
    // sizes s and m - s share a weight slot; for even m the middle size is
    // its own complement
    let n_sizes = (m - 1).div_ceil(2);
    let n_paired = (m - 1) / 2;
    let mut weight: Vec<f64> = (1..=n_sizes).map(|s| (m - 1) as f64 / (s * (m - s)) as f64).collect();
    for w in weight.iter_mut().take(n_paired) {
        *w *= 2.0;
    }
    let total: f64 = weight.iter().sum();
    weight.iter_mut().for_each(|w| *w /= total);

    let mut d = Design { masks: Vec::new(), weights: Vec::new() };
    let mut left = budget as f64;
    let mut remaining = weight.clone();
    let mut n_full = 0;
    for s in 1..=n_sizes {
        let paired = s <= n_paired;
        let n_subsets = binomial(m, s) * if paired { 2.0 } else { 1.0 };
        if left * remaining[s - 1] / n_subsets < 1.0 - 1e-8 {
            break;
        }
        n_full += 1;
        left -= n_subsets;
        if remaining[s - 1] < 1.0 {
            let r = remaining[s - 1];
            remaining.iter_mut().for_each(|w| *w /= 1.0 - r);
        }
        let mut w = weight[s - 1] / binomial(m, s);
        if paired {
            w /= 2.0;
        }
        for_each_combination(m, s, |c| {
            let mask = mask_of(m, c);
            if paired {
                d.push(mask.iter().map(|b| !b).collect(), w);
            }
            d.push(mask, w);
        });
    }
    let n_fixed = d.masks.len();
    let mut samples_left = budget.saturating_sub(n_fixed);
    if n_full < n_sizes && samples_left > 0 {
        let mut rest: Vec<f64> = weight.clone();
        for w in rest.iter_mut().take(n_paired) {
            *w /= 2.0;
        }
        let rest = &rest[n_full..];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes = WeightedIndex::new(rest).expect("positive kernel weights");
        let mut members = MemberStream::new(m, &mut rng);
        let mut seen: BTreeMap<Vec<bool>, usize> = BTreeMap::new();
        // a repeated coalition adds weight but does not use up budget
        let mut add = |d: &mut Design, mask: Vec<bool>| match seen.get(&mask) {
            Some(&i) => {
                d.weights[i] += 1.0;
                0
            }
            None => {
                seen.insert(mask.clone(), d.masks.len());
                d.push(mask, 1.0);
                1
            }
        };
        let mut draws = 0;
        while samples_left > 0 && draws < 4 * budget {
            draws += 1;
            let s = sizes.sample(&mut rng) + n_full + 1;
            let mask = members.coalition(s, &mut rng);
            let complement: Vec<bool> = mask.iter().map(|b| !b).collect();
            samples_left -= add(&mut d, mask);
            if samples_left > 0 && s <= n_paired {
                samples_left -= add(&mut d, complement);
            }
        }
        let weight_left: f64 = weight[n_full..].iter().sum();
        let sampled: f64 = d.weights[n_fixed..].iter().sum();
        if sampled > 0.0 {
            d.weights[n_fixed..].iter_mut().for_each(|w| *w *= weight_left / sampled);
        }
    }
    d
}

/// Kernel SHAP explanation of `x` against `background`.
///
/// Attributions satisfy `base_value + sum(phi) = fx` by construction. With a
/// budget covering every coalition the result equals the exact Shapley
/// values.
pub fn kernel_shap<P: Predictor + ?Sized>(
    model: &P,
    x: &[f64],
    background: &[Vec<f64>],
    budget: Budget,
    seed: u64,
) -> Result<Explanation> {
    check_inputs(x, background)?;
    let m = x.len();
    let mut row = vec![0.0; m];
    let base_value = coalition_value(model, x, background, &vec![false; m], &mut row);
    let fx = model.predict(x);
    let delta = fx - base_value;
    if m == 1 {
        return Ok(Explanation { base_value, phi: vec![delta], fx, x: x.to_vec() });
    }
    let exhaustive = (m as u32) < usize::BITS - 1 && {
        let all = (1usize << m) - 2;
        match budget {
            Budget::Full => true,
            Budget::Samples(n) => n >= all,
        }
    };
    let design = match budget {
        _ if exhaustive => {
            if m > MAX_FULL_FEATURES {
                return Err(Error::TooManyFeatures { features: m, limit: MAX_FULL_FEATURES });
            }
            full_design(m)
        }
        Budget::Full => return Err(Error::TooManyFeatures { features: m, limit: MAX_FULL_FEATURES }),
        Budget::Samples(n) if n < min_budget(m) => {
            return Err(Error::BudgetTooSmall { budget: n, required: min_budget(m) })
        }
        Budget::Samples(n) => sampled_design(m, n, seed),
    };

    // eliminate the last attribution through the sum constraint
    let k = m - 1;
    let mut a = Matrix::<f64>::zeros(k, k);
    let mut rhs = vec![0.0; k];
    let mut reg = vec![0.0; k];
    for (mask, &w) in design.masks.iter().zip(&design.weights) {
        let v = coalition_value(model, x, background, mask, &mut row) - base_value;
        let last = mask[k] as u8 as f64;
        let t = v - last * delta;
        for i in 0..k {
            reg[i] = mask[i] as u8 as f64 - last;
        }
        for i in 0..k {
            if reg[i] == 0.0 {
                continue;
            }
            let wi = w * reg[i];
            rhs[i] += wi * t;
            for j in 0..k {
                a[(i, j)] += wi * reg[j];
            }
        }
    }
    let lu = a.lu().ok_or(Error::BudgetTooSmall {
        budget: design.masks.len(),
        required: design.masks.len() + 1,
    })?;
    let mut phi = lu.solve(&rhs);
    let rest: f64 = phi.iter().sum();
    phi.push(delta - rest);
    Ok(Explanation { base_value, phi, fx, x: x.to_vec() })
}
