//! Feed-forward network with tanh hidden layers and a linear output, trained
//! by full-batch gradient descent with momentum on standardized inputs.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::math;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            learning_rate: 1e-3,
            momentum: 0.9,
            epochs: 5000,
        }
    }
}

/// Dense layer, `w` is `outputs x inputs` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    fn zeros_like(&self) -> Self {
        Self {
            inputs: self.inputs,
            outputs: self.outputs,
            w: vec![0.0; self.w.len()],
            b: vec![0.0; self.b.len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    /// Per-feature mean and standard deviation used to standardize inputs.
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub layers: Vec<Layer>,
}

impl Mlp {
    /// Glorot-uniform weights, zero hidden biases, output bias at `y_mean`.
    pub fn init(n_in: usize, hidden: &[usize], y_mean: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![n_in];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let layers = sizes
            .windows(2)
            .map(|s| {
                let limit = math::sqrt(6.0 / (s[0] + s[1]) as f64);
                Layer {
                    inputs: s[0],
                    outputs: s[1],
                    w: (0..s[0] * s[1]).map(|_| rng.random_range(-limit..limit)).collect(),
                    b: vec![0.0; s[1]],
                }
            })
            .collect::<Vec<_>>();
        let mut mlp = Self {
            mean: vec![0.0; n_in],
            scale: vec![1.0; n_in],
            layers,
        };
        mlp.layers.last_mut().expect("output layer").b[0] = y_mean;
        mlp
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.forward(&self.standardize(x))
    }

    /// Output for an already standardized input.
    pub fn forward(&self, z: &[f64]) -> f64 {
        let mut a = z.to_vec();
        let last = self.layers.len() - 1;
        for (k, l) in self.layers.iter().enumerate() {
            let mut next = l.b.clone();
            for (o, nv) in next.iter_mut().enumerate() {
                let row = &l.w[o * l.inputs..(o + 1) * l.inputs];
                *nv += row.iter().zip(&a).map(|(w, v)| w * v).sum::<f64>();
                if k != last {
                    *nv = math::tanh(*nv);
                }
            }
            a = next;
        }
        a[0]
    }

    /// Loss `sum (f(z) - y)^2 / 2N` over standardized rows and its gradient
    /// with respect to every weight and bias.
    pub fn loss_and_gradient(&self, z: &[Vec<f64>], y: &[f64]) -> (f64, Vec<Layer>) {
        let n = z.len().max(1) as f64;
        let mut grad: Vec<Layer> = self.layers.iter().map(Layer::zeros_like).collect();
        let mut loss = 0.0;
        let last = self.layers.len() - 1;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len() + 1);
        for (zi, &yi) in z.iter().zip(y) {
            acts.clear();
            acts.push(zi.clone());
            for (k, l) in self.layers.iter().enumerate() {
                let a = &acts[k];
                let mut next = l.b.clone();
                for (o, nv) in next.iter_mut().enumerate() {
                    let row = &l.w[o * l.inputs..(o + 1) * l.inputs];
                    *nv += row.iter().zip(a).map(|(w, v)| w * v).sum::<f64>();
                    if k != last {
                        *nv = math::tanh(*nv);
                    }
                }
                acts.push(next);
            }
            let err = acts[last + 1][0] - yi;
            loss += 0.5 * err * err / n;
            let mut delta = vec![err / n];
            for k in (0..=last).rev() {
                let l = &self.layers[k];
                let g = &mut grad[k];
                let a = &acts[k];
                for (o, d) in delta.iter().enumerate() {
                    g.b[o] += d;
                    let grow = &mut g.w[o * l.inputs..(o + 1) * l.inputs];
                    for (gw, v) in grow.iter_mut().zip(a) {
                        *gw += d * v;
                    }
                }
                if k > 0 {
                    let mut prev = vec![0.0; l.inputs];
                    for (o, d) in delta.iter().enumerate() {
                        let row = &l.w[o * l.inputs..(o + 1) * l.inputs];
                        for (p, w) in prev.iter_mut().zip(row) {
                            *p += w * d;
                        }
                    }
                    // a = tanh(pre) so da/dpre = 1 - a^2
                    for (p, av) in prev.iter_mut().zip(a) {
                        *p *= 1.0 - av * av;
                    }
                    delta = prev;
                }
            }
        }
        (loss, grad)
    }
}

fn column_stats(x: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let m = x.first().map_or(0, |r| r.len());
    let n = x.len().max(1) as f64;
    let mut mean = vec![0.0; m];
    for r in x {
        for (a, v) in mean.iter_mut().zip(r) {
            *a += v / n;
        }
    }
    let mut var = vec![0.0; m];
    for r in x {
        for ((a, v), mu) in var.iter_mut().zip(r).zip(&mean) {
            *a += (v - mu) * (v - mu) / n;
        }
    }
    let scale = var
        .into_iter()
        .map(|v| {
            let s = math::sqrt(v);
            if s > 1e-12 {
                s
            } else {
                1.0
            }
        })
        .collect();
    (mean, scale)
}

pub fn fit_mlp(x: &[Vec<f64>], y: &[f64], params: &MlpParams, seed: u64) -> Mlp {
    let m = x.first().map_or(0, |r| r.len());
    let y_mean = y.iter().sum::<f64>() / y.len().max(1) as f64;
    let mut mlp = Mlp::init(m, &params.hidden, y_mean, seed);
    let (mean, scale) = column_stats(x);
    mlp.mean = mean;
    mlp.scale = scale;
    let z: Vec<Vec<f64>> = x.iter().map(|r| mlp.standardize(r)).collect();
    let mut velocity: Vec<Layer> = mlp.layers.iter().map(Layer::zeros_like).collect();
    for _ in 0..params.epochs {
        let (_, grad) = mlp.loss_and_gradient(&z, y);
        for ((l, v), g) in mlp.layers.iter_mut().zip(&mut velocity).zip(&grad) {
            for ((p, vv), gg) in l.w.iter_mut().zip(&mut v.w).zip(&g.w) {
                *vv = params.momentum * *vv - params.learning_rate * gg;
                *p += *vv;
            }
            for ((p, vv), gg) in l.b.iter_mut().zip(&mut v.b).zip(&g.b) {
                *vv = params.momentum * *vv - params.learning_rate * gg;
                *p += *vv;
            }
        }
    }
    mlp
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn flat(layers: &[Layer]) -> Vec<f64> {
        layers.iter().flat_map(|l| l.w.iter().chain(&l.b).copied()).collect()
    }

    fn perturbed(mlp: &Mlp, idx: usize, eps: f64) -> Mlp {
        let mut out = mlp.clone();
        let mut k = idx;
        for l in &mut out.layers {
            if k < l.w.len() {
                l.w[k] += eps;
                return out;
            }
            k -= l.w.len();
            if k < l.b.len() {
                l.b[k] += eps;
                return out;
            }
            k -= l.b.len();
        }
        unreachable!()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn gradient_matches_finite_differences(
            seed in any::<u64>(),
            rows in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 2..6),
        ) {
            let y: Vec<f64> = rows.iter().map(|r| r[0] - 0.5 * r[1] * r[2]).collect();
            let mlp = Mlp::init(3, &[4, 3], 0.1, seed);
            let (_, grad) = mlp.loss_and_gradient(&rows, &y);
            let g = flat(&grad);
            let eps = 1e-5;
            for i in 0..mlp.n_params() {
                let up = perturbed(&mlp, i, eps).loss_and_gradient(&rows, &y).0;
                let down = perturbed(&mlp, i, -eps).loss_and_gradient(&rows, &y).0;
                let fd = (up - down) / (2.0 * eps);
                let scale = g[i].abs().max(fd.abs()).max(1e-6);
                prop_assert!((g[i] - fd).abs() / scale < 1e-4, "param {}: {} vs {}", i, g[i], fd);
            }
        }
    }

    #[test]
    fn learns_a_smooth_function_deterministically() {
        let x: Vec<Vec<f64>> = (0..60).map(|i| vec![i as f64 / 6.0, 100.0 + (i % 5) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 0.5 + 0.05 * r[0]).collect();
        let params = MlpParams { hidden: vec![8, 8], epochs: 400, learning_rate: 1e-2, momentum: 0.9 };
        let a = fit_mlp(&x, &y, &params, 5);
        assert_eq!(a, fit_mlp(&x, &y, &params, 5));
        let mse = x.iter().zip(&y).map(|(r, v)| (a.predict(r) - v) * (a.predict(r) - v)).sum::<f64>() / 60.0;
        assert!(mse < 1e-3, "mse {mse}");
    }

    #[test]
    fn constant_column_is_not_scaled_by_zero() {
        let x = vec![vec![1.0, 3.0], vec![2.0, 3.0]];
        let (mean, scale) = column_stats(&x);
        assert_eq!(mean, vec![1.5, 3.0]);
        assert_eq!(scale, vec![0.5, 1.0]);
    }
}
