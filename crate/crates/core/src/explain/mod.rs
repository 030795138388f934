//! Shapley attribution of model predictions: exact and kernel estimators,
//! global matrices and the per-location cube, permutation importance and
//! plot data.

pub mod kernel;
pub mod pfi;
pub mod plots;
pub mod shapley;

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ml::Predictor;
use crate::seed::derive_indexed;
use crate::{Error, Executor, Result};
pub use kernel::{kernel_shap, Budget};
pub use shapley::shapley_exact;

/// Additive explanation of one prediction: `base_value + sum(phi) = fx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub base_value: f64,
    pub phi: Vec<f64>,
    pub fx: f64,
    pub x: Vec<f64>,
}

impl Explanation {
    pub fn additivity_gap(&self) -> f64 {
        (self.base_value + self.phi.iter().sum::<f64>() - self.fx).abs()
    }
}

pub(crate) fn check_inputs(x: &[f64], background: &[Vec<f64>]) -> Result<()> {
    if background.is_empty() {
        return Err(Error::InsufficientData("background set is empty".into()));
    }
    if let Some(b) = background.iter().find(|b| b.len() != x.len()) {
        return Err(Error::DimensionMismatch { expected: x.len(), found: b.len() });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Exact,
    Kernel,
    /// Exact for small inputs, otherwise Kernel SHAP with the configured
    /// budget (full enumeration while that stays tractable).
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExplainerConfig {
    pub method: Method,
    pub budget: Budget,
    pub seed: u64,
}

impl Default for ExplainerConfig {
    fn default() -> Self {
        Self {
            method: Method::Auto,
            budget: Budget::Samples(2048),
            seed: 0,
        }
    }
}

impl ExplainerConfig {
    /// Checks up front that rows of `m` features can be explained, so a run
    /// does not fail on its first row.
    pub fn validate(&self, m: usize) -> Result<()> {
        let budget = match self.method {
            Method::Exact | Method::Auto if m <= 10 => {
                if m > shapley::MAX_EXACT_FEATURES {
                    return Err(Error::TooManyFeatures { features: m, limit: shapley::MAX_EXACT_FEATURES });
                }
                return Ok(());
            }
            Method::Exact => return Err(Error::TooManyFeatures { features: m, limit: shapley::MAX_EXACT_FEATURES }),
            Method::Auto if m <= kernel::AUTO_FULL_FEATURES => return Ok(()),
            Method::Auto | Method::Kernel => self.budget,
        };
        let exhaustive = m < 63 && matches!(budget, Budget::Samples(n) if n >= (1usize << m) - 2);
        match budget {
            Budget::Full if m > kernel::MAX_FULL_FEATURES => {
                Err(Error::TooManyFeatures { features: m, limit: kernel::MAX_FULL_FEATURES })
            }
            Budget::Samples(n) if !exhaustive && n < kernel::min_budget(m) => {
                Err(Error::BudgetTooSmall { budget: n, required: kernel::min_budget(m) })
            }
            _ => Ok(()),
        }
    }
}

/// Explains one row; `row` indexes the per-row seed stream.
pub fn explain_row<P: Predictor + ?Sized>(
    model: &P,
    x: &[f64],
    background: &[Vec<f64>],
    cfg: &ExplainerConfig,
    row: usize,
) -> Result<Explanation> {
    let seed = derive_indexed(cfg.seed, "kernel", row as u64);
    match cfg.method {
        Method::Exact => shapley_exact(model, x, background),
        Method::Kernel => kernel_shap(model, x, background, cfg.budget, seed),
        Method::Auto if x.len() <= 10 => shapley_exact(model, x, background),
        Method::Auto if x.len() <= kernel::AUTO_FULL_FEATURES => kernel_shap(model, x, background, Budget::Full, seed),
        Method::Auto => kernel_shap(model, x, background, cfg.budget, seed),
    }
}

/// Seeded choice of `size` of `n` background rows, in ascending order. All
/// rows when `size >= n`.
pub fn background_sample(n: usize, size: usize, seed: u64) -> Vec<usize> {
    if size >= n {
        return (0..n).collect();
    }
    let mut idx = sample(&mut ChaCha8Rng::seed_from_u64(seed), n, size).into_vec();
    idx.sort_unstable();
    idx
}

/// SHAP matrix of one model: a row of attributions per input row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalShap {
    pub base_value: f64,
    pub phi: Vec<Vec<f64>>,
    pub fx: Vec<f64>,
}

pub fn explain_global<P: Predictor + ?Sized, E: Executor>(
    model: &P,
    x: &[Vec<f64>],
    background: &[Vec<f64>],
    cfg: &ExplainerConfig,
    exec: &E,
) -> Result<GlobalShap> {
    if x.is_empty() {
        return Err(Error::InsufficientData("nothing to explain".into()));
    }
    let jobs: Vec<usize> = (0..x.len()).collect();
    let rows = exec.map(jobs, |r| {
        explain_row(model, &x[r], background, cfg, r).map_err(|e| Error::Row { row: r, source: Box::new(e) })
    });
    let mut out = GlobalShap { base_value: 0.0, phi: Vec::with_capacity(x.len()), fx: Vec::with_capacity(x.len()) };
    for (r, e) in rows.into_iter().enumerate() {
        let e = e?;
        if r == 0 {
            out.base_value = e.base_value;
        }
        out.phi.push(e.phi);
        out.fx.push(e.fx);
    }
    Ok(out)
}

/// Attributions for every location model over the same rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapCube {
    pub locations: Vec<String>,
    pub scenario_ids: Vec<usize>,
    pub features: Vec<String>,
    pub base_values: Vec<f64>,
    /// `values[location][row][feature]`, s.
    pub values: Vec<Vec<Vec<f64>>>,
}

impl ShapCube {
    pub fn location_index(&self, name: &str) -> Result<usize> {
        self.locations
            .iter()
            .position(|l| l == name)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown location '{name}'")))
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.features
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| Error::UnknownFeature(name.into()))
    }

    /// SHAP values of one feature at one location, one per row.
    pub fn feature_column(&self, location: usize, feature: usize) -> Vec<f64> {
        self.values[location].iter().map(|r| r[feature]).collect()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.locations.len(), self.scenario_ids.len(), self.features.len())
    }
}

/// Stacks [`explain_global`] over every location model, keeping their order.
pub fn explain_all_locations<P: Predictor, E: Executor>(
    models: &[(String, P)],
    features: &[String],
    scenario_ids: &[usize],
    x: &[Vec<f64>],
    background: &[Vec<f64>],
    cfg: &ExplainerConfig,
    exec: &E,
) -> Result<ShapCube> {
    if scenario_ids.len() != x.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: scenario_ids.len() });
    }
    if let Some(r) = x.iter().chain(background).find(|r| r.len() != features.len()) {
        return Err(Error::SchemaMismatch(format!(
            "rows have {} features, schema has {}",
            r.len(),
            features.len()
        )));
    }
    let mut cube = ShapCube {
        locations: Vec::with_capacity(models.len()),
        scenario_ids: scenario_ids.to_vec(),
        features: features.to_vec(),
        base_values: Vec::with_capacity(models.len()),
        values: Vec::with_capacity(models.len()),
    };
    for (name, model) in models {
        let g = explain_global(model, x, background, cfg, exec)?;
        cube.locations.push(name.clone());
        cube.base_values.push(g.base_value);
        cube.values.push(g.phi);
    }
    Ok(cube)
}
