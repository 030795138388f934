//! Algorithm selection: climb the ladder of increasingly complex regressors
//! until every location's model meets the worst-case error threshold.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{evaluate_predictions, train, Algorithm, Hyperparameters, Metrics, Predictor, Regressor};
use crate::features::TSDb;
use crate::seed::{derive_indexed, derive_seed};
use crate::{Error, Executor, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LadderConfig {
    pub tiers: Vec<Algorithm>,
    pub hyperparameters: Hyperparameters,
    /// Worst-case over- and under-estimation limit, s.
    pub theta: f64,
    pub test_fraction: f64,
}

impl Default for LadderConfig {
    fn default() -> Self {
        Self {
            tiers: Algorithm::LADDER.to_vec(),
            hyperparameters: Hyperparameters::default(),
            theta: 0.02,
            test_fraction: 0.2,
        }
    }
}

impl LadderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tiers.is_empty() {
            return Err(Error::InvalidConfig("ladder has no tiers".into()));
        }
        if !(self.theta >= 0.0) {
            return Err(Error::InvalidConfig(format!("theta must be non-negative, got {}", self.theta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetMetrics {
    pub target: String,
    pub metrics: Metrics,
}

/// One ladder tier evaluated over every location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierReport {
    pub algorithm: Algorithm,
    pub targets: Vec<TargetMetrics>,
    pub avg_rsq: f64,
    pub avg_mse: f64,
    pub avg_rmse: f64,
    pub max_moe: f64,
    pub max_mue: f64,
    pub max_moe_critical: f64,
    pub max_mue_critical: f64,
    pub passed: bool,
}

/// Row labels of the accuracy table, matching [`TierReport::table_values`].
pub const TABLE_ROWS: [&str; 7] = [
    "Average RSQ",
    "Average MSE (sec^2)",
    "Average RMSE (sec)",
    "Max MOE (sec)",
    "Max MUE (sec)",
    "Max MOE < 0.3 (sec)",
    "Max MUE < 0.3 (sec)",
];

impl TierReport {
    pub fn from_metrics(algorithm: Algorithm, targets: Vec<TargetMetrics>, theta: f64) -> Self {
        let n = targets.len().max(1) as f64;
        let avg = |f: fn(&Metrics) -> f64| targets.iter().map(|t| f(&t.metrics)).sum::<f64>() / n;
        let max = |f: fn(&Metrics) -> f64| targets.iter().map(|t| f(&t.metrics)).fold(0.0, f64::max);
        let (max_moe, max_mue) = (max(|m| m.moe), max(|m| m.mue));
        Self {
            algorithm,
            avg_rsq: avg(|m| m.rsq),
            avg_mse: avg(|m| m.mse),
            avg_rmse: avg(|m| m.rmse),
            max_moe,
            max_mue,
            max_moe_critical: max(|m| m.moe_critical),
            max_mue_critical: max(|m| m.mue_critical),
            passed: max_moe < theta && max_mue < theta,
            targets,
        }
    }

    pub fn worst_error(&self) -> f64 {
        self.max_moe.max(self.max_mue)
    }

    pub fn table_values(&self) -> [f64; 7] {
        [
            self.avg_rsq,
            self.avg_mse,
            self.avg_rmse,
            self.max_moe,
            self.max_mue,
            self.max_moe_critical,
            self.max_mue_critical,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub selected: Algorithm,
    /// No tier met the threshold; `selected` has the smallest worst error.
    pub threshold_unmet: bool,
    pub theta: f64,
    pub tiers: Vec<TierReport>,
    /// Models of the selected tier, one per target in database order.
    pub models: Vec<(String, Regressor)>,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
}

/// Seed used to train `algorithm` on the target at `target_index`.
pub fn model_seed(seed: u64, algorithm: Algorithm, target_index: usize) -> u64 {
    derive_indexed(seed, &format!("train/{algorithm}"), target_index as u64)
}

/// Trains and scores one tier on every target.
pub fn evaluate_tier<E: Executor>(
    algorithm: Algorithm,
    train_db: &TSDb,
    test_db: &TSDb,
    cfg: &LadderConfig,
    seed: u64,
    exec: &E,
) -> Result<(TierReport, Vec<(String, Regressor)>)> {
    let jobs: Vec<usize> = (0..train_db.targets.len()).collect();
    let results = exec.map(jobs, |k| -> Result<(TargetMetrics, Regressor)> {
        let name = &train_db.targets[k].name;
        let model = train(
            algorithm,
            &cfg.hyperparameters,
            &train_db.x,
            &train_db.targets[k].values,
            model_seed(seed, algorithm, k),
        )?;
        let y_hat = model.predict_rows(&test_db.x);
        let metrics = evaluate_predictions(test_db.target(name)?, &y_hat);
        Ok((TargetMetrics { target: name.clone(), metrics }, model))
    });
    let mut metrics = Vec::with_capacity(results.len());
    let mut models = Vec::with_capacity(results.len());
    for r in results {
        let (m, model) = r?;
        models.push((m.target.clone(), model));
        metrics.push(m);
    }
    Ok((TierReport::from_metrics(algorithm, metrics, cfg.theta), models))
}

/// Runs the ladder on a database: seeded split, then tiers in order until one
/// passes. If none passes the tier with the smallest worst error is kept.
pub fn select_algorithm<E: Executor>(db: &TSDb, cfg: &LadderConfig, seed: u64, exec: &E) -> Result<Selection> {
    cfg.validate()?;
    db.validate()?;
    let (train_rows, test_rows) = super::train_test_split(db.n_rows(), cfg.test_fraction, derive_seed(seed, "split"))?;
    let train_db = db.select_rows(&train_rows);
    let test_db = db.select_rows(&test_rows);
    let mut tiers = Vec::new();
    let mut best: Option<(usize, Vec<(String, Regressor)>)> = None;
    for &algorithm in &cfg.tiers {
        let (report, models) = evaluate_tier(algorithm, &train_db, &test_db, cfg, seed, exec)?;
        log::info!(
            "tier {algorithm}: worst MOE {:.4} s, worst MUE {:.4} s{}",
            report.max_moe,
            report.max_mue,
            if report.passed { " (passed)" } else { "" }
        );
        let passed = report.passed;
        let better = best.as_ref().is_none_or(|(i, _)| report.worst_error() < tiers_worst(&tiers, *i));
        tiers.push(report);
        if passed {
            return Ok(Selection {
                selected: algorithm,
                threshold_unmet: false,
                theta: cfg.theta,
                tiers,
                models,
                train_rows,
                test_rows,
            });
        }
        if better {
            best = Some((tiers.len() - 1, models));
        }
    }
    let (i, models) = best.expect("at least one tier");
    log::warn!("no tier met theta = {} s; keeping {}", cfg.theta, tiers[i].algorithm);
    Ok(Selection {
        selected: tiers[i].algorithm,
        threshold_unmet: true,
        theta: cfg.theta,
        tiers,
        models,
        train_rows,
        test_rows,
    })
}

fn tiers_worst(tiers: &[TierReport], i: usize) -> f64 {
    tiers[i].worst_error()
}
