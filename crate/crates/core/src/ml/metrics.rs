use serde::{Deserialize, Serialize};

use crate::math;

/// CCT below which a fault counts as critical, s.
pub const CRITICAL_CCT: f64 = 0.30;

/// Regression accuracy on a test partition. Errors are in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rsq: f64,
    pub mse: f64,
    pub rmse: f64,
    /// Largest over-estimate, 0 if the model never over-estimates.
    pub moe: f64,
    /// Largest under-estimate, 0 if the model never under-estimates.
    pub mue: f64,
    pub moe_critical: f64,
    pub mue_critical: f64,
    pub n: usize,
    pub n_critical: usize,
}

/// Computes all metrics from actual and predicted values.
///
/// When the actual values have no spread, RSQ is 1 for a perfect fit and 0
/// otherwise.
pub fn evaluate_predictions(y: &[f64], y_hat: &[f64]) -> Metrics {
    assert_eq!(y.len(), y_hat.len(), "actual and predicted lengths differ");
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n.max(1) as f64;
    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    let (mut moe, mut mue, mut moe_c, mut mue_c) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut n_critical = 0;
    for (&a, &p) in y.iter().zip(y_hat) {
        let e = p - a;
        ss_res += e * e;
        ss_tot += (a - mean) * (a - mean);
        let critical = a < CRITICAL_CCT;
        n_critical += critical as usize;
        if e > 0.0 {
            moe = moe.max(e);
            if critical {
                moe_c = moe_c.max(e);
            }
        } else if e < 0.0 {
            mue = mue.max(-e);
            if critical {
                mue_c = mue_c.max(-e);
            }
        }
    }
    let rsq = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    let mse = if n > 0 { ss_res / n as f64 } else { 0.0 };
    Metrics {
        rsq,
        mse,
        rmse: math::sqrt(mse),
        moe,
        mue,
        moe_critical: moe_c,
        mue_critical: mue_c,
        n,
        n_critical,
    }
}
