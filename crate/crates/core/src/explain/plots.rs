//! Data behind SHAP summary and dependence plots.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One feature of a summary plot: its attributions and values per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFeature {
    pub rank: usize,
    pub feature: String,
    pub mean_abs_phi: f64,
    pub phi: Vec<f64>,
    pub value: Vec<f64>,
}

fn check_matrix(phi: &[Vec<f64>], x: &[Vec<f64>], features: &[String]) -> Result<()> {
    if phi.len() != x.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: phi.len() });
    }
    if let Some(r) = phi.iter().chain(x).find(|r| r.len() != features.len()) {
        return Err(Error::DimensionMismatch { expected: features.len(), found: r.len() });
    }
    Ok(())
}

/// Mean absolute attribution of every column.
pub fn mean_abs(phi: &[Vec<f64>], n_features: usize) -> Vec<f64> {
    let n = phi.len().max(1) as f64;
    (0..n_features).map(|j| phi.iter().map(|r| r[j].abs()).sum::<f64>() / n).collect()
}

/// The `top_k` features by mean |phi|, largest first. Ties keep schema order.
pub fn summary_data(phi: &[Vec<f64>], x: &[Vec<f64>], features: &[String], top_k: usize) -> Result<Vec<SummaryFeature>> {
    check_matrix(phi, x, features)?;
    if top_k > features.len() {
        return Err(Error::InvalidConfig(alloc::format!("top_k {top_k} exceeds {} features", features.len())));
    }
    let scores = mean_abs(phi, features.len());
    let mut order: Vec<usize> = (0..features.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    Ok(order
        .into_iter()
        .take(top_k)
        .enumerate()
        .map(|(rank, j)| SummaryFeature {
            rank: rank + 1,
            feature: features[j].clone(),
            mean_abs_phi: scores[j],
            phi: phi.iter().map(|r| r[j]).collect(),
            value: x.iter().map(|r| r[j]).collect(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DependencePoint {
    pub value: f64,
    pub phi: f64,
    pub color: f64,
}

/// One record per row: the feature value, its attribution and the value of
/// the colouring feature.
pub fn dependence_data(
    phi: &[Vec<f64>],
    x: &[Vec<f64>],
    features: &[String],
    voi: &str,
    color: &str,
) -> Result<Vec<DependencePoint>> {
    check_matrix(phi, x, features)?;
    let index = |name: &str| {
        features
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| Error::UnknownFeature(name.into()))
    };
    let (j, c) = (index(voi)?, index(color)?);
    Ok(phi
        .iter()
        .zip(x)
        .map(|(p, r)| DependencePoint { value: r[j], phi: p[j], color: r[c] })
        .collect())
}

/// Threshold scan over dependence records: the cut `c` (midway between
/// adjacent distinct values) that best separates `phi >= 0` below from
/// `phi < 0` above, or the reverse when `falling` is false. Returns the cut
/// and the number of records on the wrong side of it.
pub fn sign_change(points: &[DependencePoint], falling: bool) -> Option<(f64, usize)> {
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p.value, p.phi)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let wrong_below = |phi: f64| if falling { phi < 0.0 } else { phi > 0.0 };
    let wrong_above = |phi: f64| if falling { phi > 0.0 } else { phi < 0.0 };
    let mut below = 0;
    let mut above = pts.iter().filter(|p| wrong_above(p.1)).count();
    let mut best: Option<(f64, usize)> = None;
    for i in 0..pts.len().saturating_sub(1) {
        below += wrong_below(pts[i].1) as usize;
        above -= wrong_above(pts[i].1) as usize;
        if pts[i].0 == pts[i + 1].0 {
            continue;
        }
        let errors = below + above;
        if best.is_none_or(|(_, e)| errors < e) {
            best = Some(((pts[i].0 + pts[i + 1].0) / 2.0, errors));
        }
    }
    best
}
