//! Locational trends: covariance between a variable of interest and its SHAP
//! values at every location.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::explain::ShapCube;
use crate::features::TSDb;
use crate::{Error, Result};

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    if a.len() < 2 {
        return Err(Error::InsufficientData(format!("covariance needs at least 2 samples, got {}", a.len())));
    }
    Ok(())
}

fn mean(a: &[f64]) -> f64 {
    a.iter().sum::<f64>() / a.len() as f64
}

/// Sample covariance with the `N - 1` divisor.
pub fn covariance(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b)?;
    let (ma, mb) = (mean(a), mean(b));
    let s: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    Ok(s / (a.len() - 1) as f64)
}

/// Pearson correlation; `None` when either input has no spread.
pub fn correlation(a: &[f64], b: &[f64]) -> Result<Option<f64>> {
    let c = covariance(a, b)?;
    let va = covariance(a, a)?;
    let vb = covariance(b, b)?;
    if va == 0.0 || vb == 0.0 {
        return Ok(None);
    }
    Ok(Some(c / crate::math::sqrt(va * vb)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationTrend {
    pub location: String,
    /// s times the unit of the variable.
    pub covariance: f64,
    pub correlation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendReport {
    pub voi: String,
    pub unit: String,
    pub n: usize,
    pub locations: Vec<LocationTrend>,
}

/// Covariance between the column `voi` of `db` and its SHAP values at every
/// location of `cube`. Rows are matched by scenario id, so `db` may hold the
/// rows in any order and may contain rows the cube does not.
pub fn voi_trend(cube: &ShapCube, db: &TSDb, voi: &str) -> Result<TrendReport> {
    let j = cube.feature_index(voi)?;
    let k = db.schema.index_of(voi)?;
    let lookup: alloc::collections::BTreeMap<usize, usize> =
        db.scenario_ids.iter().enumerate().map(|(r, &id)| (id, r)).collect();
    let values = cube
        .scenario_ids
        .iter()
        .map(|id| {
            lookup
                .get(id)
                .map(|&r| db.x[r][k])
                .ok_or_else(|| Error::SchemaMismatch(format!("scenario {id} is in the SHAP cube but not the database")))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut locations = Vec::with_capacity(cube.locations.len());
    for (l, name) in cube.locations.iter().enumerate() {
        let phi = cube.feature_column(l, j);
        locations.push(LocationTrend {
            location: name.clone(),
            covariance: covariance(&values, &phi)?,
            correlation: correlation(&values, &phi)?,
        });
    }
    Ok(TrendReport {
        voi: voi.into(),
        unit: db.schema.features[k].unit.clone(),
        n: values.len(),
        locations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explain::{explain_all_locations, ExplainerConfig};
    use crate::features::{Category, FeatureDesc, FeatureSchema, Target};
    use crate::Sequential;
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn hand_values() {
        assert_eq!(covariance(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 2.0);
        assert_eq!(covariance(&[1.0, 2.0, 3.0], &[5.0; 3]).unwrap(), 0.0);
        assert!((covariance(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0]).unwrap() - 7.0 / 3.0).abs() < 1e-15);
        assert!(covariance(&[1.0], &[1.0]).is_err());
        assert!(covariance(&[1.0, 2.0], &[1.0]).is_err());
        assert_eq!(correlation(&[1.0, 2.0, 3.0], &[5.0; 3]).unwrap(), None);
    }

    fn db(n: usize) -> TSDb {
        let names = ["voi", "other", "unused"];
        let x: Vec<Vec<f64>> = (0..n).map(|i| vec![(i * 3 % 7) as f64, (i % 4) as f64 * 0.5, (i % 2) as f64]).collect();
        TSDb {
            schema: FeatureSchema {
                features: names
                    .iter()
                    .map(|n| FeatureDesc { name: n.to_string(), category: Category::Sg, unit: "MW".into() })
                    .collect(),
                monitored_branches: vec![],
            },
            scenario_ids: (100..100 + n).collect(),
            targets: vec![Target { name: "cct_min".into(), values: vec![0.0; n] }],
            x,
        }
    }

    fn cube_of(db: &TSDb, k: f64) -> ShapCube {
        let up = move |r: &[f64]| 0.3 + k * r[0] + r[1];
        let down = move |r: &[f64]| 0.3 - k * r[0] + r[1];
        let models: Vec<(String, &(dyn Fn(&[f64]) -> f64 + Sync))> =
            vec![("cct_bus_5".into(), &up), ("cct_bus_7".into(), &down)];
        let names: Vec<String> = db.schema.names().map(String::from).collect();
        explain_all_locations(&models, &names, &db.scenario_ids, &db.x, &db.x, &ExplainerConfig::default(), &Sequential)
            .unwrap()
    }

    #[test]
    fn opposite_effects_give_opposite_covariances() {
        let db = db(12);
        let rep = voi_trend(&cube_of(&db, 0.02), &db, "voi").unwrap();
        assert_eq!(rep.n, 12);
        let (a, b) = (rep.locations[0].covariance, rep.locations[1].covariance);
        assert!(a > 0.0 && b < 0.0);
        assert!((a + b).abs() <= 1e-8);
        let unused = voi_trend(&cube_of(&db, 0.02), &db, "unused").unwrap();
        assert!(unused.locations.iter().all(|l| l.covariance == 0.0));
    }

    #[test]
    fn single_location_is_plain_covariance() {
        let db = db(9);
        let mut cube = cube_of(&db, 0.1);
        cube.locations.truncate(1);
        cube.values.truncate(1);
        let rep = voi_trend(&cube, &db, "other").unwrap();
        let direct = covariance(&db.column("other").unwrap(), &cube.feature_column(0, 1)).unwrap();
        assert_eq!(rep.locations.len(), 1);
        assert_eq!(rep.locations[0].covariance, direct);
    }

    #[test]
    fn missing_rows_are_reported() {
        let db = db(9);
        let cube = cube_of(&db, 0.1);
        let short = db.select_rows(&[0, 1, 2]);
        assert!(matches!(voi_trend(&cube, &short, "voi"), Err(Error::SchemaMismatch(_))));
    }

    proptest! {
        #[test]
        fn scale_equivariance(a in prop::collection::vec(-10.0f64..10.0, 3..30), c in -5.0f64..5.0, seed in 0u64..1000) {
            let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| libm::sin(v * 1.3 + (i as u64 ^ seed) as f64)).collect();
            let scaled: Vec<f64> = a.iter().map(|v| v * c).collect();
            let lhs = covariance(&scaled, &b).unwrap();
            let rhs = c * covariance(&a, &b).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        }

        #[test]
        fn row_permutation_invariance(perm_seed in 0u64..500) {
            let db = db(15);
            let cube = cube_of(&db, 0.05);
            let base = voi_trend(&cube, &db, "voi").unwrap();
            let mut order: Vec<usize> = (0..15).collect();
            let mut state = perm_seed;
            for i in (1..order.len()).rev() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                order.swap(i, (state >> 33) as usize % (i + 1));
            }
            let mut shuffled = cube.clone();
            shuffled.scenario_ids = order.iter().map(|&r| cube.scenario_ids[r]).collect();
            for l in 0..shuffled.values.len() {
                shuffled.values[l] = order.iter().map(|&r| cube.values[l][r].clone()).collect();
            }
            let rep = voi_trend(&shuffled, &db.select_rows(&order), "voi").unwrap();
            prop_assert_eq!(rep.locations.len(), base.locations.len());
            for (x, y) in rep.locations.iter().zip(&base.locations) {
                prop_assert_eq!(&x.location, &y.location);
                prop_assert!((x.covariance - y.covariance).abs() <= 1e-12);
            }
        }
    }
}
