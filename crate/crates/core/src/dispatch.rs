//! Merit-order economic dispatch with equal incremental cost and unit limits.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::network::{Cost, PowerNetwork};
use crate::scenario::Scenario;
use crate::{Error, Result};

/// Share of demand added on top of the load to cover network losses before
/// the power flow settles the balance on the slack machine.
pub const LOSS_ALLOWANCE: f64 = 0.02;

/// Active power targets, MW, aligned with `net.machines` and `net.res_units`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchTargets {
    pub machine_p: Vec<f64>,
    pub res_p: Vec<f64>,
    /// Equal incremental cost at the solution.
    pub lambda: f64,
}

/// A unit taking part in the equal-lambda allocation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispatchUnit {
    pub cost: Cost,
    pub p_min: f64,
    pub p_max: f64,
}

impl DispatchUnit {
    fn output_at(&self, lambda: f64) -> f64 {
        let p = if self.cost.c2 > 0.0 {
            (lambda - self.cost.c1) / (2.0 * self.cost.c2)
        } else if lambda > self.cost.c1 {
            self.p_max
        } else {
            self.p_min
        };
        p.clamp(self.p_min, self.p_max)
    }
}

/// Allocates `demand` MW across `units` at equal incremental cost.
///
/// Returns the outputs and the clearing lambda. Fails when demand lies outside
/// `[sum p_min, sum p_max]`.
pub fn equal_lambda(units: &[DispatchUnit], demand: f64) -> Result<(Vec<f64>, f64)> {
    if units.is_empty() {
        return Err(Error::Infeasible("no dispatchable units".into()));
    }
    let p_min: f64 = units.iter().map(|u| u.p_min).sum();
    let p_max: f64 = units.iter().map(|u| u.p_max).sum();
    let tol = 1e-9 * (1.0 + demand.abs());
    if demand > p_max + tol {
        return Err(Error::Infeasible(format!(
            "demand {demand:.3} MW exceeds capacity {p_max:.3} MW"
        )));
    }
    if demand < p_min - tol {
        return Err(Error::Infeasible(format!(
            "demand {demand:.3} MW is below minimum generation {p_min:.3} MW"
        )));
    }
    let total = |lambda: f64| units.iter().map(|u| u.output_at(lambda)).sum::<f64>();
    let mut lo = units
        .iter()
        .map(|u| u.cost.marginal(u.p_min))
        .fold(f64::INFINITY, f64::min)
        - 1.0;
    let mut hi = units
        .iter()
        .map(|u| u.cost.marginal(u.p_max))
        .fold(f64::NEG_INFINITY, f64::max)
        + 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if total(mid) < demand {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // interpolate between the bracketing lambdas so the total is met exactly,
    // which also splits demand among linear-cost units sitting at the margin
    let lo_p: Vec<f64> = units.iter().map(|u| u.output_at(lo)).collect();
    let hi_p: Vec<f64> = units.iter().map(|u| u.output_at(hi)).collect();
    let (t_lo, t_hi) = (lo_p.iter().sum::<f64>(), hi_p.iter().sum::<f64>());
    let frac = if t_hi > t_lo { ((demand - t_lo) / (t_hi - t_lo)).clamp(0.0, 1.0) } else { 0.0 };
    let out = lo_p
        .iter()
        .zip(&hi_p)
        .map(|(a, b)| a + frac * (b - a))
        .collect();
    Ok((out, 0.5 * (lo + hi)))
}

/// Dispatch for one scenario.
///
/// Renewables run at their full scenario rating at unity power factor; the
/// remaining demand plus [`LOSS_ALLOWANCE`] is shared by all machines by
/// merit order within their displacement-scaled limits. When the renewables
/// alone would push the machines below their minimum output, every renewable
/// is curtailed by the same fraction.
pub fn dispatch(net: &PowerNetwork, sc: &Scenario) -> Result<DispatchTargets> {
    let demand = net.total_load_mw() * sc.demand_mult * (1.0 + LOSS_ALLOWANCE);
    let mut res_p: Vec<f64> = net
        .res_units
        .iter()
        .map(|r| sc.res_mva.get(&r.id).copied().unwrap_or(r.mva_rating))
        .collect();
    let units: Vec<DispatchUnit> = net
        .machines
        .iter()
        .map(|m| {
            let eff = sc.effective(m, net.base_mva);
            DispatchUnit {
                cost: m.cost,
                p_min: eff.p_min,
                p_max: eff.p_max,
            }
        })
        .collect();
    let floor: f64 = units.iter().map(|u| u.p_min).sum();
    let res_total: f64 = res_p.iter().sum();
    if res_total > 0.0 && demand - res_total < floor {
        let scale = ((demand - floor) / res_total).max(0.0);
        log::debug!("scenario {}: curtailing renewables to {:.1}%", sc.id, 100.0 * scale);
        res_p.iter_mut().for_each(|p| *p *= scale);
    }
    let (machine_p, lambda) = equal_lambda(&units, demand - res_p.iter().sum::<f64>())?;
    Ok(DispatchTargets {
        machine_p,
        res_p,
        lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::vec::Vec;

    fn unit(c2: f64, c1: f64, p_min: f64, p_max: f64) -> DispatchUnit {
        DispatchUnit {
            cost: Cost { c2, c1, c0: 0.0 },
            p_min,
            p_max,
        }
    }

    #[test]
    fn identical_units_split_equally() {
        let units = [unit(0.01, 10.0, 0.0, 500.0), unit(0.01, 10.0, 0.0, 500.0)];
        let (p, _) = equal_lambda(&units, 300.0).unwrap();
        assert!((p[0] - 150.0).abs() < 1e-9);
        assert!((p[1] - 150.0).abs() < 1e-9);
    }

    #[test]
    fn cheap_unit_takes_the_load() {
        let units = [unit(0.0, 5.0, 10.0, 500.0), unit(0.0, 50.0, 20.0, 500.0)];
        let (p, _) = equal_lambda(&units, 300.0).unwrap();
        assert!((p[0] - 280.0).abs() < 1e-9, "{p:?}");
        assert!((p[1] - 20.0).abs() < 1e-9);
    }

    #[test]
    fn matches_closed_form_lambda() {
        // unclamped quadratics: lambda = (D + sum c1/2c2) / sum 1/2c2
        let c2 = [0.01, 0.02, 0.04];
        let c1 = [8.0, 7.5, 7.0];
        let demand = 600.0;
        let units: Vec<_> = c2.iter().zip(&c1).map(|(&a, &b)| unit(a, b, 0.0, 1000.0)).collect();
        let (p, lambda) = equal_lambda(&units, demand).unwrap();
        let inv: f64 = c2.iter().map(|a| 1.0 / (2.0 * a)).sum();
        let shift: f64 = c2.iter().zip(&c1).map(|(a, b)| b / (2.0 * a)).sum();
        let lambda_star = (demand + shift) / inv;
        assert!((lambda - lambda_star).abs() < 1e-8);
        for i in 0..3 {
            assert!((p[i] - (lambda_star - c1[i]) / (2.0 * c2[i])).abs() < 1e-6);
        }
    }

    #[test]
    fn infeasible_both_ways() {
        let units = [unit(0.01, 1.0, 50.0, 100.0)];
        assert!(matches!(equal_lambda(&units, 150.0), Err(Error::Infeasible(_))));
        assert!(matches!(equal_lambda(&units, 10.0), Err(Error::Infeasible(_))));
        assert!(matches!(equal_lambda(&[], 10.0), Err(Error::Infeasible(_))));
    }

    #[test]
    fn limits_bind() {
        let units = [unit(0.001, 1.0, 0.0, 100.0), unit(0.01, 1.0, 0.0, 1000.0)];
        let (p, _) = equal_lambda(&units, 400.0).unwrap();
        assert!((p[0] - 100.0).abs() < 1e-9);
        assert!((p[1] - 300.0).abs() < 1e-6);
        assert!((p.iter().sum::<f64>() - 400.0).abs() < 1e-9);
    }

    #[test]
    fn scenario_dispatch_respects_scaled_limits() {
        let net = crate::testnet::triangle();
        let cfg = crate::scenario::ScenarioConfig {
            demand_min: 0.4,
            demand_max: 1.4,
            demand_step: 0.1,
            s_values: vec![0.0, 0.05],
            r_values: vec![1.0, 1.4],
            displaceable: vec!["G2".into()],
            res_siting: [(2, 3)].into_iter().collect(),
        };
        for sc in crate::scenario::generate_scenarios(&net, &cfg).unwrap() {
            let Ok(t) = dispatch(&net, &sc) else { continue };
            for (m, &p) in net.machines.iter().zip(&t.machine_p) {
                let f = sc.unit_fraction(m);
                assert!(p >= m.p_min * f - 1e-9 && p <= m.p_max * f + 1e-9, "{} at {p}", m.id);
            }
            for (r, &p) in net.res_units.iter().zip(&t.res_p) {
                assert!(p >= 0.0 && p <= sc.res_mva[&r.id] + 1e-9);
            }
        }
    }
}
