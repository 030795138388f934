//! Operational scenario generation: demand sweep, staged displacement of
//! synchronous machines and renewable capacity that replaces them.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::network::{BusId, PowerNetwork, ResUnit, SyncMachine};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub demand_min: f64,
    pub demand_max: f64,
    pub demand_step: f64,
    /// Decoupling factors `s`.
    pub s_values: Vec<f64>,
    /// Penetration factors `r`.
    pub r_values: Vec<f64>,
    /// Machines that may be displaced, in sweep order.
    pub displaceable: Vec<String>,
    /// Bus hosting the renewable plant of each area.
    pub res_siting: BTreeMap<u32, BusId>,
}

impl ScenarioConfig {
    pub fn demand_levels(&self) -> Result<Vec<f64>> {
        if !(self.demand_step > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "demand step must be positive, got {}",
                self.demand_step
            )));
        }
        if !(self.demand_max >= self.demand_min) || !(self.demand_min > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "demand range [{}, {}] is invalid",
                self.demand_min, self.demand_max
            )));
        }
        let count = math::floor((self.demand_max - self.demand_min) / self.demand_step + 1e-9) as usize + 1;
        Ok((0..count)
            .map(|i| round9(self.demand_min + i as f64 * self.demand_step))
            .collect())
    }
}

fn round9(x: f64) -> f64 {
    math::round(x * 1e9) / 1e9
}

/// Extra dispatch constraint: cap a machine's loading at `percent` of its
/// effective maximum output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadingCap {
    pub machine: String,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: usize,
    pub demand_mult: f64,
    pub displaced_sg: Option<String>,
    /// Units left in service on the displaced machine; 0 when nothing is
    /// displaced.
    pub u: u32,
    pub s: f64,
    pub r: f64,
    /// Renewable rating per RES unit id, MVA.
    pub res_mva: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub loading_caps: Vec<LoadingCap>,
}

/// Per-scenario view of a machine after displacement scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveMachine {
    /// Fraction of units in service.
    pub fraction: f64,
    pub mva: f64,
    pub p_max: f64,
    pub p_min: f64,
    pub q_max: f64,
    pub q_min: f64,
    /// Inertia constant on the system base, s.
    pub h_sys: f64,
    /// Damping on the system base, p.u.
    pub d_sys: f64,
    /// Transient reactance on the system base, p.u.
    pub xd_sys: f64,
}

impl Scenario {
    /// Fraction of the machine's units in service.
    pub fn unit_fraction(&self, machine: &SyncMachine) -> f64 {
        match &self.displaced_sg {
            Some(id) if *id == machine.id => self.u as f64 / machine.n_units as f64,
            _ => 1.0,
        }
    }

    pub fn effective(&self, machine: &SyncMachine, base_mva: f64) -> EffectiveMachine {
        let fraction = self.unit_fraction(machine);
        let mva = machine.mva_rating * fraction;
        let mut p_max = machine.p_max * fraction;
        for cap in self.loading_caps.iter().filter(|c| c.machine == machine.id) {
            p_max = p_max.min(p_max * cap.percent / 100.0);
        }
        let p_min = (machine.p_min * fraction).min(p_max);
        EffectiveMachine {
            fraction,
            mva,
            p_max,
            p_min,
            q_max: machine.q_max * fraction,
            q_min: machine.q_min * fraction,
            h_sys: machine.h * mva / base_mva,
            d_sys: machine.d * mva / base_mva,
            xd_sys: if mva > 0.0 { machine.xd_prime * base_mva / mva } else { f64::INFINITY },
        }
    }

    /// Rating of the displaced machine before displacement, if any.
    pub fn sg_mva_old(&self, net: &PowerNetwork) -> Option<f64> {
        let id = self.displaced_sg.as_ref()?;
        net.machines.iter().find(|m| &m.id == id).map(|m| m.mva_rating)
    }

    /// Rating of the displaced machine after displacement, if any.
    pub fn sg_mva_new(&self, net: &PowerNetwork) -> Option<f64> {
        let id = self.displaced_sg.as_ref()?;
        let m = net.machines.iter().find(|m| &m.id == id)?;
        Some(displaced_mva(m.mva_rating, self.u, m.n_units))
    }

    pub fn res_total(&self) -> f64 {
        self.res_mva.values().sum()
    }
}

/// Rating left after displacement: `u` of `n_units` equal units remain.
pub fn displaced_mva(sg_mva_old: f64, u: u32, n_units: u32) -> f64 {
    u as f64 * (sg_mva_old / n_units as f64)
}

/// Renewable capacity that replaces a displaced machine,
/// `r * ((n + 1 - u) * old / n + s * old)`, rounded up to whole units.
///
/// With the standard four units per machine this is
/// `r * ((5 - u) * old / 4 + s * old)`.
pub fn replacement_res_mva(sg_mva_old: f64, u: u32, n_units: u32, s: f64, r: f64, unit_size: f64) -> f64 {
    let n = n_units as f64;
    let raw = r * ((n + 1.0 - u as f64) * sg_mva_old / n + s * sg_mva_old);
    round_up_to_units(raw.max(0.0), unit_size)
}

/// Rounds up to the next multiple of `unit_size`, tolerating float noise just
/// above an exact multiple.
pub fn round_up_to_units(mva: f64, unit_size: f64) -> f64 {
    math::ceil(mva / unit_size - 1e-9).max(0.0) * unit_size
}

/// A displaceable machine and the renewable plant sited in its area.
pub fn replacement_unit<'a>(
    net: &'a PowerNetwork,
    siting: &BTreeMap<u32, BusId>,
    machine_id: &str,
) -> Result<(&'a SyncMachine, &'a ResUnit)> {
    let machine = net
        .machines
        .iter()
        .find(|m| m.id == machine_id)
        .ok_or_else(|| Error::UnknownMachine(machine_id.into()))?;
    if machine.is_slack {
        return Err(Error::InvalidConfig(format!("slack machine '{machine_id}' cannot be displaced")));
    }
    let area = net.area_of(machine.bus).ok_or(Error::UnknownBus(machine.bus))?;
    let bus = *siting
        .get(&area)
        .ok_or_else(|| Error::InvalidConfig(format!("no RES siting for area {area}")))?;
    let res = net
        .res_units
        .iter()
        .find(|r| r.bus == bus && r.area == area)
        .ok_or_else(|| Error::InvalidConfig(format!("no RES unit at bus {bus} in area {area}")))?;
    Ok((machine, res))
}

/// Builds the full scenario list.
///
/// Ordering is by demand level, then a no-displacement scenario, then
/// displaceable machine (config order), remaining units `u`, `s` and `r`.
pub fn generate_scenarios(net: &PowerNetwork, cfg: &ScenarioConfig) -> Result<Vec<Scenario>> {
    if cfg.displaceable.is_empty() {
        return Err(Error::InvalidConfig("no displaceable machines configured".into()));
    }
    if cfg.s_values.is_empty() || cfg.r_values.is_empty() {
        return Err(Error::InvalidConfig("s_values and r_values must be non-empty".into()));
    }
    let demand = cfg.demand_levels()?;

    // resolve machine -> RES unit once
    let mut targets = Vec::with_capacity(cfg.displaceable.len());
    for id in &cfg.displaceable {
        targets.push(replacement_unit(net, &cfg.res_siting, id)?);
    }

    let baseline_res: BTreeMap<String, f64> = net.res_units.iter().map(|r| (r.id.clone(), r.mva_rating)).collect();
    let mut out = Vec::new();
    for &d in &demand {
        out.push(Scenario {
            id: out.len(),
            demand_mult: d,
            displaced_sg: None,
            u: 0,
            s: 0.0,
            r: 0.0,
            res_mva: baseline_res.clone(),
            loading_caps: Vec::new(),
        });
        for &(machine, res) in &targets {
            for u in 1..=machine.n_units {
                for &s in &cfg.s_values {
                    for &r in &cfg.r_values {
                        let mut res_mva = baseline_res.clone();
                        res_mva.insert(
                            res.id.clone(),
                            replacement_res_mva(machine.mva_rating, u, machine.n_units, s, r, res.unit_size),
                        );
                        out.push(Scenario {
                            id: out.len(),
                            demand_mult: d,
                            displaced_sg: Some(machine.id.clone()),
                            u,
                            s,
                            r,
                            res_mva,
                            loading_caps: Vec::new(),
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use alloc::vec;

    #[test]
    fn replacement_capacity_examples() {
        // 1.4 * (2 * 800 / 4 + 0.05 * 800) = 1.4 * 440 = 616, already even
        assert_eq!(replacement_res_mva(800.0, 3, 4, 0.05, 1.4, 2.0), 616.0);
        // 3 * 700 / 4 = 525 -> 526
        assert_eq!(replacement_res_mva(700.0, 2, 4, 0.0, 1.0, 2.0), 526.0);
    }

    #[test]
    fn displaced_rating() {
        assert_eq!(displaced_mva(800.0, 3, 4), 600.0);
        assert_eq!(displaced_mva(800.0, 4, 4), 800.0);
    }

    #[test]
    fn demand_levels_inclusive() {
        let cfg = ScenarioConfig {
            demand_min: 0.6,
            demand_max: 1.025,
            demand_step: 0.025,
            s_values: vec![0.0],
            r_values: vec![1.0],
            displaceable: vec![],
            res_siting: BTreeMap::new(),
        };
        let levels = cfg.demand_levels().unwrap();
        assert_eq!(levels.len(), 18);
        assert_eq!(levels[0], 0.6);
        assert_eq!(levels[17], 1.025);
        let bad = ScenarioConfig { demand_step: 0.0, ..cfg };
        assert!(matches!(bad.demand_levels(), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn monotone_in_remaining_units() {
        for &s in &[-0.05, 0.0, 0.05] {
            for &r in &[1.0, 1.4] {
                for old in [100.0, 247.5, 800.0, 1040.0] {
                    let v: Vec<f64> = (1..=4).map(|u| replacement_res_mva(old, u, 4, s, r, 2.0)).collect();
                    assert!(v.windows(2).all(|w| w[0] > w[1]), "{v:?}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn count_matches_closed_form(d in 1usize..12, s in 1usize..4, r in 1usize..3) {
            let net = crate::testnet::triangle();
            let cfg = ScenarioConfig {
                demand_min: 0.5,
                demand_max: 0.5 + 0.05 * (d - 1) as f64,
                demand_step: 0.05,
                s_values: (0..s).map(|k| 0.05 * k as f64).collect(),
                r_values: (0..r).map(|k| 1.0 + 0.4 * k as f64).collect(),
                displaceable: vec!["G2".into()],
                res_siting: [(2, 3)].into_iter().collect(),
            };
            let sc = generate_scenarios(&net, &cfg).unwrap();
            prop_assert_eq!(sc.len(), d * (4 * s * r) + d);
            prop_assert!(sc.iter().enumerate().all(|(i, s)| s.id == i));
        }
    }
}
