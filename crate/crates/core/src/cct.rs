//! Critical clearing time search: a coarse sweep over fault durations until
//! the first loss of synchronism, then a fine sweep below it.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dynamics::{build_dynamic_model, is_stable, DynamicModel, SimConfig};
use crate::math;
use crate::network::{BusId, PowerNetwork};
use crate::powerflow::OperatingPoint;
use crate::scenario::Scenario;
use crate::{Error, Executor, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CctSearch {
    pub coarse: f64,
    pub fine: f64,
    /// Durations are never tested beyond this; a system stable up to here is
    /// reported at the cap.
    pub cap: f64,
}

impl Default for CctSearch {
    fn default() -> Self {
        Self {
            coarse: 0.1,
            fine: 0.01,
            cap: 1.40,
        }
    }
}

impl CctSearch {
    pub fn validate(&self) -> Result<()> {
        if !(self.fine > 0.0 && self.coarse >= self.fine && self.cap >= self.coarse) {
            return Err(Error::InvalidConfig(format!(
                "CCT search needs 0 < fine <= coarse <= cap, got fine={} coarse={} cap={}",
                self.fine, self.coarse, self.cap
            )));
        }
        let ratio = self.coarse / self.fine;
        if (ratio - math::round(ratio)).abs() > 1e-9 {
            return Err(Error::InvalidConfig("coarse step must be a multiple of the fine step".into()));
        }
        let cap = self.cap / self.fine;
        if (cap - math::round(cap)).abs() > 1e-9 {
            return Err(Error::InvalidConfig("cap must be a multiple of the fine step".into()));
        }
        Ok(())
    }

    fn fine_per_coarse(&self) -> usize {
        math::round(self.coarse / self.fine) as usize
    }

    fn cap_steps(&self) -> usize {
        math::round(self.cap / self.fine) as usize
    }

    /// Duration for `k` fine steps, computed without accumulation.
    pub fn duration(&self, fine_steps: usize) -> f64 {
        fine_steps as f64 * self.fine
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CctResult {
    pub fault_bus: BusId,
    pub cct: f64,
    pub capped: bool,
    /// Number of stability evaluations performed.
    pub evaluations: usize,
}

/// Runs the coarse/fine search against a stability oracle
/// (`stable(t_clear)`), assumed monotone in the fault duration.
pub fn compute_cct(mut stable: impl FnMut(f64) -> bool, fault_bus: BusId, search: &CctSearch) -> CctResult {
    let per_coarse = search.fine_per_coarse().max(1);
    let cap_steps = search.cap_steps();
    let mut evaluations = 0;
    let mut first_unstable = None;
    let mut k = per_coarse;
    while k <= cap_steps {
        evaluations += 1;
        if !stable(search.duration(k)) {
            first_unstable = Some(k);
            break;
        }
        k += per_coarse;
    }
    let Some(unstable) = first_unstable else {
        return CctResult {
            fault_bus,
            cct: search.cap,
            capped: true,
            evaluations,
        };
    };
    let mut last_stable = unstable - per_coarse;
    for k in last_stable + 1..unstable {
        evaluations += 1;
        if stable(search.duration(k)) {
            last_stable = k;
        } else {
            break;
        }
    }
    CctResult {
        fault_bus,
        cct: search.duration(last_stable),
        capped: false,
        evaluations,
    }
}

/// CCT for one dynamic model.
pub fn model_cct(model: &DynamicModel, fault_bus: BusId, search: &CctSearch, sim: &SimConfig) -> CctResult {
    compute_cct(|t| is_stable(model, t, sim), fault_bus, search)
}

/// Boundary soundness: stable when cleared at the CCT and unstable one fine
/// step later. Capped results only need the first half.
pub fn boundary_holds(model: &DynamicModel, result: &CctResult, search: &CctSearch, sim: &SimConfig) -> bool {
    let stable_at = is_stable(model, result.cct, sim);
    if result.capped {
        return stable_at;
    }
    stable_at && !is_stable(model, result.cct + search.fine, sim)
}

/// CCT at one fault location, or the reason it could not be computed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CctEntry {
    pub bus: BusId,
    pub result: Option<CctResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CctSurface {
    pub entries: Vec<CctEntry>,
    /// Smallest CCT over successful entries and the bus where it occurs.
    pub cct_min: Option<(f64, BusId)>,
}

/// Minimum over successful entries; ties go to the lowest bus id.
pub fn cct_min(entries: &[CctEntry]) -> Option<(f64, BusId)> {
    entries
        .iter()
        .filter_map(|e| e.result.map(|r| (r.cct, e.bus)))
        .fold(None, |best: Option<(f64, BusId)>, (cct, bus)| match best {
            Some((b_cct, b_bus)) if b_cct < cct || (b_cct == cct && b_bus <= bus) => Some((b_cct, b_bus)),
            _ => Some((cct, bus)),
        })
}

/// CCTs at every fault bus for one solved scenario.
pub fn compute_cct_surface<E: Executor>(
    net: &PowerNetwork,
    sc: &Scenario,
    op: &OperatingPoint,
    fault_buses: &[BusId],
    search: &CctSearch,
    sim: &SimConfig,
    exec: &E,
) -> Result<CctSurface> {
    if fault_buses.is_empty() {
        return Err(Error::InvalidConfig("no fault buses given".into()));
    }
    search.validate()?;
    let entries = exec.map(fault_buses.to_vec(), |bus| match build_dynamic_model(net, sc, op, Some(bus)) {
        Ok(model) => CctEntry {
            bus,
            result: Some(model_cct(&model, bus, search, sim)),
            failure: None,
        },
        Err(e) => CctEntry {
            bus,
            result: None,
            failure: Some(format!("{e}")),
        },
    });
    let cct_min = cct_min(&entries);
    Ok(CctSurface { entries, cct_min })
}
