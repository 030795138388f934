//! Per-scenario physical study: dispatch, power flow and the CCT surface.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cct::{boundary_holds, compute_cct_surface, CctSearch, CctSurface};
use crate::dispatch::dispatch;
use crate::dynamics::{build_dynamic_model, SimConfig};
use crate::network::{BusId, PowerNetwork};
use crate::powerflow::{solve_powerflow, OperatingPoint};
use crate::scenario::Scenario;
use crate::{Error, Result, Sequential};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "detail", rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    NotConverged,
    Infeasible(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolvedScenario {
    pub scenario_id: usize,
    pub status: SolveStatus,
    /// Present whenever the power flow ran, converged or not.
    pub operating_point: Option<OperatingPoint>,
}

impl SolvedScenario {
    pub fn converged(&self) -> Option<&OperatingPoint> {
        match self.status {
            SolveStatus::Converged => self.operating_point.as_ref(),
            _ => None,
        }
    }
}

/// Dispatches and solves one scenario. Infeasible dispatch and a diverging
/// power flow are outcomes, not errors.
pub fn solve_scenario(net: &PowerNetwork, sc: &Scenario) -> Result<SolvedScenario> {
    let targets = match dispatch(net, sc) {
        Ok(t) => t,
        Err(Error::Infeasible(why)) => {
            log::warn!("scenario {}: dispatch infeasible: {why}", sc.id);
            return Ok(SolvedScenario {
                scenario_id: sc.id,
                status: SolveStatus::Infeasible(why),
                operating_point: None,
            });
        }
        Err(e) => return Err(e),
    };
    let op = solve_powerflow(net, sc, &targets)?;
    let status = if op.converged {
        SolveStatus::Converged
    } else {
        log::warn!("scenario {}: power flow did not converge (mismatch {:.3e})", sc.id, op.mismatch);
        SolveStatus::NotConverged
    };
    Ok(SolvedScenario {
        scenario_id: sc.id,
        status,
        operating_point: Some(op),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub fault_buses: Vec<BusId>,
    #[serde(default)]
    pub search: CctSearch,
    #[serde(default)]
    pub sim: SimConfig,
}

impl StudyConfig {
    pub fn validate(&self, net: &PowerNetwork) -> Result<()> {
        if self.fault_buses.is_empty() {
            return Err(Error::InvalidConfig("no fault buses given".into()));
        }
        for (i, b) in self.fault_buses.iter().enumerate() {
            if net.bus_index(*b).is_none() {
                return Err(Error::UnknownBus(*b));
            }
            if self.fault_buses[..i].contains(b) {
                return Err(Error::InvalidConfig(format!("fault bus {b} listed twice")));
            }
        }
        self.search.validate()?;
        if !(self.sim.step > 0.0) || !(self.sim.post_clear_horizon > 0.0) {
            return Err(Error::InvalidConfig("simulation step and horizon must be positive".into()));
        }
        Ok(())
    }
}

/// CCT at every configured fault bus for a converged operating point.
/// Buses are processed in order on the calling thread.
pub fn scenario_ccts(net: &PowerNetwork, sc: &Scenario, op: &OperatingPoint, cfg: &StudyConfig) -> Result<CctSurface> {
    compute_cct_surface(net, sc, op, &cfg.fault_buses, &cfg.search, &cfg.sim, &Sequential)
}

/// Boundary soundness of every successful entry of a surface, in entry order.
pub fn check_surface(
    net: &PowerNetwork,
    sc: &Scenario,
    op: &OperatingPoint,
    surface: &CctSurface,
    cfg: &StudyConfig,
) -> Result<Vec<(BusId, bool)>> {
    let mut out = Vec::new();
    for entry in &surface.entries {
        if let Some(r) = &entry.result {
            let model = build_dynamic_model(net, sc, op, Some(entry.bus))?;
            out.push((entry.bus, boundary_holds(&model, r, &cfg.search, &cfg.sim)));
        }
    }
    Ok(out)
}
