//! Intervention harness: re-run the physical study under an operating rule
//! and compare CCT distributions against the unmodified scenarios.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cct::{model_cct, CctSearch};
use crate::dynamics::{build_dynamic_model, SimConfig};
use crate::network::{BusId, PowerNetwork};
use crate::scenario::{replacement_res_mva, replacement_unit, LoadingCap, Scenario};
use crate::study::solve_scenario;
use crate::{math, Error, Executor, Result};

/// How renewable capacity is treated when a displacement is undone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResMode {
    /// Recompute the replacement capacity as if all units stayed in service.
    #[default]
    Recompute,
    /// Keep the renewable capacity of the displaced scenario.
    Keep,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Rule {
    /// Never take units of `machine` out of service.
    ForbidDisplacement {
        machine: String,
        #[serde(default)]
        res_mode: ResMode,
    },
    /// Keep the loading of `machine` at or below `percent` of its maximum.
    CapLoading { machine: String, percent: f64 },
}

impl Rule {
    pub fn machine(&self) -> &str {
        match self {
            Rule::ForbidDisplacement { machine, .. } | Rule::CapLoading { machine, .. } => machine,
        }
    }

    /// Short name used in file names.
    pub fn slug(&self) -> String {
        match self {
            Rule::ForbidDisplacement { machine, .. } => format!("forbid_displacement_{machine}"),
            Rule::CapLoading { machine, percent } => format!("cap_loading_{machine}_{percent}"),
        }
    }

    pub fn description(&self) -> String {
        match self {
            Rule::ForbidDisplacement { machine, res_mode } => {
                let res = match res_mode {
                    ResMode::Recompute => "recomputed",
                    ResMode::Keep => "kept",
                };
                format!("keep every unit of {machine} in service (RES capacity {res})")
            }
            Rule::CapLoading { machine, percent } => format!("keep {machine} loading at or below {percent}%"),
        }
    }

    pub fn validate(&self, net: &PowerNetwork) -> Result<()> {
        if net.machine_index(self.machine()).is_none() {
            return Err(Error::UnknownMachine(self.machine().into()));
        }
        if let Rule::CapLoading { percent, .. } = self {
            if !(*percent > 0.0 && *percent <= 100.0) {
                return Err(Error::InvalidConfig(format!("loading cap must be in (0, 100], got {percent}")));
            }
        }
        Ok(())
    }
}

/// An affected scenario and its modified copy; both keep the original id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RulePair {
    pub baseline: Scenario,
    pub ruled: Scenario,
}

/// Selects the scenarios a rule changes and builds their modified copies.
///
/// `siting` maps areas to the bus of their renewable plant and is only read
/// when capacity is recomputed.
pub fn apply_rule(
    net: &PowerNetwork,
    scenarios: &[Scenario],
    rule: &Rule,
    siting: &BTreeMap<u32, BusId>,
) -> Result<Vec<RulePair>> {
    rule.validate(net)?;
    let mut out = Vec::new();
    match rule {
        Rule::ForbidDisplacement { machine, res_mode } => {
            let (m, res) = match res_mode {
                ResMode::Recompute => {
                    let (m, r) = replacement_unit(net, siting, machine)?;
                    (m, Some(r))
                }
                ResMode::Keep => (&net.machines[net.machine_index(machine).expect("validated")], None),
            };
            for sc in scenarios.iter().filter(|s| s.displaced_sg.as_deref() == Some(machine.as_str())) {
                let mut ruled = sc.clone();
                ruled.u = m.n_units;
                if let Some(r) = res {
                    let mva = replacement_res_mva(m.mva_rating, m.n_units, m.n_units, sc.s, sc.r, r.unit_size);
                    ruled.res_mva.insert(r.id.clone(), mva);
                }
                out.push(RulePair { baseline: sc.clone(), ruled });
            }
        }
        Rule::CapLoading { machine, percent } => {
            for sc in scenarios {
                let mut ruled = sc.clone();
                ruled.loading_caps.push(LoadingCap { machine: machine.clone(), percent: *percent });
                out.push(RulePair { baseline: sc.clone(), ruled });
            }
        }
    }
    Ok(out)
}

/// Type-7 quantile (linear interpolation between order statistics) of
/// sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = math::floor(h) as usize;
    if lo + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

/// Box plot statistics of a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

impl BoxStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            n: v.len(),
            min: v[0],
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
    }

    /// Field-wise `self - other`; `n` is kept from `self`.
    pub fn minus(&self, other: &Self) -> Self {
        Self {
            n: self.n,
            min: self.min - other.min,
            q1: self.q1 - other.q1,
            median: self.median - other.median,
            q3: self.q3 - other.q3,
            max: self.max - other.max,
            mean: self.mean - other.mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub scenario_id: usize,
    /// CCT at the target bus, `None` when the variant has no operating point.
    pub baseline: Option<f64>,
    pub ruled: Option<f64>,
}

impl PairOutcome {
    pub fn both(&self) -> Option<(f64, f64)> {
        Some((self.baseline?, self.ruled?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionResult {
    pub rule: Rule,
    pub target_bus: BusId,
    pub n_affected: usize,
    /// Pairs where both variants solved.
    pub n_compared: usize,
    pub pairs: Vec<PairOutcome>,
    pub baseline: BoxStats,
    pub ruled: BoxStats,
    /// `ruled - baseline`, statistic by statistic.
    pub delta: BoxStats,
}

fn target_cct(net: &PowerNetwork, sc: &Scenario, bus: BusId, search: &CctSearch, sim: &SimConfig) -> Result<Option<f64>> {
    let solved = solve_scenario(net, sc)?;
    let Some(op) = solved.converged() else {
        return Ok(None);
    };
    let model = build_dynamic_model(net, sc, op, Some(bus))?;
    Ok(Some(model_cct(&model, bus, search, sim).cct))
}

/// Re-dispatches, re-solves and re-simulates both variants of every pair and
/// compares CCTs at `target_bus` over the pairs where both solved.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_intervention<E: Executor>(
    net: &PowerNetwork,
    rule: &Rule,
    pairs: &[RulePair],
    target_bus: BusId,
    search: &CctSearch,
    sim: &SimConfig,
    exec: &E,
) -> Result<InterventionResult> {
    if pairs.is_empty() {
        return Err(Error::InsufficientData(format!("rule '{}' affects no scenario", rule.slug())));
    }
    if net.bus_index(target_bus).is_none() {
        return Err(Error::UnknownBus(target_bus));
    }
    search.validate()?;
    let jobs: Vec<usize> = (0..pairs.len()).collect();
    let outcomes = exec.map(jobs, |i| -> Result<PairOutcome> {
        let p = &pairs[i];
        let wrap = |e: Error| Error::Row { row: p.baseline.id, source: Box::new(e) };
        Ok(PairOutcome {
            scenario_id: p.baseline.id,
            baseline: target_cct(net, &p.baseline, target_bus, search, sim).map_err(wrap)?,
            ruled: target_cct(net, &p.ruled, target_bus, search, sim).map_err(wrap)?,
        })
    });
    let pairs: Vec<PairOutcome> = outcomes.into_iter().collect::<Result<_>>()?;
    let (base, ruled): (Vec<f64>, Vec<f64>) = pairs.iter().filter_map(PairOutcome::both).unzip();
    let (Some(b), Some(r)) = (BoxStats::of(&base), BoxStats::of(&ruled)) else {
        return Err(Error::InsufficientData("no pair solved in both variants".into()));
    };
    Ok(InterventionResult {
        rule: rule.clone(),
        target_bus,
        n_affected: pairs.len(),
        n_compared: base.len(),
        pairs,
        delta: r.minus(&b),
        baseline: b,
        ruled: r,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_scenarios, ScenarioConfig};
    use crate::study::{scenario_ccts, StudyConfig};
    use crate::testnet::triangle;
    use crate::Sequential;
    use alloc::vec;
    use proptest::prelude::*;

    fn scenario_cfg() -> ScenarioConfig {
        ScenarioConfig {
            demand_min: 0.8,
            demand_max: 1.0,
            demand_step: 0.1,
            s_values: vec![0.0, 0.05],
            r_values: vec![1.0],
            displaceable: vec!["G2".into()],
            res_siting: [(2, 3)].into_iter().collect(),
        }
    }

    fn scenarios() -> Vec<Scenario> {
        generate_scenarios(&triangle(), &scenario_cfg()).unwrap()
    }

    #[test]
    fn selection_and_field_diff() {
        let net = triangle();
        let sc = scenarios();
        let rule = Rule::ForbidDisplacement { machine: "G2".into(), res_mode: ResMode::Recompute };
        let pairs = apply_rule(&net, &sc, &rule, &scenario_cfg().res_siting).unwrap();
        assert_eq!(pairs.len(), sc.iter().filter(|s| s.displaced_sg.is_some()).count());
        for p in &pairs {
            let (a, b) = (&p.baseline, &p.ruled);
            assert_eq!(b.u, 4);
            assert_eq!((a.id, a.demand_mult, a.s, a.r, &a.displaced_sg), (b.id, b.demand_mult, b.s, b.r, &b.displaced_sg));
            assert_eq!(a.loading_caps, b.loading_caps);
            // (n + 1 - n) * 200 / 4 + s * 200, rounded up to 2 MVA units
            let want = libm::ceil((50.0 + a.s * 200.0) / 2.0 - 1e-9) * 2.0;
            assert_eq!(b.res_mva["R1"], want);
        }
        let keep = Rule::ForbidDisplacement { machine: "G2".into(), res_mode: ResMode::Keep };
        for p in apply_rule(&net, &sc, &keep, &BTreeMap::new()).unwrap() {
            assert_eq!(p.baseline.res_mva, p.ruled.res_mva);
        }
    }

    #[test]
    fn machine_never_displaced_affects_nothing() {
        let rule = Rule::ForbidDisplacement { machine: "G1".into(), res_mode: ResMode::Keep };
        assert!(apply_rule(&triangle(), &scenarios(), &rule, &BTreeMap::new()).unwrap().is_empty());
        let bad = Rule::CapLoading { machine: "G9".into(), percent: 50.0 };
        assert!(matches!(apply_rule(&triangle(), &scenarios(), &bad, &BTreeMap::new()), Err(Error::UnknownMachine(_))));
    }

    #[test]
    fn vacuous_rule_has_zero_delta() {
        let net = triangle();
        let sc: Vec<Scenario> = scenarios().into_iter().filter(|s| s.displaced_sg.is_some()).take(3).collect();
        let pairs: Vec<RulePair> = sc.iter().map(|s| RulePair { baseline: s.clone(), ruled: s.clone() }).collect();
        let rule = Rule::CapLoading { machine: "G2".into(), percent: 100.0 };
        let res =
            evaluate_intervention(&net, &rule, &pairs, 3, &CctSearch::default(), &SimConfig::default(), &Sequential)
                .unwrap();
        assert_eq!(res.n_compared, 3);
        assert_eq!(res.delta.median, 0.0);
        assert_eq!(res.delta.mean, 0.0);
    }

    #[test]
    fn keeping_units_in_service_raises_cct() {
        // G2 is steep enough on cost to stay inside its limits for every unit
        // count, and RES capacity is kept, so both variants share dispatch and
        // power flow and differ only in G2's inertia and reactance
        let mut net = triangle();
        net.machines[1].cost.c2 = 0.05;
        let cfg = ScenarioConfig { r_values: vec![0.1], ..scenario_cfg() };
        let sc = generate_scenarios(&net, &cfg).unwrap();
        let rule = Rule::ForbidDisplacement { machine: "G2".into(), res_mode: ResMode::Keep };
        let pairs: Vec<RulePair> =
            apply_rule(&net, &sc, &rule, &cfg.res_siting).unwrap().into_iter().filter(|p| p.baseline.u < 4).collect();
        for p in &pairs {
            let a = solve_scenario(&net, &p.baseline).unwrap();
            let b = solve_scenario(&net, &p.ruled).unwrap();
            assert_eq!(a.converged().unwrap().gen_p, b.converged().unwrap().gen_p);
        }
        let study = StudyConfig { fault_buses: vec![2], search: CctSearch::default(), sim: SimConfig::default() };
        let res = evaluate_intervention(&net, &rule, &pairs, 2, &study.search, &study.sim, &Sequential).unwrap();
        assert_eq!(res.n_compared, pairs.len());
        assert!(res.ruled.median >= res.baseline.median, "{:?} vs {:?}", res.ruled, res.baseline);
        // baseline CCTs are the ones the study itself produces
        for (p, o) in pairs.iter().zip(&res.pairs) {
            let solved = solve_scenario(&net, &p.baseline).unwrap();
            let surface = scenario_ccts(&net, &p.baseline, solved.converged().unwrap(), &study).unwrap();
            assert_eq!(o.baseline, Some(surface.entries[0].result.as_ref().unwrap().cct));
        }
    }

    /// Piecewise linear interpolation through `((k - 1) / (n - 1), x_k)`.
    fn quantile_by_scan(data: &[f64], p: f64) -> f64 {
        let mut v = data.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n == 1 {
            return v[0];
        }
        for k in 0..n - 1 {
            let (a, b) = (k as f64 / (n - 1) as f64, (k + 1) as f64 / (n - 1) as f64);
            if p >= a && p <= b {
                return v[k] + (p - a) / (b - a) * (v[k + 1] - v[k]);
            }
        }
        v[n - 1]
    }

    #[test]
    fn quartiles_by_hand() {
        let s = BoxStats::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max), (1.0, 1.75, 2.5, 3.25, 4.0));
        assert!(BoxStats::of(&[]).is_none());
    }

    proptest! {
        #[test]
        fn quantile_agrees_with_scan(data in prop::collection::vec(-5.0f64..5.0, 1..40), p in 0.0f64..=1.0) {
            let mut v = data.clone();
            v.sort_by(f64::total_cmp);
            prop_assert!((quantile(&v, p) - quantile_by_scan(&data, p)).abs() <= 1e-12);
        }
    }
}
