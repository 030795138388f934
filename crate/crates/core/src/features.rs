//! Pre-fault feature extraction and transient stability database assembly.
//!
//! The schema is fixed by the network and the list of monitored branches.
//! Nothing here looks at simulation output except the CCT targets.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cct::CctSurface;
use crate::network::{BusId, PowerNetwork};
use crate::powerflow::OperatingPoint;
use crate::scenario::Scenario;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Category {
    #[serde(rename = "SG")]
    Sg,
    #[serde(rename = "RES")]
    Res,
    System,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDesc {
    pub name: String,
    pub category: Category,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub features: Vec<FeatureDesc>,
    /// Indices into the network's branch list whose flows are features.
    pub monitored_branches: Vec<usize>,
}

impl FeatureSchema {
    /// Builds the schema for `net`. `monitored = None` monitors every branch.
    pub fn for_network(net: &PowerNetwork, monitored: Option<&[usize]>) -> Result<Self> {
        let monitored: Vec<usize> = match monitored {
            Some(m) => m.to_vec(),
            None => (0..net.branches.len()).collect(),
        };
        if let Some(&bad) = monitored.iter().find(|&&i| i >= net.branches.len()) {
            return Err(Error::InvalidConfig(format!("monitored branch index {bad} out of range")));
        }
        let mut f = Vec::new();
        let mut push = |name: String, category, unit: &str| {
            f.push(FeatureDesc { name, category, unit: unit.to_string() })
        };
        use Category::*;
        for m in &net.machines {
            let id = &m.id;
            push(format!("SG_P_{id}"), Sg, "MW");
            push(format!("SG_Q_{id}"), Sg, "MVAr");
            push(format!("SG_V_{id}"), Sg, "p.u.");
            push(format!("SG_MVA_{id}"), Sg, "MVA");
            push(format!("SG_H_{id}"), Sg, "s");
            push(format!("SG_Pmax_{id}"), Sg, "MW");
            push(format!("SG_Pmin_{id}"), Sg, "MW");
            push(format!("SG_Qmax_{id}"), Sg, "MVAr");
            push(format!("SG_Qmin_{id}"), Sg, "MVAr");
            push(format!("SG_Ploading_{id}"), Sg, "%");
            push(format!("SG_Qloading_{id}"), Sg, "%");
            push(format!("SG_units_{id}"), Sg, "count");
            push(format!("SG_Xd_{id}"), Sg, "p.u.");
        }
        for a in &net.areas {
            push(format!("SG_MVA_total_A{}", a.id), Sg, "MVA");
            push(format!("SG_H_total_A{}", a.id), Sg, "s");
            push(format!("RES_MVA_total_A{}", a.id), Res, "MVA");
        }
        push("SG_MVA_total".into(), Sg, "MVA");
        push("SG_H_total".into(), Sg, "s");
        push("SG_P_total".into(), Sg, "MW");
        for r in &net.res_units {
            push(format!("RES_P_{}", r.id), Res, "MW");
            push(format!("RES_Q_{}", r.id), Res, "MVAr");
            push(format!("RES_MVA_{}", r.id), Res, "MVA");
        }
        push("RES_MVA_total".into(), Res, "MVA");
        push("RES_MVA_total/SG_MVA_total".into(), Res, "ratio");
        push("RES_MVA_total/SG_P_total".into(), Res, "MVA/MW");
        for a in &net.areas {
            push(format!("RES_MVA_total/SG_MVA_total_A{}", a.id), Res, "ratio");
        }
        for l in &net.loads {
            push(format!("P_d_{}", l.id), System, "MW");
            push(format!("Q_d_{}", l.id), System, "MVAr");
        }
        for b in &net.buses {
            push(format!("v_bus_{}", b.id), System, "p.u.");
            push(format!("v_bus_delta_{}", b.id), System, "rad");
        }
        let mut seen: BTreeMap<(BusId, BusId), usize> = BTreeMap::new();
        for &i in &monitored {
            let br = &net.branches[i];
            let count = seen.entry((br.from, br.to)).or_insert(0);
            *count += 1;
            let tag = if *count == 1 {
                format!("{}_{}", br.from, br.to)
            } else {
                format!("{}_{}#{}", br.from, br.to, count)
            };
            push(format!("P_from_{tag}"), System, "MW");
            push(format!("P_to_{tag}"), System, "MW");
            push(format!("Q_from_{tag}"), System, "MVAr");
            push(format!("Q_to_{tag}"), System, "MVAr");
        }
        let schema = Self { features: f, monitored_branches: monitored };
        schema.check_unique()?;
        Ok(schema)
    }

    fn check_unique(&self) -> Result<()> {
        let mut names: Vec<&str> = self.features.iter().map(|f| f.name.as_str()).collect();
        names.sort_unstable();
        match names.windows(2).find(|w| w[0] == w[1]) {
            Some(w) => Err(Error::SchemaMismatch(format!("duplicate feature name '{}'", w[0]))),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.features
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.features.iter().map(|f| f.name.as_str())
    }

    /// Hex SHA-256 over names, categories, units and monitored branches.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for f in &self.features {
            h.update(f.name.as_bytes());
            h.update([0u8]);
            h.update(match f.category {
                Category::Sg => b"SG".as_slice(),
                Category::Res => b"RES".as_slice(),
                Category::System => b"System".as_slice(),
            });
            h.update([0u8]);
            h.update(f.unit.as_bytes());
            h.update([0xffu8]);
        }
        for &b in &self.monitored_branches {
            h.update((b as u64).to_le_bytes());
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    const DIGITS: &[u8; 16] = b"0123456789abcdef";
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push(DIGITS[(b >> 4) as usize] as char);
        s.push(DIGITS[(b & 15) as usize] as char);
    }
    s
}

/// `num / den`, or 0 with a warning when the denominator vanishes.
fn guarded_ratio(num: f64, den: f64, what: &str) -> f64 {
    if den.abs() < 1e-12 {
        if num.abs() > 1e-12 {
            log::warn!("{what}: zero denominator, feature set to 0");
        }
        0.0
    } else {
        num / den
    }
}

/// Feature vector for one converged scenario, in schema order.
pub fn extract_features(net: &PowerNetwork, schema: &FeatureSchema, sc: &Scenario, op: &OperatingPoint) -> Result<Vec<f64>> {
    if !op.converged {
        return Err(Error::NotConverged);
    }
    if op.vm.len() != net.buses.len() || op.gen_p.len() != net.machines.len() || op.res_p.len() != net.res_units.len() {
        return Err(Error::SchemaMismatch("operating point does not match the network".into()));
    }
    let base = net.base_mva;
    let mut x = Vec::with_capacity(schema.len());

    let mut area_sg_mva = BTreeMap::new();
    let mut area_sg_h = BTreeMap::new();
    let mut area_res = BTreeMap::new();
    for a in &net.areas {
        area_sg_mva.insert(a.id, 0.0);
        area_sg_h.insert(a.id, 0.0);
        area_res.insert(a.id, 0.0);
    }
    let (mut sg_mva, mut sg_h, mut sg_p) = (0.0, 0.0, 0.0);
    for (k, m) in net.machines.iter().enumerate() {
        let eff = sc.effective(m, base);
        let b = net.bus_index(m.bus).ok_or(Error::UnknownBus(m.bus))?;
        let (p, q) = (op.gen_p[k], op.gen_q[k]);
        // loading is against the displacement-scaled rating, not any cap
        let p_rated = m.p_max * eff.fraction;
        x.push(p);
        x.push(q);
        x.push(op.vm[b]);
        x.push(eff.mva);
        x.push(eff.h_sys);
        x.push(eff.p_max);
        x.push(eff.p_min);
        x.push(eff.q_max);
        x.push(eff.q_min);
        x.push(100.0 * guarded_ratio(p, p_rated, "SG_Ploading"));
        let q_limit = if q >= 0.0 { eff.q_max } else { -eff.q_min };
        x.push(100.0 * guarded_ratio(q, q_limit, "SG_Qloading"));
        x.push(eff.fraction * m.n_units as f64);
        x.push(eff.xd_sys);
        let area = net.area_of(m.bus).ok_or(Error::UnknownBus(m.bus))?;
        *area_sg_mva.get_mut(&area).expect("area exists") += eff.mva;
        *area_sg_h.get_mut(&area).expect("area exists") += eff.h_sys;
        sg_mva += eff.mva;
        sg_h += eff.h_sys;
        sg_p += p;
    }
    let res_mva: Vec<f64> = net
        .res_units
        .iter()
        .map(|r| sc.res_mva.get(&r.id).copied().unwrap_or(r.mva_rating))
        .collect();
    for (r, mva) in net.res_units.iter().zip(&res_mva) {
        *area_res.get_mut(&r.area).ok_or_else(|| Error::InvalidNetwork(format!("unknown area {}", r.area)))? += mva;
    }
    for a in &net.areas {
        x.push(area_sg_mva[&a.id]);
        x.push(area_sg_h[&a.id]);
        x.push(area_res[&a.id]);
    }
    x.push(sg_mva);
    x.push(sg_h);
    x.push(sg_p);
    for w in 0..net.res_units.len() {
        x.push(op.res_p[w]);
        x.push(op.res_q[w]);
        x.push(res_mva[w]);
    }
    let res_total: f64 = res_mva.iter().sum();
    x.push(res_total);
    x.push(guarded_ratio(res_total, sg_mva, "RES_MVA_total/SG_MVA_total"));
    x.push(guarded_ratio(res_total, sg_p, "RES_MVA_total/SG_P_total"));
    for a in &net.areas {
        x.push(guarded_ratio(area_res[&a.id], area_sg_mva[&a.id], "RES_MVA_total/SG_MVA_total per area"));
    }
    for l in &net.loads {
        x.push(l.p_base * sc.demand_mult);
        x.push(l.q_base * sc.demand_mult);
    }
    for i in 0..net.buses.len() {
        x.push(op.vm[i]);
        x.push(op.va[i]);
    }
    for &i in &schema.monitored_branches {
        let fl = op
            .branch_flows
            .get(i)
            .ok_or_else(|| Error::SchemaMismatch(format!("no flow for branch index {i}")))?;
        x.push(fl.p_from);
        x.push(fl.p_to);
        x.push(fl.q_from);
        x.push(fl.q_to);
    }
    if x.len() != schema.len() {
        return Err(Error::DimensionMismatch { expected: schema.len(), found: x.len() });
    }
    if let Some(i) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidConfig(format!("feature '{}' is not finite", schema.features[i].name)));
    }
    Ok(x)
}

pub const CCT_MIN: &str = "cct_min";

pub fn bus_target_name(bus: BusId) -> String {
    format!("cct_bus_{bus}")
}

/// Target names in storage order: one per fault bus, then `cct_min`.
pub fn target_names(fault_buses: &[BusId]) -> Vec<String> {
    let mut names: Vec<String> = fault_buses.iter().map(|&b| bus_target_name(b)).collect();
    names.push(CCT_MIN.to_string());
    names
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub name: String,
    pub values: Vec<f64>,
}

/// Transient stability database: one row per retained scenario, a shared
/// feature matrix and one CCT column per location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TSDb {
    pub schema: FeatureSchema,
    pub scenario_ids: Vec<usize>,
    pub x: Vec<Vec<f64>>,
    pub targets: Vec<Target>,
}

impl TSDb {
    pub fn n_rows(&self) -> usize {
        self.x.len()
    }

    pub fn target(&self, name: &str) -> Result<&[f64]> {
        self.targets
            .iter()
            .find(|t| t.name == name)
            .map(|t| t.values.as_slice())
            .ok_or_else(|| Error::InvalidConfig(format!("unknown target '{name}'")))
    }

    pub fn target_names(&self) -> Vec<&str> {
        self.targets.iter().map(|t| t.name.as_str()).collect()
    }

    pub fn column(&self, feature: &str) -> Result<Vec<f64>> {
        let j = self.schema.index_of(feature)?;
        Ok(self.x.iter().map(|r| r[j]).collect())
    }

    /// Checks shape invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.x.len();
        if self.scenario_ids.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: self.scenario_ids.len() });
        }
        if let Some(r) = self.x.iter().find(|r| r.len() != self.schema.len()) {
            return Err(Error::DimensionMismatch { expected: self.schema.len(), found: r.len() });
        }
        if let Some(t) = self.targets.iter().find(|t| t.values.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: t.values.len() });
        }
        Ok(())
    }

    /// Sub-database over the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            schema: self.schema.clone(),
            scenario_ids: rows.iter().map(|&r| self.scenario_ids[r]).collect(),
            x: rows.iter().map(|&r| self.x[r].clone()).collect(),
            targets: self
                .targets
                .iter()
                .map(|t| Target { name: t.name.clone(), values: rows.iter().map(|&r| t.values[r]).collect() })
                .collect(),
        }
    }
}

/// One candidate database row: features of a converged scenario and its CCT
/// surface.
#[derive(Debug, Clone, PartialEq)]
pub struct DbRow {
    pub scenario_id: usize,
    pub features: Vec<f64>,
    pub surface: CctSurface,
}

/// Merges rows into a database. Rows with a failed location are dropped;
/// a row whose surface lacks a configured fault bus is an error. Rows are
/// sorted by scenario id.
pub fn assemble_databases(schema: &FeatureSchema, fault_buses: &[BusId], mut rows: Vec<DbRow>) -> Result<TSDb> {
    rows.sort_by_key(|r| r.scenario_id);
    let mut db = TSDb {
        schema: schema.clone(),
        scenario_ids: Vec::new(),
        x: Vec::new(),
        targets: target_names(fault_buses)
            .into_iter()
            .map(|name| Target { name, values: Vec::new() })
            .collect(),
    };
    'rows: for row in rows {
        if row.features.len() != schema.len() {
            return Err(Error::Row {
                row: row.scenario_id,
                source: alloc::boxed::Box::new(Error::DimensionMismatch { expected: schema.len(), found: row.features.len() }),
            });
        }
        let mut ccts = vec![0.0; fault_buses.len()];
        for (k, &bus) in fault_buses.iter().enumerate() {
            let entry = row.surface.entries.iter().find(|e| e.bus == bus).ok_or_else(|| Error::Row {
                row: row.scenario_id,
                source: alloc::boxed::Box::new(Error::InvalidConfig(format!("missing CCT for fault bus {bus}"))),
            })?;
            match &entry.result {
                Some(r) => ccts[k] = r.cct,
                None => {
                    log::warn!(
                        "scenario {} dropped: simulation failed at bus {bus}: {}",
                        row.scenario_id,
                        entry.failure.as_deref().unwrap_or("unknown")
                    );
                    continue 'rows;
                }
            }
        }
        let min = ccts.iter().copied().fold(f64::INFINITY, f64::min);
        for (t, v) in db.targets.iter_mut().zip(ccts.iter().copied().chain(core::iter::once(min))) {
            t.values.push(v);
        }
        db.scenario_ids.push(row.scenario_id);
        db.x.push(row.features);
    }
    Ok(db)
}
