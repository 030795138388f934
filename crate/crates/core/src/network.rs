//! Static network description, bus admittance matrices, bus faults and Kron
//! reduction.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::powerflow::OperatingPoint;
use crate::{Error, Result};

pub type BusId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusType {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    pub nominal_kv: f64,
    #[serde(rename = "type")]
    pub kind: BusType,
}

/// Pi-model branch. Impedances are per unit on the system base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: BusId,
    pub to: BusId,
    pub r: f64,
    pub x: f64,
    #[serde(default)]
    pub b_shunt: f64,
    #[serde(default = "unit_tap")]
    pub tap: f64,
}

fn unit_tap() -> f64 {
    1.0
}

fn four_units() -> u32 {
    4
}

fn two_mva() -> f64 {
    2.0
}

/// Quadratic cost `c2 P^2 + c1 P + c0` with P in MW.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Cost {
    pub c2: f64,
    pub c1: f64,
    #[serde(default)]
    pub c0: f64,
}

impl Cost {
    pub fn marginal(&self, p: f64) -> f64 {
        2.0 * self.c2 * p + self.c1
    }
}

/// Synchronous machine, represented by `n_units` identical parallel units.
///
/// `h` and `xd_prime` are on the machine base (`mva_rating`); limits are in
/// MW / MVAr.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncMachine {
    pub id: String,
    pub bus: BusId,
    pub mva_rating: f64,
    pub h: f64,
    pub xd_prime: f64,
    #[serde(default)]
    pub d: f64,
    pub p_max: f64,
    pub p_min: f64,
    pub q_max: f64,
    pub q_min: f64,
    pub v_set: f64,
    #[serde(default)]
    pub cost: Cost,
    #[serde(default = "four_units")]
    pub n_units: u32,
    #[serde(default)]
    pub is_slack: bool,
}

/// Converter-interfaced renewable plant made of `unit_size` MVA turbines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResUnit {
    pub id: String,
    pub bus: BusId,
    #[serde(default)]
    pub mva_rating: f64,
    #[serde(default = "two_mva")]
    pub unit_size: f64,
    pub area: u32,
}

/// Load at 1.0 p.u. demand level, in MW / MVAr.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Load {
    pub id: String,
    pub bus: BusId,
    pub p_base: f64,
    pub q_base: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub id: u32,
    pub buses: Vec<BusId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerNetwork {
    #[serde(default)]
    pub name: String,
    pub base_mva: f64,
    #[serde(rename = "base_freq_hz")]
    pub base_freq: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub machines: Vec<SyncMachine>,
    #[serde(default)]
    pub res_units: Vec<ResUnit>,
    #[serde(default)]
    pub loads: Vec<Load>,
    pub areas: Vec<Area>,
}

fn invalid(msg: String) -> Error {
    Error::InvalidNetwork(msg)
}

fn unique<'a>(what: &str, ids: impl Iterator<Item = &'a str>) -> Result<()> {
    let mut seen: Vec<&str> = Vec::new();
    for id in ids {
        if seen.contains(&id) {
            return Err(invalid(format!("duplicate {what} id '{id}'")));
        }
        seen.push(id);
    }
    Ok(())
}

impl PowerNetwork {
    /// Checks every structural invariant of the network.
    pub fn validate(&self) -> Result<()> {
        if !(self.base_mva > 0.0) {
            return Err(invalid(format!("base_mva must be positive, got {}", self.base_mva)));
        }
        if !(self.base_freq > 0.0) {
            return Err(invalid(format!("base_freq_hz must be positive, got {}", self.base_freq)));
        }
        for (i, bus) in self.buses.iter().enumerate() {
            if self.buses[..i].iter().any(|b| b.id == bus.id) {
                return Err(invalid(format!("duplicate bus id {}", bus.id)));
            }
        }
        let slack: Vec<_> = self.buses.iter().filter(|b| b.kind == BusType::Slack).collect();
        if slack.len() != 1 {
            return Err(invalid(format!("expected exactly one slack bus, found {}", slack.len())));
        }
        let slack_bus = slack[0].id;
        for br in &self.branches {
            for end in [br.from, br.to] {
                self.require_bus(end, "branch endpoint")?;
            }
            if br.x == 0.0 || !br.x.is_finite() {
                return Err(Error::DegenerateBranch { from: br.from, to: br.to });
            }
            if !(br.tap > 0.0) {
                return Err(invalid(format!("branch {}-{} has non-positive tap {}", br.from, br.to, br.tap)));
            }
        }
        unique("machine", self.machines.iter().map(|m| m.id.as_str()))?;
        for m in &self.machines {
            self.require_bus(m.bus, &format!("machine '{}' bus", m.id))?;
            if !(m.h > 0.0) {
                return Err(invalid(format!("machine '{}' has non-positive inertia", m.id)));
            }
            if !(m.xd_prime > 0.0) {
                return Err(invalid(format!("machine '{}' has non-positive transient reactance", m.id)));
            }
            if !(m.mva_rating > 0.0) {
                return Err(invalid(format!("machine '{}' has non-positive MVA rating", m.id)));
            }
            if m.p_min > m.p_max {
                return Err(invalid(format!("machine '{}' has p_min > p_max", m.id)));
            }
            if m.q_min > m.q_max {
                return Err(invalid(format!("machine '{}' has q_min > q_max", m.id)));
            }
            if m.n_units < 1 {
                return Err(invalid(format!("machine '{}' must have at least one unit", m.id)));
            }
        }
        let slack_machines: Vec<_> = self.machines.iter().filter(|m| m.is_slack).collect();
        if slack_machines.len() != 1 {
            return Err(invalid(format!(
                "expected exactly one slack machine, found {}",
                slack_machines.len()
            )));
        }
        if slack_machines[0].bus != slack_bus {
            return Err(invalid(format!(
                "slack machine '{}' is not on the slack bus {}",
                slack_machines[0].id, slack_bus
            )));
        }
        unique("RES", self.res_units.iter().map(|r| r.id.as_str()))?;
        for r in &self.res_units {
            self.require_bus(r.bus, &format!("RES '{}' bus", r.id))?;
            if !(r.unit_size > 0.0) {
                return Err(invalid(format!("RES '{}' has non-positive unit size", r.id)));
            }
            if !(r.mva_rating >= 0.0) {
                return Err(invalid(format!("RES '{}' has negative rating", r.id)));
            }
            let units = r.mva_rating / r.unit_size;
            if (units - crate::math::round(units)).abs() > 1e-9 {
                return Err(invalid(format!(
                    "RES '{}' rating {} is not a multiple of its {} MVA unit size",
                    r.id, r.mva_rating, r.unit_size
                )));
            }
            if !self.areas.iter().any(|a| a.id == r.area) {
                return Err(invalid(format!("RES '{}' references unknown area {}", r.id, r.area)));
            }
        }
        unique("load", self.loads.iter().map(|l| l.id.as_str()))?;
        for l in &self.loads {
            self.require_bus(l.bus, &format!("load '{}' bus", l.id))?;
        }
        for bus in &self.buses {
            let owners = self.areas.iter().filter(|a| a.buses.contains(&bus.id)).count();
            if owners != 1 {
                return Err(invalid(format!("bus {} belongs to {} areas, expected exactly one", bus.id, owners)));
            }
        }
        for area in &self.areas {
            for &b in &area.buses {
                self.require_bus(b, &format!("area {} member", area.id))?;
            }
        }
        Ok(())
    }

    fn require_bus(&self, id: BusId, what: &str) -> Result<()> {
        if self.bus_index(id).is_some() {
            Ok(())
        } else {
            Err(invalid(format!("{what} references undeclared bus {id}")))
        }
    }

    pub fn bus_index(&self, id: BusId) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn machine_index(&self, id: &str) -> Option<usize> {
        self.machines.iter().position(|m| m.id == id)
    }

    pub fn slack_bus(&self) -> BusId {
        self.buses
            .iter()
            .find(|b| b.kind == BusType::Slack)
            .map(|b| b.id)
            .expect("validated network has a slack bus")
    }

    /// Area that owns `bus`.
    pub fn area_of(&self, bus: BusId) -> Option<u32> {
        self.areas.iter().find(|a| a.buses.contains(&bus)).map(|a| a.id)
    }

    pub fn total_load_mw(&self) -> f64 {
        self.loads.iter().map(|l| l.p_base).sum()
    }
}

/// Node of an admittance matrix: a network bus or a machine internal EMF node
/// (indexed into [`PowerNetwork::machines`]).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeId {
    Bus(BusId),
    Internal(usize),
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Bus(id) => write!(f, "bus {id}"),
            NodeId::Internal(i) => write!(f, "internal node of machine #{i}"),
        }
    }
}

/// Dense complex nodal admittance matrix (p.u., system base).
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    pub nodes: Vec<NodeId>,
    pub y: Matrix<Complex64>,
}

impl AdmittanceMatrix {
    pub fn new(nodes: Vec<NodeId>, y: Matrix<Complex64>) -> Self {
        assert_eq!(nodes.len(), y.rows());
        assert!(y.is_square());
        Self { nodes, y }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn position(&self, node: NodeId) -> Option<usize> {
        self.nodes.iter().position(|&n| n == node)
    }

    pub fn get(&self, a: NodeId, b: NodeId) -> Option<Complex64> {
        Some(self.y[(self.position(a)?, self.position(b)?)])
    }

    /// Adds a series admittance between two existing nodes.
    pub fn add_series(&mut self, a: usize, b: usize, y: Complex64) {
        self.y[(a, a)] += y;
        self.y[(b, b)] += y;
        self.y[(a, b)] -= y;
        self.y[(b, a)] -= y;
    }

    /// Adds a shunt admittance to ground at an existing node.
    pub fn add_shunt(&mut self, a: usize, y: Complex64) {
        self.y[(a, a)] += y;
    }

    /// Returns a copy with extra (initially disconnected) nodes appended.
    pub fn extended(&self, extra: &[NodeId]) -> Self {
        let n = self.len();
        let total = n + extra.len();
        let y = Matrix::from_fn(total, total, |r, c| {
            if r < n && c < n {
                self.y[(r, c)]
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let mut nodes = self.nodes.clone();
        nodes.extend_from_slice(extra);
        Self { nodes, y }
    }
}

/// Branch series and shunt elements only, over all buses in declaration order.
pub fn branch_admittance(net: &PowerNetwork) -> Result<AdmittanceMatrix> {
    let nodes: Vec<NodeId> = net.buses.iter().map(|b| NodeId::Bus(b.id)).collect();
    let n = nodes.len();
    let mut y = Matrix::zeros(n, n);
    for br in &net.branches {
        if br.x == 0.0 {
            return Err(Error::DegenerateBranch { from: br.from, to: br.to });
        }
        let f = net.bus_index(br.from).ok_or(Error::UnknownBus(br.from))?;
        let t = net.bus_index(br.to).ok_or(Error::UnknownBus(br.to))?;
        let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
        let ysh = Complex64::new(0.0, br.b_shunt / 2.0);
        let tap = br.tap;
        y[(f, f)] += (ys + ysh) / (tap * tap);
        y[(t, t)] += ys + ysh;
        y[(f, t)] -= ys / tap;
        y[(t, f)] -= ys / tap;
    }
    Ok(AdmittanceMatrix::new(nodes, y))
}

/// Bus admittance matrix with loads folded in as constant admittances
/// `y_L = conj(S_L) / |V|^2` at the solved voltages of `op`.
pub fn build_admittance(net: &PowerNetwork, demand_mult: f64, op: &OperatingPoint) -> Result<AdmittanceMatrix> {
    let mut y = branch_admittance(net)?;
    if op.vm.len() != net.buses.len() {
        return Err(Error::DimensionMismatch {
            expected: net.buses.len(),
            found: op.vm.len(),
        });
    }
    for load in &net.loads {
        let i = net.bus_index(load.bus).ok_or(Error::UnknownBus(load.bus))?;
        let s = Complex64::new(load.p_base, load.q_base) * (demand_mult / net.base_mva);
        let v2 = op.vm[i] * op.vm[i];
        y.add_shunt(i, s.conj() / v2);
    }
    Ok(y)
}

/// Kron reduction onto `retained`, in the order given.
///
/// `Y_red = Y_rr - Y_re Y_ee^-1 Y_er`.
pub fn kron_reduce(y: &AdmittanceMatrix, retained: &[NodeId]) -> Result<AdmittanceMatrix> {
    kron_reduce_with_injection(y, retained, &[]).map(|(r, _)| r)
}

/// Kron reduction that also carries fixed current injections at eliminated
/// nodes onto the retained nodes.
///
/// `injections` pairs eliminated nodes with the current they inject into the
/// network. The returned vector `I_c = Y_re Y_ee^-1 I_e` is the retained-node
/// current offset, so that `I_r = Y_red V_r + I_c`.
pub fn kron_reduce_with_injection(
    y: &AdmittanceMatrix,
    retained: &[NodeId],
    injections: &[(NodeId, Complex64)],
) -> Result<(AdmittanceMatrix, Vec<Complex64>)> {
    let mut r_idx = Vec::with_capacity(retained.len());
    for &node in retained {
        let pos = y.position(node).ok_or_else(|| missing_node(node))?;
        if r_idx.contains(&pos) {
            return Err(Error::InvalidConfig(format!("{node} retained twice")));
        }
        r_idx.push(pos);
    }
    let e_idx: Vec<usize> = (0..y.len()).filter(|i| !r_idx.contains(i)).collect();
    let y_rr = y.y.select(&r_idx, &r_idx);
    if e_idx.is_empty() {
        let zero = alloc::vec![Complex64::new(0.0, 0.0); retained.len()];
        return Ok((AdmittanceMatrix::new(retained.to_vec(), y_rr), zero));
    }
    let y_re = y.y.select(&r_idx, &e_idx);
    let y_er = y.y.select(&e_idx, &r_idx);
    let y_ee = y.y.select(&e_idx, &e_idx);
    let lu = y_ee.lu().ok_or(Error::Singular("Kron reduction"))?;
    let reduced = y_rr.sub_mat(&y_re.mul_mat(&lu.solve_matrix(&y_er)));

    let mut i_e = alloc::vec![Complex64::new(0.0, 0.0); e_idx.len()];
    for &(node, current) in injections {
        let pos = y.position(node).ok_or_else(|| missing_node(node))?;
        match e_idx.iter().position(|&e| e == pos) {
            Some(k) => i_e[k] += current,
            None => {
                return Err(Error::InvalidConfig(format!(
                    "current injection at retained {node} is not supported"
                )))
            }
        }
    }
    let offset = y_re.mul_vec(&lu.solve(&i_e));
    Ok((AdmittanceMatrix::new(retained.to_vec(), reduced), offset))
}

fn missing_node(node: NodeId) -> Error {
    match node {
        NodeId::Bus(id) => Error::UnknownBus(id),
        NodeId::Internal(i) => Error::InvalidConfig(format!("internal node {i} not present")),
    }
}

/// Bolted three-phase fault at `bus`: the node is tied to ground (V = 0), which
/// removes its row and column.
pub fn apply_fault(y: &AdmittanceMatrix, bus: NodeId) -> Result<AdmittanceMatrix> {
    let k = y.position(bus).ok_or_else(|| missing_node(bus))?;
    let keep: Vec<usize> = (0..y.len()).filter(|&i| i != k).collect();
    let nodes = keep.iter().map(|&i| y.nodes[i]).collect();
    Ok(AdmittanceMatrix::new(nodes, y.y.select(&keep, &keep)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    pub(crate) fn two_bus() -> PowerNetwork {
        PowerNetwork {
            name: "two-bus".to_string(),
            base_mva: 100.0,
            base_freq: 60.0,
            buses: vec![
                Bus { id: 1, nominal_kv: 230.0, kind: BusType::Slack },
                Bus { id: 2, nominal_kv: 230.0, kind: BusType::Pq },
            ],
            branches: vec![Branch { from: 1, to: 2, r: 0.0, x: 0.1, b_shunt: 0.0, tap: 1.0 }],
            machines: vec![SyncMachine {
                id: "G1".to_string(),
                bus: 1,
                mva_rating: 100.0,
                h: 5.0,
                xd_prime: 0.3,
                d: 0.0,
                p_max: 200.0,
                p_min: 0.0,
                q_max: 100.0,
                q_min: -100.0,
                v_set: 1.0,
                cost: Cost::default(),
                n_units: 4,
                is_slack: true,
            }],
            res_units: vec![],
            loads: vec![],
            areas: vec![Area { id: 1, buses: vec![1, 2] }],
        }
    }

    #[test]
    fn two_bus_series_element() {
        let y = branch_admittance(&two_bus()).unwrap();
        let expect = [[c(0.0, -10.0), c(0.0, 10.0)], [c(0.0, 10.0), c(0.0, -10.0)]];
        for r in 0..2 {
            for k in 0..2 {
                assert!((y.y[(r, k)] - expect[r][k]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn load_folds_in_as_admittance() {
        let mut net = two_bus();
        net.loads.push(Load { id: "L2".to_string(), bus: 2, p_base: 100.0, q_base: 0.0 });
        let op = OperatingPoint::flat(&net, 0);
        let y = build_admittance(&net, 1.0, &op).unwrap();
        assert!((y.y[(1, 1)] - c(1.0, -10.0)).norm() < 1e-12);
    }

    #[test]
    fn validation_catches_undeclared_machine_bus() {
        let mut net = two_bus();
        net.machines[0].bus = 7;
        let err = net.validate().unwrap_err();
        assert!(matches!(err, Error::InvalidNetwork(ref m) if m.contains("undeclared bus 7")), "{err}");
        assert!(two_bus().validate().is_ok());
    }

    #[test]
    fn validation_rejects_zero_reactance_and_bad_areas() {
        let mut net = two_bus();
        net.branches[0].x = 0.0;
        assert_eq!(net.validate(), Err(Error::DegenerateBranch { from: 1, to: 2 }));
        let mut net = two_bus();
        net.areas.push(Area { id: 2, buses: vec![2] });
        assert!(net.validate().is_err());
    }

    fn chain() -> AdmittanceMatrix {
        let nodes = vec![NodeId::Bus(1), NodeId::Bus(2), NodeId::Bus(3)];
        let mut y = AdmittanceMatrix::new(nodes, Matrix::zeros(3, 3));
        let ys = c(1.0, 0.0) / c(0.0, 0.1);
        y.add_series(0, 1, ys);
        y.add_series(1, 2, ys);
        y
    }

    #[test]
    fn kron_series_combination() {
        let red = kron_reduce(&chain(), &[NodeId::Bus(1), NodeId::Bus(3)]).unwrap();
        // two j0.1 in series give j0.2, i.e. an admittance of -j5
        assert!((red.y[(0, 1)] - c(0.0, 5.0)).norm() < 1e-12);
        assert!((red.y[(0, 0)] - c(0.0, -5.0)).norm() < 1e-12);
        assert!((red.y[(1, 1)] - c(0.0, -5.0)).norm() < 1e-12);
    }

    #[test]
    fn kron_retaining_everything_is_identity() {
        let y = chain();
        let red = kron_reduce(&y, &y.nodes.clone()).unwrap();
        assert_eq!(red, y);
    }

    #[test]
    fn kron_isolated_node_leaves_rest_unchanged() {
        let mut y = chain().extended(&[NodeId::Bus(9)]);
        y.add_shunt(3, c(0.5, -2.0));
        let red = kron_reduce(&y, &[NodeId::Bus(1), NodeId::Bus(2), NodeId::Bus(3)]).unwrap();
        assert_eq!(red.y, chain().y);
    }

    #[test]
    fn kron_singular_block_is_reported() {
        let y = chain().extended(&[NodeId::Bus(9)]);
        assert_eq!(
            kron_reduce(&y, &[NodeId::Bus(1), NodeId::Bus(2), NodeId::Bus(3)]),
            Err(Error::Singular("Kron reduction"))
        );
    }

    #[test]
    fn fault_deletes_row_and_column() {
        let y = branch_admittance(&two_bus()).unwrap();
        let f = apply_fault(&y, NodeId::Bus(2)).unwrap();
        assert_eq!(f.nodes, vec![NodeId::Bus(1)]);
        assert_eq!(f.y[(0, 0)], y.y[(0, 0)]);
        assert_eq!(apply_fault(&y, NodeId::Bus(5)), Err(Error::UnknownBus(5)));
    }

    #[test]
    fn fault_on_uncoupled_node_keeps_retained_block() {
        let mut y = chain().extended(&[NodeId::Bus(9)]);
        y.add_shunt(3, c(0.0, -1.0));
        let f = apply_fault(&y, NodeId::Bus(9)).unwrap();
        assert_eq!(f.y, chain().y);
    }

    #[test]
    fn injection_offset_matches_full_solution() {
        // chain 1-2-3 plus shunt at 2, inject current at 2 and compare.
        let mut y = chain();
        y.add_shunt(1, c(0.2, -0.1));
        let inj = c(0.3, 0.4);
        let (red, offset) =
            kron_reduce_with_injection(&y, &[NodeId::Bus(1), NodeId::Bus(3)], &[(NodeId::Bus(2), inj)]).unwrap();
        let v_r = [c(1.0, 0.1), c(0.9, -0.2)];
        // full system: solve for V2 from row 2, then compute retained currents
        let v2 = (inj - y.y[(1, 0)] * v_r[0] - y.y[(1, 2)] * v_r[1]) / y.y[(1, 1)];
        let full = [
            y.y[(0, 0)] * v_r[0] + y.y[(0, 1)] * v2 + y.y[(0, 2)] * v_r[1],
            y.y[(2, 0)] * v_r[0] + y.y[(2, 1)] * v2 + y.y[(2, 2)] * v_r[1],
        ];
        let reduced = red.y.mul_vec(&v_r);
        for k in 0..2 {
            assert!((reduced[k] + offset[k] - full[k]).norm() < 1e-12);
        }
    }

    fn random_system(edges: &[(usize, usize, f64, f64)], shunts: &[(f64, f64)]) -> AdmittanceMatrix {
        let n = shunts.len();
        let nodes = (0..n).map(|i| NodeId::Bus(i as BusId + 1)).collect();
        let mut y = AdmittanceMatrix::new(nodes, Matrix::zeros(n, n));
        for &(a, b, r, x) in edges {
            if a % n != b % n {
                y.add_series(a % n, b % n, c(1.0, 0.0) / c(r, x));
            }
        }
        // a lossy shunt everywhere keeps every principal block invertible
        for (i, &(g, bsh)) in shunts.iter().enumerate() {
            y.add_shunt(i, c(g, -bsh));
        }
        y
    }

    fn edges() -> impl Strategy<Value = Vec<(usize, usize, f64, f64)>> {
        prop::collection::vec((0usize..5, 0usize..5, 0.001f64..0.1, 0.05f64..0.5), 4..12)
    }

    fn shunts() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((0.05f64..1.0, 0.1f64..2.0), 5)
    }

    proptest! {
        #[test]
        fn untapped_network_is_symmetric(rx in prop::collection::vec((0.0f64..0.05, 0.01f64..0.3, 0.0f64..0.1), 3)) {
            let mut net = crate::testnet::triangle();
            for (br, &(r, x, b)) in net.branches.iter_mut().zip(&rx) {
                br.r = r;
                br.x = x;
                br.b_shunt = b;
            }
            let y = branch_admittance(&net).unwrap();
            for i in 0..3 {
                for k in 0..3 {
                    prop_assert!((y.y[(i, k)] - y.y[(k, i)]).norm() < 1e-12);
                }
            }
        }

        #[test]
        fn kron_preserves_terminal_behaviour(
            e in edges(),
            sh in shunts(),
            keep in prop::sample::subsequence((0..5usize).collect::<Vec<_>>(), 1..5),
            inj in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 5),
        ) {
            let y = random_system(&e, &sh);
            let retained: Vec<NodeId> = keep.iter().map(|&i| y.nodes[i]).collect();
            let red = kron_reduce(&y, &retained).unwrap();
            let mut i_full = vec![c(0.0, 0.0); 5];
            let i_red: Vec<Complex64> = keep.iter().map(|&k| c(inj[k].0, inj[k].1)).collect();
            for (&k, &i) in keep.iter().zip(&i_red) {
                i_full[k] = i;
            }
            let v_full = y.y.lu().unwrap().solve(&i_full);
            let v_red = red.y.lu().unwrap().solve(&i_red);
            for (j, &k) in keep.iter().enumerate() {
                prop_assert!((v_full[k] - v_red[j]).norm() < 1e-9);
            }
        }

        #[test]
        fn fault_and_kron_commute(
            e in edges(),
            sh in shunts(),
            keep in prop::sample::subsequence((0..4usize).collect::<Vec<_>>(), 1..4),
        ) {
            // node 4 is faulted; it is kept through the first reduction
            let y = random_system(&e, &sh);
            let retained: Vec<NodeId> = keep.iter().map(|&i| y.nodes[i]).collect();
            let fault = y.nodes[4];
            let a = kron_reduce(&apply_fault(&y, fault).unwrap(), &retained).unwrap();
            let mut with_fault = retained.clone();
            with_fault.push(fault);
            let b = apply_fault(&kron_reduce(&y, &with_fault).unwrap(), fault).unwrap();
            prop_assert_eq!(&a.nodes, &b.nodes);
            for i in 0..retained.len() {
                for k in 0..retained.len() {
                    prop_assert!((a.y[(i, k)] - b.y[(i, k)]).norm() < 1e-9);
                }
            }
        }
    }
}
