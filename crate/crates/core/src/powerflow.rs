//! Newton-Raphson AC power flow in polar coordinates.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dispatch::DispatchTargets;
use crate::linalg::Matrix;
use crate::network::{branch_admittance, BusType, PowerNetwork};
use crate::scenario::Scenario;
use crate::{Error, Result};

/// Convergence tolerance on the largest power mismatch, p.u.
pub const MISMATCH_TOLERANCE: f64 = 1e-8;
/// Newton iteration cap per solve.
pub const MAX_ITERATIONS: usize = 20;
/// Reactive-limit enforcement passes (PV to PQ switching).
const MAX_Q_PASSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BranchFlow {
    pub p_from: f64,
    pub p_to: f64,
    pub q_from: f64,
    pub q_to: f64,
}

/// Solved steady state for one scenario. Powers in MW / MVAr, voltages in
/// p.u. and radians, all aligned with the network's declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub scenario_id: usize,
    pub vm: Vec<f64>,
    pub va: Vec<f64>,
    pub gen_p: Vec<f64>,
    pub gen_q: Vec<f64>,
    pub res_p: Vec<f64>,
    pub res_q: Vec<f64>,
    pub branch_flows: Vec<BranchFlow>,
    pub converged: bool,
    /// Largest remaining mismatch, p.u.
    pub mismatch: f64,
    pub iterations: usize,
}

impl OperatingPoint {
    /// Flat start with no injections, handy for building matrices in tests.
    pub fn flat(net: &PowerNetwork, scenario_id: usize) -> Self {
        Self {
            scenario_id,
            vm: vec![1.0; net.buses.len()],
            va: vec![0.0; net.buses.len()],
            gen_p: vec![0.0; net.machines.len()],
            gen_q: vec![0.0; net.machines.len()],
            res_p: vec![0.0; net.res_units.len()],
            res_q: vec![0.0; net.res_units.len()],
            branch_flows: vec![BranchFlow::default(); net.branches.len()],
            converged: true,
            mismatch: 0.0,
            iterations: 0,
        }
    }

    pub fn voltage(&self, bus_index: usize) -> Complex64 {
        Complex64::from_polar(self.vm[bus_index], self.va[bus_index])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Slack,
    Pv,
    Pq,
}

/// Solves the AC power flow for a dispatched scenario.
///
/// Loads scale uniformly with the scenario demand multiplier. Machines on PV
/// buses hold their voltage set point until their aggregate reactive limit is
/// hit, after which the bus is switched to PQ at the limit. Non-convergence is
/// reported through [`OperatingPoint::converged`], not as an error.
pub fn solve_powerflow(net: &PowerNetwork, sc: &Scenario, targets: &DispatchTargets) -> Result<OperatingPoint> {
    let nb = net.buses.len();
    if targets.machine_p.len() != net.machines.len() {
        return Err(Error::DimensionMismatch {
            expected: net.machines.len(),
            found: targets.machine_p.len(),
        });
    }
    let ybus = branch_admittance(net)?.y;
    let base = net.base_mva;
    let eff: Vec<_> = net.machines.iter().map(|m| sc.effective(m, base)).collect();
    let machine_bus: Vec<usize> = net
        .machines
        .iter()
        .map(|m| net.bus_index(m.bus).ok_or(Error::UnknownBus(m.bus)))
        .collect::<Result<_>>()?;

    let mut kind = vec![Kind::Pq; nb];
    let mut vm = vec![1.0; nb];
    let va = vec![0.0; nb];
    for (i, bus) in net.buses.iter().enumerate() {
        kind[i] = match bus.kind {
            BusType::Slack => Kind::Slack,
            BusType::Pv if machine_bus.contains(&i) => Kind::Pv,
            _ => Kind::Pq,
        };
    }
    for (k, m) in net.machines.iter().enumerate() {
        let b = machine_bus[k];
        if kind[b] != Kind::Pq {
            vm[b] = m.v_set;
        }
    }

    // scheduled injections, p.u.
    let mut p_sched = vec![0.0; nb];
    let mut q_sched = vec![0.0; nb];
    let mut load_p = vec![0.0; nb];
    let mut load_q = vec![0.0; nb];
    for l in &net.loads {
        let b = net.bus_index(l.bus).ok_or(Error::UnknownBus(l.bus))?;
        load_p[b] += l.p_base * sc.demand_mult / base;
        load_q[b] += l.q_base * sc.demand_mult / base;
    }
    let mut res_bus_p = vec![0.0; nb];
    for (w, r) in net.res_units.iter().enumerate() {
        let b = net.bus_index(r.bus).ok_or(Error::UnknownBus(r.bus))?;
        res_bus_p[b] += targets.res_p[w] / base;
    }
    let mut gen_bus_p = vec![0.0; nb];
    for (k, m) in net.machines.iter().enumerate() {
        if !m.is_slack {
            gen_bus_p[machine_bus[k]] += targets.machine_p[k] / base;
        }
    }
    for b in 0..nb {
        p_sched[b] = gen_bus_p[b] + res_bus_p[b] - load_p[b];
        q_sched[b] = -load_q[b];
    }
    let q_limits: Vec<(f64, f64)> = (0..nb)
        .map(|b| {
            machine_bus
                .iter()
                .enumerate()
                .filter(|&(_, &mb)| mb == b)
                .fold((0.0, 0.0), |(lo, hi), (k, _)| (lo + eff[k].q_min / base, hi + eff[k].q_max / base))
        })
        .collect();

    let mut v: Vec<Complex64> = (0..nb).map(|i| Complex64::from_polar(vm[i], va[i])).collect();
    let mut converged = false;
    let mut iterations = 0;
    let mut mismatch = f64::INFINITY;
    for _ in 0..MAX_Q_PASSES {
        let (ok, it, mis) = newton(&ybus, &mut v, &kind, &p_sched, &q_sched);
        iterations += it;
        mismatch = mis;
        converged = ok;
        if !ok {
            break;
        }
        // reactive limits on PV buses
        let s_calc = injections(&ybus, &v);
        let mut switched = false;
        for b in 0..nb {
            if kind[b] != Kind::Pv {
                continue;
            }
            let q_gen = s_calc[b].im + load_q[b];
            let (lo, hi) = q_limits[b];
            let limit = if q_gen > hi + 1e-9 {
                Some(hi)
            } else if q_gen < lo - 1e-9 {
                Some(lo)
            } else {
                None
            };
            if let Some(q) = limit {
                kind[b] = Kind::Pq;
                q_sched[b] = q - load_q[b];
                switched = true;
            }
        }
        if !switched {
            break;
        }
    }

    let s_calc = injections(&ybus, &v);
    let mut gen_p = targets.machine_p.clone();
    let mut gen_q = vec![0.0; net.machines.len()];
    for b in 0..nb {
        let on_bus: Vec<usize> = (0..net.machines.len()).filter(|&k| machine_bus[k] == b).collect();
        if on_bus.is_empty() {
            continue;
        }
        let q_gen = (s_calc[b].im + load_q[b]) * base;
        let weight: f64 = on_bus.iter().map(|&k| eff[k].mva).sum();
        for &k in &on_bus {
            gen_q[k] = if weight > 0.0 { q_gen * eff[k].mva / weight } else { 0.0 };
            if net.machines[k].is_slack {
                let others: f64 = on_bus
                    .iter()
                    .filter(|&&j| j != k)
                    .map(|&j| targets.machine_p[j])
                    .sum();
                gen_p[k] = (s_calc[b].re + load_p[b] - res_bus_p[b]) * base - others;
            }
        }
    }

    let branch_flows = net
        .branches
        .iter()
        .map(|br| {
            let f = net.bus_index(br.from).expect("validated");
            let t = net.bus_index(br.to).expect("validated");
            let ys = Complex64::new(1.0, 0.0) / Complex64::new(br.r, br.x);
            let ysh = Complex64::new(0.0, br.b_shunt / 2.0);
            let tap = br.tap;
            let i_f = (ys + ysh) / (tap * tap) * v[f] - ys / tap * v[t];
            let i_t = (ys + ysh) * v[t] - ys / tap * v[f];
            let s_f = v[f] * i_f.conj() * base;
            let s_t = v[t] * i_t.conj() * base;
            BranchFlow {
                p_from: s_f.re,
                p_to: s_t.re,
                q_from: s_f.im,
                q_to: s_t.im,
            }
        })
        .collect();

    Ok(OperatingPoint {
        scenario_id: sc.id,
        vm: v.iter().map(|x| x.norm()).collect(),
        va: v.iter().map(|x| x.arg()).collect(),
        gen_p,
        gen_q,
        res_p: targets.res_p.clone(),
        res_q: vec![0.0; net.res_units.len()],
        branch_flows,
        converged,
        mismatch,
        iterations,
    })
}

fn injections(y: &Matrix<Complex64>, v: &[Complex64]) -> Vec<Complex64> {
    let i = y.mul_vec(v);
    v.iter().zip(&i).map(|(v, i)| v * i.conj()).collect()
}

/// Full Newton iteration. Returns (converged, iterations, final mismatch).
fn newton(
    y: &Matrix<Complex64>,
    v: &mut [Complex64],
    kind: &[Kind],
    p_sched: &[f64],
    q_sched: &[f64],
) -> (bool, usize, f64) {
    let nb = v.len();
    let pvpq: Vec<usize> = (0..nb).filter(|&b| kind[b] != Kind::Slack).collect();
    let pq: Vec<usize> = (0..nb).filter(|&b| kind[b] == Kind::Pq).collect();
    let n_ang = pvpq.len();
    let dim = n_ang + pq.len();

    let residual = |v: &[Complex64]| -> Vec<f64> {
        let s = injections(y, v);
        let mut f = Vec::with_capacity(dim);
        f.extend(pvpq.iter().map(|&b| s[b].re - p_sched[b]));
        f.extend(pq.iter().map(|&b| s[b].im - q_sched[b]));
        f
    };
    let norm = |f: &[f64]| f.iter().fold(0.0, |m: f64, x| m.max(x.abs()));

    let mut f = residual(v);
    let mut mis = norm(&f);
    if mis < MISMATCH_TOLERANCE {
        return (true, 0, mis);
    }
    for it in 1..=MAX_ITERATIONS {
        let ibus = y.mul_vec(v);
        let vn: Vec<Complex64> = v.iter().map(|x| x / x.norm()).collect();
        let j = Complex64::new(0.0, 1.0);
        // dS/dVa and dS/dVm, dense
        let ds_dva = |r: usize, c: usize| {
            let diag = if r == c { ibus[r] } else { Complex64::new(0.0, 0.0) };
            j * v[r] * (diag - y[(r, c)] * v[c]).conj()
        };
        let ds_dvm = |r: usize, c: usize| {
            let mut out = v[r] * (y[(r, c)] * vn[c]).conj();
            if r == c {
                out += ibus[r].conj() * vn[r];
            }
            out
        };
        let mut jac = Matrix::<f64>::zeros(dim, dim);
        for (ri, &r) in pvpq.iter().enumerate() {
            for (ci, &c) in pvpq.iter().enumerate() {
                jac[(ri, ci)] = ds_dva(r, c).re;
            }
            for (ci, &c) in pq.iter().enumerate() {
                jac[(ri, n_ang + ci)] = ds_dvm(r, c).re;
            }
        }
        for (ri, &r) in pq.iter().enumerate() {
            for (ci, &c) in pvpq.iter().enumerate() {
                jac[(n_ang + ri, ci)] = ds_dva(r, c).im;
            }
            for (ci, &c) in pq.iter().enumerate() {
                jac[(n_ang + ri, n_ang + ci)] = ds_dvm(r, c).im;
            }
        }
        let Some(lu) = jac.lu() else {
            return (false, it, mis);
        };
        let neg: Vec<f64> = f.iter().map(|x| -x).collect();
        let dx = lu.solve(&neg);
        let mut va: Vec<f64> = v.iter().map(|x| x.arg()).collect();
        let mut vm: Vec<f64> = v.iter().map(|x| x.norm()).collect();
        for (k, &b) in pvpq.iter().enumerate() {
            va[b] += dx[k];
        }
        for (k, &b) in pq.iter().enumerate() {
            vm[b] += dx[n_ang + k];
        }
        for b in 0..nb {
            v[b] = Complex64::from_polar(vm[b], va[b]);
        }
        f = residual(v);
        mis = norm(&f);
        if !mis.is_finite() {
            return (false, it, mis);
        }
        if mis < MISMATCH_TOLERANCE {
            return (true, it, mis);
        }
    }
    (false, MAX_ITERATIONS, mis)
}

/// Classical-model internal EMF behind transient reactance,
/// `E = V + j x'd I` with `I = conj(S / V)`.
///
/// Returns `(|E|, angle of E)` in p.u. and radians.
pub fn internal_emf(net: &PowerNetwork, sc: &Scenario, op: &OperatingPoint, machine: usize) -> Result<(f64, f64)> {
    if !op.converged {
        return Err(Error::NotConverged);
    }
    let m = net
        .machines
        .get(machine)
        .ok_or_else(|| Error::InvalidConfig(alloc::format!("machine index {machine} out of range")))?;
    let eff = sc.effective(m, net.base_mva);
    if !(eff.fraction > 0.0) {
        return Err(Error::MachineOffline(m.id.clone()));
    }
    let b = net.bus_index(m.bus).ok_or(Error::UnknownBus(m.bus))?;
    let e = emf_behind_reactance(
        op.voltage(b),
        Complex64::new(op.gen_p[machine], op.gen_q[machine]) / net.base_mva,
        eff.xd_sys,
    );
    Ok((e.norm(), e.arg()))
}

/// `E = V + j x I`, `I = conj(S / V)`, all in p.u.
pub fn emf_behind_reactance(v: Complex64, s: Complex64, x: f64) -> Complex64 {
    let i = (s / v).conj();
    v + Complex64::new(0.0, x) * i
}
