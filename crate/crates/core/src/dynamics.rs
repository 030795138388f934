//! Classical multi-machine model and its time-domain simulation.
//!
//! Every machine is a constant EMF behind transient reactance. The network,
//! loads (constant impedance) and renewables (constant current at their
//! pre-fault output) are reduced onto the machine internal nodes, once for the
//! intact network and once with the faulted bus grounded.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::math;
use crate::network::{apply_fault, build_admittance, kron_reduce_with_injection, BusId, NodeId, PowerNetwork};
use crate::powerflow::{internal_emf, OperatingPoint};
use crate::scenario::Scenario;
use crate::{Error, Result};

/// Everything the swing integrator needs for one (scenario, fault) pair.
///
/// All quantities are on the system base. An infinite `h` pins the machine's
/// angle, which is how an infinite bus is expressed.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicModel {
    pub machine_ids: Vec<String>,
    pub h: Vec<f64>,
    pub d: Vec<f64>,
    pub pm: Vec<f64>,
    pub e: Vec<f64>,
    pub delta0: Vec<f64>,
    pub y_pre: Matrix<Complex64>,
    pub y_fault: Matrix<Complex64>,
    /// Current offsets from fixed injections, intact network.
    pub i_pre: Vec<Complex64>,
    /// Current offsets from fixed injections, faulted network.
    pub i_fault: Vec<Complex64>,
    /// Synchronous speed, rad/s.
    pub omega_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Fault,
    Post,
}

impl DynamicModel {
    /// Assembles a model from its parts and sets `pm` to the pre-fault
    /// electrical power at `delta0`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        machine_ids: Vec<String>,
        h: Vec<f64>,
        d: Vec<f64>,
        e: Vec<f64>,
        delta0: Vec<f64>,
        y_pre: Matrix<Complex64>,
        y_fault: Matrix<Complex64>,
        base_freq: f64,
    ) -> Result<Self> {
        let n = machine_ids.len();
        for len in [h.len(), d.len(), e.len(), delta0.len(), y_pre.rows(), y_fault.rows()] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, found: len });
            }
        }
        if h.iter().any(|&h| !(h > 0.0)) {
            return Err(Error::InvalidConfig("inertia constants must be positive".into()));
        }
        let zero = vec![Complex64::new(0.0, 0.0); n];
        let mut model = Self {
            machine_ids,
            h,
            d,
            pm: vec![0.0; n],
            e,
            delta0,
            y_pre,
            y_fault,
            i_pre: zero.clone(),
            i_fault: zero,
            omega_s: 2.0 * PI * base_freq,
        };
        model.pm = model.electrical_power(Stage::Post, &model.delta0.clone());
        Ok(model)
    }

    pub fn len(&self) -> usize {
        self.machine_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.machine_ids.is_empty()
    }

    /// `Pe_i = sum_j E_i E_j (G_ij cos d_ij + B_ij sin d_ij) + Re(E_i conj(I_c,i))`.
    pub fn electrical_power(&self, stage: Stage, delta: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        self.electrical_power_into(stage, delta, &mut out);
        out
    }

    fn electrical_power_into(&self, stage: Stage, delta: &[f64], out: &mut [f64]) {
        let (y, ic) = match stage {
            Stage::Fault => (&self.y_fault, &self.i_fault),
            Stage::Post => (&self.y_pre, &self.i_pre),
        };
        let n = self.len();
        let mut sin = [0.0; 64];
        let mut cos = [0.0; 64];
        let (mut sin_v, mut cos_v);
        let (s, c): (&mut [f64], &mut [f64]) = if n <= 64 {
            (&mut sin[..n], &mut cos[..n])
        } else {
            sin_v = vec![0.0; n];
            cos_v = vec![0.0; n];
            (&mut sin_v[..], &mut cos_v[..])
        };
        for i in 0..n {
            s[i] = math::sin(delta[i]);
            c[i] = math::cos(delta[i]);
        }
        for i in 0..n {
            let mut p = 0.0;
            for j in 0..n {
                let yij = y[(i, j)];
                let cos_ij = c[i] * c[j] + s[i] * s[j];
                let sin_ij = s[i] * c[j] - c[i] * s[j];
                p += self.e[j] * (yij.re * cos_ij + yij.im * sin_ij);
            }
            p *= self.e[i];
            // Re(E e^{j delta} conj(I)) = E (cos * I.re + sin * I.im)
            p += self.e[i] * (c[i] * ic[i].re + s[i] * ic[i].im);
            out[i] = p;
        }
    }

    /// Largest deviation between the mechanical input and the electrical output
    /// at the initial angles.
    pub fn equilibrium_residual(&self) -> f64 {
        self.electrical_power(Stage::Post, &self.delta0)
            .iter()
            .zip(&self.pm)
            .fold(0.0, |m, (pe, pm)| f64::max(m, (pe - pm).abs()))
    }
}

/// Assembles the classical model for a solved scenario and a bus fault.
///
/// Loads are folded in at the solved voltages, renewables become constant
/// current injections, and every machine gets an internal node behind its
/// system-base transient reactance. `fault_bus = None` builds a model whose
/// fault-on network equals the intact one.
pub fn build_dynamic_model(
    net: &PowerNetwork,
    sc: &Scenario,
    op: &OperatingPoint,
    fault_bus: Option<BusId>,
) -> Result<DynamicModel> {
    if !op.converged {
        return Err(Error::NotConverged);
    }
    let base = net.base_mva;
    let ybus = build_admittance(net, sc.demand_mult, op)?;
    let internal: Vec<NodeId> = (0..net.machines.len()).map(NodeId::Internal).collect();
    let mut aug = ybus.extended(&internal);
    let nb = net.buses.len();
    let mut e = Vec::with_capacity(internal.len());
    let mut delta0 = Vec::with_capacity(internal.len());
    let mut h = Vec::with_capacity(internal.len());
    let mut d = Vec::with_capacity(internal.len());
    for (k, m) in net.machines.iter().enumerate() {
        let eff = sc.effective(m, base);
        let b = net.bus_index(m.bus).ok_or(Error::UnknownBus(m.bus))?;
        aug.add_series(nb + k, b, Complex64::new(1.0, 0.0) / Complex64::new(0.0, eff.xd_sys));
        let (mag, ang) = internal_emf(net, sc, op, k)?;
        e.push(mag);
        delta0.push(ang);
        h.push(eff.h_sys);
        d.push(eff.d_sys);
    }
    let mut injections = Vec::new();
    for (w, r) in net.res_units.iter().enumerate() {
        let b = net.bus_index(r.bus).ok_or(Error::UnknownBus(r.bus))?;
        let s = Complex64::new(op.res_p[w], op.res_q[w]) / base;
        if s.norm() > 0.0 {
            injections.push((NodeId::Bus(r.bus), (s / op.voltage(b)).conj()));
        }
    }
    let (y_pre, i_pre) = kron_reduce_with_injection(&aug, &internal, &injections)?;
    let (y_fault, i_fault) = match fault_bus {
        Some(bus) => {
            let faulted = apply_fault(&aug, NodeId::Bus(bus))?;
            let kept: Vec<_> = injections.iter().copied().filter(|(n, _)| *n != NodeId::Bus(bus)).collect();
            kron_reduce_with_injection(&faulted, &internal, &kept)?
        }
        None => (y_pre.clone(), i_pre.clone()),
    };
    let n = internal.len();
    let mut model = DynamicModel {
        machine_ids: net.machines.iter().map(|m| m.id.clone()).collect(),
        h,
        d,
        pm: vec![0.0; n],
        e,
        delta0,
        y_pre: y_pre.y,
        y_fault: y_fault.y,
        i_pre,
        i_fault,
        omega_s: 2.0 * PI * net.base_freq,
    };
    model.pm = model.electrical_power(Stage::Post, &model.delta0);
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Fixed RK4 step, s.
    pub step: f64,
    /// Time simulated after the fault is cleared, s.
    pub post_clear_horizon: f64,
    /// Keep every n-th step in the recorded trajectory (0 records nothing).
    #[serde(default = "one")]
    pub record_stride: usize,
}

fn one() -> usize {
    1
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            post_clear_horizon: 5.0,
            record_stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub time: Vec<f64>,
    /// Rotor angle trajectories, one vector per machine, rad.
    pub delta: Vec<Vec<f64>>,
    pub stable: bool,
    pub los_time: Option<f64>,
    /// Largest pairwise rotor angle separation seen, rad.
    pub max_pairwise_sep: f64,
}

/// Loss of synchronism: some pair of rotor angles more than pi apart.
pub const LOS_LIMIT: f64 = PI;

/// Simulates a bolted fault applied at t = 0 and cleared at `t_clear`,
/// starting from the model's equilibrium.
///
/// Integration stops at the first loss of synchronism, so trajectories of
/// unstable runs end at `los_time`.
pub fn simulate(model: &DynamicModel, t_clear: f64, cfg: &SimConfig) -> SimResult {
    let omega0 = vec![0.0; model.len()];
    simulate_from(model, &model.delta0, &omega0, t_clear, cfg)
}

/// Like [`simulate`] from an arbitrary initial state (`omega` is the speed
/// deviation in rad/s).
pub fn simulate_from(model: &DynamicModel, delta: &[f64], omega: &[f64], t_clear: f64, cfg: &SimConfig) -> SimResult {
    let n = model.len();
    let mut rec = SimResult {
        time: Vec::new(),
        delta: vec![Vec::new(); n],
        stable: true,
        los_time: None,
        max_pairwise_sep: 0.0,
    };
    let stride = cfg.record_stride;
    let mut state: Vec<f64> = delta.iter().chain(omega).copied().collect();
    if stride > 0 {
        push(&mut rec, 0.0, &state[..n]);
    }
    if exceeds_limit(&state[..n], &mut rec) {
        rec.stable = false;
        rec.los_time = Some(0.0);
        return rec;
    }

    let mut ws = Workspace::new(n);
    let fault_steps = if t_clear > 0.0 {
        math::ceil(t_clear / cfg.step - 1e-9).max(1.0) as usize
    } else {
        0
    };
    let post_steps = math::ceil(cfg.post_clear_horizon / cfg.step - 1e-9) as usize;
    let phases = [
        (Stage::Fault, fault_steps, if fault_steps > 0 { t_clear / fault_steps as f64 } else { 0.0 }),
        (Stage::Post, post_steps, cfg.step),
    ];
    let mut t_start = 0.0;
    let mut steps = 0usize;
    for (stage, count, h) in phases {
        let mut t = t_start;
        for k in 0..count {
            rk4_step(model, stage, &mut state, h, &mut ws);
            steps += 1;
            t = t_start + (k + 1) as f64 * h;
            let finite = state.iter().all(|x| x.is_finite());
            let lost = if finite {
                exceeds_limit(&state[..n], &mut rec)
            } else {
                rec.max_pairwise_sep = f64::INFINITY;
                true
            };
            if stride > 0 && (lost || k + 1 == count || steps.is_multiple_of(stride)) {
                push(&mut rec, t, &state[..n]);
            }
            if lost {
                rec.stable = false;
                rec.los_time = Some(t);
                return rec;
            }
        }
        t_start = t;
    }
    rec
}

fn push(rec: &mut SimResult, t: f64, delta: &[f64]) {
    rec.time.push(t);
    for (traj, &d) in rec.delta.iter_mut().zip(delta) {
        traj.push(d);
    }
}

/// Updates the running separation and reports whether the limit is exceeded.
fn exceeds_limit(delta: &[f64], rec: &mut SimResult) -> bool {
    let (lo, hi) = delta
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    let sep = if delta.is_empty() { 0.0 } else { hi - lo };
    rec.max_pairwise_sep = rec.max_pairwise_sep.max(sep);
    sep > LOS_LIMIT
}

/// Stability verdict only, without recording trajectories.
pub fn is_stable(model: &DynamicModel, t_clear: f64, cfg: &SimConfig) -> bool {
    let cfg = SimConfig { record_stride: 0, ..*cfg };
    simulate(model, t_clear, &cfg).stable
}

struct Workspace {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
    pe: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            k: [vec![0.0; 2 * n], vec![0.0; 2 * n], vec![0.0; 2 * n], vec![0.0; 2 * n]],
            tmp: vec![0.0; 2 * n],
            pe: vec![0.0; n],
        }
    }
}

/// Swing equation right-hand side:
/// `d delta / dt = omega`, `2H / omega_s * d omega / dt = Pm - Pe - D omega / omega_s`.
fn derivative(model: &DynamicModel, stage: Stage, state: &[f64], out: &mut [f64], pe: &mut [f64]) {
    let n = model.len();
    let (delta, omega) = state.split_at(n);
    model.electrical_power_into(stage, delta, pe);
    for i in 0..n {
        out[i] = omega[i];
        let h = model.h[i];
        out[n + i] = if h.is_infinite() {
            0.0
        } else {
            model.omega_s / (2.0 * h) * (model.pm[i] - pe[i] - model.d[i] * omega[i] / model.omega_s)
        };
    }
    for i in 0..n {
        if model.h[i].is_infinite() {
            out[i] = 0.0;
        }
    }
}

fn rk4_step(model: &DynamicModel, stage: Stage, state: &mut [f64], h: f64, ws: &mut Workspace) {
    let m = state.len();
    let Workspace { k, tmp, pe } = ws;
    derivative(model, stage, state, &mut k[0], pe);
    for i in 0..m {
        tmp[i] = state[i] + 0.5 * h * k[0][i];
    }
    derivative(model, stage, tmp, &mut k[1], pe);
    for i in 0..m {
        tmp[i] = state[i] + 0.5 * h * k[1][i];
    }
    derivative(model, stage, tmp, &mut k[2], pe);
    for i in 0..m {
        tmp[i] = state[i] + h * k[2][i];
    }
    derivative(model, stage, tmp, &mut k[3], pe);
    for i in 0..m {
        state[i] += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
    }
}

#[cfg(test)]
/// Machine against an infinite bus through reactance `x`; a terminal fault
/// removes all transfer admittance.
pub(crate) fn smib(h: f64, pmax: f64, delta0: f64) -> DynamicModel {
    let x = 0.5;
    let e = libm::sqrt(pmax * x);
    let y = Complex64::new(0.0, -1.0 / x);
    let y_pre = Matrix::from_row_major(2, 2, vec![y, -y, -y, y]);
    let y_fault = Matrix::from_row_major(2, 2, vec![y, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), y]);
    DynamicModel::from_parts(
        vec![String::from("G"), String::from("inf")],
        vec![h, f64::INFINITY],
        vec![0.0, 0.0],
        vec![e, e],
        vec![delta0, 0.0],
        y_pre,
        y_fault,
        60.0,
    )
    .unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn no_fault_stays_at_equilibrium() {
        let model = smib(5.0, 2.0, 0.5);
        assert!((model.pm[0] - 2.0 * libm::sin(0.5)).abs() < 1e-12);
        let res = simulate(&model, 0.0, &SimConfig::default());
        assert!(res.stable);
        for &d in &res.delta[0] {
            assert!((d - 0.5).abs() < 1e-6);
        }
        assert_eq!(res.time.len(), 5001);
    }

    #[test]
    fn fault_on_trajectory_is_parabolic() {
        let (h, delta0) = (4.0, 0.4);
        let model = smib(h, 1.8, delta0);
        let cfg = SimConfig { post_clear_horizon: 0.0, ..SimConfig::default() };
        let res = simulate(&model, 0.1, &cfg);
        let t = *res.time.last().unwrap();
        assert!((t - 0.1).abs() < 1e-12);
        let expect = delta0 + model.omega_s * model.pm[0] / (4.0 * h) * t * t;
        assert!((res.delta[0].last().unwrap() - expect).abs() < 1e-6);
    }

    #[test]
    fn long_fault_loses_synchronism() {
        let model = smib(3.0, 2.0, 0.5);
        let res = simulate(&model, 1.0, &SimConfig::default());
        assert!(!res.stable);
        assert!(res.los_time.unwrap() <= 1.0);
        assert!(res.max_pairwise_sep > PI);
        assert_eq!(*res.time.last().unwrap(), res.los_time.unwrap());
    }

    #[test]
    fn record_stride_zero_records_nothing() {
        let model = smib(3.0, 2.0, 0.5);
        let cfg = SimConfig { record_stride: 0, ..SimConfig::default() };
        let res = simulate(&model, 0.05, &cfg);
        assert!(res.time.is_empty());
        assert!(res.stable);
    }

    /// Three machines on a lossless reduced network with mutual susceptances
    /// `b` (per pair 01, 02, 12) and a shunt on every node.
    fn lossless(b: [f64; 3], h: [f64; 3], e: [f64; 3], delta0: [f64; 3]) -> DynamicModel {
        let pair = |i: usize, j: usize| match (i.min(j), i.max(j)) {
            (0, 1) => b[0],
            (0, 2) => b[1],
            _ => b[2],
        };
        let y = Matrix::from_fn(3, 3, |i, j| {
            if i == j {
                Complex64::new(0.0, -(0..3).filter(|&k| k != i).map(|k| pair(i, k)).sum::<f64>() - 0.5)
            } else {
                Complex64::new(0.0, pair(i, j))
            }
        });
        let ids = ["A", "B", "C"].iter().map(|s| String::from(*s)).collect();
        DynamicModel::from_parts(ids, h.to_vec(), vec![0.0; 3], e.to_vec(), delta0.to_vec(), y.clone(), y, 50.0)
            .unwrap()
    }

    fn energy(model: &DynamicModel, state: &[f64]) -> f64 {
        let (delta, omega) = state.split_at(3);
        let mut w = 0.0;
        for i in 0..3 {
            w += model.h[i] * omega[i] * omega[i] / model.omega_s - model.pm[i] * delta[i];
            for j in i + 1..3 {
                w -= model.e[i] * model.e[j] * model.y_pre[(i, j)].im * libm::cos(delta[i] - delta[j]);
            }
        }
        w
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn energy_is_conserved_without_damping(
            b in prop::array::uniform3(2.0f64..8.0),
            h in prop::array::uniform3(2.0f64..9.0),
            e in prop::array::uniform3(1.0f64..1.2),
            d0 in prop::array::uniform3(-0.3f64..0.3),
            kick in prop::array::uniform3(-2.0f64..2.0),
        ) {
            let model = lossless(b, h, e, d0);
            let mut state: Vec<f64> = d0.iter().chain(&kick).copied().collect();
            let w0 = energy(&model, &state);
            let mut ws = Workspace::new(3);
            let mut drift: f64 = 0.0;
            for _ in 0..5000 {
                rk4_step(&model, Stage::Post, &mut state, 1e-3, &mut ws);
                drift = drift.max((energy(&model, &state) - w0).abs());
            }
            prop_assert!(drift < 1e-5, "drift {drift}");
        }

        #[test]
        fn halving_the_step_barely_moves_the_end_state(h in 3.0f64..9.0, pmax in 1.5f64..3.0, d0 in 0.2f64..0.5, tc in 0.02f64..0.08) {
            let model = smib(h, pmax, d0);
            let coarse = simulate(&model, tc, &SimConfig::default());
            let fine = simulate(&model, tc, &SimConfig { step: 5e-4, ..SimConfig::default() });
            prop_assume!(coarse.stable && fine.stable);
            let (a, b) = (coarse.delta[0].last().unwrap(), fine.delta[0].last().unwrap());
            prop_assert!((a - b).abs() < 1e-5, "{a} vs {b}");
        }

        #[test]
        fn common_angle_shift_leaves_separations_unchanged(
            b in prop::array::uniform3(2.0f64..8.0),
            h in prop::array::uniform3(2.0f64..9.0),
            d0 in prop::array::uniform3(-0.3f64..0.3),
            shift in -3.0f64..3.0,
        ) {
            let e = [1.05, 1.1, 1.0];
            let base = lossless(b, h, e, d0);
            let shifted = lossless(b, h, e, d0.map(|d| d + shift));
            // a fault that opens the 0-1 tie
            let cut = |mut m: DynamicModel| {
                m.y_fault[(0, 1)] = Complex64::new(0.0, 0.0);
                m.y_fault[(1, 0)] = Complex64::new(0.0, 0.0);
                m
            };
            let cfg = SimConfig { post_clear_horizon: 1.0, ..SimConfig::default() };
            let r0 = simulate(&cut(base), 0.05, &cfg);
            let r1 = simulate(&cut(shifted), 0.05, &cfg);
            prop_assert_eq!(r0.time.len(), r1.time.len());
            for k in 0..r0.time.len() {
                for (i, j) in [(0, 1), (0, 2), (1, 2)] {
                    let s0 = r0.delta[i][k] - r0.delta[j][k];
                    let s1 = r1.delta[i][k] - r1.delta[j][k];
                    prop_assert!((s0 - s1).abs() < 1e-9);
                }
            }
        }
    }
}
