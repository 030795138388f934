//! Small networks shared by unit tests.

use alloc::string::ToString;
use alloc::vec;

use crate::network::*;

fn machine(id: &str, bus: BusId, mva: f64, h: f64, slack: bool) -> SyncMachine {
    SyncMachine {
        id: id.to_string(),
        bus,
        mva_rating: mva,
        h,
        xd_prime: 0.25,
        d: 0.0,
        p_max: 0.9 * mva,
        p_min: 0.05 * mva,
        q_max: 0.6 * mva,
        q_min: -0.6 * mva,
        v_set: 1.02,
        cost: Cost { c2: 0.01, c1: 10.0, c0: 0.0 },
        n_units: 4,
        is_slack: slack,
    }
}

/// Triangle of three buses: slack machine on bus 1 (area 1), a second machine
/// on bus 2 and a load plus renewable plant on bus 3 (area 2).
pub(crate) fn triangle() -> PowerNetwork {
    let line = |from, to| Branch { from, to, r: 0.01, x: 0.1, b_shunt: 0.02, tap: 1.0 };
    PowerNetwork {
        name: "triangle".to_string(),
        base_mva: 100.0,
        base_freq: 50.0,
        buses: vec![
            Bus { id: 1, nominal_kv: 132.0, kind: BusType::Slack },
            Bus { id: 2, nominal_kv: 132.0, kind: BusType::Pv },
            Bus { id: 3, nominal_kv: 132.0, kind: BusType::Pq },
        ],
        branches: vec![line(1, 2), line(1, 3), line(2, 3)],
        machines: vec![machine("G1", 1, 300.0, 6.0, true), machine("G2", 2, 200.0, 4.0, false)],
        res_units: vec![ResUnit { id: "R1".to_string(), bus: 3, mva_rating: 20.0, unit_size: 2.0, area: 2 }],
        loads: vec![Load { id: "L3".to_string(), bus: 3, p_base: 180.0, q_base: 40.0 }],
        areas: vec![Area { id: 1, buses: vec![1] }, Area { id: 2, buses: vec![2, 3] }],
    }
}
