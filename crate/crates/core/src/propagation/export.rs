use serde::{Deserialize, Serialize};

use super::MomentTrajectory;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub k: usize,
    pub order: u32,
    pub monomial: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryJson {
    pub functionals: Vec<String>,
    pub horizon: usize,
    pub rows: Vec<TrajectoryRow>,
}

fn rows(traj: &MomentTrajectory) -> Vec<TrajectoryRow> {
    let mut out = Vec::new();
    for k in 0..=traj.horizon {
        for (order, t) in &traj.orders {
            for (exps, v) in t.basis.iter().zip(&t.steps[k]) {
                out.push(TrajectoryRow { k, order: *order, monomial: traj.label(exps), value: *v });
            }
        }
    }
    out
}

/// `k,order,monomial,value` with shortest round-trip decimals.
pub fn trajectory_csv(traj: &MomentTrajectory) -> String {
    let mut s = String::from("k,order,monomial,value\n");
    for r in rows(traj) {
        s.push_str(&format!("{},{},\"{}\",{}\n", r.k, r.order, r.monomial, r.value));
    }
    s
}

pub fn trajectory_json(traj: &MomentTrajectory) -> TrajectoryJson {
    TrajectoryJson { functionals: traj.functional_names.clone(), horizon: traj.horizon, rows: rows(traj) }
}
