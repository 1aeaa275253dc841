//! CSV renderings of solver output. Reals carry 17 significant digits so a
//! file round-trips to the same `f64`.

use std::fmt::Write as _;

use crate::continuous::LevelResult;
use crate::discrete::{Policy, Trajectory, ValueTable, UNREACHABLE};

/// Shortest exact-enough text for a real: 17 significant digits.
pub fn real(v: f64) -> String {
    format!("{v:.16e}")
}

fn cell(v: Option<f64>) -> String {
    match v {
        None => String::new(),
        Some(v) if v == UNREACHABLE => "UNREACHABLE".into(),
        Some(v) => real(v),
    }
}

/// One row per state node, one column per layer (`layer_k` = k steps left).
/// Undefined entries are empty.
pub fn value_csv(table: &ValueTable) -> String {
    let mut out = String::from("node,x");
    for k in 0..table.layers.len() {
        let _ = write!(out, ",layer_{k}");
    }
    out.push('\n');
    for i in 0..table.grid.nodes {
        let _ = write!(out, "{i},{}", real(table.grid.node(i)));
        for layer in &table.layers {
            let _ = write!(out, ",{}", cell(layer[i]));
        }
        out.push('\n');
    }
    out
}

/// Optimal control and worst disturbance per stage and node; nodes without
/// an action are omitted.
pub fn policy_csv(policy: &Policy) -> String {
    let stages = policy.layers.len() - 1;
    let mut out = String::from("stage,node,t,a\n");
    for stage in 1..=stages {
        let layer = stages - stage + 1;
        for (node, action) in policy.layers[layer].iter().enumerate() {
            if let Some(a) = action {
                let _ = writeln!(out, "{stage},{node},{},{}", real(a.control), real(a.disturbance));
            }
        }
    }
    out
}

/// Row 0 is the initial state; row i is the state after step i.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("stage,x,t,a,stage_cost,cumulative_cost\n");
    let _ = writeln!(out, "0,{},,,{},{}", real(traj.x0), real(0.0), real(0.0));
    for s in &traj.steps {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            s.stage,
            real(s.x),
            real(s.control),
            real(s.disturbance),
            real(s.stage_cost),
            real(s.cumulative_cost)
        );
    }
    out
}

pub fn refinement_csv(levels: &[LevelResult]) -> String {
    let mut out = String::from("level,cells,value\n");
    for l in levels {
        let _ = writeln!(out, "{},{},{}", l.level, l.cells, cell(Some(l.value)));
    }
    out
}

/// Two-column `key,value` table.
pub fn pairs_csv(rows: &[(String, f64)]) -> String {
    let mut out = String::from("key,value\n");
    for (k, v) in rows {
        let _ = writeln!(out, "{k},{}", real(*v));
    }
    out
}
