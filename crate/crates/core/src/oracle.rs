//! Exhaustive min-max over the full game tree of a small discrete instance.
//!
//! States are carried exactly (no state grid, no interpolation), which makes
//! this an independent check on the dynamic-programming solver.

use serde::Serialize;
use thiserror::Error;

use crate::discrete::{DiscreteProblem, Mode};
use crate::expr::ExprError;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("oracle budget of {budget} nodes exceeded ({reached} expanded)")]
    BudgetExceeded { budget: u64, reached: u64 },
    #[error("expression error at step {step}, x = {x}: {source}")]
    Expr { step: usize, x: f64, source: ExprError },
    #[error("first step {first} outside 1..={stages}")]
    BadStart { first: usize, stages: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OracleBudget {
    pub max_nodes: u64,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self { max_nodes: 10_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleResult {
    pub value: f64,
    /// Control-disturbance transitions expanded.
    pub nodes: u64,
}

/// Exact min-max value from `problem.x0` over all stages.
pub fn exhaustive_value(problem: &DiscreteProblem, budget: OracleBudget) -> Result<OracleResult, OracleError> {
    exhaustive_tail_value(problem, problem.x0, 1, budget)
}

/// Exact min-max value of the sub-game that starts at `x` on step `first`
/// (1-based) and runs to the last stage. `first = stages + 1` is the empty game.
pub fn exhaustive_tail_value(
    problem: &DiscreteProblem,
    x: f64,
    first: usize,
    budget: OracleBudget,
) -> Result<OracleResult, OracleError> {
    if first == 0 || first > problem.stages + 1 {
        return Err(OracleError::BadStart {
            first,
            stages: problem.stages,
        });
    }
    let mut search = Search {
        problem,
        budget,
        nodes: 0,
        controls: (1..=problem.stages).map(|s| problem.controls(s)).collect(),
        disturbances: (1..=problem.stages).map(|s| problem.disturbances(s)).collect(),
    };
    let value = search.value(first, x)?;
    Ok(OracleResult {
        value,
        nodes: search.nodes,
    })
}

struct Search<'a> {
    problem: &'a DiscreteProblem,
    budget: OracleBudget,
    nodes: u64,
    controls: Vec<Vec<f64>>,
    disturbances: Vec<Vec<f64>>,
}

impl Search<'_> {
    fn value(&mut self, step: usize, x: f64) -> Result<f64, OracleError> {
        let p = self.problem;
        let min_time = p.mode == Mode::MinTime;
        if min_time && p.is_terminal(x) {
            return Ok(0.0);
        }
        if step > p.stages {
            return Ok(if min_time { f64::INFINITY } else { 0.0 });
        }
        let tau = p.elapsed(step);
        let dt = p.dt(step);
        let mut best = f64::INFINITY;
        for ti in 0..self.controls[step - 1].len() {
            let t = self.controls[step - 1][ti];
            let mut worst = f64::NEG_INFINITY;
            for ai in 0..self.disturbances[step - 1].len() {
                let a = self.disturbances[step - 1][ai];
                self.nodes += 1;
                if self.nodes > self.budget.max_nodes {
                    return Err(OracleError::BudgetExceeded {
                        budget: self.budget.max_nodes,
                        reached: self.nodes,
                    });
                }
                let wrap = |source| OracleError::Expr { step, x, source };
                let next = x + dt * p.dynamics.rate(x, t, a, tau).map_err(wrap)?;
                let charge = if min_time {
                    1.0
                } else {
                    p.step_cost(step, x, t, a).map_err(wrap)?
                };
                worst = worst.max(charge + self.value(step + 1, next)?);
            }
            best = best.min(worst);
        }
        Ok(best)
    }
}
