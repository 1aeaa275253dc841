//! Approximation of the continuous upper game by discrete games on
//! successively halved uniform partitions of `[0, I*]`.
//!
//! Each level solves the multistage game with `m0 * 2^level` cells, step
//! `Δt = I*/cells` and charge `e Δt` (a Riemann sum of the cost integral).
//! The gap between the two finest values estimates ε, and a budgeted search
//! over piecewise-constant unilateral deviations checks the ε-saddle inequality
//! at the finest level.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::discrete::{
    self, CostScaling, DiscreteProblem, DiscreteSolution, Mode, Policy, SolveError, ValueTable,
};
use crate::dynamics::DynamicsSpec;
use crate::grid::{Interval, UniformGrid};

/// Absolute slack (scaled by `max(1, |V|)`) allowed for floating-point noise
/// when comparing a deviation against the value.
pub const SADDLE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ContinuousError {
    #[error("invalid continuous problem: {0}")]
    Invalid(String),
    #[error("level {level}: {source}")]
    Level { level: usize, source: SolveError },
    #[error("level {level}: state grid still too small after widening: {source}")]
    LevelBudgetExceeded { level: usize, source: SolveError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Objective {
    /// Integral of the cost over the horizon.
    #[default]
    TotalCost,
    /// Time to reach the terminal set; the cost along the saddle path is reported alongside.
    ReachTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaddleConfig {
    /// Deviations are constant on at most this many cells of a coarsened partition.
    pub max_cells: usize,
    /// Grid values per cell, evenly picked from the control or disturbance grid.
    pub value_levels: usize,
    /// Maximum number of deviations tried over both sides.
    pub budget: u64,
    /// Tolerance for the check; `None` uses twice the refinement gap.
    pub epsilon: Option<f64>,
}

impl Default for SaddleConfig {
    fn default() -> Self {
        Self {
            max_cells: 8,
            value_levels: 3,
            budget: 100_000,
            epsilon: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousProblem {
    pub horizon: f64,
    pub dynamics: DynamicsSpec,
    pub x0: f64,
    pub terminal_set: Option<Interval>,
    pub objective: Objective,
    pub base_partition: usize,
    pub levels: usize,
    pub state_grid: UniformGrid,
    pub control_nodes: usize,
    pub disturbance_nodes: usize,
    pub saddle: SaddleConfig,
}

impl ContinuousProblem {
    pub fn validate(&self) -> Result<(), ContinuousError> {
        let bad = |m: &str| Err(ContinuousError::Invalid(m.to_string()));
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad("horizon must be positive");
        }
        if self.base_partition < 2 {
            return bad("base_partition must be >= 2");
        }
        if self.levels < 2 {
            return bad("levels must be >= 2");
        }
        if self.levels > 24 {
            return bad("levels must be <= 24");
        }
        if self.objective == Objective::ReachTime && self.terminal_set.is_none() {
            return bad("reach-time objective requires a terminal set");
        }
        if self.saddle.value_levels < 2 || self.saddle.max_cells < 1 {
            return bad("saddle search needs value_levels >= 2 and max_cells >= 1");
        }
        if self.saddle.epsilon.is_some_and(|e| !(e >= 0.0)) {
            return bad("saddle epsilon must be >= 0");
        }
        // remaining invariants are shared with the discrete problem
        self.level_problem(0, self.state_grid)
            .validate()
            .map_err(|e| ContinuousError::Invalid(e.to_string()))
    }

    pub fn cells(&self, level: usize) -> usize {
        self.base_partition << level
    }

    /// The discrete game induced by the partition of `level`.
    pub fn level_problem(&self, level: usize, grid: UniformGrid) -> DiscreteProblem {
        let cells = self.cells(level);
        DiscreteProblem {
            stages: cells,
            dynamics: self.dynamics.clone(),
            stage_bounds: Vec::new(),
            dt: vec![self.horizon / cells as f64],
            x0: self.x0,
            state_grid: grid,
            control_nodes: self.control_nodes,
            disturbance_nodes: self.disturbance_nodes,
            terminal_set: self.terminal_set,
            mode: match self.objective {
                Objective::TotalCost => Mode::MinCost,
                Objective::ReachTime => Mode::MinTime,
            },
            cost_scaling: CostScaling::TimesDt,
        }
    }
}

/// Uniform partition `0 = τ_0 < … < τ_m = I*`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Partition {
    bounds: Vec<f64>,
}

impl Partition {
    pub fn uniform(horizon: f64, cells: usize) -> Self {
        let bounds = (0..=cells)
            .map(|i| if i == cells { horizon } else { horizon * i as f64 / cells as f64 })
            .collect();
        Self { bounds }
    }

    pub fn bounds(&self) -> &[f64] {
        &self.bounds
    }

    pub fn cells(&self) -> usize {
        self.bounds.len() - 1
    }
}

/// Controller strategy of the partitioned game: on each cell the control is
/// fixed from the state observed at the cell's start.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePolicy {
    pub partition: Partition,
    pub feedback: Policy,
}

impl PiecewisePolicy {
    /// Control held on `cell` (0-based) when the state at its start is `x`.
    pub fn control(&self, cell: usize, x: f64) -> Option<f64> {
        let layer = self.partition.cells() - cell;
        self.feedback.lookup(layer, x).map(|a| a.control)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelResult {
    pub level: usize,
    pub cells: usize,
    pub dt: f64,
    /// Guaranteed cost, or guaranteed reach time, from `x0`.
    pub value: f64,
    /// Cost accrued along the policy-versus-worst-disturbance path.
    pub cost: Option<f64>,
    pub state_grid: UniformGrid,
    pub widened: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    /// The disturbance deviates against the controller's policy.
    Disturbance,
    /// The controller deviates against the disturbance's feedback.
    Control,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Deviation {
    pub side: Side,
    /// Value held on each coarse cell.
    pub cell_values: Vec<f64>,
    pub objective: f64,
    pub reference: f64,
    /// How much the deviating side gains over the reference (negative when it loses).
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaddleCheck {
    pub outcome: Outcome,
    pub epsilon: f64,
    pub candidates: u64,
    /// The deviation with the largest gain found.
    pub worst: Option<Deviation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RefinementReport {
    pub levels: Vec<LevelResult>,
    pub epsilon_hat: f64,
    pub saddle_check: SaddleCheck,
}

/// The finest level's game and solution, kept for further checks.
#[derive(Debug, Clone, PartialEq)]
pub struct FinestLevel {
    pub problem: DiscreteProblem,
    pub solution: DiscreteSolution,
}

impl FinestLevel {
    pub fn piecewise_policy(&self) -> PiecewisePolicy {
        PiecewisePolicy {
            partition: Partition::uniform(
                self.problem.dt(1) * self.problem.stages as f64,
                self.problem.stages,
            ),
            feedback: self.solution.policy.clone(),
        }
    }

    /// Value from `x0` in objective units (cost, or time for reach problems).
    pub fn value(&self) -> f64 {
        let v = self.solution.value_at(self.problem.x0).unwrap_or(f64::INFINITY);
        match self.problem.mode {
            Mode::MinCost => v,
            Mode::MinTime => v * self.problem.dt(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub report: RefinementReport,
    pub finest: FinestLevel,
}

fn gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs()
    }
}

fn solve_level(
    problem: &ContinuousProblem,
    level: usize,
    grid: UniformGrid,
) -> Result<(DiscreteProblem, DiscreteSolution, bool), ContinuousError> {
    let p = problem.level_problem(level, grid);
    match discrete::solve(&p) {
        Ok(s) => Ok((p, s, false)),
        Err(SolveError::GridExit { required, .. }) => {
            let wider = problem.level_problem(level, grid.widened_to(&required));
            match discrete::solve(&wider) {
                Ok(s) => Ok((wider, s, true)),
                Err(e @ SolveError::GridExit { .. }) => {
                    Err(ContinuousError::LevelBudgetExceeded { level, source: e })
                }
                Err(e) => Err(ContinuousError::Level { level, source: e }),
            }
        }
        Err(e) => Err(ContinuousError::Level { level, source: e }),
    }
}

/// Solve every refinement level, estimate ε from the two finest values and
/// run the deviation search on the finest level.
pub fn solve_refined(problem: &ContinuousProblem) -> Result<Refinement, ContinuousError> {
    problem.validate()?;
    let mut grid = problem.state_grid;
    let mut levels = Vec::with_capacity(problem.levels);
    let mut finest = None;
    for level in 0..problem.levels {
        let (p, s, widened) = solve_level(problem, level, grid)?;
        grid = p.state_grid;
        let fl = FinestLevel { problem: p, solution: s };
        let value = fl.value();
        let cost = match problem.objective {
            Objective::TotalCost => Some(value),
            Objective::ReachTime if value.is_finite() => Some(
                discrete::worst_case_disturbance(&fl.problem, &fl.solution)
                    .map_err(|e| ContinuousError::Level { level, source: e })?
                    .1,
            ),
            Objective::ReachTime => None,
        };
        levels.push(LevelResult {
            level,
            cells: fl.problem.stages,
            dt: fl.problem.dt(1),
            value,
            cost,
            state_grid: grid,
            widened,
        });
        finest = Some(fl);
    }
    let finest = finest.expect("at least two levels");
    let n = levels.len();
    let epsilon_hat = gap(levels[n - 1].value, levels[n - 2].value);
    let epsilon = problem.saddle.epsilon.unwrap_or(2.0 * epsilon_hat);
    let saddle_check = saddle_check(&finest, &finest.solution.policy, epsilon, &problem.saddle);
    Ok(Refinement {
        report: RefinementReport {
            levels,
            epsilon_hat,
            saddle_check,
        },
        finest,
    })
}

/// Evenly spread subset of `grid` with `levels` members, endpoints included.
fn value_levels(grid: &[f64], levels: usize) -> Vec<f64> {
    let v = levels.min(grid.len());
    if v <= 1 {
        return vec![grid[0]];
    }
    (0..v)
        .map(|j| grid[((j * (grid.len() - 1)) as f64 / (v - 1) as f64).round() as usize])
        .collect()
}

fn decode(mut code: u64, base: usize, cells: usize) -> Vec<usize> {
    (0..cells)
        .map(|_| {
            let d = (code % base as u64) as usize;
            code /= base as u64;
            d
        })
        .collect()
}

/// Objective of a finished path in the finest level's units.
fn score(problem: &DiscreteProblem, cost: f64, reached_after: Option<usize>) -> f64 {
    match problem.mode {
        Mode::MinCost => cost,
        Mode::MinTime => reached_after.map_or(f64::INFINITY, |k| k as f64 * problem.dt(1)),
    }
}

/// Play a path where `pick` chooses `(t, a)` from `(step, x)`.
fn play(
    problem: &DiscreteProblem,
    mut pick: impl FnMut(usize, f64) -> Option<(f64, f64)>,
) -> f64 {
    let mut x = problem.x0;
    let mut total = 0.0;
    for step in 1..=problem.stages {
        if problem.mode == Mode::MinTime && problem.is_terminal(x) {
            return score(problem, total, Some(step - 1));
        }
        let Some((t, a)) = pick(step, x) else {
            return f64::NAN;
        };
        let (Ok(cost), Ok(y)) = (problem.step_cost(step, x, t, a), problem.successor(step, x, t, a)) else {
            return f64::NAN;
        };
        total += cost;
        x = y;
    }
    let reached = (problem.mode == Mode::MinTime && problem.is_terminal(x)).then_some(problem.stages);
    score(problem, total, reached)
}

fn policy_control(problem: &DiscreteProblem, policy: &Policy, step: usize, x: f64) -> Option<f64> {
    let g = problem.state_grid;
    let layer = problem.stages - step + 1;
    policy.lookup(layer, x.clamp(g.lo, g.hi)).map(|a| a.control)
}

fn disturbance_feedback(problem: &DiscreteProblem, table: &ValueTable, step: usize, x: f64, t: f64) -> Option<f64> {
    discrete::worst_response(problem, table, step, x, t).ok().map(|(a, _)| a)
}

/// Search unilateral piecewise-constant deviations on a coarsened partition.
///
/// Disturbance side: every disturbance sequence against `policy`; a sequence
/// pushing the objective above the value by more than `epsilon` is a violation.
/// Control side: every control sequence against the disturbance feedback
/// derived from the value table; one pulling the objective below the value
/// by more than `epsilon` is a violation.
pub fn saddle_check(finest: &FinestLevel, policy: &Policy, epsilon: f64, config: &SaddleConfig) -> SaddleCheck {
    let problem = &finest.problem;
    let table = &finest.solution.table;
    let reference = finest.value();
    let n = problem.stages;
    let cells = config.max_cells.min(n).max(1);
    let cell_of = |step: usize| ((step - 1) * cells) / n;

    let a_levels = value_levels(&problem.disturbances(1), config.value_levels);
    let t_levels = value_levels(&problem.controls(1), config.value_levels);
    let family = |levels: usize| (levels as u64).checked_pow(cells as u32);
    let (Some(na), Some(nt)) = (family(a_levels.len()), family(t_levels.len())) else {
        return SaddleCheck { outcome: Outcome::Inconclusive, epsilon, candidates: 0, worst: None };
    };
    if na.saturating_add(nt) > config.budget {
        return SaddleCheck { outcome: Outcome::Inconclusive, epsilon, candidates: 0, worst: None };
    }

    let gain = |side: Side, objective: f64| -> f64 {
        if objective.is_nan() {
            return f64::NEG_INFINITY;
        }
        if objective == reference {
            return 0.0;
        }
        match side {
            Side::Disturbance => objective - reference,
            Side::Control => reference - objective,
        }
    };

    let disturbance_side: Vec<(f64, u64)> = (0..na)
        .into_par_iter()
        .map(|code| {
            let digits = decode(code, a_levels.len(), cells);
            let j = play(problem, |step, x| {
                let t = policy_control(problem, policy, step, x)?;
                Some((t, a_levels[digits[cell_of(step)]]))
            });
            (gain(Side::Disturbance, j), code)
        })
        .collect();
    let control_side: Vec<(f64, u64)> = (0..nt)
        .into_par_iter()
        .map(|code| {
            let digits = decode(code, t_levels.len(), cells);
            let j = play(problem, |step, x| {
                let t = t_levels[digits[cell_of(step)]];
                Some((t, disturbance_feedback(problem, table, step, x, t)?))
            });
            (gain(Side::Control, j), code)
        })
        .collect();

    let pick = |rows: &[(f64, u64)]| {
        rows.iter()
            .copied()
            .fold(None, |best: Option<(f64, u64)>, r| match best {
                Some(b) if b.0 >= r.0 => Some(b),
                _ => Some(r),
            })
    };
    let mut worst: Option<Deviation> = None;
    for (side, rows, levels) in [
        (Side::Disturbance, &disturbance_side, &a_levels),
        (Side::Control, &control_side, &t_levels),
    ] {
        let Some((excess, code)) = pick(rows) else { continue };
        if worst.as_ref().is_some_and(|w| w.excess >= excess) {
            continue;
        }
        let cell_values: Vec<f64> = decode(code, levels.len(), cells).iter().map(|&d| levels[d]).collect();
        let objective = match side {
            Side::Disturbance => reference + excess,
            Side::Control => reference - excess,
        };
        worst = Some(Deviation {
            side,
            cell_values,
            objective,
            reference,
            excess,
        });
    }

    let slack = SADDLE_SLACK * reference.abs().max(1.0);
    let violated = worst.as_ref().is_some_and(|w| w.excess > epsilon + slack);
    SaddleCheck {
        outcome: if violated { Outcome::Fail } else { Outcome::Pass },
        epsilon,
        candidates: na + nt,
        worst,
    }
}
