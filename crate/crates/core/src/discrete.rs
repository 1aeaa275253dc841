//! Backward-induction minimax solver for the multistage training model.
//!
//! With `k` steps remaining the guaranteed cost satisfies
//!
//! ```text
//! F_0(x) = 0
//! F_k(x) = min_t max_a [ e(t, a, x) + F_{k-1}(x + Δt f(x, t, a)) ]
//! ```
//!
//! where the minimum runs over the control grid of the current step and the
//! maximum over its disturbance grid. Off-node successor values are linearly
//! interpolated. The minimum-time variant replaces the stage cost with a unit
//! step count and pins the value to zero on the terminal set.
//!
//! Layers are indexed by steps *remaining*: layer `k` is used at step
//! `i = n - k + 1` (1-based), so layer `n` holds the value at the start.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::DynamicsSpec;
use crate::expr::ExprError;
use crate::grid::{Interval, UniformGrid, SNAP};

/// Guaranteed step count of a state that cannot be steered into the terminal set.
pub const UNREACHABLE: f64 = f64::INFINITY;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error("minimum-time mode requires a terminal set")]
    MissingTerminalSet,
    #[error("operation needs {expected:?} mode, problem is {found:?}")]
    WrongMode { expected: Mode, found: Mode },
    #[error(
        "state {x} leaves the grid [{}, {}] at step {step}; widen the state grid to at least [{}, {}]",
        grid.lo, grid.hi, required.lo, required.hi
    )]
    GridExit {
        step: usize,
        x: f64,
        grid: Interval,
        required: Interval,
    },
    #[error("expression error at step {step}, node {node}: {source}")]
    Expr {
        step: usize,
        node: usize,
        source: ExprError,
    },
    #[error("disturbance {value} at step {step} outside [{}, {}]", bounds.lo, bounds.hi)]
    DisturbanceOutOfBounds {
        step: usize,
        value: f64,
        bounds: Interval,
    },
    #[error("expected {expected} disturbances, got {found}")]
    DisturbanceCount { expected: usize, found: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    MinCost,
    MinTime,
}

/// How the cost expression turns into a per-step charge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostScaling {
    /// The expression value is the step's cost.
    #[default]
    PerStage,
    /// The expression is a cost rate; the step charges `e Δt`.
    TimesDt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageBounds {
    pub control: Interval,
    pub disturbance: Interval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteProblem {
    pub stages: usize,
    pub dynamics: DynamicsSpec,
    /// Per-step bounds; empty means the dynamics' bounds apply at every step.
    pub stage_bounds: Vec<StageBounds>,
    /// One shared duration, or one per step.
    pub dt: Vec<f64>,
    pub x0: f64,
    pub state_grid: UniformGrid,
    pub control_nodes: usize,
    pub disturbance_nodes: usize,
    pub terminal_set: Option<Interval>,
    pub mode: Mode,
    pub cost_scaling: CostScaling,
}

impl DiscreteProblem {
    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |m: String| Err(SolveError::Invalid(m));
        if self.stages < 1 {
            return bad("stages must be >= 1".into());
        }
        self.dynamics
            .validate()
            .map_err(|e| SolveError::Invalid(e.to_string()))?;
        if !(self.stage_bounds.is_empty() || self.stage_bounds.len() == self.stages) {
            return bad(format!(
                "stage_bounds has {} entries, expected {}",
                self.stage_bounds.len(),
                self.stages
            ));
        }
        for (i, b) in self.stage_bounds.iter().enumerate() {
            for iv in [b.control, b.disturbance] {
                if !(iv.lo.is_finite() && iv.hi.is_finite() && iv.lo <= iv.hi) {
                    return bad(format!("stage {} has an invalid bound [{}, {}]", i + 1, iv.lo, iv.hi));
                }
            }
        }
        if !(self.dt.len() == 1 || self.dt.len() == self.stages) {
            return bad(format!("dt has {} entries, expected 1 or {}", self.dt.len(), self.stages));
        }
        if let Some(dt) = self.dt.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return bad(format!("dt must be positive, got {dt}"));
        }
        let g = self.state_grid;
        if g.nodes < 2 || !(g.lo.is_finite() && g.hi.is_finite() && g.lo < g.hi) {
            return bad("state grid needs lo < hi and at least 2 nodes".into());
        }
        if self.control_nodes < 2 || self.disturbance_nodes < 2 {
            return bad("control and disturbance grids need at least 2 nodes".into());
        }
        if !g.interval().contains(self.x0) {
            return bad(format!("x0 = {} lies outside the state grid [{}, {}]", self.x0, g.lo, g.hi));
        }
        if let Some(ts) = self.terminal_set {
            if !(ts.lo <= ts.hi && g.interval().covers(&ts)) {
                return bad(format!(
                    "terminal set [{}, {}] must lie inside the state grid [{}, {}]",
                    ts.lo, ts.hi, g.lo, g.hi
                ));
            }
        }
        if self.mode == Mode::MinTime && self.terminal_set.is_none() {
            return Err(SolveError::MissingTerminalSet);
        }
        Ok(())
    }

    /// Bounds of 1-based step `step`.
    pub fn bounds(&self, step: usize) -> StageBounds {
        self.stage_bounds.get(step - 1).copied().unwrap_or(StageBounds {
            control: self.dynamics.control_bounds,
            disturbance: self.dynamics.disturbance_bounds,
        })
    }

    pub fn dt(&self, step: usize) -> f64 {
        if self.dt.len() == 1 {
            self.dt[0]
        } else {
            self.dt[step - 1]
        }
    }

    /// Elapsed time at the start of `step`.
    pub fn elapsed(&self, step: usize) -> f64 {
        (1..step).map(|i| self.dt(i)).sum()
    }

    pub fn controls(&self, step: usize) -> Vec<f64> {
        self.bounds(step).control.linspace(self.control_nodes)
    }

    pub fn disturbances(&self, step: usize) -> Vec<f64> {
        self.bounds(step).disturbance.linspace(self.disturbance_nodes)
    }

    pub fn is_terminal(&self, x: f64) -> bool {
        self.terminal_set
            .is_some_and(|ts| ts.contains_with(x, self.state_grid.tolerance()))
    }

    /// Cost charged at `step` (before scaling by the remaining-layer convention).
    pub fn step_cost(&self, step: usize, x: f64, t: f64, a: f64) -> Result<f64, ExprError> {
        let e = self
            .dynamics
            .stage_cost(t, a, x, self.elapsed(step), step)?;
        Ok(match self.cost_scaling {
            CostScaling::PerStage => e,
            CostScaling::TimesDt => e * self.dt(step),
        })
    }

    pub fn successor(&self, step: usize, x: f64, t: f64, a: f64) -> Result<f64, ExprError> {
        self.dynamics.advance(x, t, a, self.elapsed(step), self.dt(step))
    }

    fn same_kernel(&self, s1: usize, s2: usize) -> bool {
        !self.dynamics.is_time_varying()
            && self.bounds(s1) == self.bounds(s2)
            && self.dt(s1) == self.dt(s2)
    }

    /// States the value at `x0` depends on: successors of every state-lattice
    /// node in the running hull, rounded out to lattice nodes because values
    /// between nodes are interpolated. The lattice extends the state grid's
    /// spacing past its ends. Returns the hull and the first grid exit found.
    fn reachable_hull(&self) -> (Interval, Option<(usize, f64)>) {
        // guards against runaway dynamics; the hull is only a diagnostic then
        const MAX_LATTICE: i64 = 1 << 20;
        let grid = self.state_grid;
        let h = grid.spacing();
        let span = |x: f64| {
            let s = (x - grid.lo) / h;
            let r = s.round();
            if (s - r).abs() <= SNAP {
                (r as i64, r as i64)
            } else {
                (s.floor() as i64, s.ceil() as i64)
            }
        };
        let (mut lo, mut hi) = span(self.x0);
        let (mut total_lo, mut total_hi) = (lo, hi);
        let mut first_exit = None;
        for step in 1..=self.stages {
            let controls = self.controls(step);
            let disturbances = self.disturbances(step);
            let mut next: Option<(i64, i64)> = None;
            for j in lo..=hi {
                let x = grid.lo + j as f64 * h;
                if self.mode == Mode::MinTime && self.is_terminal(x) {
                    continue;
                }
                for &t in &controls {
                    for &a in &disturbances {
                        let Ok(y) = self.successor(step, x, t, a) else { continue };
                        if !y.is_finite() {
                            continue;
                        }
                        if first_exit.is_none() && grid.bracket(y).is_none() {
                            first_exit = Some((step, y));
                        }
                        let (f, c) = span(y);
                        next = Some(next.map_or((f, c), |(l, u)| (l.min(f), u.max(c))));
                    }
                }
            }
            let Some((l, u)) = next else { break };
            lo = l;
            hi = u;
            total_lo = total_lo.min(lo);
            total_hi = total_hi.max(hi);
            if total_hi - total_lo > MAX_LATTICE {
                break;
            }
        }
        let at = |j: i64| grid.lo + j as f64 * h;
        (Interval { lo: at(total_lo), hi: at(total_hi) }, first_exit)
    }

    pub fn grid_exit(&self) -> SolveError {
        let (required, exit) = self.reachable_hull();
        let (step, x) = exit.unwrap_or((1, self.x0));
        SolveError::GridExit {
            step,
            x,
            grid: self.state_grid.interval(),
            required: required.hull(&self.state_grid.interval()),
        }
    }
}

/// Guaranteed values per layer and state node. `None` marks nodes whose
/// successors leave the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueTable {
    pub mode: Mode,
    pub grid: UniformGrid,
    pub layers: Vec<Vec<Option<f64>>>,
}

impl ValueTable {
    pub fn stages(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn get(&self, layer: usize, node: usize) -> Option<f64> {
        self.layers[layer][node]
    }

    /// Linear interpolation of layer `layer` at `x`. `None` off the grid or
    /// when a bracketing node with positive weight is undefined.
    /// An unreachable bracketing node with positive weight yields [`UNREACHABLE`].
    pub fn interpolate(&self, layer: usize, x: f64) -> Option<f64> {
        let b = self.grid.bracket(x)?;
        let row = &self.layers[layer];
        let v0 = row[b.index]?;
        if b.frac == 0.0 {
            return Some(v0);
        }
        let v1 = row[b.index + 1]?;
        if v0 == UNREACHABLE || v1 == UNREACHABLE {
            return Some(UNREACHABLE);
        }
        Some((1.0 - b.frac) * v0 + b.frac * v1)
    }
}

/// Chosen control and the worst disturbance answering it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Action {
    pub control: f64,
    pub disturbance: f64,
    pub control_index: usize,
    pub disturbance_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Policy {
    pub grid: UniformGrid,
    /// Indexed like [`ValueTable::layers`]; layer 0 is empty of actions.
    pub layers: Vec<Vec<Option<Action>>>,
    /// Control grid used by each layer.
    pub control_grids: Vec<Vec<f64>>,
}

impl Policy {
    pub fn get(&self, layer: usize, node: usize) -> Option<Action> {
        self.layers[layer][node]
    }

    /// Action at the node nearest `x`; when that node has none, the closest
    /// node that does. `None` when `x` is off the grid or the layer is empty.
    pub fn lookup(&self, layer: usize, x: f64) -> Option<Action> {
        let near = self.grid.nearest(x)?;
        let row = &self.layers[layer];
        if let Some(a) = row[near] {
            return Some(a);
        }
        (1..row.len()).find_map(|d| {
            let below = near.checked_sub(d).and_then(|j| row[j]);
            let above = row.get(near + d).copied().flatten();
            match (below, above) {
                (Some(b), Some(a)) => {
                    // equidistant in index; prefer the physically closer
                    let xb = self.grid.node(near - d);
                    let xa = self.grid.node(near + d);
                    Some(if (x - xb).abs() <= (xa - x).abs() { b } else { a })
                }
                (b, a) => b.or(a),
            }
        })
    }

    /// Copy with every control of `layer` moved by `delta` grid nodes (clamped).
    pub fn shift_controls(&self, layer: usize, delta: isize) -> Policy {
        let mut out = self.clone();
        let grid = &self.control_grids[layer];
        for action in out.layers[layer].iter_mut().flatten() {
            let j = (action.control_index as isize + delta).clamp(0, grid.len() as isize - 1) as usize;
            action.control_index = j;
            action.control = grid[j];
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteSolution {
    pub table: ValueTable,
    pub policy: Policy,
}

impl DiscreteSolution {
    /// Guaranteed value from the initial state.
    pub fn value_at(&self, x: f64) -> Option<f64> {
        self.table.interpolate(self.table.stages(), x)
    }
}

/// Successors and charges for every (node, control, disturbance) of one step.
struct Kernel {
    controls: Vec<f64>,
    disturbances: Vec<f64>,
    next: Vec<f64>,
    cost: Vec<f64>,
}

impl Kernel {
    fn build(problem: &DiscreteProblem, step: usize, with_cost: bool) -> Result<Kernel, SolveError> {
        let controls = problem.controls(step);
        let disturbances = problem.disturbances(step);
        let per_node = controls.len() * disturbances.len();
        let rows: Vec<_> = (0..problem.state_grid.nodes)
            .into_par_iter()
            .map(|node| {
                let x = problem.state_grid.node(node);
                let mut next = Vec::with_capacity(per_node);
                let mut cost = Vec::with_capacity(if with_cost { per_node } else { 0 });
                let skip = problem.mode == Mode::MinTime && problem.is_terminal(x);
                for &t in &controls {
                    for &a in &disturbances {
                        if skip {
                            next.push(f64::NAN);
                            continue;
                        }
                        let wrap = |source| SolveError::Expr { step, node, source };
                        next.push(problem.successor(step, x, t, a).map_err(wrap)?);
                        if with_cost {
                            cost.push(problem.step_cost(step, x, t, a).map_err(wrap)?);
                        }
                    }
                }
                Ok::<_, SolveError>((next, cost))
            })
            .collect();
        let mut next = Vec::with_capacity(per_node * rows.len());
        let mut cost = Vec::new();
        for row in rows {
            let (n, c) = row?;
            next.extend(n);
            cost.extend(c);
        }
        Ok(Kernel {
            controls,
            disturbances,
            next,
            cost,
        })
    }
}

fn require_mode(problem: &DiscreteProblem, mode: Mode) -> Result<(), SolveError> {
    if problem.mode != mode {
        return Err(SolveError::WrongMode {
            expected: mode,
            found: problem.mode,
        });
    }
    Ok(())
}

/// Minimum guaranteed cost over `problem.stages` steps.
pub fn solve_min_cost(problem: &DiscreteProblem) -> Result<DiscreteSolution, SolveError> {
    require_mode(problem, Mode::MinCost)?;
    solve(problem)
}

/// Minimum number of steps that guarantees reaching the terminal set.
pub fn solve_min_time(problem: &DiscreteProblem) -> Result<DiscreteSolution, SolveError> {
    if problem.terminal_set.is_none() {
        return Err(SolveError::MissingTerminalSet);
    }
    require_mode(problem, Mode::MinTime)?;
    solve(problem)
}

/// Solve in the problem's own mode.
pub fn solve(problem: &DiscreteProblem) -> Result<DiscreteSolution, SolveError> {
    problem.validate()?;
    let grid = problem.state_grid;
    let n = problem.stages;
    let min_time = problem.mode == Mode::MinTime;

    let initial = (0..grid.nodes)
        .map(|j| {
            Some(if min_time && !problem.is_terminal(grid.node(j)) {
                UNREACHABLE
            } else {
                0.0
            })
        })
        .collect();
    let mut table = ValueTable {
        mode: problem.mode,
        grid,
        layers: vec![initial],
    };
    let mut policy = Policy {
        grid,
        layers: vec![vec![None; grid.nodes]],
        control_grids: vec![Vec::new()],
    };

    let mut kernel: Option<(usize, Kernel)> = None;
    for layer in 1..=n {
        let step = n - layer + 1;
        let reuse = matches!(&kernel, Some((s, _)) if problem.same_kernel(*s, step));
        if !reuse {
            kernel = Some((step, Kernel::build(problem, step, !min_time)?));
        }
        let k = &kernel.as_ref().expect("kernel built above").1;
        let (values, actions): (Vec<_>, Vec<_>) = (0..grid.nodes)
            .into_par_iter()
            .map(|node| backup(problem, &table, layer, k, node))
            .unzip();
        table.layers.push(values);
        policy.layers.push(actions);
        policy.control_grids.push(k.controls.clone());
    }

    let solution = DiscreteSolution { table, policy };
    if solution.value_at(problem.x0).is_none() {
        return Err(problem.grid_exit());
    }
    Ok(solution)
}

/// One min-max backup at a node. Ties go to the lowest control, then the
/// lowest disturbance.
fn backup(
    problem: &DiscreteProblem,
    table: &ValueTable,
    layer: usize,
    kernel: &Kernel,
    node: usize,
) -> (Option<f64>, Option<Action>) {
    let min_time = problem.mode == Mode::MinTime;
    if min_time && problem.is_terminal(table.grid.node(node)) {
        return (Some(0.0), None);
    }
    let na = kernel.disturbances.len();
    let base = node * kernel.controls.len() * na;
    let mut best = f64::INFINITY;
    let mut best_action: Option<Action> = None;
    for (ti, &t) in kernel.controls.iter().enumerate() {
        let mut worst = f64::NEG_INFINITY;
        let mut worst_a = 0;
        for ai in 0..na {
            let idx = base + ti * na + ai;
            let Some(ahead) = table.interpolate(layer - 1, kernel.next[idx]) else {
                return (None, None);
            };
            let term = if min_time { ahead } else { kernel.cost[idx] + ahead };
            if term > worst {
                worst = term;
                worst_a = ai;
            }
        }
        if best_action.is_none() || worst < best {
            best = worst;
            best_action = Some(Action {
                control: t,
                disturbance: kernel.disturbances[worst_a],
                control_index: ti,
                disturbance_index: worst_a,
            });
        }
    }
    let value = if min_time { best + 1.0 } else { best };
    (Some(value), best_action)
}

/// The disturbance (and its index) maximising `charge + value ahead` at state
/// `x` of `step` against control `t`. Candidates whose successor has no table
/// value are skipped; if none has one, the lowest disturbance is returned with
/// `None` as its score.
pub fn worst_response(
    problem: &DiscreteProblem,
    table: &ValueTable,
    step: usize,
    x: f64,
    t: f64,
) -> Result<(f64, Option<f64>), SolveError> {
    let layer = problem.stages - step + 1;
    let disturbances = problem.disturbances(step);
    let mut best: Option<(f64, f64)> = None;
    for &a in &disturbances {
        let wrap = |source| SolveError::Expr { step, node: usize::MAX, source };
        let y = problem.successor(step, x, t, a).map_err(wrap)?;
        let Some(ahead) = table.interpolate(layer - 1, y) else { continue };
        let score = match problem.mode {
            Mode::MinTime => ahead,
            Mode::MinCost => problem.step_cost(step, x, t, a).map_err(wrap)? + ahead,
        };
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((a, score));
        }
    }
    Ok(match best {
        Some((a, s)) => (a, Some(s)),
        None => (disturbances[0], None),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryStep {
    pub stage: usize,
    pub control: f64,
    pub disturbance: f64,
    /// State after the step.
    pub x: f64,
    pub stage_cost: f64,
    pub cumulative_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub x0: f64,
    pub steps: Vec<TrajectoryStep>,
    pub total_cost: f64,
    /// Minimum-time mode: whether the terminal set was reached.
    pub reached: Option<bool>,
}

impl Trajectory {
    pub fn final_state(&self) -> f64 {
        self.steps.last().map_or(self.x0, |s| s.x)
    }
}

fn step_forward(
    problem: &DiscreteProblem,
    step: usize,
    x: f64,
    t: f64,
    a: f64,
) -> Result<(f64, f64), SolveError> {
    let wrap = |source| SolveError::Expr { step, node: usize::MAX, source };
    let cost = problem.step_cost(step, x, t, a).map_err(wrap)?;
    let y = problem.successor(step, x, t, a).map_err(wrap)?;
    if problem.state_grid.bracket(y).is_none() {
        return Err(SolveError::GridExit {
            step,
            x: y,
            grid: problem.state_grid.interval(),
            required: problem.state_grid.interval().hull(&Interval::point(y)),
        });
    }
    Ok((y, cost))
}

fn policy_action(problem: &DiscreteProblem, policy: &Policy, step: usize, x: f64) -> Result<Action, SolveError> {
    let layer = problem.stages - step + 1;
    policy.lookup(layer, x).ok_or_else(|| problem.grid_exit())
}

/// Play the policy against a given disturbance sequence. In minimum-time mode
/// play stops once the terminal set is reached.
pub fn simulate(
    problem: &DiscreteProblem,
    policy: &Policy,
    disturbances: &[f64],
) -> Result<Trajectory, SolveError> {
    if disturbances.len() != problem.stages {
        return Err(SolveError::DisturbanceCount {
            expected: problem.stages,
            found: disturbances.len(),
        });
    }
    let mut x = problem.x0;
    let mut steps = Vec::with_capacity(problem.stages);
    let mut total = 0.0;
    let min_time = problem.mode == Mode::MinTime;
    for (i, &a) in disturbances.iter().enumerate() {
        let step = i + 1;
        if min_time && problem.is_terminal(x) {
            break;
        }
        let bounds = problem.bounds(step).disturbance;
        if !bounds.contains(a) {
            return Err(SolveError::DisturbanceOutOfBounds { step, value: a, bounds });
        }
        let action = policy_action(problem, policy, step, x)?;
        let (y, cost) = step_forward(problem, step, x, action.control, a)?;
        total += cost;
        steps.push(TrajectoryStep {
            stage: step,
            control: action.control,
            disturbance: a,
            x: y,
            stage_cost: cost,
            cumulative_cost: total,
        });
        x = y;
    }
    Ok(Trajectory {
        x0: problem.x0,
        steps,
        total_cost: total,
        reached: min_time.then(|| problem.is_terminal(x)),
    })
}

/// Forward pass in which the disturbance answers the policy's control with
/// the node maximising `charge + value ahead`. Returns the full-length
/// sequence (padded with the lowest disturbance after the terminal set is
/// reached) and the cost accrued along it.
pub fn worst_case_disturbance(
    problem: &DiscreteProblem,
    solution: &DiscreteSolution,
) -> Result<(Vec<f64>, f64), SolveError> {
    let mut x = problem.x0;
    let mut seq = Vec::with_capacity(problem.stages);
    let mut total = 0.0;
    for step in 1..=problem.stages {
        if problem.mode == Mode::MinTime && problem.is_terminal(x) {
            seq.push(problem.bounds(step).disturbance.lo);
            continue;
        }
        let action = policy_action(problem, &solution.policy, step, x)?;
        let (a, score) = worst_response(problem, &solution.table, step, x, action.control)?;
        if score.is_none() {
            return Err(problem.grid_exit());
        }
        let (y, cost) = step_forward(problem, step, x, action.control, a)?;
        total += cost;
        seq.push(a);
        x = y;
    }
    Ok((seq, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{exhaustive_value, OracleBudget};

    fn iv(lo: f64, hi: f64) -> Interval {
        Interval::new(lo, hi).unwrap()
    }

    fn problem(f: &str, e: &str, t: Interval, nt: usize, a: Interval, na: usize) -> DiscreteProblem {
        DiscreteProblem {
            stages: 1,
            dynamics: DynamicsSpec::parse(f, e, t, a, iv(0.0, 2.0)).unwrap(),
            stage_bounds: Vec::new(),
            dt: vec![1.0],
            x0: 0.0,
            state_grid: UniformGrid::new(-2.0, 2.0, 5).unwrap(),
            control_nodes: nt,
            disturbance_nodes: na,
            terminal_set: None,
            mode: Mode::MinCost,
            cost_scaling: CostScaling::PerStage,
        }
    }

    fn instance_a() -> DiscreteProblem {
        problem("0", "(t-a)^2", iv(0.0, 1.0), 2, iv(0.0, 1.0), 2)
    }

    fn instance_b() -> DiscreteProblem {
        DiscreteProblem {
            stages: 2,
            ..problem("t-a", "x^2 + t", iv(0.0, 1.0), 2, iv(0.0, 1.0), 2)
        }
    }

    #[test]
    fn instance_a_value_and_tie_break() {
        let p = instance_a();
        let s = solve_min_cost(&p).unwrap();
        for node in 0..5 {
            assert_eq!(s.table.get(1, node), Some(1.0));
            let act = s.policy.get(1, node).unwrap();
            assert_eq!(act.control, 0.0);
            assert_eq!(act.disturbance, 1.0);
        }
        let (seq, cost) = worst_case_disturbance(&p, &s).unwrap();
        assert_eq!(seq, vec![1.0]);
        assert_eq!(cost, 1.0);
    }

    #[test]
    fn instance_b_value() {
        let p = instance_b();
        let s = solve_min_cost(&p).unwrap();
        assert_eq!(s.value_at(0.0), Some(1.0));
        assert_eq!(s.policy.get(2, 2).unwrap().control, 0.0);
        // layer 1 is x^2 where defined; the edges step off the grid
        assert_eq!(s.table.layers[1], vec![None, Some(1.0), Some(0.0), Some(1.0), None]);
        assert_eq!(s.table.layers[2], vec![None, None, Some(1.0), None, None]);
        assert_eq!(s.table.layers[0], vec![Some(0.0); 5]);
    }

    #[test]
    fn instance_b_simulation_by_hand() {
        let p = instance_b();
        let s = solve_min_cost(&p).unwrap();
        let traj = simulate(&p, &s.policy, &[1.0, 1.0]).unwrap();
        // x: 0 -> -1 -> -2 with t = 0; costs 0 + 0 then 1 + 0
        let xs: Vec<f64> = traj.steps.iter().map(|s| s.x).collect();
        assert_eq!(xs, vec![-1.0, -2.0]);
        assert_eq!(traj.steps[0].stage_cost, 0.0);
        assert_eq!(traj.steps[1].stage_cost, 1.0);
        assert_eq!(traj.total_cost, 1.0);

        let (seq, cost) = worst_case_disturbance(&p, &s).unwrap();
        assert_eq!(cost, 1.0);
        assert_eq!(simulate(&p, &s.policy, &seq).unwrap().total_cost, 1.0);
    }

    #[test]
    fn zero_cost_is_zero_everywhere() {
        let p = DiscreteProblem {
            stages: 3,
            state_grid: UniformGrid::new(-10.0, 10.0, 21).unwrap(),
            ..problem("x/4 + t - a", "0", iv(0.0, 1.0), 3, iv(0.0, 1.0), 3)
        };
        let s = solve_min_cost(&p).unwrap();
        for layer in &s.table.layers {
            assert!(layer.iter().flatten().all(|v| *v == 0.0));
        }
        let (seq, cost) = worst_case_disturbance(&p, &s).unwrap();
        assert_eq!(seq, vec![0.0; 3]);
        assert_eq!(cost, 0.0);
        let traj = simulate(&p, &s.policy, &[1.0, 0.5, 0.0]).unwrap();
        assert_eq!(traj.total_cost, 0.0);
    }

    #[test]
    fn one_stage_policy_consistency_with_interpolation() {
        let p = DiscreteProblem {
            x0: 0.3,
            state_grid: UniformGrid::new(-2.0, 2.0, 9).unwrap(),
            ..problem("t - a", "(x - t)^2 + a", iv(0.0, 1.0), 5, iv(0.0, 1.0), 3)
        };
        let s = solve_min_cost(&p).unwrap();
        let (seq, cost) = worst_case_disturbance(&p, &s).unwrap();
        let v = s.value_at(0.3).unwrap();
        // value is interpolated between nodes 0.0 and 0.5; the exact state is played
        let spread = {
            let lo = s.table.get(1, 4).unwrap();
            let hi = s.table.get(1, 5).unwrap();
            (lo - hi).abs() + 0.5
        };
        assert!((cost - v).abs() <= spread, "{cost} vs {v}");
        assert_eq!(seq.len(), 1);
    }

    #[test]
    fn grid_exit_reports_required_interval() {
        let p = DiscreteProblem {
            state_grid: UniformGrid::new(-1.0, 1.0, 3).unwrap(),
            ..instance_b()
        };
        match solve_min_cost(&p) {
            Err(SolveError::GridExit { required, step, .. }) => {
                assert_eq!(required, iv(-2.0, 2.0));
                assert_eq!(step, 2);
            }
            other => panic!("expected grid exit, got {other:?}"),
        }
    }

    #[test]
    fn expression_errors_carry_location() {
        let p = problem("t - a", "log(x + 3)", iv(0.0, 1.0), 2, iv(0.0, 1.0), 2);
        assert!(solve_min_cost(&p).is_ok());
        let p = problem("t - a", "log(x)", iv(0.0, 1.0), 2, iv(0.0, 1.0), 2);
        match solve_min_cost(&p) {
            Err(SolveError::Expr { step: 1, node: 0, .. }) => {}
            other => panic!("expected located expression error, got {other:?}"),
        }
    }

    #[test]
    fn mode_checks() {
        assert!(matches!(solve_min_time(&instance_a()), Err(SolveError::MissingTerminalSet)));
        let p = DiscreteProblem {
            terminal_set: Some(iv(1.0, 2.0)),
            ..instance_a()
        };
        assert!(matches!(solve_min_time(&p), Err(SolveError::WrongMode { .. })));
        let p = DiscreteProblem { mode: Mode::MinTime, ..instance_a() };
        assert!(matches!(solve(&p), Err(SolveError::MissingTerminalSet)));
    }

    #[test]
    fn validation_errors() {
        let mut p = instance_b();
        p.x0 = 5.0;
        assert!(matches!(p.validate(), Err(SolveError::Invalid(_))));
        let mut p = instance_b();
        p.terminal_set = Some(iv(1.0, 3.0));
        assert!(matches!(p.validate(), Err(SolveError::Invalid(_))));
        let mut p = instance_b();
        p.dt = vec![1.0, 1.0, 1.0];
        assert!(matches!(p.validate(), Err(SolveError::Invalid(_))));
        let mut p = instance_b();
        p.control_nodes = 1;
        assert!(matches!(p.validate(), Err(SolveError::Invalid(_))));
    }

    fn reach_problem(t: Interval, nt: usize) -> DiscreteProblem {
        DiscreteProblem {
            stages: 3,
            state_grid: UniformGrid::new(-4.0, 6.0, 11).unwrap(),
            terminal_set: Some(iv(1.0, 6.0)),
            mode: Mode::MinTime,
            ..problem("t - a", "t", t, nt, iv(0.0, 1.0), 2)
        }
    }

    #[test]
    fn min_time_one_step() {
        let p = reach_problem(iv(0.0, 2.0), 3);
        let s = solve_min_time(&p).unwrap();
        assert_eq!(s.value_at(0.0), Some(1.0));
        assert_eq!(s.policy.get(3, 4).unwrap().control, 2.0);
        let (seq, _) = worst_case_disturbance(&p, &s).unwrap();
        let traj = simulate(&p, &s.policy, &seq).unwrap();
        assert_eq!(traj.steps.len(), 1);
        assert_eq!(traj.reached, Some(true));
    }

    #[test]
    fn min_time_already_terminal() {
        let p = DiscreteProblem { x0: 2.0, ..reach_problem(iv(0.0, 2.0), 3) };
        let s = solve_min_time(&p).unwrap();
        assert_eq!(s.value_at(2.0), Some(0.0));
        let traj = simulate(&p, &s.policy, &[1.0, 1.0, 1.0]).unwrap();
        assert!(traj.steps.is_empty());
        assert_eq!(traj.reached, Some(true));
    }

    #[test]
    fn min_time_unreachable_when_drift_is_not_positive() {
        let p = reach_problem(iv(0.0, 1.0), 5);
        let s = solve_min_time(&p).unwrap();
        assert_eq!(s.value_at(0.0), Some(UNREACHABLE));
        // from 0 there is nothing to guarantee; values are capped by the layer
        for (k, layer) in s.table.layers.iter().enumerate() {
            for v in layer.iter().flatten() {
                assert!(*v == UNREACHABLE || *v <= k as f64);
            }
        }
    }

    #[test]
    fn per_stage_bounds_and_durations() {
        let mut p = instance_b();
        p.stage_bounds = vec![
            StageBounds { control: iv(0.0, 1.0), disturbance: iv(0.0, 0.0) },
            StageBounds { control: iv(0.0, 1.0), disturbance: iv(0.0, 1.0) },
        ];
        p.dt = vec![1.0, 1.0];
        let s = solve_min_cost(&p).unwrap();
        let oracle = exhaustive_value(&p, OracleBudget::default()).unwrap();
        assert_eq!(s.value_at(0.0), Some(oracle.value));
        // no disturbance in step 1: stay at 0 with t = 0, then pay 0
        assert_eq!(oracle.value, 0.0);
    }

    #[test]
    fn cost_scaling_multiplies_by_dt() {
        let mut p = instance_a();
        p.dt = vec![0.5];
        p.cost_scaling = CostScaling::TimesDt;
        assert_eq!(solve_min_cost(&p).unwrap().value_at(0.0), Some(0.5));
    }

    #[test]
    fn shifted_policy_moves_controls() {
        let p = reach_problem(iv(0.0, 2.0), 3);
        let s = solve_min_time(&p).unwrap();
        let shifted = s.policy.shift_controls(3, -1);
        assert_eq!(shifted.get(3, 4).unwrap().control, 1.0);
        assert_eq!(shifted.get(2, 4), s.policy.get(2, 4));
    }

    #[test]
    fn rejects_bad_disturbances() {
        let p = instance_b();
        let s = solve_min_cost(&p).unwrap();
        assert!(matches!(simulate(&p, &s.policy, &[1.0]), Err(SolveError::DisturbanceCount { .. })));
        assert!(matches!(
            simulate(&p, &s.policy, &[1.0, 2.0]),
            Err(SolveError::DisturbanceOutOfBounds { step: 2, .. })
        ));
    }

    #[test]
    fn deterministic_tables() {
        let p = DiscreteProblem {
            stages: 3,
            x0: 0.25,
            state_grid: UniformGrid::new(-6.0, 6.0, 49).unwrap(),
            ..problem("0.3*x + t - a", "x^2 + (t - 0.5)^2 - a", iv(0.0, 1.0), 7, iv(0.0, 1.0), 5)
        };
        let a = solve_min_cost(&p).unwrap();
        let b = solve_min_cost(&p).unwrap();
        let bits = |s: &DiscreteSolution| -> Vec<Option<u64>> {
            s.table.layers.iter().flatten().map(|v| v.map(f64::to_bits)).collect()
        };
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a.policy, b.policy);
    }
}
