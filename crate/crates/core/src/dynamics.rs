//! Controlled dynamics `ẋ = f(x, t, a)` with an instantaneous cost `e`, the
//! explicit Euler transition shared by both solvers, and sampled estimates
//! of the regularity constants the continuous model assumes.

use serde::Serialize;
use thiserror::Error;

use crate::expr::{Bindings, Expr, ExprError, Var};
use crate::grid::Interval;

/// Nodes per axis in the default sampling plan.
pub const DEFAULT_SAMPLES: usize = 33;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("invalid dynamics: {0}")]
    Invalid(String),
    #[error("control {value} outside [{}, {}]", bounds.lo, bounds.hi)]
    ControlOutOfBounds { value: f64, bounds: Interval },
    #[error("disturbance {value} outside [{}, {}]", bounds.lo, bounds.hi)]
    DisturbanceOutOfBounds { value: f64, bounds: Interval },
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("degenerate sampling: need at least two distinct states, got {0}")]
    DegenerateSampling(usize),
    #[error("vectogram diagnostic needs at least 3 samples, got {0}")]
    TooFewSamples(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsSpec {
    /// Rate of change of the education level, in `x`, `t`, `a` and optionally `tau`.
    pub f: Expr,
    /// Instantaneous (or per-stage) cost, in `t`, `a`, `x` and optionally `tau`, `stage`.
    pub cost: Expr,
    pub control_bounds: Interval,
    pub disturbance_bounds: Interval,
    /// Admissible education levels; used for regularity sampling.
    pub state_domain: Interval,
}

impl DynamicsSpec {
    pub fn new(
        f: Expr,
        cost: Expr,
        control_bounds: Interval,
        disturbance_bounds: Interval,
        state_domain: Interval,
    ) -> Result<Self, DynamicsError> {
        let spec = Self {
            f,
            cost,
            control_bounds,
            disturbance_bounds,
            state_domain,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Parse both expressions and build the spec.
    pub fn parse(
        f: &str,
        cost: &str,
        control_bounds: Interval,
        disturbance_bounds: Interval,
        state_domain: Interval,
    ) -> Result<Self, DynamicsError> {
        Self::new(
            f.parse()?,
            cost.parse()?,
            control_bounds,
            disturbance_bounds,
            state_domain,
        )
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        for (name, i) in [
            ("control_bounds", self.control_bounds),
            ("disturbance_bounds", self.disturbance_bounds),
            ("state_domain", self.state_domain),
        ] {
            if !(i.lo.is_finite() && i.hi.is_finite() && i.lo <= i.hi) {
                return Err(DynamicsError::Invalid(format!(
                    "{name} [{}, {}] is not a finite ordered interval",
                    i.lo, i.hi
                )));
            }
        }
        if self.state_domain.lo < 0.0 {
            return Err(DynamicsError::Invalid(
                "state_domain lower bound must be >= 0".into(),
            ));
        }
        if self.f.uses(Var::Stage) {
            return Err(DynamicsError::Invalid(
                "f may depend on x, t, a and tau only".into(),
            ));
        }
        Ok(())
    }

    /// `f(x, t, a)` at elapsed time `tau`.
    pub fn rate(&self, x: f64, t: f64, a: f64, tau: f64) -> Result<f64, ExprError> {
        let b = Bindings::new()
            .with(Var::X, x)
            .with(Var::T, t)
            .with(Var::A, a)
            .with(Var::Tau, tau)
            .with(Var::Stage, 0.0);
        self.f.eval(&b)
    }

    /// `e(t, a, x)` at elapsed time `tau` during 1-based step `stage`.
    pub fn stage_cost(&self, t: f64, a: f64, x: f64, tau: f64, stage: usize) -> Result<f64, ExprError> {
        let b = Bindings::new()
            .with(Var::X, x)
            .with(Var::T, t)
            .with(Var::A, a)
            .with(Var::Tau, tau)
            .with(Var::Stage, stage as f64);
        self.cost.eval(&b)
    }

    /// Euler transition without bounds checks, `x + dt f(x, t, a)`.
    pub fn advance(&self, x: f64, t: f64, a: f64, tau: f64, dt: f64) -> Result<f64, ExprError> {
        Ok(x + dt * self.rate(x, t, a, tau)?)
    }

    /// Whether either expression depends on elapsed time or the step index.
    pub fn is_time_varying(&self) -> bool {
        self.f.uses(Var::Tau) || self.cost.uses(Var::Tau) || self.cost.uses(Var::Stage)
    }
}

/// One explicit Euler step `x + dt f(x, t, a)`. The result is not clamped to the state domain.
pub fn euler_step(spec: &DynamicsSpec, x: f64, t: f64, a: f64, dt: f64) -> Result<f64, DynamicsError> {
    if !spec.control_bounds.contains(t) {
        return Err(DynamicsError::ControlOutOfBounds {
            value: t,
            bounds: spec.control_bounds,
        });
    }
    if !spec.disturbance_bounds.contains(a) {
        return Err(DynamicsError::DisturbanceOutOfBounds {
            value: a,
            bounds: spec.disturbance_bounds,
        });
    }
    if !(dt > 0.0) {
        return Err(DynamicsError::NonPositiveStep(dt));
    }
    Ok(spec.advance(x, t, a, 0.0, dt)?)
}

/// Points at which the regularity estimates sample `f`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPlan {
    pub states: Vec<f64>,
    pub controls: Vec<f64>,
    pub disturbances: Vec<f64>,
}

impl SamplingPlan {
    /// `n` evenly spaced points per axis over the spec's domains.
    pub fn uniform(spec: &DynamicsSpec, n: usize) -> Self {
        Self {
            states: spec.state_domain.linspace(n),
            controls: spec.control_bounds.linspace(n),
            disturbances: spec.disturbance_bounds.linspace(n),
        }
    }

    pub fn default_for(spec: &DynamicsSpec) -> Self {
        Self::uniform(spec, DEFAULT_SAMPLES)
    }

    fn distinct_states(&self) -> usize {
        let mut xs = self.states.clone();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        xs.len()
    }

    fn check(&self) -> Result<(), DynamicsError> {
        let distinct = self.distinct_states();
        if distinct < 2 || self.controls.is_empty() || self.disturbances.is_empty() {
            return Err(DynamicsError::DegenerateSampling(distinct));
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        self.states.len() * self.controls.len() * self.disturbances.len()
    }
}

/// Sampled lower bound on the Lipschitz constant of `f` in `x`:
/// the largest difference quotient over sampled pairs sharing `(t, a)`.
pub fn estimate_lipschitz(spec: &DynamicsSpec, plan: &SamplingPlan) -> Result<f64, DynamicsError> {
    plan.check()?;
    let mut k: f64 = 0.0;
    let mut values = Vec::with_capacity(plan.states.len());
    for &t in &plan.controls {
        for &a in &plan.disturbances {
            values.clear();
            for &x in &plan.states {
                values.push((x, spec.rate(x, t, a, 0.0)?));
            }
            for (i, &(x1, f1)) in values.iter().enumerate() {
                for &(x2, f2) in &values[i + 1..] {
                    if x1 != x2 {
                        k = k.max((f1 - f2).abs() / (x1 - x2).abs());
                    }
                }
            }
        }
    }
    Ok(k)
}

/// Affine envelope `|f| <= M + N x` fitted to the samples.
///
/// First pass: `M0` is the largest `|f|` at the smallest sampled state and
/// `N` the least slope lifting `M0 + N x` over every sample with `x > 0`.
/// Second pass: `M` is the least intercept making the envelope hold everywhere.
pub fn estimate_growth(spec: &DynamicsSpec, plan: &SamplingPlan) -> Result<(f64, f64), DynamicsError> {
    plan.check()?;
    let mut samples = Vec::with_capacity(plan.sample_count());
    for &x in &plan.states {
        for &t in &plan.controls {
            for &a in &plan.disturbances {
                samples.push((x, spec.rate(x, t, a, 0.0)?.abs()));
            }
        }
    }
    let x_min = samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    let m0 = samples
        .iter()
        .filter(|s| s.0 == x_min)
        .map(|s| s.1)
        .fold(0.0, f64::max);
    let n = samples
        .iter()
        .filter(|s| s.0 > 0.0)
        .map(|&(x, v)| ((v - m0) / x).max(0.0))
        .fold(0.0, f64::max);
    let m = samples
        .iter()
        .map(|&(x, v)| (v - n * x).max(0.0))
        .fold(0.0, f64::max);
    Ok((m, n))
}

/// Largest gap between consecutive sorted values divided by the total range.
fn relative_gap(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let range = values[values.len() - 1] - values[0];
    if !(range > 0.0) {
        return 0.0;
    }
    values
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max)
        / range
}

/// Checks that the images `f(x, T, a)` and `f(x, t, Q)` look like intervals.
///
/// For each sampled disturbance the control interval is swept with `samples`
/// points (and vice versa); returns the worst relative gap found. Values near
/// zero indicate a connected (hence convex, in one dimension) image.
pub fn vectogram_diagnostic(spec: &DynamicsSpec, x: f64, samples: usize) -> Result<f64, DynamicsError> {
    if samples < 3 {
        return Err(DynamicsError::TooFewSamples(samples));
    }
    let ts = spec.control_bounds.linspace(samples);
    let alphas = spec.disturbance_bounds.linspace(samples);
    let mut worst: f64 = 0.0;
    let mut buf = Vec::with_capacity(samples);
    for &a in &alphas {
        buf.clear();
        for &t in &ts {
            buf.push(spec.rate(x, t, a, 0.0)?);
        }
        worst = worst.max(relative_gap(&mut buf));
    }
    for &t in &ts {
        buf.clear();
        for &a in &alphas {
            buf.push(spec.rate(x, t, a, 0.0)?);
        }
        worst = worst.max(relative_gap(&mut buf));
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityReport {
    pub lipschitz_k: f64,
    pub growth_m: f64,
    pub growth_n: f64,
    pub vectogram_max_gap: f64,
    pub sample_count: usize,
}

pub fn regularity_report(spec: &DynamicsSpec, plan: &SamplingPlan) -> Result<RegularityReport, DynamicsError> {
    let lipschitz_k = estimate_lipschitz(spec, plan)?;
    let (growth_m, growth_n) = estimate_growth(spec, plan)?;
    let sweep = plan.controls.len().max(plan.disturbances.len()).max(3);
    let mut gap: f64 = 0.0;
    for &x in &plan.states {
        gap = gap.max(vectogram_diagnostic(spec, x, sweep)?);
    }
    Ok(RegularityReport {
        lipschitz_k,
        growth_m,
        growth_n,
        vectogram_max_gap: gap,
        sample_count: plan.sample_count(),
    })
}
