//! Planning specialist training as a min-max control problem.
//!
//! The economic side prices an education (present values, tuition, viability);
//! the control side steers the education level `x` through `x' = f(x, t, a)`
//! with a control `t` against a disturbance `a`, solved as a discrete game on a
//! state grid and refined towards the continuous-time limit.

// `!(v > 0.0)` is how the validators reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod continuous;
pub mod discrete;
pub mod dynamics;
pub mod econ;
pub mod export;
pub mod expr;
pub mod grid;
pub mod oracle;
