//! Closed intervals and uniform grids with snapped linear interpolation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative tolerance (in units of grid spacing) under which a point is
/// treated as lying exactly on a node or a boundary.
pub const SNAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("interval [{lo}, {hi}] is empty or not finite")]
    BadInterval { lo: f64, hi: f64 },
    #[error("grid needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
}

/// A closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, GridError> {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(GridError::BadInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub fn point(v: f64) -> Self {
        Self { lo: v, hi: v }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }

    pub fn contains_with(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }

    pub fn covers(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    pub fn include(&mut self, v: f64) {
        self.lo = self.lo.min(v);
        self.hi = self.hi.max(v);
    }

    /// `n` evenly spaced points from `lo` to `hi` inclusive (a single point when degenerate).
    pub fn linspace(&self, n: usize) -> Vec<f64> {
        if n <= 1 || self.lo == self.hi {
            return vec![self.lo];
        }
        let step = self.width() / (n - 1) as f64;
        (0..n)
            .map(|i| if i + 1 == n { self.hi } else { self.lo + step * i as f64 })
            .collect()
    }
}

impl TryFrom<[f64; 2]> for Interval {
    type Error = GridError;

    fn try_from(v: [f64; 2]) -> Result<Self, Self::Error> {
        Interval::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

/// Uniform grid of `nodes` points over `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub lo: f64,
    pub hi: f64,
    pub nodes: usize,
}

/// Where a point falls on a grid: node `index` with weight `1 - frac`,
/// and node `index + 1` with weight `frac` when `frac > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracket {
    pub index: usize,
    pub frac: f64,
}

impl UniformGrid {
    pub fn new(lo: f64, hi: f64, nodes: usize) -> Result<Self, GridError> {
        if nodes < 2 {
            return Err(GridError::TooFewNodes(nodes));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(GridError::BadInterval { lo, hi });
        }
        Ok(Self { lo, hi, nodes })
    }

    pub fn interval(&self) -> Interval {
        Interval { lo: self.lo, hi: self.hi }
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.nodes - 1) as f64
    }

    /// Absolute snapping tolerance.
    pub fn tolerance(&self) -> f64 {
        SNAP * self.spacing()
    }

    pub fn node(&self, i: usize) -> f64 {
        if i + 1 == self.nodes {
            self.hi
        } else {
            self.lo + self.spacing() * i as f64
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.nodes).map(|i| self.node(i)).collect()
    }

    /// Locate `x`, or `None` when it lies outside the grid.
    pub fn bracket(&self, x: f64) -> Option<Bracket> {
        let s = (x - self.lo) / self.spacing();
        let last = (self.nodes - 1) as f64;
        if !(s >= -SNAP && s <= last + SNAP) {
            return None;
        }
        let s = s.clamp(0.0, last);
        let mut index = s.floor() as usize;
        let mut frac = s - index as f64;
        if frac < SNAP {
            frac = 0.0;
        } else if frac > 1.0 - SNAP {
            index += 1;
            frac = 0.0;
        }
        if index >= self.nodes - 1 {
            index = self.nodes - 1;
            frac = 0.0;
        }
        Some(Bracket { index, frac })
    }

    pub fn nearest(&self, x: f64) -> Option<usize> {
        self.bracket(x)
            .map(|b| if b.frac > 0.5 { b.index + 1 } else { b.index })
    }

    /// Grid with the same spacing (rounded up to whole nodes) covering `target`.
    pub fn widened_to(&self, target: &Interval) -> UniformGrid {
        let h = self.spacing();
        let below = ((self.lo - target.lo) / h - SNAP).ceil().max(0.0) as usize;
        let above = ((target.hi - self.hi) / h - SNAP).ceil().max(0.0) as usize;
        UniformGrid {
            lo: self.lo - below as f64 * h,
            hi: self.hi + above as f64 * h,
            nodes: self.nodes + below + above,
        }
    }
}
