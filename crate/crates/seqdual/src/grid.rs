use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform time grid on `[t0, tf]` with `n_intervals` forward-Euler intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    tf: f64,
    n_intervals: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, tf: f64, n_intervals: usize) -> Result<Self> {
        if !t0.is_finite() || !tf.is_finite() {
            return Err(Error::InvalidProblem("non-finite time horizon".into()));
        }
        if tf <= t0 {
            return Err(Error::InvalidProblem(format!(
                "time horizon must satisfy tf > t0 (got t0 = {t0}, tf = {tf})"
            )));
        }
        if n_intervals < 2 {
            return Err(Error::InvalidProblem(format!(
                "need at least 2 intervals (got {n_intervals})"
            )));
        }
        let grid = TimeGrid { t0, tf, n_intervals };
        debug_assert!((grid.node_time(n_intervals) - tf).abs() <= 1e-12 * (tf - t0));
        Ok(grid)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn tf(&self) -> f64 {
        self.tf
    }

    pub fn n_intervals(&self) -> usize {
        self.n_intervals
    }

    /// Number of grid nodes, `n_intervals + 1`.
    pub fn n_nodes(&self) -> usize {
        self.n_intervals + 1
    }

    pub fn h_step(&self) -> f64 {
        (self.tf - self.t0) / self.n_intervals as f64
    }

    pub fn node_time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.h_step()
    }

    /// Iterator over the node times `t_0, ..., t_N`.
    pub fn node_times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_nodes()).map(move |i| self.node_time(i))
    }

    /// Same horizon on a different partition.
    pub fn with_intervals(&self, n_intervals: usize) -> Result<Self> {
        TimeGrid::new(self.t0, self.tf, n_intervals)
    }
}
