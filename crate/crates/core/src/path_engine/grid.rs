use crate::error::{LabError, Result};
use serde::{Deserialize, Serialize};

/// Uniform time discretization `t_k = k * dt`, `k = 0..=n_steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(LabError::Config(format!(
                "time step must be positive, got {dt}"
            )));
        }
        if n_steps == 0 {
            return Err(LabError::Config("grid needs at least one step".into()));
        }
        Ok(TimeGrid { dt, n_steps })
    }

    /// Grid with step `dt` whose horizon is the smallest multiple of `dt` >= `horizon`.
    pub fn covering(dt: f64, horizon: f64) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(LabError::Config(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        let steps = (horizon / dt - 1e-9).ceil().max(1.0) as usize;
        TimeGrid::new(dt, steps)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    /// Nearest grid index to `t` (not clamped to the horizon).
    pub fn index_of(&self, t: f64) -> usize {
        (t / self.dt).round().max(0.0) as usize
    }

    /// Same step, different number of steps.
    pub fn with_steps(&self, n_steps: usize) -> Result<Self> {
        TimeGrid::new(self.dt, n_steps)
    }
}
