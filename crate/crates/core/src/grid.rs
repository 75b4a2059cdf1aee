//! Uniform time discretization of the horizon [0, T].

use crate::error::{Error, Result};

/// Uniform grid 0 = t_0 < t_1 < ... < t_K = T with spacing dt = T / K.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
    dt: f64,
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::domain(format!(
                "horizon must be a positive finite real, got {horizon}"
            )));
        }
        if steps == 0 {
            return Err(Error::domain("steps must be >= 1"));
        }
        let dt = horizon / steps as f64;
        // times[K] is pinned to T exactly rather than accumulated.
        let times = (0..=steps)
            .map(|k| if k == steps { horizon } else { k as f64 * dt })
            .collect();
        Ok(TimeGrid {
            horizon,
            steps,
            dt,
            times,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Number of time steps K (the grid has K + 1 points).
    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn sqrt_dt(&self) -> f64 {
        self.dt.sqrt()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
}
