//! Monte Carlo path container for the d-dimensional Brownian driver.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::rng::CounterRng;

/// Cap on N * K * d cells (1 GiB of f64 increments).
pub const PATH_CELL_CAP: usize = 1 << 27;

/// Simulated Brownian increments, one Gaussian N(0, dt) per
/// (path, step, coordinate) cell, regenerated bit-identically from the seed.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    grid: TimeGrid,
    dim: usize,
    paths: usize,
    seed: u64,
    /// Layout: increments[(p * K + k) * d + j].
    increments: Vec<f64>,
}

/// Read-only view of one simulated path (levels of W, not increments).
pub struct PathView<'a> {
    pub times: &'a [f64],
    /// w[k * d + j] = W^j_{t_k}, k = 0..=K.
    pub w: &'a [f64],
    pub dim: usize,
}

impl<'a> PathView<'a> {
    pub fn w_at(&self, k: usize, j: usize) -> f64 {
        self.w[k * self.dim + j]
    }

    /// Terminal value of the first coordinate.
    pub fn w_terminal(&self) -> f64 {
        let k = self.times.len() - 1;
        self.w_at(k, 0)
    }
}

pub fn simulate_paths(
    grid: &TimeGrid,
    dim: usize,
    paths: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    if paths == 0 {
        return Err(Error::domain("path count must be >= 1"));
    }
    if dim == 0 {
        return Err(Error::domain("dimension must be >= 1"));
    }
    let steps = grid.steps();
    let cells = paths
        .checked_mul(steps)
        .and_then(|c| c.checked_mul(dim))
        .ok_or_else(|| Error::resource("path ensemble size overflows"))?;
    if cells > PATH_CELL_CAP {
        return Err(Error::resource(format!(
            "N*K*d = {cells} exceeds the cell cap {PATH_CELL_CAP}"
        )));
    }
    let rng = CounterRng::new(seed);
    let sqrt_dt = grid.sqrt_dt();
    let row = steps * dim;
    let mut increments = vec![0.0; cells];
    // Counter = flat cell index, so the fill is order- and thread-independent.
    increments
        .par_chunks_mut(row)
        .enumerate()
        .for_each(|(p, chunk)| {
            let base = (p * row) as u64;
            for (i, cell) in chunk.iter_mut().enumerate() {
                *cell = sqrt_dt * rng.normal(base + i as u64);
            }
        });
    Ok(PathEnsemble {
        grid: grid.clone(),
        dim,
        paths,
        seed,
        increments,
    })
}

impl PathEnsemble {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn paths(&self) -> usize {
        self.paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn increment(&self, path: usize, step: usize, coord: usize) -> f64 {
        self.increments[(path * self.grid.steps() + step) * self.dim + coord]
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    /// Cumulative W levels for one path: (K+1) * d values starting at 0.
    pub fn path_levels(&self, path: usize) -> Vec<f64> {
        let steps = self.grid.steps();
        let d = self.dim;
        let mut w = vec![0.0; (steps + 1) * d];
        for k in 0..steps {
            for j in 0..d {
                w[(k + 1) * d + j] = w[k * d + j] + self.increment(path, k, j);
            }
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regeneration_is_bit_identical() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let a = simulate_paths(&grid, 1, 10_000, 7).unwrap();
        let b = simulate_paths(&grid, 1, 10_000, 7).unwrap();
        assert_eq!(a.increments().len(), b.increments().len());
        for (x, y) in a.increments().iter().zip(b.increments()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        let c = simulate_paths(&grid, 1, 10_000, 8).unwrap();
        assert_ne!(a.increments()[0].to_bits(), c.increments()[0].to_bits());
    }

    #[test]
    fn increment_variance_within_chi_square_band() {
        // dt = 0.1; sample variance over N*K cells has sd ~ dt*sqrt(2/n).
        let grid = TimeGrid::new(1.0, 10).unwrap();
        let e = simulate_paths(&grid, 1, 10_000, 7).unwrap();
        let n = e.increments().len() as f64;
        let mean = e.increments().iter().sum::<f64>() / n;
        let var = e
            .increments()
            .iter()
            .map(|x| (x - mean) * (x - mean))
            .sum::<f64>()
            / n;
        let dt = grid.dt();
        assert!(mean.abs() < 5.0 * (dt / n).sqrt(), "mean {mean}");
        assert!((var - dt).abs() < 5.0 * dt * (2.0 / n).sqrt(), "var {var}");
    }

    #[test]
    fn rejects_empty_and_oversized() {
        let grid = TimeGrid::new(1.0, 10).unwrap();
        assert!(matches!(
            simulate_paths(&grid, 1, 0, 1),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            simulate_paths(&grid, 0, 10, 1),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            simulate_paths(&grid, 1 << 20, 1 << 20, 1),
            Err(Error::Resource(_))
        ));
    }

    #[test]
    fn path_levels_accumulate() {
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let e = simulate_paths(&grid, 2, 3, 5).unwrap();
        let w = e.path_levels(1);
        assert_eq!(w[0], 0.0);
        assert_eq!(w[1], 0.0);
        let got = w[2 * 2 + 1];
        let want = e.increment(1, 0, 1) + e.increment(1, 1, 1);
        assert!((got - want).abs() < 1e-15);
    }
}
