//! Binary lattice models of the one-dimensional Brownian driver.
//!
//! Two backings share one topology interface:
//!
//! * [`FullTree`] is the non-recombining binary tree with 2^k nodes at step
//!   k. Every node owns its full history, so path-dependent terminals and
//!   path-dependent random bounds are exact. Node count forces a hard cap.
//! * [`MarkovLattice`] collapses nodes by the value of W. For problems whose
//!   data depend on the path only through (t, W_t) the collapse is exact:
//!   backward induction, the Girsanov reweighting and the fixed point all
//!   preserve measurability in the current state, so both backings produce
//!   the same numbers node for node (see tests). The collapse makes step
//!   counts in the hundreds affordable.
//!
//! One-step increments are +-sqrt(dt) with probability 1/2 each.

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Default cap on full-tree steps: 2^K nodes at the last level.
pub const FULL_TREE_STEP_CAP: usize = 22;

/// Cap on Markov-lattice steps (quadratic node growth).
pub const MARKOV_STEP_CAP: usize = 4096;

/// Common topology interface for backward induction over a binary lattice.
pub trait TreeTopology: Sync {
    fn grid(&self) -> &TimeGrid;

    /// Number of nodes at step k.
    fn width(&self, k: usize) -> usize;

    /// Index at step k+1 of the up-child (increment +sqrt(dt)).
    fn child_up(&self, k: usize, i: usize) -> usize;

    /// Index at step k+1 of the down-child (increment -sqrt(dt)).
    fn child_dn(&self, k: usize, i: usize) -> usize;

    /// Value of W at node (k, i).
    fn w_at(&self, k: usize, i: usize) -> f64;

    /// Historical probability mass of node (k, i).
    fn mass(&self, k: usize, i: usize) -> f64;

    fn steps(&self) -> usize {
        self.grid().steps()
    }

    /// Fresh per-step storage: levels 0..=upto, widths matching the topology.
    fn level_storage(&self, upto: usize) -> LevelProcess {
        LevelProcess {
            levels: (0..=upto).map(|k| vec![0.0; self.width(k)]).collect(),
        }
    }
}

/// Scalar adapted process on a lattice: one value per node per step.
///
/// Values are indexed by (step, node), so a process can only be a function
/// of the information available at its own step.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelProcess {
    pub levels: Vec<Vec<f64>>,
}

impl LevelProcess {
    pub fn constant<T: TreeTopology>(top: &T, upto: usize, value: f64) -> Self {
        LevelProcess {
            levels: (0..=upto).map(|k| vec![value; top.width(k)]).collect(),
        }
    }

    #[inline]
    pub fn at(&self, k: usize, i: usize) -> f64 {
        self.levels[k][i]
    }

    pub fn last_step(&self) -> usize {
        self.levels.len() - 1
    }

    /// Max over all nodes of |self - other|.
    pub fn sup_distance(&self, other: &LevelProcess) -> f64 {
        self.levels
            .iter()
            .zip(&other.levels)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }
}

/// Full non-recombining binary tree (2^k nodes at step k).
///
/// Node (k, i) encodes its history in the bits of i: the branch taken at
/// step s is bit (k-1-s), with 0 = up. Children are (2i, 2i + 1).
#[derive(Debug, Clone)]
pub struct FullTree {
    grid: TimeGrid,
}

impl FullTree {
    pub fn build(horizon: f64, steps: usize) -> Result<Self> {
        Self::build_capped(horizon, steps, FULL_TREE_STEP_CAP)
    }

    pub fn build_capped(horizon: f64, steps: usize, cap: usize) -> Result<Self> {
        if steps > cap {
            return Err(Error::resource(format!(
                "full tree with K = {steps} exceeds the step cap {cap} (2^K nodes)"
            )));
        }
        Ok(FullTree {
            grid: TimeGrid::new(horizon, steps)?,
        })
    }

    pub fn from_grid(grid: TimeGrid) -> Result<Self> {
        if grid.steps() > FULL_TREE_STEP_CAP {
            return Err(Error::resource(format!(
                "full tree with K = {} exceeds the step cap {FULL_TREE_STEP_CAP}",
                grid.steps()
            )));
        }
        Ok(FullTree { grid })
    }

    /// W levels along the path of leaf `i` (length K + 1, starts at 0).
    pub fn leaf_path(&self, i: usize) -> Vec<f64> {
        let k = self.grid.steps();
        let h = self.grid.sqrt_dt();
        let mut w = Vec::with_capacity(k + 1);
        let mut cur = 0.0;
        w.push(cur);
        for s in 0..k {
            let down = (i >> (k - 1 - s)) & 1 == 1;
            cur += if down { -h } else { h };
            w.push(cur);
        }
        w
    }
}

impl TreeTopology for FullTree {
    fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn width(&self, k: usize) -> usize {
        1usize << k
    }

    #[inline]
    fn child_up(&self, _k: usize, i: usize) -> usize {
        2 * i
    }

    #[inline]
    fn child_dn(&self, _k: usize, i: usize) -> usize {
        2 * i + 1
    }

    #[inline]
    fn w_at(&self, k: usize, i: usize) -> f64 {
        // ups - downs = k - 2 * popcount(i).
        let downs = (i as u64).count_ones() as i64;
        (k as i64 - 2 * downs) as f64 * self.grid.sqrt_dt()
    }

    #[inline]
    fn mass(&self, k: usize, _i: usize) -> f64 {
        0.5f64.powi(k as i32)
    }
}

/// Recombining binary lattice: node i at step k counts up-moves, W = (2i - k) sqrt(dt).
#[derive(Debug, Clone)]
pub struct MarkovLattice {
    grid: TimeGrid,
    /// masses[k][i] = C(k, i) 2^-k via the Pascal recursion.
    masses: Vec<Vec<f64>>,
}

impl MarkovLattice {
    pub fn build(horizon: f64, steps: usize) -> Result<Self> {
        if steps > MARKOV_STEP_CAP {
            return Err(Error::resource(format!(
                "markov lattice with K = {steps} exceeds the step cap {MARKOV_STEP_CAP}"
            )));
        }
        let grid = TimeGrid::new(horizon, steps)?;
        let mut masses = Vec::with_capacity(steps + 1);
        masses.push(vec![1.0]);
        for k in 0..steps {
            let prev = &masses[k];
            let mut next = vec![0.0; k + 2];
            for i in 0..=k {
                next[i] += 0.5 * prev[i];
                next[i + 1] += 0.5 * prev[i];
            }
            masses.push(next);
        }
        Ok(MarkovLattice { grid, masses })
    }
}

impl TreeTopology for MarkovLattice {
    fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    fn width(&self, k: usize) -> usize {
        k + 1
    }

    #[inline]
    fn child_up(&self, _k: usize, i: usize) -> usize {
        i + 1
    }

    #[inline]
    fn child_dn(&self, _k: usize, i: usize) -> usize {
        i
    }

    #[inline]
    fn w_at(&self, k: usize, i: usize) -> f64 {
        (2.0 * i as f64 - k as f64) * self.grid.sqrt_dt()
    }

    #[inline]
    fn mass(&self, k: usize, i: usize) -> f64 {
        self.masses[k][i]
    }
}

/// The exact-oracle lattice model: a full tree restricted to d = 1.
pub type LatticeModel = FullTree;

/// Builds the full non-recombining tree (hard cap on K, default 22).
pub fn build_lattice(horizon: f64, steps: usize) -> Result<FullTree> {
    FullTree::build(horizon, steps)
}
