//! Discrete Radon-Nikodym density processes R = prod (1 + zeta dW).

use crate::error::{Error, Result};
use crate::tree::{FullTree, LevelProcess, TreeTopology};

/// Candidate density on a full tree: one-step multipliers 1 + zeta dW and
/// the cumulative martingale R, stored per node.
#[derive(Debug, Clone)]
pub struct DensityProcess {
    pub zeta: LevelProcess,
    /// R at steps 0..=K; the root value is 1.
    pub r: LevelProcess,
}

impl DensityProcess {
    /// Build the cumulative density from a drift process. Fails when any
    /// one-step multiplier is nonpositive (the measure would not be
    /// equivalent to the historical one).
    pub fn from_zeta(tree: &FullTree, zeta: &LevelProcess) -> Result<Self> {
        let steps = tree.steps();
        let h = tree.grid().sqrt_dt();
        let mut r = tree.level_storage(steps);
        r.levels[0][0] = 1.0;
        for k in 0..steps {
            for i in 0..tree.width(k) {
                let s = zeta.at(k, i) * h;
                let up = 1.0 + s;
                let dn = 1.0 - s;
                if up <= 0.0 || dn <= 0.0 {
                    return Err(Error::InvalidDensity(format!(
                        "one-step multiplier {} at step {k}, node {i}",
                        up.min(dn)
                    )));
                }
                let base = r.at(k, i);
                r.levels[k + 1][tree.child_up(k, i)] = base * up;
                r.levels[k + 1][tree.child_dn(k, i)] = base * dn;
            }
        }
        Ok(DensityProcess {
            zeta: zeta.clone(),
            r,
        })
    }

    /// Expectation of the terminal density under the historical measure
    /// (1 up to rounding).
    pub fn terminal_expectation(&self, tree: &FullTree) -> f64 {
        let steps = tree.steps();
        (0..tree.width(steps))
            .map(|i| tree.mass(steps, i) * self.r.at(steps, i))
            .sum()
    }

    pub fn min_terminal(&self) -> f64 {
        let last = self.r.levels.last().unwrap();
        last.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// E[(R_K)^p] for the density driven by `zeta`, by backward recursion over
/// the one-step multipliers. Works on any topology because the recursion
/// only needs the drift at the current node. p = 1 recovers unit mass.
pub fn density_moment<T: TreeTopology>(top: &T, zeta: &LevelProcess, p: f64) -> f64 {
    let steps = top.steps();
    let h = top.grid().sqrt_dt();
    let mut m = vec![1.0; top.width(steps)];
    for k in (0..steps).rev() {
        let mut next = vec![0.0; top.width(k)];
        for (i, slot) in next.iter_mut().enumerate() {
            let s = zeta.at(k, i) * h;
            let up = (1.0 + s).powf(p) * m[top.child_up(k, i)];
            let dn = (1.0 - s).powf(p) * m[top.child_dn(k, i)];
            *slot = 0.5 * (up + dn);
        }
        m = next;
    }
    m[0]
}

/// Q-expectation of a terminal payoff given on the leaves, under the measure with
/// drift `zeta`: one backward sweep with the Girsanov branch weights.
pub fn q_expectation<T: TreeTopology>(top: &T, zeta: &LevelProcess, leaf: &[f64]) -> f64 {
    let steps = top.steps();
    let h = top.grid().sqrt_dt();
    let mut v = leaf.to_vec();
    for k in (0..steps).rev() {
        let mut next = vec![0.0; top.width(k)];
        for (i, slot) in next.iter_mut().enumerate() {
            let q_up = 0.5 * (1.0 + zeta.at(k, i) * h);
            let vu = v[top.child_up(k, i)];
            let vd = v[top.child_dn(k, i)];
            *slot = vd + q_up * (vu - vd);
        }
        v = next;
    }
    v[0]
}

/// Q-expectation of a payoff read off at an intermediate step: backward sweep
/// from `step` to 0 with the Girsanov branch weights.
pub fn q_expectation_at<T: TreeTopology>(
    top: &T,
    zeta: &LevelProcess,
    values: &[f64],
    step: usize,
) -> f64 {
    let h = top.grid().sqrt_dt();
    let mut v = values.to_vec();
    for k in (0..step).rev() {
        let mut next = vec![0.0; top.width(k)];
        for (i, slot) in next.iter_mut().enumerate() {
            let q_up = 0.5 * (1.0 + zeta.at(k, i) * h);
            let vu = v[top.child_up(k, i)];
            let vd = v[top.child_dn(k, i)];
            *slot = vd + q_up * (vu - vd);
        }
        v = next;
    }
    v[0]
}

/// Forward Q-masses E[R_k 1_node] per step; each level sums to 1.
pub fn q_forward_masses<T: TreeTopology>(top: &T, zeta: &LevelProcess) -> Vec<Vec<f64>> {
    let steps = top.steps();
    let h = top.grid().sqrt_dt();
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    out.push(vec![1.0]);
    for k in 0..steps {
        let mut next = vec![0.0; top.width(k + 1)];
        for i in 0..top.width(k) {
            let q_up = 0.5 * (1.0 + zeta.at(k, i) * h);
            let base = out[k][i];
            next[top.child_up(k, i)] += base * q_up;
            next[top.child_dn(k, i)] += base * (1.0 - q_up);
        }
        out.push(next);
    }
    out
}
