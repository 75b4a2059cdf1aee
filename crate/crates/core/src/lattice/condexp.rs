//! Exact conditional expectation on the tree, under the historical measure
//! or under a candidate density.

use super::density::DensityProcess;
use crate::error::{Error, Result};
use crate::tree::{FullTree, TreeTopology};

/// E[X_k | F_j] (zeta = None) or E_Q[X_k | F_j] for the measure driven by
/// `zeta`. `x` holds node values at step k; the result lives at step j.
pub fn conditional_expectation<T: TreeTopology>(
    top: &T,
    x: &[f64],
    k: usize,
    j: usize,
    zeta: Option<&crate::tree::LevelProcess>,
) -> Result<Vec<f64>> {
    if j > k || k > top.steps() {
        return Err(Error::domain(format!("need j <= k <= K, got j={j}, k={k}")));
    }
    if x.len() != top.width(k) {
        return Err(Error::domain("value slice does not match the level width"));
    }
    let h = top.grid().sqrt_dt();
    let mut v = x.to_vec();
    for step in (j..k).rev() {
        let mut next = vec![0.0; top.width(step)];
        for (i, slot) in next.iter_mut().enumerate() {
            let s = zeta.map_or(0.0, |z| z.at(step, i)) * h;
            if s.abs() >= 1.0 {
                return Err(Error::InvalidDensity(format!(
                    "one-step multiplier {} at step {step}, node {i}",
                    1.0 - s.abs()
                )));
            }
            let q_up = 0.5 * (1.0 + s);
            let vu = v[top.child_up(step, i)];
            let vd = v[top.child_dn(step, i)];
            *slot = vd + q_up * (vu - vd);
        }
        v = next;
    }
    Ok(v)
}

/// Worst-case gap of the Bayes identity E_Q[X | F_j] = E[R_k X | F_j] / R_j
/// over all conditioning steps j <= k.
pub fn bayes_consistency_gap(
    tree: &FullTree,
    x: &[f64],
    k: usize,
    density: &DensityProcess,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for j in 0..=k {
        let direct = conditional_expectation(tree, x, k, j, Some(&density.zeta))?;
        let weighted: Vec<f64> = (0..tree.width(k))
            .map(|i| density.r.at(k, i) * x[i])
            .collect();
        let hist = conditional_expectation(tree, &weighted, k, j, None)?;
        for i in 0..tree.width(j) {
            worst = worst.max((direct[i] - hist[i] / density.r.at(j, i)).abs());
        }
    }
    Ok(worst)
}
