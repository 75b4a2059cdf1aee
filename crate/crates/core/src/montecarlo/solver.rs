//! The measure-solution fixed point under regression Monte Carlo.

use rayon::prelude::*;

use super::basis::RegressionBasis;
use super::regression::fit_targets;
use crate::error::{Error, Result};
use crate::generators::{znorm, GenCtx, GeneratorG};
use crate::lattice::ConvergenceCriterion;
use crate::paths::{PathEnsemble, PathView};
use crate::rng::CounterRng;
use crate::terminal::TerminalCondition;

/// Multipliers are floored here instead of going negative; any floored cell
/// is counted and surfaces as a degeneracy warning.
const MULT_FLOOR: f64 = 1e-10;

/// One-step density increment. The product form matches the lattice engine
/// and has exact unit expectation under resampling; the exponential form is
/// the continuous-time density evaluated on the grid, useful for refinement
/// studies, and is positive by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityForm {
    Product,
    Exponential,
}

#[derive(Debug, Clone)]
pub struct McOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub clip: f64,
    pub z_eps: f64,
    pub bootstrap_resamples: usize,
    pub criterion: ConvergenceCriterion,
    pub density_form: DensityForm,
    pub allow_unbounded_terminal: bool,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions {
            tol: 1e-4,
            max_iter: 200,
            damping: 1.0,
            clip: 0.95,
            z_eps: 1e-12,
            bootstrap_resamples: 200,
            criterion: ConvergenceCriterion::Measure,
            density_form: DensityForm::Product,
            allow_unbounded_terminal: false,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct McTraceRow {
    pub iter: usize,
    pub residual: f64,
    pub a_residual: f64,
    pub y0: f64,
    pub damping: f64,
}

#[derive(Debug, Clone)]
pub struct McSolveReport {
    pub y0: f64,
    /// Bootstrap 0.95 half-width of the Y_0 ratio estimator.
    pub y0_ci_half: f64,
    pub residual: f64,
    pub a_residual: f64,
    /// Bootstrap 0.95 half-width of the residual statistic.
    pub residual_ci_half: f64,
    pub iterations: usize,
    /// Requires residual <= tol + residual_ci_half.
    pub converged: bool,
    pub ess: f64,
    pub mean_terminal_density: f64,
    /// Raised when |mean R_K - 1| > 5 / sqrt(N).
    pub weight_flag: bool,
    /// Representation defect E_Q[(xi - Y_0 - sum Z dW^Q)^2].
    pub e_rep: f64,
    pub r2_per_step: Vec<f64>,
    pub max_condition_estimate: f64,
    pub orthogonality_max: f64,
    pub clip_active: bool,
    pub floored_multipliers: usize,
    pub trace: Vec<McTraceRow>,
}

/// Report plus the fitted processes (per step, per path).
#[derive(Debug, Clone)]
pub struct McSolution {
    pub report: McSolveReport,
    /// Fitted Y values, indexed `y[k][path]`, k = 0..=K.
    pub y: Vec<Vec<f64>>,
    /// Fitted Z values, indexed `z[k][path * d + j]`, k = 0..K.
    pub z: Vec<Vec<f64>>,
    /// Drift actually used in the final pass (clipped), same layout as z.
    pub zeta: Vec<Vec<f64>>,
}

/// ESS = (sum R)^2 / sum R^2, in [1, N].
pub fn effective_sample_size(terminal_density: &[f64]) -> f64 {
    let s: f64 = terminal_density.iter().sum();
    let s2: f64 = terminal_density.iter().map(|r| r * r).sum();
    if s2 == 0.0 {
        0.0
    } else {
        s * s / s2
    }
}

/// Bayes-weighted projection of the terminal variable onto the step-k
/// features: Y_k = fit(R_K xi) / fit(R_K), both fits sharing the basis.
pub fn weighted_projection(
    basis: &RegressionBasis,
    states_k: &[f64],
    t_k: f64,
    terminal_density: &[f64],
    xi: &[f64],
) -> Result<Vec<f64>> {
    let weighted: Vec<f64> = terminal_density
        .iter()
        .zip(xi)
        .map(|(r, x)| r * x)
        .collect();
    let fit = fit_targets(basis, states_k, t_k, &[terminal_density, &weighted])?;
    ratio_fitted(&fit.fitted[1], &fit.fitted[0])
}

/// Weighted regression estimate of Z_k ~ E_Q[Y_{k+1} dW^Q_k | F_k] / dt.
#[allow(clippy::too_many_arguments)]
pub fn extract_z(
    basis: &RegressionBasis,
    states_k: &[f64],
    t_k: f64,
    dt: f64,
    density_next: &[f64],
    y_next: &[f64],
    dwq: &[f64],
    terminal_density: &[f64],
) -> Result<Vec<f64>> {
    let d = basis.dim();
    let paths = y_next.len();
    let mut targets: Vec<Vec<f64>> = Vec::with_capacity(d);
    for j in 0..d {
        targets.push(
            (0..paths)
                .map(|p| density_next[p] * y_next[p] * dwq[p * d + j])
                .collect(),
        );
    }
    let mut all: Vec<&[f64]> = vec![terminal_density];
    all.extend(targets.iter().map(|t| t.as_slice()));
    let fit = fit_targets(basis, states_k, t_k, &all)?;
    let den = &fit.fitted[0];
    let mut z = vec![0.0; paths * d];
    for j in 0..d {
        let num = &fit.fitted[j + 1];
        for p in 0..paths {
            let dv = den[p];
            if !dv.is_finite() || dv.abs() < 1e-12 {
                return Err(Error::ImportanceWeight(
                    "projected density vanished; increase steps or lower the clip".into(),
                ));
            }
            z[p * d + j] = num[p] / (dv * dt);
        }
    }
    Ok(z)
}

fn ratio_fitted(num: &[f64], den: &[f64]) -> Result<Vec<f64>> {
    num.iter()
        .zip(den)
        .map(|(n, d)| {
            let v = n / d;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::ImportanceWeight(
                    "projected density vanished; increase steps or lower the clip".into(),
                ))
            }
        })
        .collect()
}

fn percentile_half_width(mut stats: Vec<f64>) -> f64 {
    stats.sort_by(|a, b| a.total_cmp(b));
    let n = stats.len();
    if n < 4 {
        return 0.0;
    }
    let lo = stats[(0.025 * n as f64) as usize];
    let hi = stats[((0.975 * n as f64) as usize).min(n - 1)];
    0.5 * (hi - lo)
}

/// Bootstrap half-width of sqrt(mean(values)).
fn bootstrap_sqrt_mean_ci(values: &[f64], resamples: usize, rng: &CounterRng) -> f64 {
    let n = values.len();
    let stats: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut acc = 0.0;
            for i in 0..n {
                let idx = (rng.word((r * n + i) as u64) % n as u64) as usize;
                acc += values[idx];
            }
            (acc / n as f64).max(0.0).sqrt()
        })
        .collect();
    percentile_half_width(stats)
}

/// Bootstrap half-width of mean(num) / mean(den).
fn bootstrap_ratio_ci(num: &[f64], den: &[f64], resamples: usize, rng: &CounterRng) -> f64 {
    let n = num.len();
    let stats: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|r| {
            let mut sn = 0.0;
            let mut sd = 0.0;
            for i in 0..n {
                let idx = (rng.word((r * n + i) as u64) % n as u64) as usize;
                sn += num[idx];
                sd += den[idx];
            }
            sn / sd
        })
        .collect();
    percentile_half_width(stats)
}

struct McPass {
    y: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    gvals: Vec<Vec<f64>>,
    density: Vec<Vec<f64>>,
    residual: f64,
    a_residual: f64,
    per_path_sq: Vec<f64>,
    r2_per_step: Vec<f64>,
    max_cond: f64,
    floored: usize,
}

/// Regression-based measure-solution fixed point on a path ensemble.
pub fn mc_solve(
    g: &GeneratorG,
    xi: &TerminalCondition,
    ensemble: &PathEnsemble,
    basis: &RegressionBasis,
    opts: &McOptions,
) -> Result<McSolution> {
    let d = ensemble.dim();
    if g.dim() != d || basis.dim() != d {
        return Err(Error::domain(
            "generator, basis and ensemble dimensions must agree",
        ));
    }
    if !xi.is_bounded() && !opts.allow_unbounded_terminal {
        return Err(Error::domain(format!(
            "terminal '{}' has no uniform bound; set the test-only override to proceed",
            xi.label()
        )));
    }
    let steps = ensemble.grid().steps();
    let paths = ensemble.paths();
    let dt = ensemble.grid().dt();
    let clip_norm = opts.clip / dt.sqrt();

    // States W_k per step and terminal values, computed once.
    let mut states: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
    states.push(vec![0.0; paths * d]);
    for k in 0..steps {
        let prev = &states[k];
        let mut next = vec![0.0; paths * d];
        next.par_chunks_mut(d).enumerate().for_each(|(p, chunk)| {
            for (j, c) in chunk.iter_mut().enumerate() {
                *c = prev[p * d + j] + ensemble.increment(p, k, j);
            }
        });
        states.push(next);
    }
    let times = ensemble.grid().times().to_vec();
    let xi_vals: Vec<f64> = (0..paths)
        .map(|p| {
            let w = ensemble.path_levels(p);
            xi.eval_path(&PathView {
                times: &times,
                w: &w,
                dim: d,
            })
        })
        .collect();

    let mut zeta: Vec<Vec<f64>> = (0..steps).map(|_| vec![0.0; paths * d]).collect();
    let mut theta = opts.damping;
    let mut prev_residual = f64::INFINITY;
    let mut trace = Vec::new();
    let boot_rng = CounterRng::new(ensemble.seed()).stream(0xb007);

    let run_pass = |zeta: &[Vec<f64>]| -> Result<McPass> {
        // Cumulative density per step.
        let mut density: Vec<Vec<f64>> = Vec::with_capacity(steps + 1);
        density.push(vec![1.0; paths]);
        let mut floored = 0usize;
        for k in 0..steps {
            let prev = &density[k];
            let zk = &zeta[k];
            let mut next = vec![0.0; paths];
            let mut local_floor = 0usize;
            for (p, slot) in next.iter_mut().enumerate() {
                let mut dot = 0.0;
                let mut norm_sq = 0.0;
                for j in 0..d {
                    let zv = zk[p * d + j];
                    dot += zv * ensemble.increment(p, k, j);
                    norm_sq += zv * zv;
                }
                let mult = match opts.density_form {
                    DensityForm::Product => {
                        let m = 1.0 + dot;
                        if m <= MULT_FLOOR {
                            local_floor += 1;
                            MULT_FLOOR
                        } else {
                            m
                        }
                    }
                    DensityForm::Exponential => (dot - 0.5 * norm_sq * dt).exp(),
                };
                *slot = prev[p] * mult;
            }
            floored += local_floor;
            density.push(next);
        }
        let terminal_density = density[steps].clone();

        let mut y: Vec<Vec<f64>> = vec![Vec::new(); steps + 1];
        let mut z: Vec<Vec<f64>> = vec![Vec::new(); steps];
        let mut gvals: Vec<Vec<f64>> = vec![Vec::new(); steps];
        let mut r2_per_step = vec![0.0; steps];
        let mut max_cond = 0.0f64;
        y[steps] = xi_vals.clone();

        let weighted_xi: Vec<f64> = terminal_density
            .iter()
            .zip(&xi_vals)
            .map(|(r, x)| r * x)
            .collect();
        for k in (0..steps).rev() {
            let t_k = times[k];
            // Z targets use the next-step density (lower variance, same
            // conditional expectation as weighting by R_K).
            let mut targets: Vec<Vec<f64>> = Vec::with_capacity(d);
            for j in 0..d {
                let zk = &zeta[k];
                targets.push(
                    (0..paths)
                        .map(|p| {
                            let dwq = ensemble.increment(p, k, j) - zk[p * d + j] * dt;
                            density[k + 1][p] * y[k + 1][p] * dwq
                        })
                        .collect(),
                );
            }
            let mut all: Vec<&[f64]> = vec![&terminal_density, &weighted_xi];
            all.extend(targets.iter().map(|t| t.as_slice()));
            let fit = fit_targets(basis, &states[k], t_k, &all)?;
            max_cond = max_cond.max(fit.diagnostics.cond_estimate);
            r2_per_step[k] = fit.diagnostics.r_squared[1];
            let den = &fit.fitted[0];
            y[k] = ratio_fitted(&fit.fitted[1], den)?;
            let mut zk_out = vec![0.0; paths * d];
            for j in 0..d {
                let num = &fit.fitted[2 + j];
                for p in 0..paths {
                    zk_out[p * d + j] = num[p] / (den[p] * dt);
                }
            }
            if zk_out.iter().any(|v| !v.is_finite()) {
                return Err(Error::ImportanceWeight(
                    "projected density vanished; increase steps or lower the clip".into(),
                ));
            }
            z[k] = zk_out;
        }

        // Residuals of zeta = g(., Y, Z) under the empirical measure.
        let mut per_path_sq = vec![0.0; paths];
        let mut a_residual_sq = 0.0;
        for k in 0..steps {
            let t_k = times[k];
            let zk = &z[k];
            let yk = &y[k];
            let wk = &states[k];
            let zetak = &zeta[k];
            let mut gv_store = vec![0.0; paths * d];
            gv_store
                .par_chunks_mut(d)
                .enumerate()
                .for_each(|(p, chunk)| {
                    let zs = &zk[p * d..(p + 1) * d];
                    g.eval_into(&GenCtx::new(t_k, yk[p], zs, &wk[p * d..(p + 1) * d]), chunk);
                });
            for p in 0..paths {
                let zs = &zk[p * d..(p + 1) * d];
                let gap: f64 = gv_store[p * d..(p + 1) * d]
                    .iter()
                    .zip(&zetak[p * d..(p + 1) * d])
                    .map(|(gv, zv)| (zv - gv) * (zv - gv))
                    .sum();
                per_path_sq[p] += gap * dt;
                if znorm(zs) > opts.z_eps {
                    a_residual_sq += gap * dt / paths as f64;
                }
            }
            gvals[k] = gv_store;
        }
        let residual_sq = per_path_sq.iter().sum::<f64>() / paths as f64;
        Ok(McPass {
            y,
            z,
            gvals,
            density,
            residual: residual_sq.sqrt(),
            a_residual: a_residual_sq.sqrt(),
            per_path_sq,
            r2_per_step,
            max_cond,
            floored,
        })
    };

    let mut iter = 0usize;
    loop {
        iter += 1;
        let mut clip_active = false;
        for level in zeta.iter_mut() {
            for p in 0..paths {
                let cell = &mut level[p * d..(p + 1) * d];
                let n = znorm(cell);
                if n > clip_norm {
                    let scale = clip_norm / n;
                    cell.iter_mut().for_each(|v| *v *= scale);
                    clip_active = true;
                }
            }
        }
        let pass = run_pass(&zeta)?;
        let residual_ci =
            bootstrap_sqrt_mean_ci(&pass.per_path_sq, opts.bootstrap_resamples, &boot_rng);
        let y0 = pass.y[0][0];
        trace.push(McTraceRow {
            iter,
            residual: pass.residual,
            a_residual: pass.a_residual,
            y0,
            damping: theta,
        });
        let criterion_value = match opts.criterion {
            ConvergenceCriterion::Measure => pass.residual,
            ConvergenceCriterion::AlmostMeasure => pass.a_residual,
        };
        let converged = criterion_value <= opts.tol + residual_ci;
        if converged || iter >= opts.max_iter {
            let terminal_density = pass.density[steps].clone();
            let ess = effective_sample_size(&terminal_density);
            if ess < 0.01 * paths as f64 {
                return Err(Error::ImportanceWeight(format!(
                    "effective sample size {ess:.1} below 1% of {paths}; increase steps or lower the clip"
                )));
            }
            let mean_r = terminal_density.iter().sum::<f64>() / paths as f64;
            let weight_flag = (mean_r - 1.0).abs() > 5.0 / (paths as f64).sqrt();
            let y0_ci = bootstrap_ratio_ci(
                &terminal_density
                    .iter()
                    .zip(&xi_vals)
                    .map(|(r, x)| r * x)
                    .collect::<Vec<f64>>(),
                &terminal_density,
                opts.bootstrap_resamples,
                &boot_rng,
            );
            // Representation defect under Q.
            let mut e_rep_num = 0.0;
            let mut e_rep_den = 0.0;
            for p in 0..paths {
                let mut acc = xi_vals[p] - y0;
                for (k, zk) in pass.z.iter().enumerate() {
                    for j in 0..d {
                        let dwq = ensemble.increment(p, k, j) - zeta[k][p * d + j] * dt;
                        acc -= zk[p * d + j] * dwq;
                    }
                }
                e_rep_num += terminal_density[p] * acc * acc;
                e_rep_den += terminal_density[p];
            }
            let orthogonality_max =
                orthogonality_defect(basis, &states, &times, &pass, &zeta, ensemble, dt)?;
            let report = McSolveReport {
                y0,
                y0_ci_half: y0_ci,
                residual: pass.residual,
                a_residual: pass.a_residual,
                residual_ci_half: residual_ci,
                iterations: iter,
                converged,
                ess,
                mean_terminal_density: mean_r,
                weight_flag,
                e_rep: e_rep_num / e_rep_den,
                r2_per_step: pass.r2_per_step,
                max_condition_estimate: pass.max_cond,
                orthogonality_max,
                clip_active,
                floored_multipliers: pass.floored,
                trace,
            };
            return Ok(McSolution {
                report,
                y: pass.y,
                z: pass.z,
                zeta,
            });
        }
        if pass.residual > prev_residual && iter > 1 {
            theta = (0.5 * theta).max(1.0 / 1024.0);
        }
        prev_residual = pass.residual;
        for (level, gv) in zeta.iter_mut().zip(&pass.gvals) {
            for (zv, gval) in level.iter_mut().zip(gv) {
                *zv += theta * (gval - *zv);
            }
        }
    }
}

/// Max over steps and basis functions of
/// |E_Q[(Y_{k+1} - Y_k - Z dW^Q) phi_b]| on the final iterate.
fn orthogonality_defect(
    basis: &RegressionBasis,
    states: &[Vec<f64>],
    times: &[f64],
    pass: &McPass,
    zeta: &[Vec<f64>],
    ensemble: &PathEnsemble,
    dt: f64,
) -> Result<f64> {
    let d = basis.dim();
    let paths = ensemble.paths();
    let steps = ensemble.grid().steps();
    let terminal_density = &pass.density[steps];
    let mut worst = 0.0f64;
    for k in 0..steps {
        let b = basis.feature_count(times[k]);
        let mut feats = vec![0.0; b];
        let mut acc = vec![0.0; b];
        for p in 0..paths {
            let mut defect = pass.y[k + 1][p] - pass.y[k][p];
            for j in 0..d {
                let dwq = ensemble.increment(p, k, j) - zeta[k][p * d + j] * dt;
                defect -= pass.z[k][p * d + j] * dwq;
            }
            basis.features_into(&states[k][p * d..(p + 1) * d], times[k], &mut feats);
            for (a, f) in acc.iter_mut().zip(&feats) {
                *a += terminal_density[p] * defect * f;
            }
        }
        for a in &acc {
            worst = worst.max((a / paths as f64).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generators::generator_builtin;
    use crate::grid::TimeGrid;
    use crate::paths::simulate_paths;
    use crate::terminal::terminal_builtin;
    use std::collections::BTreeMap;

    fn ensemble(steps: usize, paths: usize, d: usize, seed: u64) -> PathEnsemble {
        let grid = TimeGrid::new(1.0, steps).unwrap();
        simulate_paths(&grid, d, paths, seed).unwrap()
    }

    #[test]
    fn ess_trivials() {
        assert_eq!(effective_sample_size(&[1.0, 1.0, 1.0, 1.0]), 4.0);
        assert_eq!(effective_sample_size(&[0.7]), 1.0);
    }

    #[test]
    fn ess_shrinks_with_drift_magnitude() {
        let e = ensemble(16, 4000, 1, 42);
        let steps = e.grid().steps();
        let mut last = f64::INFINITY;
        for b in [0.0, 0.4, 0.8] {
            let mut r = vec![1.0; e.paths()];
            for p in 0..e.paths() {
                for k in 0..steps {
                    r[p] *= 1.0 + b * e.increment(p, k, 0);
                }
            }
            let ess = effective_sample_size(&r);
            assert!(ess <= last + 1e-9, "ess not monotone at b={b}");
            last = ess;
        }
    }

    #[test]
    fn projection_of_constant_is_exact() {
        let e = ensemble(8, 2000, 1, 9);
        let basis = RegressionBasis::polynomial(1, 3).unwrap();
        let r = vec![1.0; e.paths()];
        let xi = vec![3.0; e.paths()];
        let mut w4 = vec![0.0; e.paths()];
        for p in 0..e.paths() {
            w4[p] = (0..4).map(|k| e.increment(p, k, 0)).sum();
        }
        let y = weighted_projection(&basis, &w4, 0.5, &r, &xi).unwrap();
        for v in &y {
            assert!((v - 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn projection_of_terminal_brownian_tracks_state() {
        // E[W_T | W_k] = W_k; regression error shrinks roughly like 1/sqrt(N).
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let basis = RegressionBasis::polynomial(1, 3).unwrap();
        let mut errs = Vec::new();
        for paths in [1000usize, 16_000] {
            let e = simulate_paths(&grid, 1, paths, 31).unwrap();
            let r = vec![1.0; paths];
            let xi: Vec<f64> = (0..paths)
                .map(|p| (0..8).map(|k| e.increment(p, k, 0)).sum())
                .collect();
            let k = 4;
            let wk: Vec<f64> = (0..paths)
                .map(|p| (0..k).map(|s| e.increment(p, s, 0)).sum())
                .collect();
            let y = weighted_projection(&basis, &wk, 0.5, &r, &xi).unwrap();
            let mse: f64 = y
                .iter()
                .zip(&wk)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / paths as f64;
            errs.push(mse.sqrt());
        }
        assert!(errs[1] < errs[0], "L2 error should shrink with N: {errs:?}");
        assert!(
            errs[1] < 0.05,
            "deg-3 fit of a linear target should be tight"
        );
    }

    #[test]
    fn extract_z_of_brownian_is_one() {
        let e = ensemble(8, 20_000, 1, 17);
        let basis = RegressionBasis::polynomial(1, 3).unwrap();
        let paths = e.paths();
        let dt = e.grid().dt();
        let k = 4usize;
        let wk: Vec<f64> = (0..paths)
            .map(|p| (0..k).map(|s| e.increment(p, s, 0)).sum())
            .collect();
        let w_next: Vec<f64> = (0..paths).map(|p| wk[p] + e.increment(p, k, 0)).collect();
        let ones = vec![1.0; paths];
        let dwq: Vec<f64> = (0..paths).map(|p| e.increment(p, k, 0)).collect();
        let z = extract_z(&basis, &wk, 0.5, dt, &ones, &w_next, &dwq, &ones).unwrap();
        let mean = z.iter().sum::<f64>() / paths as f64;
        assert!((mean - 1.0).abs() < 0.05, "mean Z = {mean}");

        // Constant next value projects to Z ~ 0.
        let constv = vec![2.0; paths];
        let z0 = extract_z(&basis, &wk, 0.5, dt, &ones, &constv, &dwq, &ones).unwrap();
        let mean0 = z0.iter().sum::<f64>() / paths as f64;
        assert!(mean0.abs() < 0.05, "mean Z = {mean0}");
    }

    #[test]
    fn zero_generator_reduces_to_nested_mean() {
        let e = ensemble(8, 4000, 1, 7);
        let g = generator_builtin("zero", &BTreeMap::new(), 1, None).unwrap();
        let xi = terminal_builtin("tanh_WT", &BTreeMap::new()).unwrap();
        let basis = RegressionBasis::default_for(1).unwrap();
        let sol = mc_solve(&g, &xi, &e, &basis, &McOptions::default()).unwrap();
        assert!(sol.report.converged);
        assert_eq!(sol.report.iterations, 1);
        let times = e.grid().times().to_vec();
        let mean: f64 = (0..e.paths())
            .map(|p| {
                let w = e.path_levels(p);
                xi.eval_path(&PathView {
                    times: &times,
                    w: &w,
                    dim: 1,
                })
            })
            .sum::<f64>()
            / e.paths() as f64;
        assert!((sol.report.y0 - mean).abs() < 1e-12);
        assert!(!sol.report.weight_flag);
        assert!((sol.report.ess - e.paths() as f64).abs() < 1e-9);
    }

    #[test]
    fn constant_generator_matches_girsanov_shift() {
        let e = ensemble(16, 20_000, 1, 5);
        let mut params = BTreeMap::new();
        params.insert("b".to_string(), 0.2);
        let g = generator_builtin("constant_b", &params, 1, None).unwrap();
        let xi = terminal_builtin("raw_WT", &BTreeMap::new()).unwrap();
        let basis = RegressionBasis::default_for(1).unwrap();
        let opts = McOptions {
            allow_unbounded_terminal: true,
            ..McOptions::default()
        };
        let sol = mc_solve(&g, &xi, &e, &basis, &opts).unwrap();
        assert!(sol.report.converged);
        let err = (sol.report.y0 - 0.2).abs();
        assert!(
            err <= 3.0 * sol.report.y0_ci_half.max(1e-3),
            "Y0 = {} (CI half {})",
            sol.report.y0,
            sol.report.y0_ci_half
        );
        assert!(sol.report.e_rep.is_finite());
    }

    #[test]
    fn second_coordinate_of_z_is_noise_for_first_coordinate_payoff() {
        let e = ensemble(8, 20_000, 2, 13);
        let g = generator_builtin("zero", &BTreeMap::new(), 2, None).unwrap();
        let xi = terminal_builtin("tanh_WT", &BTreeMap::new()).unwrap();
        let basis = RegressionBasis::default_for(2).unwrap();
        let sol = mc_solve(&g, &xi, &e, &basis, &McOptions::default()).unwrap();
        let k = 4;
        let paths = e.paths();
        let (mut z1, mut z2) = (0.0, 0.0);
        for p in 0..paths {
            z1 += sol.z[k][p * 2].abs();
            z2 += sol.z[k][p * 2 + 1].abs();
        }
        z1 /= paths as f64;
        z2 /= paths as f64;
        assert!(
            z2 < 0.2 * z1,
            "independent coordinate leaked: |Z1|~{z1}, |Z2|~{z2}"
        );
    }

    #[test]
    fn exponential_density_form_agrees_with_product_form() {
        // Both discrete densities converge to the stochastic exponential;
        // on a moderately fine grid the two fixed points coincide well
        // within the statistical error.
        let e = ensemble(32, 20_000, 1, 41);
        let mut params = BTreeMap::new();
        params.insert("b".to_string(), 0.2);
        let g = generator_builtin("constant_b", &params, 1, None).unwrap();
        let xi = terminal_builtin("raw_WT", &BTreeMap::new()).unwrap();
        let base = McOptions {
            allow_unbounded_terminal: true,
            ..McOptions::default()
        };
        let prod = mc_solve(
            &g,
            &xi,
            &e,
            &RegressionBasis::default_for(1).unwrap(),
            &base,
        )
        .unwrap();
        let exp_opts = McOptions {
            density_form: DensityForm::Exponential,
            ..base
        };
        let expo = mc_solve(
            &g,
            &xi,
            &e,
            &RegressionBasis::default_for(1).unwrap(),
            &exp_opts,
        )
        .unwrap();
        assert!(prod.report.converged && expo.report.converged);
        assert_eq!(expo.report.floored_multipliers, 0);
        let gap = (prod.report.y0 - expo.report.y0).abs();
        let budget = prod.report.y0_ci_half + expo.report.y0_ci_half;
        assert!(gap <= budget.max(1e-3), "forms disagree: {gap}");
    }

    #[test]
    fn solution_is_deterministic_across_thread_counts() {
        let e = ensemble(8, 4000, 1, 23);
        let g = generator_builtin("half_z", &BTreeMap::new(), 1, None).unwrap();
        let xi = terminal_builtin("tanh_WT", &BTreeMap::new()).unwrap();
        let basis = RegressionBasis::default_for(1).unwrap();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| mc_solve(&g, &xi, &e, &basis, &McOptions::default()).unwrap())
        };
        let a = run(1);
        let b = run(8);
        assert_eq!(a.report.y0.to_bits(), b.report.y0.to_bits());
        assert_eq!(a.report.residual.to_bits(), b.report.residual.to_bits());
        for (za, zb) in a.z.iter().zip(&b.z) {
            for (x, y) in za.iter().zip(zb) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
