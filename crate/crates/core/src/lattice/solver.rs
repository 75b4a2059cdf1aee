//! The measure-solution fixed point and exact martingale representation.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::generators::{GenCtx, GeneratorG};
use crate::terminal::TerminalCondition;
use crate::tree::{FullTree, LevelProcess, MarkovLattice, TreeTopology};

/// Which residual drives convergence: the full measure-solution identity or
/// the almost-measure variant masked to {Z != 0}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvergenceCriterion {
    Measure,
    AlmostMeasure,
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// Residual tolerance in L2(dP x dt).
    pub tol: f64,
    pub max_iter: usize,
    /// Initial damping theta in (0, 1]; halved whenever the residual rises.
    pub damping: f64,
    /// One-step positivity clip: |zeta| sqrt(dt) <= clip < 1.
    pub clip: f64,
    /// |Z| <= z_eps counts as Z = 0 for the almost-measure mask.
    pub z_eps: f64,
    pub criterion: ConvergenceCriterion,
    /// Test-only: accept terminals without a uniform bound.
    pub allow_unbounded_terminal: bool,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-9,
            max_iter: 200,
            damping: 1.0,
            clip: 0.95,
            z_eps: 1e-12,
            criterion: ConvergenceCriterion::Measure,
            allow_unbounded_terminal: false,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TraceRow {
    pub iter: usize,
    pub residual: f64,
    pub a_residual: f64,
    pub y0: f64,
    pub damping: f64,
}

/// Converged (or stalled) fixed point of zeta = g(., Y, Z).
#[derive(Debug, Clone)]
pub struct MeasureSolutionResult {
    /// Y at steps 0..=K (projection under the candidate measure).
    pub y: LevelProcess,
    /// Z at steps 0..K (representation integrand).
    pub z: LevelProcess,
    /// Drift actually used in the final pass (already clipped).
    pub zeta: LevelProcess,
    /// L2(dP x dt) norm of zeta - g(., Y, Z).
    pub residual: f64,
    /// Same, masked to {|Z| > z_eps}.
    pub a_residual: f64,
    /// Max pointwise |zeta - g| over all cells (diagnostic).
    pub sup_gap: f64,
    pub iterations: usize,
    pub converged: bool,
    /// True when the positivity clip was active in the final pass; a
    /// converged run with an active clip means dt is too coarse for this g.
    pub clip_active: bool,
    /// Cells excluded by the almost-measure mask in the final pass.
    pub masked_cells: usize,
    pub y0: f64,
    pub trace: Vec<TraceRow>,
    /// Set by monotone-family drivers; a single fixed point makes no
    /// minimality claim on its own.
    pub minimality_via_monotone_family: bool,
}

struct PassOutput {
    y: LevelProcess,
    z: LevelProcess,
    gvals: LevelProcess,
    residual: f64,
    a_residual: f64,
    sup_gap: f64,
    masked_cells: usize,
}

const PAR_THRESHOLD: usize = 1 << 13;
const PAR_CHUNK: usize = 1 << 12;

/// Map node index -> value across one level, in parallel for wide levels.
/// Chunk boundaries are fixed, so the output never depends on thread count.
fn map_level<T, F>(top: &T, k: usize, f: F) -> Vec<f64>
where
    T: TreeTopology,
    F: Fn(usize) -> f64 + Sync,
{
    let width = top.width(k);
    if width < PAR_THRESHOLD {
        (0..width).map(f).collect()
    } else {
        let mut out = vec![0.0; width];
        out.par_chunks_mut(PAR_CHUNK)
            .enumerate()
            .for_each(|(c, chunk)| {
                let base = c * PAR_CHUNK;
                for (o, slot) in chunk.iter_mut().enumerate() {
                    *slot = f(base + o);
                }
            });
        out
    }
}

/// One backward sweep: projection Y, representation Z, generating-function
/// values and the residual norms, all under the measure driven by `zeta`.
fn backward_pass<T: TreeTopology>(
    top: &T,
    g: &GeneratorG,
    xi_leaf: &[f64],
    zeta: &LevelProcess,
    z_eps: f64,
) -> PassOutput {
    let steps = top.steps();
    let h = top.grid().sqrt_dt();
    let dt = top.grid().dt();
    let mut y = LevelProcess {
        levels: vec![Vec::new(); steps + 1],
    };
    let mut z = LevelProcess {
        levels: vec![Vec::new(); steps.max(1)],
    };
    let mut gvals = LevelProcess {
        levels: vec![Vec::new(); steps.max(1)],
    };
    y.levels[steps] = xi_leaf.to_vec();

    let mut residual_sq = 0.0;
    let mut a_residual_sq = 0.0;
    let mut sup_gap = 0.0f64;
    let mut masked_cells = 0usize;

    for k in (0..steps).rev() {
        let (y_next, zeta_k) = (&y.levels[k + 1], &zeta.levels[k]);
        let z_level = map_level(top, k, |i| {
            let yu = y_next[top.child_up(k, i)];
            let yd = y_next[top.child_dn(k, i)];
            (yu - yd) / (2.0 * h)
        });
        let y_level = map_level(top, k, |i| {
            let yu = y_next[top.child_up(k, i)];
            let yd = y_next[top.child_dn(k, i)];
            let q_up = 0.5 * (1.0 + zeta_k[i] * h);
            // yd + q (yu - yd) keeps flat subtrees exactly flat.
            yd + q_up * (yu - yd)
        });
        let t = top.grid().time(k);
        let g_level = map_level(top, k, |i| {
            let zi = [z_level[i]];
            let wi = [top.w_at(k, i)];
            let mut out = [0.0];
            g.eval_into(&GenCtx::new(t, y_level[i], &zi, &wi), &mut out);
            out[0]
        });
        for i in 0..top.width(k) {
            let gap = zeta_k[i] - g_level[i];
            let cell = top.mass(k, i) * gap * gap * dt;
            residual_sq += cell;
            sup_gap = sup_gap.max(gap.abs());
            if z_level[i].abs() > z_eps {
                a_residual_sq += cell;
            } else {
                masked_cells += 1;
            }
        }
        y.levels[k] = y_level;
        z.levels[k] = z_level;
        gvals.levels[k] = g_level;
    }
    if steps == 0 {
        y.levels[0] = xi_leaf.to_vec();
    }
    PassOutput {
        y,
        z,
        gvals,
        residual: residual_sq.sqrt(),
        a_residual: a_residual_sq.sqrt(),
        sup_gap,
        masked_cells,
    }
}

/// Damped fixed point zeta <- (1 - theta) zeta + theta g(., Y, Z) on an
/// arbitrary lattice topology, starting from the historical measure
/// (zeta = 0). Non-convergence is a result, not an error.
pub fn solve_with_leaves<T: TreeTopology>(
    top: &T,
    g: &GeneratorG,
    xi_leaf: &[f64],
    opts: &SolveOptions,
) -> Result<MeasureSolutionResult> {
    if g.dim() != 1 {
        return Err(Error::domain(format!(
            "lattice engine is one-dimensional, generator has d = {}",
            g.dim()
        )));
    }
    if xi_leaf.len() != top.width(top.steps()) {
        return Err(Error::domain("terminal values do not match the leaf count"));
    }
    if !(opts.clip > 0.0 && opts.clip < 1.0) {
        return Err(Error::domain("clip must lie in (0, 1)"));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::domain("damping must lie in (0, 1]"));
    }
    let steps = top.steps();
    let h = top.grid().sqrt_dt();
    let clip_bound = opts.clip / h;

    let mut zeta = LevelProcess {
        levels: (0..steps.max(1))
            .map(|k| vec![0.0; top.width(k.min(steps))])
            .collect(),
    };
    let mut theta = opts.damping;
    let mut prev_residual = f64::INFINITY;
    let mut trace = Vec::new();

    let mut iter = 0usize;
    loop {
        iter += 1;
        // Enforce one-step density positivity before every solve.
        let mut clip_active = false;
        for level in zeta.levels.iter_mut() {
            for v in level.iter_mut() {
                if v.abs() > clip_bound {
                    *v = v.signum() * clip_bound;
                    clip_active = true;
                }
            }
        }
        let pass = backward_pass(top, g, xi_leaf, &zeta, opts.z_eps);
        let y0 = pass.y.at(0, 0);
        trace.push(TraceRow {
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
        let converged = criterion_value <= opts.tol;
        if converged || iter >= opts.max_iter {
            return Ok(MeasureSolutionResult {
                y0,
                y: pass.y,
                z: pass.z,
                zeta,
                residual: pass.residual,
                a_residual: pass.a_residual,
                sup_gap: pass.sup_gap,
                iterations: iter,
                converged,
                clip_active,
                masked_cells: pass.masked_cells,
                trace,
                minimality_via_monotone_family: false,
            });
        }
        if pass.residual > prev_residual && iter > 1 {
            theta = (0.5 * theta).max(1.0 / 1024.0);
        }
        prev_residual = pass.residual;
        for k in 0..steps {
            for i in 0..top.width(k) {
                let cur = zeta.levels[k][i];
                zeta.levels[k][i] = cur + theta * (pass.gvals.at(k, i) - cur);
            }
        }
    }
}

fn require_bounded(xi: &TerminalCondition, opts: &SolveOptions) -> Result<()> {
    if xi.is_bounded() || opts.allow_unbounded_terminal {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "terminal '{}' has no uniform bound; set the test-only override to proceed",
            xi.label()
        )))
    }
}

/// Fixed point on the full non-recombining tree (exact for path-dependent
/// terminals).
pub fn solve_measure_solution_full(
    tree: &FullTree,
    g: &GeneratorG,
    xi: &TerminalCondition,
    opts: &SolveOptions,
) -> Result<MeasureSolutionResult> {
    require_bounded(xi, opts)?;
    let leaves = xi.leaf_values_full(tree);
    solve_with_leaves(tree, g, &leaves, opts)
}

/// Fixed point on the Markov lattice (state-functional terminals only;
/// node-for-node equal to the full tree on such problems).
pub fn solve_measure_solution_markov(
    lat: &MarkovLattice,
    g: &GeneratorG,
    xi: &TerminalCondition,
    opts: &SolveOptions,
) -> Result<MeasureSolutionResult> {
    require_bounded(xi, opts)?;
    let leaves = xi.leaf_values_markov(lat)?;
    solve_with_leaves(lat, g, &leaves, opts)
}

/// Exact martingale representation: given a Q-martingale Y, return the
/// integrand Z with Y_{k+1} - Y_k = Z_k (dW - zeta_k dt) on every branch.
/// Fails with the worst violation when Y is not a Q-martingale.
pub fn martingale_representation<T: TreeTopology>(
    top: &T,
    y: &LevelProcess,
    zeta: &LevelProcess,
) -> Result<LevelProcess> {
    let steps = top.steps();
    if y.last_step() != steps {
        return Err(Error::domain("process must span steps 0..=K"));
    }
    let h = top.grid().sqrt_dt();
    let mut max_violation = 0.0f64;
    let mut z = LevelProcess {
        levels: Vec::with_capacity(steps),
    };
    for k in 0..steps {
        let mut level = vec![0.0; top.width(k)];
        for (i, slot) in level.iter_mut().enumerate() {
            let yu = y.at(k + 1, top.child_up(k, i));
            let yd = y.at(k + 1, top.child_dn(k, i));
            let q_up = 0.5 * (1.0 + zeta.at(k, i) * h);
            let expected = yd + q_up * (yu - yd);
            max_violation = max_violation.max((y.at(k, i) - expected).abs());
            *slot = (yu - yd) / (2.0 * h);
        }
        z.levels.push(level);
    }
    if max_violation > 1e-10 {
        return Err(Error::Contract {
            what: "input is not a Q-martingale".into(),
            max_violation,
        });
    }
    Ok(z)
}
