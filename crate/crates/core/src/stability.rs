//! Empirical stability harness: run a sequence of measure-solution problems
//! (g_n, xi_n), verify the stability hypotheses numerically and check the
//! predicted convergences against the limit problem.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::generators::{
    g_to_f, mollify, truncate_nm, GenCtx, GeneratorF, GeneratorG, MollifierSpec, ProbeGrid,
    TruncationSpec,
};
use crate::lattice::{
    density_moment, q_expectation_at, solve_with_leaves, ConvergenceCriterion,
    MeasureSolutionResult, SolveOptions,
};
use crate::tree::{LevelProcess, TreeTopology};

/// A bounded state functional X = h(W_{t_step}) used to witness weak
/// convergence of the member measures.
#[derive(Clone)]
pub struct TestFunctional {
    pub name: String,
    pub step: usize,
    pub eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl TestFunctional {
    pub fn new(
        name: impl Into<String>,
        step: usize,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        TestFunctional {
            name: name.into(),
            step,
            eval: Arc::new(eval),
        }
    }
}

/// Default separating family: the terminal variable itself (tabulated, the
/// runner special-cases the name "xi"), clipped states at three times, and
/// an indicator.
pub fn default_functionals<T: TreeTopology>(top: &T, _xi_leaf: &[f64]) -> Vec<TestFunctional> {
    let steps = top.steps();
    vec![
        TestFunctional::new("xi", steps, |_| f64::NAN),
        TestFunctional::new("w_clip@T", steps, |w: f64| w.clamp(-1.0, 1.0)),
        TestFunctional::new("w_clip@T/2", steps / 2, |w: f64| w.clamp(-1.0, 1.0)),
        TestFunctional::new("w_sq_clip@T/4", steps / 4, |w: f64| (w * w).min(4.0)),
        TestFunctional::new(
            "indicator@T",
            steps,
            |w: f64| if w >= 0.5 { 1.0 } else { 0.0 },
        ),
    ]
}

#[derive(Debug, Clone, Copy)]
pub struct StabilityThresholds {
    pub weak_gap: f64,
    pub z_measure_gap: f64,
}

impl Default for StabilityThresholds {
    fn default() -> Self {
        StabilityThresholds {
            weak_gap: 1e-6,
            z_measure_gap: 1e-3,
        }
    }
}

/// A sequence of member problems plus the limit problem they approximate.
pub struct SequenceScenario {
    pub members: Vec<GeneratorG>,
    /// Additive terminal perturbation a_n per member (xi_n = xi + a_n).
    pub xi_shifts: Vec<f64>,
    pub limit: GeneratorG,
    pub xi_leaf: Vec<f64>,
    /// Conjugate exponents, 1/p + 1/q = 1.
    pub p: f64,
    pub q: f64,
    pub functionals: Vec<TestFunctional>,
    /// Compacts for the uniform-convergence check of the generating
    /// functions; exclude a ball around z = 0 for the off-zero variant.
    pub probe_grid: ProbeGrid,
    /// Exceedance level delta of the Z-convergence-in-measure check.
    pub z_measure_delta: f64,
    pub thresholds: StabilityThresholds,
    pub member_opts: SolveOptions,
    pub limit_opts: SolveOptions,
}

impl SequenceScenario {
    pub fn validate(&self) -> Result<()> {
        if self.members.is_empty() {
            return Err(Error::domain("scenario needs at least one member"));
        }
        if self.xi_shifts.len() != self.members.len() {
            return Err(Error::domain("xi_shifts must match the member count"));
        }
        if !(self.p > 1.0 && self.q > 1.0) || (1.0 / self.p + 1.0 / self.q - 1.0).abs() > 1e-12 {
            return Err(Error::domain("p, q must be conjugate exponents > 1"));
        }
        // The value-process distance is computed exactly through per-step
        // state sums, which is the q = 2 norm; on a finite lattice all the
        // candidate norms are equivalent anyway.
        if (self.q - 2.0).abs() > 1e-12 {
            return Err(Error::domain(
                "the harness computes the value-process distance for q = 2 only",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct StabilityRow {
    pub n: usize,
    pub converged: bool,
    /// E[(dQ_n/dP)^p].
    pub moment_p: f64,
    /// E_{Q_n}[(dP/dQ_n)^p] = E[R^{1-p}].
    pub moment_inv_p: f64,
    /// ||xi_n - xi||_{L^{2q}}.
    pub xi_error: f64,
    /// H^2 distance of Y^n to the limit Y.
    pub y_h2_error: f64,
    /// Max over the probe compacts of |g_n - g|.
    pub g_compact_error: f64,
    pub weak_gaps: Vec<f64>,
    /// (P x dt){|Z^n - Z| > delta} / T.
    pub z_measure_gap: f64,
}

#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub rows: Vec<StabilityRow>,
    pub functional_names: Vec<String>,
    pub limit_converged: bool,
    pub limit_residual: f64,
    pub limit_a_residual: f64,
    pub limit_masked_cells: usize,
    pub limit_moment_p: f64,
    /// Limit moment dominated by the running sup of the member moments.
    pub limit_moment_inherited: bool,
    pub moments_bounded: bool,
    pub errors_decreasing: bool,
    pub final_weak_gap_ok: bool,
    pub final_z_gap_ok: bool,
    pub pass: bool,
}

fn h2_distance<T: TreeTopology>(top: &T, a: &LevelProcess, b: &LevelProcess) -> f64 {
    let dt = top.grid().dt();
    let mut acc = 0.0;
    for k in 0..top.steps() {
        for i in 0..top.width(k) {
            let d = a.at(k, i) - b.at(k, i);
            acc += top.mass(k, i) * d * d * dt;
        }
    }
    acc.sqrt()
}

fn generator_compact_error(a: &GeneratorG, b: &GeneratorG, grid: &ProbeGrid) -> f64 {
    let w = [0.0];
    let mut worst = 0.0f64;
    let mut va = [0.0];
    let mut vb = [0.0];
    for (y, z) in &grid.points {
        let ctx = GenCtx::new(0.0, *y, z, &w);
        a.eval_into(&ctx, &mut va);
        b.eval_into(&ctx, &mut vb);
        worst = worst.max((va[0] - vb[0]).abs());
    }
    worst
}

// |E_{Q_n}[X] - E_Q[X]| for one fixed functional X (the limit terminal for
// the tabulated "xi" entry, a state function otherwise).
fn weak_gap<T: TreeTopology>(
    top: &T,
    functional: &TestFunctional,
    xi_limit: &[f64],
    zeta_member: &LevelProcess,
    zeta_limit: &LevelProcess,
) -> f64 {
    let (values, step) = if functional.name == "xi" {
        (xi_limit.to_vec(), top.steps())
    } else {
        let s = functional.step;
        let v: Vec<f64> = (0..top.width(s))
            .map(|i| (functional.eval)(top.w_at(s, i)))
            .collect();
        (v, s)
    };
    let em = q_expectation_at(top, zeta_member, &values, step);
    let el = q_expectation_at(top, zeta_limit, &values, step);
    (em - el).abs()
}

/// Solve every member and the limit, then tabulate the stability
/// hypotheses and conclusions. A non-converged member yields a partial
/// report with the failing n marked rather than an error.
pub fn run_stability<T: TreeTopology>(
    top: &T,
    scenario: &SequenceScenario,
) -> Result<StabilityReport> {
    scenario.validate()?;
    let steps = top.steps();
    let limit = solve_with_leaves(
        top,
        &scenario.limit,
        &scenario.xi_leaf,
        &scenario.limit_opts,
    )?;
    let limit_moment_p = density_moment(top, &limit.zeta, scenario.p);

    let mut rows = Vec::with_capacity(scenario.members.len());
    let horizon = top.grid().horizon();
    let dt = top.grid().dt();
    for (n, g_n) in scenario.members.iter().enumerate() {
        let shift = scenario.xi_shifts[n];
        let xi_n: Vec<f64> = scenario.xi_leaf.iter().map(|v| v + shift).collect();
        let res: MeasureSolutionResult = solve_with_leaves(top, g_n, &xi_n, &scenario.member_opts)?;
        let xi_error = {
            let mut acc = 0.0;
            for i in 0..top.width(steps) {
                acc += top.mass(steps, i) * shift.abs().powf(2.0 * scenario.q);
            }
            acc.powf(1.0 / (2.0 * scenario.q))
        };
        let g_err = generator_compact_error(g_n, &scenario.limit, &scenario.probe_grid);
        let mut z_exceed = 0.0;
        for k in 0..steps {
            for i in 0..top.width(k) {
                if (res.z.at(k, i) - limit.z.at(k, i)).abs() > scenario.z_measure_delta {
                    z_exceed += top.mass(k, i) * dt;
                }
            }
        }
        let weak_gaps: Vec<f64> = scenario
            .functionals
            .iter()
            .map(|x| weak_gap(top, x, &scenario.xi_leaf, &res.zeta, &limit.zeta))
            .collect();
        rows.push(StabilityRow {
            n,
            converged: res.converged,
            moment_p: density_moment(top, &res.zeta, scenario.p),
            moment_inv_p: density_moment(top, &res.zeta, 1.0 - scenario.p),
            xi_error,
            y_h2_error: h2_distance(top, &res.y, &limit.y),
            g_compact_error: g_err,
            weak_gaps,
            z_measure_gap: z_exceed / horizon,
        });
        if !res.converged {
            // Partial report: stop at the failing member.
            break;
        }
    }

    let count = rows.len();
    let tail_start = count - count.div_ceil(3);
    let mut running_max_p = f64::MIN;
    let mut running_max_inv = f64::MIN;
    for row in rows.iter().take(tail_start.max(1)) {
        running_max_p = running_max_p.max(row.moment_p);
        running_max_inv = running_max_inv.max(row.moment_inv_p);
    }
    let moments_bounded = rows.iter().skip(tail_start).all(|r| {
        r.moment_p <= running_max_p * 1.01 + 1e-12
            && r.moment_inv_p <= running_max_inv * 1.01 + 1e-12
    });
    let nonincreasing = |get: &dyn Fn(&StabilityRow) -> f64| -> bool {
        let ok_pairs = rows
            .windows(2)
            .all(|w| get(&w[1]) <= get(&w[0]) * 1.05 + 1e-12);
        let overall = get(rows.last().unwrap()) <= get(&rows[0]) + 1e-12;
        ok_pairs && overall
    };
    let errors_decreasing = nonincreasing(&|r| r.xi_error) && nonincreasing(&|r| r.y_h2_error);
    let last = rows.last().unwrap();
    let final_weak_gap_ok = last
        .weak_gaps
        .iter()
        .all(|g| *g < scenario.thresholds.weak_gap);
    let final_z_gap_ok = last.z_measure_gap < scenario.thresholds.z_measure_gap;
    let all_members_converged = rows.iter().all(|r| r.converged);
    let member_sup_p = rows.iter().map(|r| r.moment_p).fold(f64::MIN, f64::max);
    let limit_moment_inherited = limit_moment_p <= member_sup_p * 1.05 + 1e-12;

    Ok(StabilityReport {
        functional_names: scenario
            .functionals
            .iter()
            .map(|f| f.name.clone())
            .collect(),
        limit_converged: limit.converged,
        limit_residual: limit.residual,
        limit_a_residual: limit.a_residual,
        limit_masked_cells: limit.masked_cells,
        limit_moment_p,
        limit_moment_inherited,
        moments_bounded,
        errors_decreasing,
        final_weak_gap_ok,
        final_z_gap_ok,
        pass: all_members_converged
            && limit.converged
            && moments_bounded
            && errors_decreasing
            && final_weak_gap_ok
            && final_z_gap_ok,
        rows,
    })
}

/// Family schedules accepted by the harness.
#[derive(Debug, Clone)]
pub enum FamilyKind {
    /// g_n = g for every member.
    Constant { count: usize },
    /// Symmetric truncations g_{nn} of f = z . g.
    Truncation { levels: Vec<u32> },
    /// Gaussian mollifications with a shrinking kernel scale.
    Mollification { epsilons: Vec<f64> },
}

/// Materialize the member generating functions of a schedule.
pub fn build_family(base: &GeneratorG, kind: &FamilyKind) -> Result<Vec<GeneratorG>> {
    match kind {
        FamilyKind::Constant { count } => {
            if *count == 0 {
                return Err(Error::domain("constant family needs count >= 1"));
            }
            Ok(vec![base.clone(); *count])
        }
        FamilyKind::Truncation { levels } => {
            if levels.is_empty() {
                return Err(Error::domain("truncation family needs levels"));
            }
            let f = g_to_f(base);
            levels
                .iter()
                .map(|&n| Ok(truncate_nm(&f, TruncationSpec::new(n, n)?).1))
                .collect()
        }
        FamilyKind::Mollification { epsilons } => {
            if epsilons.is_empty() {
                return Err(Error::domain("mollification family needs epsilons"));
            }
            epsilons
                .iter()
                .map(|&eps| mollify(base, &MollifierSpec::with_epsilon(eps)))
                .collect()
        }
    }
}

/// Result of the double-family pipeline: node-wise orderings of Y^{nm} and
/// the stabilization of the m-limit per n.
#[derive(Debug, Clone)]
pub struct MonotoneFamilyReport {
    pub n_levels: Vec<u32>,
    pub m_levels: Vec<u32>,
    /// Worst violation of Y^{n,m} <= Y^{n,m+1} over all nodes.
    pub max_m_violation: f64,
    /// Worst violation of Y^{n+1,m} <= Y^{n,m} over all nodes.
    pub max_n_violation: f64,
    /// sup |Y^{n, m_last} - Y^{n, m_last - 1}| per n.
    pub m_stabilization: Vec<f64>,
    pub y0: Vec<Vec<f64>>,
    pub pass: bool,
}

/// Solve the truncation double family g_{nm} and check the orderings that
/// make the m-limit a minimal-solution candidate.
pub fn run_monotone_family<T: TreeTopology>(
    top: &T,
    f: &GeneratorF,
    xi_leaf: &[f64],
    n_levels: &[u32],
    m_levels: &[u32],
    opts: &SolveOptions,
    tol: f64,
) -> Result<MonotoneFamilyReport> {
    if n_levels.is_empty() || m_levels.len() < 2 {
        return Err(Error::domain(
            "monotone family needs n levels and >= 2 m levels",
        ));
    }
    let mut solutions: Vec<Vec<MeasureSolutionResult>> = Vec::new();
    for &n in n_levels {
        let mut row = Vec::new();
        for &m in m_levels {
            let (_, g_nm) = truncate_nm(f, TruncationSpec::new(n, m)?);
            let mut res = solve_with_leaves(top, &g_nm, xi_leaf, opts)?;
            if !res.converged {
                return Err(Error::domain(format!(
                    "member (n={n}, m={m}) did not converge (residual {})",
                    res.residual
                )));
            }
            res.minimality_via_monotone_family = true;
            row.push(res);
        }
        solutions.push(row);
    }
    let mut max_m_violation = 0.0f64;
    let mut max_n_violation = 0.0f64;
    for row in &solutions {
        for pair in row.windows(2) {
            for k in 0..pair[0].y.levels.len() {
                for i in 0..pair[0].y.levels[k].len() {
                    max_m_violation = max_m_violation.max(pair[0].y.at(k, i) - pair[1].y.at(k, i));
                }
            }
        }
    }
    for pair in solutions.windows(2) {
        for (lo, hi) in pair[1].iter().zip(&pair[0]) {
            for k in 0..lo.y.levels.len() {
                for i in 0..lo.y.levels[k].len() {
                    max_n_violation = max_n_violation.max(lo.y.at(k, i) - hi.y.at(k, i));
                }
            }
        }
    }
    let m_stabilization: Vec<f64> = solutions
        .iter()
        .map(|row| {
            let last = &row[row.len() - 1].y;
            let prev = &row[row.len() - 2].y;
            last.sup_distance(prev)
        })
        .collect();
    let y0 = solutions
        .iter()
        .map(|row| row.iter().map(|r| r.y0).collect())
        .collect();
    Ok(MonotoneFamilyReport {
        n_levels: n_levels.to_vec(),
        m_levels: m_levels.to_vec(),
        pass: max_m_violation <= tol
            && max_n_violation <= tol
            && m_stabilization.iter().all(|d| *d <= tol.max(1e-9)),
        max_m_violation: max_m_violation.max(0.0),
        max_n_violation: max_n_violation.max(0.0),
        m_stabilization,
        y0,
    })
}

/// Convenience for the off-zero stability variant: convergence of the
/// members is judged on compacts avoiding z = 0 and the limit run is judged
/// by its almost-measure residual.
pub fn off_zero_limit_opts(opts: &SolveOptions) -> SolveOptions {
    SolveOptions {
        criterion: ConvergenceCriterion::AlmostMeasure,
        ..opts.clone()
    }
}
