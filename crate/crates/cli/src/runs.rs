//! Scenario runners shared by the binary and the test suites.

use std::time::Instant;

use serde_json::{json, Value};

use measure_bsde_core::bmo::{
    apriori_z_bound, bmo_norm_lattice, bmo_norm_mc, bmo_norm_state_fn, negative_moment_bound,
    reverse_holder_exponent, BmoMethod, BmoReport,
};
use measure_bsde_core::generators::{GeneratorF, GrowthG};
use measure_bsde_core::lattice::{
    solve_measure_solution_full, solve_measure_solution_markov, MeasureSolutionResult,
};
use measure_bsde_core::montecarlo::{mc_solve, McSolution};
use measure_bsde_core::stability::{
    build_family, default_functionals, off_zero_limit_opts, run_stability as core_run_stability,
    FamilyKind, SequenceScenario, StabilityThresholds,
};
use measure_bsde_core::terminal::TerminalCondition;
use measure_bsde_core::tree::{FullTree, MarkovLattice, TreeTopology};
use measure_bsde_core::{simulate_paths, Error, Result, TimeGrid};

use crate::config::{Engine, LatticeBacking, RunConfig};
use crate::report::{fmt, CsvTable};
use crate::scenario::{
    build_basis, build_mc_options, build_solve_options, require_generator, require_terminal,
    window_bounded_f,
};

/// A finished run: the JSON report, CSV artifacts, a one-line summary for
/// stdout and the process exit code (0 ok, 2 the model said no).
pub struct Outcome {
    pub report: Value,
    pub tables: Vec<CsvTable>,
    pub summary: String,
    pub exit: i32,
}

pub fn effective_threads() -> usize {
    rayon::current_num_threads()
}

fn finish(
    cfg: &RunConfig,
    engine_kind: &str,
    result: Value,
    tables: Vec<CsvTable>,
    summary: String,
    exit: i32,
    started: Instant,
) -> Outcome {
    let report = json!({
        "config": cfg,
        "engine": { "kind": engine_kind },
        "result": result,
        // Anything that may legitimately differ between reruns lives here.
        "runtime": {
            "wall_clock_ms": started.elapsed().as_millis() as u64,
            "threads": effective_threads(),
        },
    });
    Outcome {
        report,
        tables,
        summary,
        exit,
    }
}

/// Lattice backing instance; `Auto` collapses to the Markov form for the
/// state-functional problems the config can express.
pub enum Lat {
    Full(FullTree),
    Markov(MarkovLattice),
}

impl Lat {
    pub fn build(cfg: &RunConfig, steps: usize) -> Result<Lat> {
        match cfg.model.lattice_backing {
            LatticeBacking::Full => Ok(Lat::Full(FullTree::build(cfg.model.horizon, steps)?)),
            LatticeBacking::Markov | LatticeBacking::Auto => {
                Ok(Lat::Markov(MarkovLattice::build(cfg.model.horizon, steps)?))
            }
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Lat::Full(_) => "lattice-full",
            Lat::Markov(_) => "lattice-markov",
        }
    }

    pub fn solve(
        &self,
        g: &measure_bsde_core::generators::GeneratorG,
        xi: &TerminalCondition,
        opts: &measure_bsde_core::lattice::SolveOptions,
    ) -> Result<MeasureSolutionResult> {
        match self {
            Lat::Full(t) => solve_measure_solution_full(t, g, xi, opts),
            Lat::Markov(l) => solve_measure_solution_markov(l, g, xi, opts),
        }
    }

    pub fn leaf_values(&self, xi: &TerminalCondition) -> Result<Vec<f64>> {
        match self {
            Lat::Full(t) => Ok(xi.leaf_values_full(t)),
            Lat::Markov(l) => xi.leaf_values_markov(l),
        }
    }

    /// E[h(leaves)] under the historical measure.
    pub fn plain_expectation(&self, values: &[f64]) -> f64 {
        match self {
            Lat::Full(t) => {
                let steps = t.steps();
                (0..t.width(steps))
                    .map(|i| t.mass(steps, i) * values[i])
                    .sum()
            }
            Lat::Markov(l) => {
                let steps = l.steps();
                (0..l.width(steps))
                    .map(|i| l.mass(steps, i) * values[i])
                    .sum()
            }
        }
    }
}

fn trace_table(rows: &[(usize, f64, f64, f64, f64)]) -> CsvTable {
    let mut t = CsvTable::new(
        "trace.csv",
        &["iter", "residual", "a_residual", "y0", "damping"],
    );
    for (iter, residual, a_residual, y0, damping) in rows {
        t.push(vec![
            iter.to_string(),
            fmt(*residual),
            fmt(*a_residual),
            fmt(*y0),
            fmt(*damping),
        ]);
    }
    t
}

// ---------------------------------------------------------------------------
// solve
// ---------------------------------------------------------------------------

pub fn run_solve(cfg: &RunConfig) -> Result<Outcome> {
    let started = Instant::now();
    let xi = require_terminal(cfg)?;
    let pair = require_generator(cfg, xi.bound())?;
    match cfg.model.engine {
        Engine::Lattice => {
            let lat = Lat::build(cfg, cfg.model.steps)?;
            let opts = build_solve_options(&cfg.solver);
            let res = lat.solve(&pair.g, &xi, &opts)?;
            let trace: Vec<_> = res
                .trace
                .iter()
                .map(|r| (r.iter, r.residual, r.a_residual, r.y0, r.damping))
                .collect();
            let result = json!({
                "y0": res.y0,
                "residual": res.residual,
                "a_residual": res.a_residual,
                "sup_gap": res.sup_gap,
                "iterations": res.iterations,
                "converged": res.converged,
                "clip_active": res.clip_active,
                "masked_cells": res.masked_cells,
            });
            let exit = if res.converged { 0 } else { 2 };
            let summary = format!(
                "solve[{}]: Y0 = {:.9}, residual = {:.3e}, iterations = {}, converged = {}",
                lat.kind(),
                res.y0,
                res.residual,
                res.iterations,
                res.converged
            );
            Ok(finish(
                cfg,
                lat.kind(),
                result,
                vec![trace_table(&trace)],
                summary,
                exit,
                started,
            ))
        }
        Engine::Montecarlo => {
            let sol = mc_solve_from_config(cfg, &xi, &pair.g, cfg.model.steps, cfg.model.seed)?;
            let rep = &sol.report;
            let trace: Vec<_> = rep
                .trace
                .iter()
                .map(|r| (r.iter, r.residual, r.a_residual, r.y0, r.damping))
                .collect();
            let result = json!({
                "y0": rep.y0,
                "y0_ci_half": rep.y0_ci_half,
                "residual": rep.residual,
                "a_residual": rep.a_residual,
                "residual_ci_half": rep.residual_ci_half,
                "iterations": rep.iterations,
                "converged": rep.converged,
                "ess": rep.ess,
                "mean_terminal_density": rep.mean_terminal_density,
                "weight_flag": rep.weight_flag,
                "e_rep": rep.e_rep,
                "r2_per_step": rep.r2_per_step,
                "max_condition_estimate": rep.max_condition_estimate,
                "orthogonality_max": rep.orthogonality_max,
                "clip_active": rep.clip_active,
                "floored_multipliers": rep.floored_multipliers,
            });
            let exit = if rep.converged { 0 } else { 2 };
            let summary = format!(
                "solve[montecarlo]: Y0 = {:.6} (ci {:.2e}), residual = {:.3e}, ESS = {:.0}, converged = {}",
                rep.y0, rep.y0_ci_half, rep.residual, rep.ess, rep.converged
            );
            Ok(finish(
                cfg,
                "montecarlo",
                result,
                vec![trace_table(&trace)],
                summary,
                exit,
                started,
            ))
        }
    }
}

fn mc_solve_from_config(
    cfg: &RunConfig,
    xi: &TerminalCondition,
    g: &measure_bsde_core::generators::GeneratorG,
    steps: usize,
    seed: u64,
) -> Result<McSolution> {
    let grid = TimeGrid::new(cfg.model.horizon, steps)?;
    let ensemble = simulate_paths(&grid, cfg.model.d, cfg.model.paths, seed)?;
    let basis = build_basis(cfg.basis.as_ref(), cfg.model.d)?;
    let opts = build_mc_options(&cfg.solver);
    mc_solve(g, xi, &ensemble, &basis, &opts)
}

// ---------------------------------------------------------------------------
// oracle
// ---------------------------------------------------------------------------

struct OracleLevel {
    steps: usize,
    solver_value: f64,
    oracle_value: f64,
    gap: f64,
    tolerance: f64,
    pass: bool,
}

pub fn run_oracle(cfg: &RunConfig) -> Result<Outcome> {
    let started = Instant::now();
    let ocfg = cfg
        .oracle
        .as_ref()
        .ok_or_else(|| Error::domain("oracle command needs an 'oracle' block"))?;
    if ocfg.steps_list.is_empty() {
        return Err(Error::domain("oracle.steps_list must not be empty"));
    }
    let xi = require_terminal(cfg)?;
    let gcfg = cfg
        .generator
        .as_ref()
        .ok_or_else(|| Error::domain("oracle command needs a 'generator' block"))?;
    // Applicability guards: each oracle knows exactly which generator it is
    // a closed form for.
    let b_shift = match (ocfg.name.as_str(), gcfg.name.as_str(), gcfg.transform.is_empty()) {
        ("conditional_mean", "zero", true) => 0.0,
        ("girsanov_shift", "constant_b", true) => {
            if cfg.terminal.as_ref().map(|t| t.name.as_str()) != Some("raw_WT") {
                return Err(Error::domain(
                    "girsanov_shift oracle applies to the raw_WT terminal only",
                ));
            }
            *gcfg
                .params
                .get("b")
                .ok_or_else(|| Error::domain("constant_b needs parameter b"))?
        }
        ("exp_transform", "half_z", true) => 0.0,
        (oracle, generator, _) => {
            return Err(Error::domain(format!(
                "oracle '{oracle}' is not applicable to generator '{generator}' (or a transform stack is present)"
            )))
        }
    };
    let pair = require_generator(cfg, xi.bound())?;
    let mut levels = Vec::new();
    for &steps in &ocfg.steps_list {
        let (solver_value, oracle_value, ci) = match cfg.model.engine {
            Engine::Lattice => {
                let lat = Lat::build(cfg, steps)?;
                let res = lat.solve(&pair.g, &xi, &build_solve_options(&cfg.solver))?;
                if !res.converged {
                    return Err(Error::domain(format!(
                        "oracle run did not converge at K = {steps}"
                    )));
                }
                let leaves = lat.leaf_values(&xi)?;
                let oracle_value = match ocfg.name.as_str() {
                    "conditional_mean" => lat.plain_expectation(&leaves),
                    "girsanov_shift" => b_shift * cfg.model.horizon,
                    "exp_transform" => {
                        let exp_leaves: Vec<f64> = leaves.iter().map(|v| v.exp()).collect();
                        lat.plain_expectation(&exp_leaves).ln()
                    }
                    _ => unreachable!(),
                };
                (res.y0, oracle_value, 0.0)
            }
            Engine::Montecarlo => {
                let sol = mc_solve_from_config(cfg, &xi, &pair.g, steps, cfg.model.seed)?;
                if !sol.report.converged {
                    return Err(Error::domain(format!(
                        "oracle run did not converge at K = {steps}"
                    )));
                }
                let grid = TimeGrid::new(cfg.model.horizon, steps)?;
                let ensemble = simulate_paths(&grid, cfg.model.d, cfg.model.paths, cfg.model.seed)?;
                let times = grid.times().to_vec();
                let xi_vals: Vec<f64> = (0..ensemble.paths())
                    .map(|p| {
                        let w = ensemble.path_levels(p);
                        xi.eval_path(&measure_bsde_core::PathView {
                            times: &times,
                            w: &w,
                            dim: cfg.model.d,
                        })
                    })
                    .collect();
                let n = xi_vals.len() as f64;
                let oracle_value = match ocfg.name.as_str() {
                    "conditional_mean" => xi_vals.iter().sum::<f64>() / n,
                    "girsanov_shift" => b_shift * cfg.model.horizon,
                    "exp_transform" => (xi_vals.iter().map(|v| v.exp()).sum::<f64>() / n).ln(),
                    _ => unreachable!(),
                };
                (sol.report.y0, oracle_value, sol.report.y0_ci_half)
            }
        };
        let gap = (solver_value - oracle_value).abs();
        let tolerance = ocfg.tolerance + 3.0 * ci;
        levels.push(OracleLevel {
            steps,
            solver_value,
            oracle_value,
            gap,
            tolerance,
            pass: gap <= tolerance,
        });
    }

    // Empirical order in 1/K by least squares on ln(gap) vs ln(K).
    let order = if levels.len() >= 2 && ocfg.name == "exp_transform" {
        let pts: Vec<(f64, f64)> = levels
            .iter()
            .map(|l| ((l.steps as f64).ln(), l.gap.max(1e-16).ln()))
            .collect();
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        Some(-slope)
    } else {
        None
    };
    let order_ok = order.is_none_or(|o| o >= ocfg.min_order);
    let all_pass = levels.iter().all(|l| l.pass) && order_ok;

    let mut table = CsvTable::new(
        "table.csv",
        &[
            "steps",
            "solver_value",
            "oracle_value",
            "gap",
            "tolerance",
            "pass",
        ],
    );
    for l in &levels {
        table.push(vec![
            l.steps.to_string(),
            fmt(l.solver_value),
            fmt(l.oracle_value),
            fmt(l.gap),
            fmt(l.tolerance),
            l.pass.to_string(),
        ]);
    }
    let result = json!({
        "oracle": ocfg.name,
        "levels": levels.iter().map(|l| json!({
            "steps": l.steps,
            "solver_value": l.solver_value,
            "oracle_value": l.oracle_value,
            "gap": l.gap,
            "tolerance": l.tolerance,
            "pass": l.pass,
        })).collect::<Vec<_>>(),
        "empirical_order": order,
        "order_ok": order_ok,
        "pass": all_pass,
    });
    let summary = format!(
        "oracle[{}]: final gap = {:.3e}, order = {}, pass = {all_pass}",
        ocfg.name,
        levels.last().unwrap().gap,
        order.map_or("n/a".into(), |o| format!("{o:.2}")),
    );
    let engine_kind = match cfg.model.engine {
        Engine::Lattice => "lattice",
        Engine::Montecarlo => "montecarlo",
    };
    let exit = if all_pass { 0 } else { 2 };
    Ok(finish(
        cfg,
        engine_kind,
        result,
        vec![table],
        summary,
        exit,
        started,
    ))
}

// ---------------------------------------------------------------------------
// stability
// ---------------------------------------------------------------------------

pub fn run_stability(cfg: &RunConfig) -> Result<Outcome> {
    let started = Instant::now();
    let scfg = cfg
        .stability
        .as_ref()
        .ok_or_else(|| Error::domain("stability command needs a 'stability' block"))?;
    if cfg.model.engine != Engine::Lattice {
        return Err(Error::domain(
            "the stability harness runs on the lattice engine",
        ));
    }
    let xi = require_terminal(cfg)?;
    let pair = require_generator(cfg, xi.bound())?;
    let lat = match Lat::build(cfg, cfg.model.steps)? {
        Lat::Markov(l) => l,
        Lat::Full(_) => {
            return Err(Error::domain(
                "stability scenarios use the markov backing; set lattice_backing = \"markov\" or \"auto\"",
            ))
        }
    };
    let family = match scfg.family.as_str() {
        "constant" => FamilyKind::Constant {
            count: scfg.count.max(1),
        },
        "truncation" => FamilyKind::Truncation {
            levels: scfg.levels.clone(),
        },
        "mollification" => FamilyKind::Mollification {
            epsilons: scfg.epsilons.clone(),
        },
        other => return Err(Error::domain(format!("unknown stability family '{other}'"))),
    };
    let members = build_family(&pair.g, &family)?;
    let xi_leaf = xi.leaf_values_markov(&lat)?;
    let mut xi_shifts = scfg.xi_shifts.clone();
    xi_shifts.resize(members.len(), 0.0);
    let probe_grid = {
        let k_y = xi.bound().unwrap_or(1.0);
        let g = measure_bsde_core::generators::default_probe_grid(1, k_y);
        if scfg.off_zero {
            g.away_from_zero(scfg.z_probe_min)
        } else {
            g
        }
    };
    let member_opts = build_solve_options(&cfg.solver);
    let limit_opts = if scfg.off_zero {
        off_zero_limit_opts(&member_opts)
    } else {
        member_opts.clone()
    };
    let scenario = SequenceScenario {
        members,
        xi_shifts,
        limit: pair.g.clone(),
        functionals: default_functionals(&lat, &xi_leaf),
        xi_leaf,
        p: scfg.p,
        q: scfg.q,
        probe_grid,
        z_measure_delta: scfg.z_measure_delta,
        thresholds: StabilityThresholds {
            weak_gap: scfg.weak_gap_threshold,
            z_measure_gap: scfg.z_gap_threshold,
        },
        member_opts,
        limit_opts,
    };
    let report = core_run_stability(&lat, &scenario)?;

    let mut table = CsvTable::new(
        "table.csv",
        &[
            "n",
            "converged",
            "moment_p",
            "moment_inv_p",
            "xi_error",
            "y_h2_error",
            "g_compact_error",
            "max_weak_gap",
            "z_measure_gap",
        ],
    );
    for row in &report.rows {
        table.push(vec![
            row.n.to_string(),
            row.converged.to_string(),
            fmt(row.moment_p),
            fmt(row.moment_inv_p),
            fmt(row.xi_error),
            fmt(row.y_h2_error),
            fmt(row.g_compact_error),
            fmt(row.weak_gaps.iter().copied().fold(0.0, f64::max)),
            fmt(row.z_measure_gap),
        ]);
    }
    let result = json!({
        "rows": report.rows.iter().map(|r| json!({
            "n": r.n,
            "converged": r.converged,
            "moment_p": r.moment_p,
            "moment_inv_p": r.moment_inv_p,
            "xi_error": r.xi_error,
            "y_h2_error": r.y_h2_error,
            "g_compact_error": r.g_compact_error,
            "weak_gaps": r.weak_gaps,
            "z_measure_gap": r.z_measure_gap,
        })).collect::<Vec<_>>(),
        "functionals": report.functional_names,
        "limit": {
            "converged": report.limit_converged,
            "residual": report.limit_residual,
            "a_residual": report.limit_a_residual,
            "masked_cells": report.limit_masked_cells,
            "moment_p": report.limit_moment_p,
            "moment_inherited": report.limit_moment_inherited,
        },
        "moments_bounded": report.moments_bounded,
        "errors_decreasing": report.errors_decreasing,
        "final_weak_gap_ok": report.final_weak_gap_ok,
        "final_z_gap_ok": report.final_z_gap_ok,
        "pass": report.pass,
    });
    let summary = format!(
        "stability[{}]: members = {}, pass = {}",
        scfg.family,
        report.rows.len(),
        report.pass
    );
    let exit = if report.pass { 0 } else { 2 };
    Ok(finish(
        cfg,
        "lattice-markov",
        result,
        vec![table],
        summary,
        exit,
        started,
    ))
}

// ---------------------------------------------------------------------------
// bmo
// ---------------------------------------------------------------------------

pub fn run_bmo(cfg: &RunConfig) -> Result<Outcome> {
    let started = Instant::now();
    let bcfg = cfg
        .bmo
        .as_ref()
        .ok_or_else(|| Error::domain("bmo command needs a 'bmo' block"))?;

    let mut norm_estimate = None;
    let mut method = "none";
    let mut apriori_bound = None;
    let mut apriori_json = Value::Null;
    let mut apriori_ok = true;

    if bcfg.estimate_from_solve {
        let xi = require_terminal(cfg)?;
        let pair = require_generator(cfg, xi.bound())?;
        match cfg.model.engine {
            Engine::Lattice => {
                let lat = match Lat::build(cfg, cfg.model.steps)? {
                    Lat::Markov(l) => l,
                    Lat::Full(_) => {
                        return Err(Error::domain("bmo estimation uses the markov backing"))
                    }
                };
                let res = solve_measure_solution_markov(
                    &lat,
                    &pair.g,
                    &xi,
                    &build_solve_options(&cfg.solver),
                )?;
                if !res.converged {
                    return Err(Error::domain("bmo estimation requires a converged solve"));
                }
                norm_estimate = Some(bmo_norm_lattice(&lat, &res.z));
                method = "lattice_exact";

                // A priori inputs: explicit block, or derived from a linear
                // growth tag (the hypothesis phi-coefficient is c * phi).
                let inputs = if let Some(a) = &bcfg.apriori {
                    Some((a.c, a.psi, a.phi, a.y_sup))
                } else if let GrowthG::Linear { c, phi } = pair.g.growth() {
                    let phi_norm = phi
                        .as_ref()
                        .map(|p| bmo_norm_state_fn(&lat, |t, w| p.value(t, &[w])))
                        .unwrap_or(0.0);
                    xi.bound().map(|y_sup| (*c, 0.0, c * phi_norm, y_sup))
                } else {
                    None
                };
                if let Some((c, psi, phi, y_sup)) = inputs {
                    let b = apriori_z_bound(c, psi, phi, y_sup)?;
                    apriori_ok = norm_estimate.unwrap() <= b.k_bound;
                    apriori_bound = Some(b);
                    apriori_json = json!({
                        "c": c, "psi": psi, "phi": phi, "y_sup": y_sup,
                        "beta": b.beta, "k_bound": b.k_bound,
                        "holds": apriori_ok,
                    });
                }
            }
            Engine::Montecarlo => {
                let sol = mc_solve_from_config(cfg, &xi, &pair.g, cfg.model.steps, cfg.model.seed)?;
                if !sol.report.converged {
                    return Err(Error::domain("bmo estimation requires a converged solve"));
                }
                let grid = TimeGrid::new(cfg.model.horizon, cfg.model.steps)?;
                let ensemble = simulate_paths(&grid, cfg.model.d, cfg.model.paths, cfg.model.seed)?;
                let d = cfg.model.d;
                let paths = ensemble.paths();
                let mut states: Vec<Vec<f64>> = vec![vec![0.0; paths * d]];
                for k in 0..cfg.model.steps {
                    let prev = &states[k];
                    let mut next = vec![0.0; paths * d];
                    for p in 0..paths {
                        for j in 0..d {
                            next[p * d + j] = prev[p * d + j] + ensemble.increment(p, k, j);
                        }
                    }
                    states.push(next);
                }
                let basis = build_basis(cfg.basis.as_ref(), d)?;
                let times = grid.times().to_vec();
                norm_estimate = Some(bmo_norm_mc(
                    &basis,
                    &states,
                    &times,
                    &sol.z,
                    grid.dt(),
                    bcfg.quantile,
                )?);
                method = "mc_quantile";
            }
        }
    }

    let k_for_formulas = bcfg
        .k_norm
        .or(norm_estimate)
        .ok_or_else(|| Error::domain("bmo needs k_norm or estimate_from_solve"))?;
    let neg = negative_moment_bound(k_for_formulas)?;
    let rh = reverse_holder_exponent(k_for_formulas)?;

    // When a solve produced the estimate the full report type applies.
    let core_report = norm_estimate.map(|estimate| BmoReport {
        norm_estimate: estimate,
        method: match method {
            "mc_quantile" => BmoMethod::McQuantile(bcfg.quantile),
            _ => BmoMethod::LatticeExact,
        },
        negative_moment: neg,
        reverse_holder: rh,
        apriori: apriori_bound,
    });
    let result = json!({
        "k": k_for_formulas,
        "norm_estimate": core_report.as_ref().map(|r| r.norm_estimate),
        "method": method,
        "quantile": if method == "mc_quantile" { Some(bcfg.quantile) } else { None },
        "negative_moment": { "r": neg.r, "c": neg.c },
        "reverse_holder": { "p": rh.p, "p_minus_one": rh.p_minus_one, "bound": rh.bound },
        "apriori": apriori_json,
        "pass": apriori_ok,
    });
    let summary = format!(
        "bmo: K = {k_for_formulas:.6}, r = {:.5}, C = {:.5}, p = {:.6}, bound = {:.4}",
        neg.r, neg.c, rh.p, rh.bound
    );
    let exit = if apriori_ok { 0 } else { 2 };
    Ok(finish(cfg, "bmo", result, vec![], summary, exit, started))
}

// ---------------------------------------------------------------------------
// regularize
// ---------------------------------------------------------------------------

pub fn run_regularize(cfg: &RunConfig) -> Result<Outcome> {
    let started = Instant::now();
    let rcfg = cfg
        .regularize
        .as_ref()
        .ok_or_else(|| Error::domain("regularize command needs a 'regularize' block"))?;
    let terminal_bound = cfg
        .terminal
        .as_ref()
        .map(crate::scenario::build_terminal)
        .transpose()?
        .and_then(|t| t.bound());
    let pair = require_generator(cfg, terminal_bound)?;
    let f = pair.scalar();

    let (z_min, z_max, z_steps) = rcfg.z_window.expect("window resolved at load");
    if z_steps < 2 || !(z_max > z_min) {
        return Err(Error::domain(
            "regularize.z_window must be (min, max, steps>=2)",
        ));
    }
    let zs: Vec<f64> = (0..z_steps)
        .map(|i| z_min + (z_max - z_min) * i as f64 / (z_steps - 1) as f64)
        .collect();
    let ys = rcfg.y_values.clone();

    // Inf-convolution requires a bounded tag; bound over the window.
    let f_window = window_bounded_f(&f, &ys, &zs);
    let infconv: Vec<(u32, GeneratorF)> = rcfg
        .infconv_n
        .iter()
        .map(|&n| {
            measure_bsde_core::generators::inf_convolve(
                &f_window,
                &measure_bsde_core::generators::InfConvolutionSpec::new(n, rcfg.k_y)?,
            )
            .map(|g| (n, g))
        })
        .collect::<Result<_>>()?;
    let truncs: Vec<((u32, u32), GeneratorF)> = rcfg
        .truncate
        .iter()
        .map(|&(n, m)| {
            let spec = measure_bsde_core::generators::TruncationSpec::new(n, m)?;
            Ok((
                (n, m),
                measure_bsde_core::generators::truncate_nm(&f, spec).0,
            ))
        })
        .collect::<Result<_>>()?;
    let smooths: Vec<(f64, GeneratorF)> = rcfg
        .smooth_eps
        .iter()
        .map(|&eps| {
            measure_bsde_core::generators::mollify_scalar(
                &f,
                &measure_bsde_core::generators::MollifierSpec::with_epsilon(eps),
            )
            .map(|g| (eps, g))
        })
        .collect::<Result<_>>()?;

    let mut header: Vec<String> = vec!["y".into(), "z".into(), "f".into()];
    header.extend(infconv.iter().map(|(n, _)| format!("f_inf_{n}")));
    header.extend(truncs.iter().map(|((n, m), _)| format!("f_trunc_{n}_{m}")));
    header.extend(smooths.iter().map(|(e, _)| format!("f_smooth_{e}")));
    let mut table = CsvTable {
        name: "table.csv",
        header,
        rows: Vec::new(),
    };
    let mut monotets_ok = true;
    let mut max_violation = 0.0f64;
    for &y in &ys {
        for &z in &zs {
            let base = f.eval1(0.0, y, z, 0.0);
            let mut row = vec![fmt(y), fmt(z), fmt(base)];
            let mut prev: Option<f64> = None;
            for (_, g) in &infconv {
                let v = g.eval1(0.0, y, z, 0.0);
                if let Some(p) = prev {
                    if p > v {
                        monotets_ok = false;
                        max_violation = max_violation.max(p - v);
                    }
                }
                if v > f_window.eval1(0.0, y, z, 0.0) {
                    monotets_ok = false;
                    max_violation = max_violation.max(v - f_window.eval1(0.0, y, z, 0.0));
                }
                prev = Some(v);
                row.push(fmt(v));
            }
            for (_, g) in &truncs {
                row.push(fmt(g.eval1(0.0, y, z, 0.0)));
            }
            for (_, g) in &smooths {
                row.push(fmt(g.eval1(0.0, y, z, 0.0)));
            }
            table.push(row);
        }
    }
    let result = json!({
        "rows": table.rows.len(),
        "infconv_monotone": monotets_ok,
        "max_violation": max_violation,
        "pass": monotets_ok,
    });
    let summary = format!(
        "regularize: {} rows, inf-convolution chain monotone = {monotets_ok}",
        table.rows.len()
    );
    let exit = if monotets_ok { 0 } else { 2 };
    Ok(finish(
        cfg,
        "regularize",
        result,
        vec![table],
        summary,
        exit,
        started,
    ))
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

pub fn run_bench() -> Result<Outcome> {
    use measure_bsde_core::generators::generator_builtin;
    use measure_bsde_core::terminal::terminal_builtin;
    use std::collections::BTreeMap;

    let started = Instant::now();
    let mut table = CsvTable::new("table.csv", &["scenario", "param", "wall_ms"]);
    let mut timings = Vec::new();
    let timed = |label: &str, param: String, f: &mut dyn FnMut()| -> (String, String, f64) {
        let t0 = Instant::now();
        f();
        (label.to_string(), param, t0.elapsed().as_secs_f64() * 1e3)
    };

    let g = generator_builtin("half_z", &BTreeMap::new(), 1, None).unwrap();
    let xi = terminal_builtin("tanh_WT", &BTreeMap::new()).unwrap();
    let opts = measure_bsde_core::lattice::SolveOptions::default();
    for steps in [64usize, 128, 256] {
        let lat = MarkovLattice::build(1.0, steps)?;
        let mut run = || {
            let _ = solve_measure_solution_markov(&lat, &g, &xi, &opts).unwrap();
        };
        timings.push(timed(
            "lattice_markov_solve",
            format!("K={steps}"),
            &mut run,
        ));
    }
    {
        let tree = FullTree::build(1.0, 14)?;
        let mut run = || {
            let _ = solve_measure_solution_full(&tree, &g, &xi, &opts).unwrap();
        };
        timings.push(timed("lattice_full_solve", "K=14".into(), &mut run));
    }
    {
        let grid = TimeGrid::new(1.0, 32)?;
        let ensemble = simulate_paths(&grid, 1, 20_000, 7)?;
        let basis = measure_bsde_core::montecarlo::RegressionBasis::default_for(1)?;
        let mopts = measure_bsde_core::montecarlo::McOptions::default();
        let mut run = || {
            let _ = mc_solve(&g, &xi, &ensemble, &basis, &mopts).unwrap();
        };
        timings.push(timed("mc_solve", "N=20000;K=32".into(), &mut run));
    }
    for (label, param, ms) in &timings {
        table.push(vec![label.clone(), param.clone(), fmt(*ms)]);
    }
    let result = json!({
        "rows": timings.iter().map(|(l, p, ms)| json!({
            "scenario": l, "param": p, "wall_ms": ms,
        })).collect::<Vec<_>>(),
    });
    let summary = format!("bench: {} scenarios timed", timings.len());
    let report = json!({
        "config": Value::Null,
        "engine": { "kind": "bench" },
        "result": result,
        "runtime": {
            "wall_clock_ms": started.elapsed().as_millis() as u64,
            "threads": effective_threads(),
        },
    });
    Ok(Outcome {
        report,
        tables: vec![table],
        summary,
        exit: 0,
    })
}
