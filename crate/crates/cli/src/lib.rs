//! Library surface of the command-line driver, shared with the test suites.

// `!(x > 0.0)` also rejects NaN, unlike `x <= 0.0`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod report;
pub mod runs;
pub mod scenario;

use std::path::Path;

use config::RunConfig;
use runs::Outcome;

/// Run one subcommand against a parsed config. Exit-code contract:
/// 0 = success, 1 = config/domain error (the caller maps errors), 2 = the
/// model said no (non-convergence or a failed check).
pub fn dispatch(command: &str, cfg: &RunConfig) -> measure_bsde_core::Result<Outcome> {
    match command {
        "solve" => runs::run_solve(cfg),
        "oracle" => runs::run_oracle(cfg),
        "stability" => runs::run_stability(cfg),
        "bmo" => runs::run_bmo(cfg),
        "regularize" => runs::run_regularize(cfg),
        other => Err(measure_bsde_core::Error::domain(format!(
            "unknown command '{other}'"
        ))),
    }
}

/// Convenience used by tests: load, run, write artifacts, return outcome.
pub fn run_to_dir(
    command: &str,
    config_text: &str,
    out_dir: &Path,
) -> Result<Outcome, (i32, String)> {
    let cfg = RunConfig::parse_str(config_text).map_err(|e| (1, e))?;
    let outcome = dispatch(command, &cfg).map_err(|e| (error_exit_code(&e), e.to_string()))?;
    report::write_report(out_dir, &outcome.report, &outcome.tables)
        .map_err(|e| (1, format!("cannot write report: {e}")))?;
    Ok(outcome)
}

/// Importance-weight degeneracy is a model outcome, everything else is a
/// caller problem.
pub fn error_exit_code(err: &measure_bsde_core::Error) -> i32 {
    match err {
        measure_bsde_core::Error::ImportanceWeight(_) => 2,
        _ => 1,
    }
}
