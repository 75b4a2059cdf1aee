//! Regression-based Monte Carlo engine for d >= 1.
//!
//! Conditional expectations are least-squares projections on a feature
//! basis of the driver state; the Bayes identity turns projections under a
//! candidate measure into ratios of historical regressions weighted by the
//! terminal density. The measure-solution fixed point is the same as on the
//! lattice, with statistical error reported instead of ignored.

mod basis;
mod regression;
mod solver;

pub use basis::{BasisFamily, RegressionBasis};
pub use regression::{fit_targets, FitDiagnostics, StepFit};
pub use solver::{
    effective_sample_size, extract_z, mc_solve, weighted_projection, DensityForm, McOptions,
    McSolution, McSolveReport, McTraceRow,
};
