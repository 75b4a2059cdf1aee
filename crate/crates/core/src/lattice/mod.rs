//! Exact one-dimensional lattice engine.
//!
//! Backward induction gives exact conditional expectations, the binary
//! branching makes martingale representation a determined linear solve, and
//! the discrete Girsanov reweighting q = (1 +- zeta sqrt(dt)) / 2 realizes
//! the change of measure. On top of those three primitives sits the
//! measure-solution fixed point: iterate zeta <- g(., Y, Z) until the drift
//! of the density process agrees with the generating function.

mod comparison;
mod condexp;
mod density;
mod identity;
mod solver;

pub use comparison::{comparison_experiment, ComparisonReport};
pub use condexp::{bayes_consistency_gap, conditional_expectation};
pub use density::{
    density_moment, q_expectation, q_expectation_at, q_forward_masses, DensityProcess,
};
pub use identity::{representation_identity_check, IdentityReport};
pub use solver::{
    martingale_representation, solve_measure_solution_full, solve_measure_solution_markov,
    solve_with_leaves, ConvergenceCriterion, MeasureSolutionResult, SolveOptions, TraceRow,
};
