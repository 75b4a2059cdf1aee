//! Numerical laboratory for measure solutions of backward stochastic
//! differential equations with quadratic-growth generators.
//!
//! A measure solution is a probability change Q = E(zeta . W)_T P whose
//! density drift satisfies zeta = g(., Y, Z), where Y is the Q-conditional
//! expectation of the terminal variable and Z its martingale-representation
//! integrand. Solving the BSDE then reduces to an iteration: pick a drift,
//! project and represent under the implied measure, read the generating
//! function on the result, repeat until the drift is absorbed.
//!
//! Two engines realize the iteration:
//!
//! * [`lattice`]: exact binary-lattice projection/representation, the
//!   brute-force oracle (full non-recombining tree for path-dependent data,
//!   an exactly equivalent state-collapsed form for Markov data);
//! * [`montecarlo`]: least-squares regression of the same objects on
//!   simulated paths, with bootstrap error bars.
//!
//! Around the engines: generator transformations (mollification,
//! inf-convolution, truncation, clamping) in [`generators`], quantitative
//! BMO bounds in [`bmo`], and the sequence-stability harness in
//! [`stability`].

// `!(x > 0.0)` guards are deliberate: unlike `x <= 0.0` they also reject
// NaN. Index-based level loops mirror the tree layout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod bmo;
pub mod error;
pub mod generators;
pub mod grid;
pub mod lattice;
pub mod montecarlo;
pub mod paths;
pub mod rng;
pub mod stability;
pub mod terminal;
pub mod tree;

pub use error::{Error, Result};
pub use grid::TimeGrid;
pub use paths::{simulate_paths, PathEnsemble, PathView};
pub use terminal::{terminal_builtin, TerminalCondition};
pub use tree::{build_lattice, FullTree, LatticeModel, LevelProcess, MarkovLattice, TreeTopology};
