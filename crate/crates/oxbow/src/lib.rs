//! Portfolio primal-heuristic solver for mixed-integer linear programs.
//!
//! The solver runs a small portfolio of heuristics against one problem
//! instance and coordinates them through a shared solution pool:
//!
//! * several tabu-search instances over a constraint-weighted penalty score,
//!   moving one variable at a time to its best value ("best shift"),
//! * a streaming first-order LP solver (PDHG) that publishes relaxation
//!   snapshots at geometric checkpoints,
//! * a fix-and-propagate dive with single-level backtracking that turns LP
//!   snapshots and infeasible candidates into integer-complete points,
//! * a feasibility pump that alternates projection LPs with dive-based
//!   roundings.
//!
//! Feasible incumbents, near-feasible candidates and LP snapshots all meet in
//! [`pool::SolutionPool`]; every improvement tightens a global objective
//! cutoff constraint that the tabu searches score like an ordinary row.

pub mod bestshift;
pub mod feaspump;
pub mod fixtures;
pub mod fpr;
pub mod lp;
pub mod metrics;
pub mod model;
pub mod pool;
pub mod propagate;
pub mod scoring;
pub mod solver;
pub mod tabu;

mod util;

pub use model::{ProblemInstance, RawInstance};
pub use pool::SolutionPool;
pub use solver::{solve, SolveConfig, SolveReport};
pub use util::{Clock, VirtualClock, WallClock};

/// Default relative feasibility tolerance: row i is satisfied when
/// r_i <= tol * max(1, |b_i|).
pub const FEAS_TOL: f64 = 1e-6;

/// Default integrality tolerance: x_j counts as integral when
/// |x_j - round(x_j)| <= tol.
pub const INT_TOL: f64 = 1e-6;
