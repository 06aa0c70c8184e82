//! Exact and approximate computation of the finite-horizon average-productivity
//! (AP) index of discrete-state Markovian bandits.
//!
//! The AP index `λ*(d, i)` of a project in state `i` with `d` remaining periods
//! is the maximum ratio of expected total discounted reward to expected total
//! discounted active time achievable by engaging the project at most `d` times.
//! It characterizes optimal play against a standard arm of constant reward `λ`
//! (engage iff `λ*(d, i) ≥ λ`) and yields a priority-index heuristic for the
//! finite-horizon multiarmed bandit problem.
//!
//! Modules:
//! - [`model`]: finite and countable bandit instances, validation, generators,
//!   reachable-set enumeration.
//! - [`calibration`]: approximate index computation over a λ-grid, plus the
//!   exact one-armed DP solver.
//! - [`rag`]: exact index computation via the recursive adaptive-greedy
//!   algorithm (reference one-pass, staged, sparse, and block variants).
//! - [`countable`]: index computation restricted to states reachable from an
//!   initial state, for countable-state projects with bounded fanout.
//! - [`oracle`]: slow trusted index computation for small instances by
//!   stopping-rule enumeration and by root bisection.
//! - [`policy`]: one-armed optimality checks, exact joint DP for toy multiarmed
//!   instances, and heuristic policy evaluation.
//! - [`bench`]: operation-count scaling sweeps, polynomial least-squares fits,
//!   and memory accounting.

pub mod bench;
pub mod calibration;
pub mod countable;
pub mod model;
pub mod oracle;
pub mod policy;
pub mod rag;

pub use model::{BanditModel, BetaBernoulli, BetaState, CountableModel, SparseBanditModel};
pub use rag::IndexTable;
