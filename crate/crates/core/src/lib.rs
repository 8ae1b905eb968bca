//! Solvers for optimal control under a renewable resource budget.
//!
//! The crate covers three families of problems that share one structure: a
//! primary cost is minimized while a secondary "resource" budget constrains
//! the admissible paths, and the budget is restored to its maximum whenever
//! the state enters a designated safe set.
//!
//! * [`graph`] / [`discrete`] — deterministic shortest paths on directed
//!   graphs with budget levels, with and without resets.
//! * [`ssp`] — stochastic shortest paths (absorbing-target MDPs) under the
//!   same budget mechanics.
//! * [`grid`], [`eikonal`], [`hjb`], [`reset`], [`reach`] — a 2-D
//!   semi-Lagrangian solver for the continuous hybrid problem on a Cartesian
//!   grid, plus a lower-dimensional reachability algorithm.
//! * [`scenarios`] — a catalog of named test scenarios, the closed-form
//!   reference solution for the slab scenario, and error reporting.

pub mod discrete;
pub mod eikonal;
pub mod graph;
pub mod grid;
pub mod heap;
pub mod hjb;
pub mod reach;
pub mod reset;
pub mod scenarios;
pub mod ssp;

pub use graph::{ominus, BudgetLevels, DirectedGraph, ExpandedValueTable};
pub use grid::{BudgetAxis, BudgetField, Grid2D, PointClass, ScalarField, ScenarioConfig};
pub use reset::PathTrace;

/// Extended-real value: finite nonnegative costs plus `f64::INFINITY` as the
/// unreachable sentinel. IEEE infinity already gives saturating addition and
/// a total order on the values we produce (no NaNs enter the solvers).
pub type Cost = f64;

/// The unreachable sentinel.
pub const INF: Cost = f64::INFINITY;
