//! Solvers for the lot-type design problem.
//!
//! A retailer ships every branch an integral number of pre-packed lots, all of
//! one lot-type, and may use at most `k` lot-types per order. Given fractional
//! mean demand per branch and size, the goal is to pick the lot-types and the
//! per-branch (lot-type, multiplicity) pairs so that the total supply falls in
//! a capacity interval and the summed deviation from demand is minimal.
//!
//! - [`model`]: instances, plans, the deviation cost and plan evaluation.
//! - [`lots`]: lot-type universes from per-size value sets.
//! - [`exact`]: exact optimum by subset enumeration plus a knapsack DP.
//! - [`sfa`]: the Score-Fix-Adjust anytime heuristic.
//! - [`demand`]: mean demand estimation from historic sales.
//! - [`bench`]: synthetic instance profiles and optimality-gap reports.
//! - [`io`]: JSON and CSV documents.
//!
//! The guide in `book/` walks through each of these with runnable examples.

pub mod bench;
mod control;
pub mod demand;
pub mod error;
pub mod exact;
pub mod io;
pub mod lots;
pub mod model;
pub mod sfa;

pub use control::CancelToken;
pub use error::{Error, Result};
pub use exact::{brute_force, solve_exact, solve_subset, ExactLimits};
pub use lots::{enumerate_lots, LotGeneratorSpec};
pub use model::{
    deviation_cost, evaluate_plan, lot_pieces, validate_instance, Assignment, DemandTable, Instance,
    LotType, Norm, Plan, PlanEvaluation, SizeSet, Solution, SolverKind, Status,
};
pub use sfa::{solve_sfa, SfaParams};

// Every chapter of the guide is compiled and run as a doctest.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/lot-universe.md")]
    mod lot_universe {}
    #[doc = include_str!("../../../book/src/exact.md")]
    mod exact {}
    #[doc = include_str!("../../../book/src/sfa.md")]
    mod sfa {}
    #[doc = include_str!("../../../book/src/demand.md")]
    mod demand {}
    #[doc = include_str!("../../../book/src/bench.md")]
    mod bench {}
}
