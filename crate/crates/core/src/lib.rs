//! Storage-scheduling game for PPE stock management.
//!
//! Players (healthcare regions) face a common quadratic tariff on the
//! aggregate daily order and use their own storage to move purchases away
//! from the peak. [`best_response`] solves one player's problem exactly,
//! [`nash`] iterates sequential best responses to an equilibrium,
//! [`demand`] reconstructs regional demand from bed-occupancy data and
//! [`scenario`] runs the stockpiling / storage / second-wave grids.

pub mod best_response;
pub mod brute_force;
pub mod demand;
pub mod error;
pub mod model;
pub mod nash;
pub mod region;
pub mod report;
pub mod rng;
pub mod scenario;

pub use best_response::{best_response, optimality_gap, BestResponseProblem};
pub use error::{DemandError, ModelError, ReportError, ScenarioError, SolverError};
pub use model::{
    aggregate_cost, feasible_action_bounds, player_stage_cost, transition, unit_price, utility, validate_schedule,
    ActionBounds, DemandProfile, GameParams, Schedule, StorageSpec, StrategyProfile, Violation, ViolationKind,
};
pub use nash::{solve_nash, solve_nash_in_order, sweep_mse, verify_equilibrium, EquilibriumResult, Game, VerifyOptions, VerificationReport};
pub use region::Region;
