//! Sequential action control on Lie groups.
//!
//! Each cycle simulates the held schedule over a receding horizon, integrates
//! the costate backward, picks the saturated action and insertion time with
//! the most negative mode insertion gradient, then backtracks on its duration.

mod action;
mod controller;
pub mod lqr;
mod rollout;
mod schedule;

pub use action::{
    choose_insertion_time, line_search_duration, optimal_action, saturate, AlphaMode, InsertionScan, SacAction,
    SacParams,
};
pub use controller::{ControllerMode, PerturbMode, SacController, StepRecord};
pub use lqr::LqrEndgame;
pub use rollout::{backward_costate, mode_insertion_gradient, rollout, Costate};
pub use schedule::{ControlSchedule, Nominal, Segment};
