//! Integration, scenario execution, Monte Carlo sweeps and timing.

mod bench;
pub mod config;
mod integrate;
mod montecarlo;
mod run;
mod sto_config;

pub use bench::{measure_compute, ComputeTiming};
pub use config::{Scenario, ScenarioConfig};
pub use integrate::{integrate_step, rkmk4_step};
pub use montecarlo::{
    monte_carlo, sample_initial, trial_seed, wilson_interval, write_report, AggregateRow, MonteCarloReport, TrialRecord,
};
pub use run::{errors, parse_held, run_scenario, simulate, write_log, LogRow, TrialResult};
pub use sto_config::{write_history, StoConfig};
