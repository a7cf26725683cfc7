//! Monte-Carlo benchmark of the continuous-discrete UKF variants on the
//! coordinated-turn tracking problem with ill-conditioned measurements.

pub mod config;
pub mod report;
pub mod sweep;

pub use config::{ConfigError, ExperimentConfig, ScheduleSpec};
pub use report::{armse_position, emit_csv, parse_csv, RunReport};
pub use sweep::{sweep, sweep_cells, CellOutcome, RunOutcome, SweepError};
