//! Continuous-discrete unscented Kalman filtering with conventional, pseudo
//! square-root and true square-root covariance propagation.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`]: Cholesky factorization and rank-one modification, Householder and
//!   J-orthogonal QR, triangular solves.
//! * [`ode`]: adaptive Dormand–Prince integrator.
//! * [`ut`]: unscented-transform weights and sigma nodes.
//! * [`model`]: system models, sampling schedules and truth simulation.
//! * [`filters`]: the fourteen filter variants.

pub mod filters;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod ut;

pub use filters::{Covariance, Estimate, FailureRecord, Filter, FilterError, FilterRun, FilterVariant, MeasurementUpdate, TimeUpdate};
pub use linalg::{Mat, Vector};
pub use model::{CoordinatedTurn, SamplingSchedule, SystemModel};
pub use ode::OdeOptions;
pub use ut::{NodeOrdering, UtParams, UtWeights};
