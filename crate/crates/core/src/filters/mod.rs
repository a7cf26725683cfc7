//! Continuous-discrete unscented Kalman filters.
//!
//! Every variant pairs a time update with a measurement update:
//!
//! | time update | measurement updates |
//! |-------------|---------------------|
//! | `Mde` (mean + full covariance ODEs) | `Conventional` |
//! | `MdeSr` (mean + Cholesky-factor ODEs) | `PseudoA/B/C`, `TrueA/B/C` |
//! | `Spde` (sigma-node ODEs) | all seven |
//!
//! Pseudo square-root updates triangularize the positively weighted part of
//! a pre-array with QR and fold the remaining terms in with rank-one Cholesky
//! updates/downdates. True square-root updates triangularize the whole
//! indefinitely weighted pre-array with a J-orthogonal QR, so the only
//! Cholesky factorization over a run is that of the initial covariance.

mod measurement;
mod time_update;

pub use measurement::{
    mu_conventional, mu_pseudo_a, mu_pseudo_b, mu_pseudo_c, mu_true_a, mu_true_b, mu_true_c, InnovationData,
};
pub use time_update::{time_update_mde, time_update_mde_sr, time_update_spde};

use crate::linalg::{cholesky_lower, LinalgError, Mat, Vector};
use crate::model::{SamplingSchedule, SystemModel};
use crate::ode::{OdeError, OdeOptions};
use crate::ut::{sigma_matrix, NodeOrdering, UtError, UtParams, UtWeights};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FilterError {
    #[error("Cholesky factorization failed inside the moment-equation right-hand side: {0}")]
    CholeskyFailureInRhs(LinalgError),
    #[error("covariance is not positive definite: {0}")]
    CovarianceNotPD(LinalgError),
    #[error("residual covariance is singular: {0}")]
    ResidualCovSingular(LinalgError),
    #[error("{0}")]
    DowndateNotPD(LinalgError),
    #[error("{0}")]
    HyperbolicBreakdown(LinalgError),
    #[error("{0}")]
    SingularTriangular(LinalgError),
    #[error("ODE step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("ODE step limit of {limit} exceeded at t = {t}")]
    TooManySteps { t: f64, limit: usize },
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("{0}")]
    Linalg(LinalgError),
    #[error("invalid filter configuration: {0}")]
    Config(String),
}

impl FilterError {
    /// Short machine-readable name of the failure mode.
    pub fn cause(&self) -> &'static str {
        match self {
            FilterError::CholeskyFailureInRhs(_) => "CholeskyFailureInRhs",
            FilterError::CovarianceNotPD(_) => "CovarianceNotPD",
            FilterError::ResidualCovSingular(_) => "ResidualCovSingular",
            FilterError::DowndateNotPD(_) => "DowndateNotPD",
            FilterError::HyperbolicBreakdown(_) => "HyperbolicBreakdown",
            FilterError::SingularTriangular(_) => "SingularTriangular",
            FilterError::StepUnderflow { .. } => "StepUnderflow",
            FilterError::TooManySteps { .. } => "TooManySteps",
            FilterError::NonFinite(_) => "NonFinite",
            FilterError::Linalg(_) => "LinalgFailure",
            FilterError::Config(_) => "Config",
        }
    }
}

impl From<LinalgError> for FilterError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::NotPositiveDefinite { .. } => FilterError::CovarianceNotPD(e),
            LinalgError::DowndateNotPD { .. } => FilterError::DowndateNotPD(e),
            LinalgError::HyperbolicBreakdown { .. } => FilterError::HyperbolicBreakdown(e),
            LinalgError::SingularTriangular { .. } => FilterError::SingularTriangular(e),
            LinalgError::NonFiniteInput { op } => FilterError::NonFinite(op),
            LinalgError::Dimension { .. } => FilterError::Linalg(e),
        }
    }
}

impl From<UtError> for FilterError {
    fn from(e: UtError) -> Self {
        FilterError::Config(e.to_string())
    }
}

impl From<OdeError<FilterError>> for FilterError {
    fn from(e: OdeError<FilterError>) -> Self {
        match e {
            OdeError::RhsFailure { source, .. } => source,
            OdeError::StepUnderflow { t, h } => FilterError::StepUnderflow { t, h },
            OdeError::TooManySteps { t, limit } => FilterError::TooManySteps { t, limit },
            OdeError::NonFinite { .. } => FilterError::NonFinite("time update"),
            OdeError::InvalidInput(msg) => FilterError::Config(msg),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TimeUpdate {
    /// Mean and full covariance.
    Mde,
    /// Mean and lower Cholesky factor.
    MdeSr,
    /// Sigma nodes.
    Spde,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MeasurementUpdate {
    Conventional,
    PseudoA,
    PseudoB,
    PseudoC,
    TrueA,
    TrueB,
    TrueC,
}

impl MeasurementUpdate {
    pub const ALL: [MeasurementUpdate; 7] = [
        MeasurementUpdate::Conventional,
        MeasurementUpdate::PseudoA,
        MeasurementUpdate::PseudoB,
        MeasurementUpdate::PseudoC,
        MeasurementUpdate::TrueA,
        MeasurementUpdate::TrueB,
        MeasurementUpdate::TrueC,
    ];

    pub fn is_true_sr(self) -> bool {
        matches!(self, MeasurementUpdate::TrueA | MeasurementUpdate::TrueB | MeasurementUpdate::TrueC)
    }

    pub fn is_square_root(self) -> bool {
        self != MeasurementUpdate::Conventional
    }

    /// Node ordering the update expects.
    pub fn ordering(self) -> NodeOrdering {
        if self.is_true_sr() {
            NodeOrdering::NegLast
        } else {
            NodeOrdering::Standard
        }
    }

    fn suffix(self) -> &'static str {
        match self {
            MeasurementUpdate::Conventional => "",
            MeasurementUpdate::PseudoA => "a",
            MeasurementUpdate::PseudoB => "b",
            MeasurementUpdate::PseudoC => "c",
            MeasurementUpdate::TrueA => "a-SR",
            MeasurementUpdate::TrueB => "b-SR",
            MeasurementUpdate::TrueC => "c-SR",
        }
    }
}

/// A legal (time update, measurement update) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FilterVariant {
    time_update: TimeUpdate,
    measurement_update: MeasurementUpdate,
}

impl FilterVariant {
    pub fn new(time_update: TimeUpdate, measurement_update: MeasurementUpdate) -> Result<Self, FilterError> {
        let legal = match time_update {
            TimeUpdate::Mde => measurement_update == MeasurementUpdate::Conventional,
            TimeUpdate::MdeSr => measurement_update.is_square_root(),
            TimeUpdate::Spde => true,
        };
        if legal {
            Ok(FilterVariant {
                time_update,
                measurement_update,
            })
        } else {
            Err(FilterError::Config(format!(
                "{measurement_update:?} measurement update cannot follow a {time_update:?} time update"
            )))
        }
    }

    /// All fourteen variants: the MDE family (1, 1a … 1c-SR) then the SPDE family (2, 2a … 2c-SR).
    pub fn all() -> Vec<FilterVariant> {
        let mut out = Vec::with_capacity(14);
        for spde in [false, true] {
            for mu in MeasurementUpdate::ALL {
                let tu = match (spde, mu) {
                    (true, _) => TimeUpdate::Spde,
                    (false, MeasurementUpdate::Conventional) => TimeUpdate::Mde,
                    (false, _) => TimeUpdate::MdeSr,
                };
                out.push(FilterVariant::new(tu, mu).expect("enumerated combinations are legal"));
            }
        }
        out
    }

    pub fn time_update(&self) -> TimeUpdate {
        self.time_update
    }

    pub fn measurement_update(&self) -> MeasurementUpdate {
        self.measurement_update
    }

    pub fn is_spde(&self) -> bool {
        self.time_update == TimeUpdate::Spde
    }

    /// Short name: `1`, `1a`, `1c-SR`, `2b`, …
    pub fn label(&self) -> String {
        let family = if self.is_spde() { '2' } else { '1' };
        format!("{family}{}", self.measurement_update.suffix())
    }

    pub fn from_label(label: &str) -> Option<Self> {
        FilterVariant::all()
            .into_iter()
            .find(|v| v.label().eq_ignore_ascii_case(label.trim()))
    }

    /// Position in [`FilterVariant::all`].
    pub fn index(&self) -> usize {
        FilterVariant::all()
            .iter()
            .position(|v| v == self)
            .expect("every variant is enumerated")
    }
}

impl fmt::Display for FilterVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// Covariance carried by an estimate.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Full(Mat),
    /// Lower-triangular `P^{1/2}` with `P = P^{1/2} P^{T/2}`.
    CholFactor(Mat),
}

impl Covariance {
    pub fn matrix(&self) -> Mat {
        match self {
            Covariance::Full(p) => p.clone(),
            Covariance::CholFactor(s) => s * s.transpose(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub t: f64,
    pub mean: Vector,
    pub cov: Covariance,
}

impl Estimate {
    pub fn covariance(&self) -> Mat {
        self.cov.matrix()
    }
}

/// Predicted moments handed to a measurement update, together with the
/// sigma nodes built from them (or propagated directly, for SPDE variants).
#[derive(Debug, Clone)]
pub struct Predicted {
    pub t: f64,
    pub mean: Vector,
    pub nodes: Mat,
    pub cov: Covariance,
}

impl Predicted {
    /// Builds nodes from `(mean, cov)`. A full covariance is factorized first.
    pub fn from_moments(t: f64, mean: Vector, cov: Covariance, w: &UtWeights) -> Result<Self, FilterError> {
        let nodes = match &cov {
            Covariance::Full(p) => sigma_matrix(&mean, &cholesky_lower(p).map_err(FilterError::CovarianceNotPD)?, w),
            Covariance::CholFactor(s) => sigma_matrix(&mean, s, w),
        };
        Ok(Predicted { t, mean, nodes, cov })
    }

    pub(crate) fn factor(&self) -> Result<Mat, FilterError> {
        match &self.cov {
            Covariance::CholFactor(s) => Ok(s.clone()),
            Covariance::Full(p) => cholesky_lower(p).map_err(FilterError::CovarianceNotPD),
        }
    }
}

/// Where in the recursion a run stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterStage {
    Initialization,
    TimeUpdate,
    MeasurementUpdate,
}

impl fmt::Display for FilterStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterStage::Initialization => "initialization",
            FilterStage::TimeUpdate => "time update",
            FilterStage::MeasurementUpdate => "measurement update",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{stage} failed at step {step} (t = {t}): {error}")]
pub struct FailureRecord {
    /// 1-based measurement index; 0 for initialization.
    pub step: usize,
    pub t: f64,
    pub stage: FilterStage,
    pub error: FilterError,
}

/// Outcome of [`Filter::run`]. `estimates[0]` is the initial estimate at `t = 0`;
/// `estimates[k]` is the filtered estimate at the k-th instant.
#[derive(Debug, Clone)]
pub struct FilterRun {
    pub estimates: Vec<Estimate>,
    pub failure: Option<FailureRecord>,
}

impl FilterRun {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }
}

/// A configured filter variant: weights in the ordering the variant needs and solver options.
#[derive(Debug, Clone)]
pub struct Filter {
    variant: FilterVariant,
    weights: UtWeights,
    opts: OdeOptions,
}

impl Filter {
    pub fn new(variant: FilterVariant, params: UtParams, opts: OdeOptions) -> Result<Self, FilterError> {
        opts.validate().map_err(FilterError::Config)?;
        let weights = UtWeights::new(params, variant.measurement_update().ordering())?;
        Ok(Filter { variant, weights, opts })
    }

    pub fn variant(&self) -> FilterVariant {
        self.variant
    }

    pub fn weights(&self) -> &UtWeights {
        &self.weights
    }

    pub fn options(&self) -> &OdeOptions {
        &self.opts
    }

    /// `(x̄₀, Π₀)`, or `(x̄₀, Π₀^{1/2})` for square-root variants.
    pub fn initialize<M: SystemModel + ?Sized>(&self, model: &M) -> Result<Estimate, FilterError> {
        if model.state_dim() != self.weights.n() {
            return Err(FilterError::Config(format!(
                "model has {} states but the weights were built for {}",
                model.state_dim(),
                self.weights.n()
            )));
        }
        let pi0 = model.initial_cov();
        let cov = if self.variant.measurement_update().is_square_root() {
            Covariance::CholFactor(cholesky_lower(&pi0).map_err(FilterError::CovarianceNotPD)?)
        } else {
            Covariance::Full(pi0)
        };
        Ok(Estimate {
            t: 0.0,
            mean: model.initial_mean(),
            cov,
        })
    }

    /// Propagates `est` to `t_next`.
    pub fn predict<M: SystemModel + ?Sized>(&self, est: &Estimate, t_next: f64, model: &M) -> Result<Predicted, FilterError> {
        let span = (est.t, t_next);
        let w = &self.weights;
        match (self.variant.time_update(), &est.cov) {
            (TimeUpdate::Mde, Covariance::Full(p)) => {
                let (mean, p) = time_update_mde(&est.mean, p, span, model, w, &self.opts)?;
                Predicted::from_moments(t_next, mean, Covariance::Full(p), w)
            }
            (TimeUpdate::MdeSr, Covariance::CholFactor(s)) => {
                let (mean, s) = time_update_mde_sr(&est.mean, s, span, model, w, &self.opts)?;
                Predicted::from_moments(t_next, mean, Covariance::CholFactor(s), w)
            }
            (TimeUpdate::Spde, cov) => {
                let start = Predicted::from_moments(est.t, est.mean.clone(), cov.clone(), w)?;
                let nodes = time_update_spde(&start.nodes, span, model, w, &self.opts)?;
                let mean = nodes.column(w.center_index()).into_owned();
                let s = crate::ut::recover_sqrt_from_sigma(&nodes, &mean, w);
                let cov = if self.variant.measurement_update().is_square_root() {
                    Covariance::CholFactor(s)
                } else {
                    Covariance::Full(&s * s.transpose())
                };
                Ok(Predicted {
                    t: t_next,
                    mean,
                    nodes,
                    cov,
                })
            }
            (tu, _) => Err(FilterError::Config(format!(
                "{tu:?} time update received the wrong covariance representation"
            ))),
        }
    }

    /// Processes measurement `z` (1-based index `k`).
    pub fn update<M: SystemModel + ?Sized>(&self, pred: &Predicted, k: usize, z: &Vector, model: &M) -> Result<Estimate, FilterError> {
        let w = &self.weights;
        let est = match self.variant.measurement_update() {
            MeasurementUpdate::Conventional => mu_conventional(pred, k, z, model, w)?,
            MeasurementUpdate::PseudoA => mu_pseudo_a(pred, k, z, model, w)?,
            MeasurementUpdate::PseudoB => mu_pseudo_b(pred, k, z, model, w)?,
            MeasurementUpdate::PseudoC => mu_pseudo_c(pred, k, z, model, w)?,
            MeasurementUpdate::TrueA => mu_true_a(pred, k, z, model, w)?,
            MeasurementUpdate::TrueB => mu_true_b(pred, k, z, model, w)?,
            MeasurementUpdate::TrueC => mu_true_c(pred, k, z, model, w)?,
        };
        Ok(est)
    }

    /// Alternates prediction to `t_k` and update with `z_k` over the whole schedule.
    /// Stops at the first failure.
    pub fn run<M: SystemModel + ?Sized>(&self, model: &M, schedule: &SamplingSchedule, measurements: &[Vector]) -> FilterRun {
        let mut estimates = Vec::with_capacity(schedule.len() + 1);
        let fail = |step, t, stage, error| Some(FailureRecord { step, t, stage, error });
        if measurements.len() != schedule.len() {
            let error = FilterError::Config(format!(
                "{} measurements for {} sampling instants",
                measurements.len(),
                schedule.len()
            ));
            return FilterRun {
                estimates,
                failure: fail(0, 0.0, FilterStage::Initialization, error),
            };
        }
        let mut est = match self.initialize(model) {
            Ok(e) => e,
            Err(error) => {
                return FilterRun {
                    estimates,
                    failure: fail(0, 0.0, FilterStage::Initialization, error),
                }
            }
        };
        estimates.push(est.clone());
        for (i, (&t, z)) in schedule.instants().iter().zip(measurements).enumerate() {
            let k = i + 1;
            let pred = match self.predict(&est, t, model) {
                Ok(p) => p,
                Err(error) => {
                    return FilterRun {
                        estimates,
                        failure: fail(k, t, FilterStage::TimeUpdate, error),
                    }
                }
            };
            est = match self.update(&pred, k, z, model) {
                Ok(e) => e,
                Err(error) => {
                    return FilterRun {
                        estimates,
                        failure: fail(k, t, FilterStage::MeasurementUpdate, error),
                    }
                }
            };
            estimates.push(est.clone());
        }
        FilterRun {
            estimates,
            failure: None,
        }
    }
}
