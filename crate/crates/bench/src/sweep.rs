//! Monte-Carlo sweep over filter variants and measurement-noise levels.

use crate::config::{ConfigError, ExperimentConfig};
use crate::report::{position_sse, RunReport, POSITION_INDICES};
use cdukf::model::{euler_maruyama_truth, sample_initial_state, synthesize_measurements, CoordinatedTurn, ModelError};
use cdukf::{Filter, FilterVariant, OdeOptions, SamplingSchedule, SystemModel, UtParams, Vector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("simulation failed: {0}")]
    Model(#[from] ModelError),
}

/// Cause recorded for a run that finished but lost track of the target.
pub const DIVERGED: &str = "Diverged";

/// One Monte-Carlo realization: the true states at the sampling instants and
/// unit-variance measurement noise. The noise is scaled by the model's
/// `R^{1/2}`, so the same realization serves every δ.
#[derive(Debug, Clone)]
pub struct RunData {
    pub truth: Vec<Vector>,
    pub unit_noise: Vec<Vector>,
}

/// RNG of run `run`: the base seed selects the key, the run index the stream.
pub fn run_rng(base: u64, run: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(run as u64);
    rng
}

pub fn turn_model(config: &ExperimentConfig, delta: f64) -> Result<CoordinatedTurn, ModelError> {
    if config.omega_degrees {
        CoordinatedTurn::new_degree_valued(delta)
    } else {
        CoordinatedTurn::new(delta)
    }
}

/// Truth trajectory and measurement noise for one run.
pub fn simulate_run(config: &ExperimentConfig, schedule: &SamplingSchedule, run: usize) -> Result<RunData, SweepError> {
    let model = turn_model(config, 1.0)?;
    let mut rng = run_rng(config.seed, run);
    let x0 = if config.pin_truth {
        model.initial_mean()
    } else {
        sample_initial_state(&model, &mut rng)?
    };
    let truth = euler_maruyama_truth(&model, &x0, config.sim_step, schedule, &mut rng)?;
    let m = model.meas_dim();
    let unit_noise = (0..schedule.len())
        .map(|_| Vector::from_fn(m, |_, _| StandardNormal.sample(&mut rng)))
        .collect();
    Ok(RunData { truth, unit_noise })
}

/// Measurements of one run at noise level δ.
pub fn measurements(model: &CoordinatedTurn, data: &RunData) -> Result<Vec<Vector>, SweepError> {
    Ok(synthesize_measurements(model, &data.truth, &data.unit_noise)?)
}

/// Result of one filter run.
#[derive(Debug, Clone, PartialEq)]
pub enum RunOutcome {
    /// Position squared error summed over the steps.
    Completed { sse: f64 },
    Failed { cause: String },
}

pub fn filter_options(config: &ExperimentConfig) -> OdeOptions {
    OdeOptions::with_tolerance(config.tolerance).max_step(config.max_step)
}

pub fn run_one(filter: &Filter, model: &CoordinatedTurn, schedule: &SamplingSchedule, data: &RunData, config: &ExperimentConfig) -> Result<RunOutcome, SweepError> {
    let z = measurements(model, data)?;
    let run = filter.run(model, schedule, &z);
    if let Some(f) = run.failure {
        return Ok(RunOutcome::Failed {
            cause: f.error.cause().to_string(),
        });
    }
    let estimates: Vec<Vector> = run.estimates[1..].iter().map(|e| e.mean.clone()).collect();
    let diverged = data.truth.iter().zip(&estimates).any(|(x, xh)| {
        let err2: f64 = POSITION_INDICES.iter().map(|&i| (xh[i] - x[i]).powi(2)).sum();
        !(err2.sqrt() <= config.divergence_threshold)
    });
    if diverged {
        return Ok(RunOutcome::Failed { cause: DIVERGED.into() });
    }
    let sse = position_sse(&data.truth, &estimates).expect("one estimate per truth state");
    Ok(RunOutcome::Completed { sse })
}

/// A report together with the per-run outcomes it aggregates.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub report: RunReport,
    pub runs: Vec<RunOutcome>,
}

impl CellOutcome {
    /// Per-run position RMSE (`None` for failed runs).
    pub fn run_rmse(&self, steps: usize) -> Vec<Option<f64>> {
        self.runs
            .iter()
            .map(|r| match r {
                RunOutcome::Completed { sse } => Some((sse / steps as f64).sqrt()),
                RunOutcome::Failed { .. } => None,
            })
            .collect()
    }
}

fn aggregate(variant: FilterVariant, delta: f64, runs: Vec<RunOutcome>, steps: usize, wall_time_s: f64) -> CellOutcome {
    let mut total = 0.0;
    let mut failed_runs = 0;
    let mut failure_cause = None;
    for r in &runs {
        match r {
            RunOutcome::Completed { sse } => total += sse,
            RunOutcome::Failed { cause } => {
                failed_runs += 1;
                failure_cause.get_or_insert_with(|| cause.clone());
            }
        }
    }
    let armse_p = (failed_runs == 0).then(|| (total / (runs.len() * steps) as f64).sqrt());
    CellOutcome {
        report: RunReport {
            variant,
            delta,
            armse_p,
            failed_runs,
            failure_cause,
            wall_time_s,
        },
        runs,
    }
}

/// Runs every (variant, δ) cell. All variants and all δ share the same truth
/// trajectories and unit measurement noise. Runs within a cell execute in parallel;
/// each run owns its RNG stream, so results do not depend on the thread count.
/// `progress` is called once per finished cell.
pub fn sweep_cells(config: &ExperimentConfig, mut progress: impl FnMut(&RunReport)) -> Result<Vec<CellOutcome>, SweepError> {
    config.validate()?;
    let schedule = config.schedule.build()?;
    let data = (0..config.runs)
        .into_par_iter()
        .map(|r| simulate_run(config, &schedule, r))
        .collect::<Result<Vec<_>, _>>()?;
    let params = UtParams::classic(7);
    let opts = filter_options(config);
    let steps = schedule.len().max(1);
    let mut cells = Vec::with_capacity(config.variants.len() * config.deltas.len());
    for &variant in &config.variants {
        let filter = Filter::new(variant, params, opts).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for &delta in &config.deltas {
            let model = turn_model(config, delta)?;
            let start = Instant::now();
            let runs = data
                .par_iter()
                .map(|d| run_one(&filter, &model, &schedule, d, config))
                .collect::<Result<Vec<_>, _>>()?;
            let wall = if config.record_timing { start.elapsed().as_secs_f64() } else { 0.0 };
            let cell = aggregate(variant, delta, runs, steps, wall);
            progress(&cell.report);
            cells.push(cell);
        }
    }
    Ok(cells)
}

pub fn sweep(config: &ExperimentConfig) -> Result<Vec<RunReport>, SweepError> {
    Ok(sweep_cells(config, |_| {})?.into_iter().map(|c| c.report).collect())
}
