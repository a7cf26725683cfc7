//! Adaptive Dormand–Prince 5(4) integrator with local-error control.

use thiserror::Error;

/// Solver options: absolute and relative local-error tolerances and a step-size cap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_step: f64,
    pub initial_step: Option<f64>,
    /// Guard against runaway meshes; exceeding it is an error.
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions::with_tolerance(1e-4)
    }
}

impl OdeOptions {
    /// `abs_tol = rel_tol = tol`, `max_step = 0.1`.
    pub fn with_tolerance(tol: f64) -> Self {
        OdeOptions {
            abs_tol: tol,
            rel_tol: tol,
            max_step: 0.1,
            initial_step: None,
            max_steps: 200_000,
        }
    }

    pub fn max_step(mut self, h: f64) -> Self {
        self.max_step = h;
        self
    }

    pub fn validate(&self) -> Result<(), String> {
        let in_range = |v: f64| v > 0.0 && v <= 1.0;
        if !in_range(self.abs_tol) || !in_range(self.rel_tol) {
            return Err(format!(
                "tolerances must lie in (0, 1], got abs {} rel {}",
                self.abs_tol, self.rel_tol
            ));
        }
        if !(self.max_step > 0.0) {
            return Err(format!("max_step must be positive, got {}", self.max_step));
        }
        if let Some(h) = self.initial_step {
            if !(h > 0.0) {
                return Err(format!("initial_step must be positive, got {h}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeOutcome {
    pub y_end: Vec<f64>,
    pub steps_accepted: usize,
    pub steps_rejected: usize,
    pub rhs_evals: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError<E> {
    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("right-hand side failed at t = {t}: {source}")]
    RhsFailure { t: f64, source: E },
    #[error("non-finite value produced at t = {t}")]
    NonFinite { t: f64 },
    #[error("step limit of {limit} exceeded at t = {t}")]
    TooManySteps { t: f64, limit: usize },
    #[error("invalid integration request: {0}")]
    InvalidInput(String),
}

// Dormand–Prince tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Difference between the 5th-order weights and the embedded 4th-order ones.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;

/// Integrates `y' = rhs(t, y)` from `t_span.0` to exactly `t_span.1`.
///
/// `rhs(t, y, dy)` writes the derivative into `dy`.
pub fn integrate<F, E>(rhs: F, y0: &[f64], t_span: (f64, f64), opts: &OdeOptions) -> Result<OdeOutcome, OdeError<E>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), E>,
{
    integrate_observed(rhs, y0, t_span, opts, |_, _, _| {})
}

/// As [`integrate`]; `observer(t, h, y)` is called after every accepted step
/// with the new time, the step just taken, and the new state.
pub fn integrate_observed<F, E, O>(
    mut rhs: F,
    y0: &[f64],
    (t0, t1): (f64, f64),
    opts: &OdeOptions,
    mut observer: O,
) -> Result<OdeOutcome, OdeError<E>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<(), E>,
    O: FnMut(f64, f64, &[f64]),
{
    opts.validate().map_err(OdeError::InvalidInput)?;
    if !(t1 > t0) {
        return Err(OdeError::InvalidInput(format!("empty time span [{t0}, {t1}]")));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(OdeError::InvalidInput("initial state is not finite".into()));
    }

    let d = y0.len();
    let mut y = y0.to_vec();
    let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; d]);
    let mut stage = vec![0.0; d];
    let mut y_new = vec![0.0; d];

    let mut out = OdeOutcome {
        y_end: Vec::new(),
        steps_accepted: 0,
        steps_rejected: 0,
        rhs_evals: 0,
    };

    let mut t = t0;

    let mut eval = |t: f64, y: &[f64], dy: &mut [f64], evals: &mut usize| -> Result<(), OdeError<E>> {
        *evals += 1;
        rhs(t, y, dy).map_err(|source| OdeError::RhsFailure { t, source })?;
        if dy.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(OdeError::NonFinite { t })
        }
    };

    eval(t, &y, &mut k[0], &mut out.rhs_evals)?;
    let mut h = opts
        .initial_step
        .unwrap_or_else(|| initial_step(&y, &k[0], t1 - t0, opts))
        .min(opts.max_step);
    let mut last = false;

    while !last {
        if out.steps_accepted + out.steps_rejected >= opts.max_steps {
            return Err(OdeError::TooManySteps {
                t,
                limit: opts.max_steps,
            });
        }
        h = h.min(opts.max_step);
        let h_min = 1e3 * f64::EPSILON * t.abs().max(t1.abs());
        if h < h_min {
            return Err(OdeError::StepUnderflow { t, h });
        }
        // Land on t1 exactly; also absorb a sliver that would otherwise force a tiny final step.
        let remaining = t1 - t;
        let mut finishing = h >= remaining || remaining - h <= h_min;
        if finishing {
            if remaining <= opts.max_step {
                h = remaining;
            } else {
                h = 0.5 * remaining;
                finishing = false;
            }
        }

        let combine = |stage: &mut [f64], y: &[f64], k: &[Vec<f64>; 7], coeffs: &[(usize, f64)], h: f64| {
            for i in 0..stage.len() {
                let mut acc = 0.0;
                for &(j, a) in coeffs {
                    acc += a * k[j][i];
                }
                stage[i] = y[i] + h * acc;
            }
        };

        combine(&mut stage, &y, &k, &[(0, A21)], h);
        eval(t + C2 * h, &stage, &mut k[1], &mut out.rhs_evals)?;
        combine(&mut stage, &y, &k, &[(0, A31), (1, A32)], h);
        eval(t + C3 * h, &stage, &mut k[2], &mut out.rhs_evals)?;
        combine(&mut stage, &y, &k, &[(0, A41), (1, A42), (2, A43)], h);
        eval(t + C4 * h, &stage, &mut k[3], &mut out.rhs_evals)?;
        combine(&mut stage, &y, &k, &[(0, A51), (1, A52), (2, A53), (3, A54)], h);
        eval(t + C5 * h, &stage, &mut k[4], &mut out.rhs_evals)?;
        combine(&mut stage, &y, &k, &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)], h);
        eval(t + h, &stage, &mut k[5], &mut out.rhs_evals)?;
        combine(&mut y_new, &y, &k, &[(0, A71), (2, A73), (3, A74), (4, A75), (5, A76)], h);
        let t_new = if finishing { t1 } else { t + h };
        eval(t_new, &y_new, &mut k[6], &mut out.rhs_evals)?;

        let mut err = 0.0f64;
        for i in 0..d {
            let e = h
                * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
            let scale = opts.abs_tol + opts.rel_tol * y[i].abs();
            err = err.max(e.abs() / scale);
        }
        if !err.is_finite() {
            return Err(OdeError::NonFinite { t });
        }

        if err <= 1.0 {
            t = t_new;
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6);
            out.steps_accepted += 1;
            observer(t, h, &y);
            last = finishing;
            let factor = if err == 0.0 {
                MAX_FACTOR
            } else {
                (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR)
            };
            h *= factor;
        } else {
            out.steps_rejected += 1;
            h *= (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, 1.0);
        }
    }

    out.y_end = y;
    Ok(out)
}

/// First step from the slope at `t0`: one percent of the span, shortened so the
/// first step moves no component by more than about `rel_tol^{1/5}` of its scale.
fn initial_step(y: &[f64], f: &[f64], span: f64, opts: &OdeOptions) -> f64 {
    let threshold = opts.abs_tol / opts.rel_tol;
    let rh = y
        .iter()
        .zip(f)
        .map(|(y, f)| f.abs() / y.abs().max(threshold))
        .fold(0.0, f64::max)
        / (0.8 * opts.rel_tol.powf(0.2));
    let h = 0.01 * span;
    if h * rh > 1.0 {
        1.0 / rh
    } else {
        h
    }
}
