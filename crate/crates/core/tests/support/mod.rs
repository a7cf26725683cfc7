#![allow(dead_code)]

use cdukf::filters::{mu_conventional, mu_pseudo_a, mu_pseudo_b, mu_pseudo_c, mu_true_a, mu_true_b, mu_true_c, Predicted};
use cdukf::ut::sigma_matrix;
use cdukf::{
    Covariance, Estimate, Filter, FilterError, FilterVariant, Mat, MeasurementUpdate, OdeOptions, SamplingSchedule, SystemModel,
    UtParams, UtWeights, Vector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Harmonic oscillator `dx = A x dt + dβ`, `A = [[0, 1], [-1, 0]]`, observed through `H = [1, 0.5]`.
pub struct Oscillator {
    pub q: f64,
    pub r: f64,
    g: Mat,
    qm: Mat,
}

impl Oscillator {
    pub fn new(q: f64, r: f64) -> Self {
        Oscillator {
            q,
            r,
            g: Mat::identity(2, 2),
            qm: Mat::identity(2, 2) * q,
        }
    }

    pub fn h() -> Mat {
        Mat::from_row_slice(1, 2, &[1.0, 0.5])
    }

    /// `e^{A t}`.
    pub fn transition(t: f64) -> Mat {
        Mat::from_row_slice(2, 2, &[t.cos(), t.sin(), -t.sin(), t.cos()])
    }
}

impl SystemModel for Oscillator {
    fn state_dim(&self) -> usize {
        2
    }
    fn meas_dim(&self) -> usize {
        1
    }
    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        out[0] = x[1];
        out[1] = -x[0];
    }
    fn diffusion(&self) -> &Mat {
        &self.g
    }
    fn process_noise(&self) -> &Mat {
        &self.qm
    }
    fn measure(&self, _k: usize, x: &[f64], out: &mut [f64]) {
        out[0] = x[0] + 0.5 * x[1];
    }
    fn meas_noise(&self, _k: usize) -> Mat {
        Mat::from_element(1, 1, self.r)
    }
    fn initial_mean(&self) -> Vector {
        Vector::from_vec(vec![1.0, -1.0])
    }
    fn initial_cov(&self) -> Mat {
        Mat::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])
    }
}

/// Continuous-discrete Kalman filter in closed form. Because `e^{At}` is a rotation,
/// the Lyapunov equation integrates to `Φ P Φᵀ + q Δ I`.
pub fn kalman(model: &Oscillator, instants: &[f64], z: &[Vector]) -> Vec<(Vector, Mat)> {
    let h = Oscillator::h();
    let mut x = model.initial_mean();
    let mut p = model.initial_cov();
    let mut t = 0.0;
    let mut out = vec![(x.clone(), p.clone())];
    for (&tk, zk) in instants.iter().zip(z) {
        let phi = Oscillator::transition(tk - t);
        x = &phi * x;
        p = &phi * p * phi.transpose() + Mat::identity(2, 2) * (model.q * (tk - t));
        let s = (&h * &p * h.transpose())[(0, 0)] + model.r;
        let k = &p * h.transpose() / s;
        let innov = zk[0] - (&h * &x)[0];
        x += &k * innov;
        p -= &k * s * k.transpose();
        t = tk;
        out.push((x.clone(), p.clone()));
    }
    out
}

pub fn rel(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

pub fn rel_vec(a: &Vector, b: &Vector) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

fn irregular_instants(count: usize) -> Vec<f64> {
    let mut t = 0.0;
    (0..count)
        .map(|k| {
            t += [0.5, 0.25, 1.1][k % 3];
            t
        })
        .collect()
}

fn scalar_measurements(count: usize, seed: u64) -> Vec<Vector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| Vector::from_element(1, rng.random_range(-3.0..3.0))).collect()
}

/// Largest relative mean and covariance deviation from the closed-form Kalman
/// filter over a 50-step irregular schedule. Any failure is returned as an error.
pub fn linear_oracle_error(variant: FilterVariant, params: UtParams) -> Result<(f64, f64), String> {
    let model = Oscillator::new(0.3, 0.2);
    let instants = irregular_instants(50);
    let z = scalar_measurements(50, 11);
    let reference = kalman(&model, &instants, &z);
    let schedule = SamplingSchedule::new(instants).map_err(|e| e.to_string())?;
    let filter = Filter::new(variant, params, OdeOptions::with_tolerance(1e-11)).map_err(|e| e.to_string())?;
    let run = filter.run(&model, &schedule, &z);
    if let Some(f) = run.failure {
        return Err(f.to_string());
    }
    if run.estimates.len() != reference.len() {
        return Err(format!("{} estimates, expected {}", run.estimates.len(), reference.len()));
    }
    let mut worst = (0.0f64, 0.0f64);
    for (est, (x, p)) in run.estimates.iter().zip(&reference) {
        worst.0 = worst.0.max(rel_vec(&est.mean, x));
        worst.1 = worst.1.max(rel(&est.cov.matrix(), p));
    }
    Ok(worst)
}

/// Seven states, three mildly nonlinear sensors.
pub struct Sensors {
    g: Mat,
    q: Mat,
    r: Mat,
}

impl Sensors {
    pub fn new(r: Mat) -> Self {
        Sensors {
            g: Mat::identity(7, 7),
            q: Mat::identity(7, 7),
            r,
        }
    }
}

impl SystemModel for Sensors {
    fn state_dim(&self) -> usize {
        7
    }
    fn meas_dim(&self) -> usize {
        3
    }
    fn drift(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn diffusion(&self) -> &Mat {
        &self.g
    }
    fn process_noise(&self) -> &Mat {
        &self.q
    }
    fn measure(&self, _k: usize, x: &[f64], out: &mut [f64]) {
        out[0] = x[0] + x[1].sin() + 0.3 * x[6];
        out[1] = x[2] - 0.2 * x[3] * x[4] + x[5];
        out[2] = (x[0] * x[0] + x[3] * x[3]).sqrt();
    }
    fn meas_noise(&self, _k: usize) -> Mat {
        self.r.clone()
    }
    fn initial_mean(&self) -> Vector {
        Vector::zeros(7)
    }
    fn initial_cov(&self) -> Mat {
        Mat::identity(7, 7)
    }
}

pub fn update(mu: MeasurementUpdate, pred: &Predicted, z: &Vector, model: &Sensors, w: &UtWeights) -> Result<Estimate, FilterError> {
    match mu {
        MeasurementUpdate::Conventional => mu_conventional(pred, 1, z, model, w),
        MeasurementUpdate::PseudoA => mu_pseudo_a(pred, 1, z, model, w),
        MeasurementUpdate::PseudoB => mu_pseudo_b(pred, 1, z, model, w),
        MeasurementUpdate::PseudoC => mu_pseudo_c(pred, 1, z, model, w),
        MeasurementUpdate::TrueA => mu_true_a(pred, 1, z, model, w),
        MeasurementUpdate::TrueB => mu_true_b(pred, 1, z, model, w),
        MeasurementUpdate::TrueC => mu_true_c(pred, 1, z, model, w),
    }
}

fn condition(a: &Mat) -> f64 {
    let ev = a.clone().symmetric_eigenvalues();
    ev.max() / ev.min()
}

/// Worst relative deviation from the conventional update over `cases` random
/// priors with `cond(R_e) <= 1e4`, per strategy. Also checks that every
/// factor has a positive diagonal.
pub fn cross_variant_errors(cases: usize, seed: u64) -> Result<Vec<(MeasurementUpdate, f64, f64)>, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut normal = move || -> f64 { rng.sample(StandardNormal) };
    let params = UtParams::classic(7);
    let weights: Vec<(MeasurementUpdate, UtWeights)> = MeasurementUpdate::ALL
        .into_iter()
        .map(|mu| (mu, UtWeights::new(params, mu.ordering()).unwrap()))
        .collect();
    let mut worst: Vec<(MeasurementUpdate, f64, f64)> = weights[1..].iter().map(|(mu, _)| (*mu, 0.0, 0.0)).collect();
    let mut checked = 0;
    while checked < cases {
        let mean = Vector::from_fn(7, |_, _| 3.0 * normal() + 1.0);
        let mut s = Mat::from_fn(7, 7, |_, _| 0.3 * normal()).lower_triangle();
        for i in 0..7 {
            s[(i, i)] = s[(i, i)].abs() + 0.2;
        }
        let rs = Mat::from_fn(3, 3, |_, _| 0.2 * normal()) + Mat::identity(3, 3);
        let model = Sensors::new(&rs * rs.transpose());
        let z = Vector::from_fn(3, |_, _| 2.0 * normal());

        let pred = |w: &UtWeights, full: bool| Predicted {
            t: 1.0,
            mean: mean.clone(),
            nodes: sigma_matrix(&mean, &s, w),
            cov: if full { Covariance::Full(&s * s.transpose()) } else { Covariance::CholFactor(s.clone()) },
        };
        let w0 = &weights[0].1;
        let zn = model.measure_nodes(1, &pred(w0, true).nodes);
        let re = &zn * &w0.w * zn.transpose() + model.meas_noise(1);
        if condition(&re) > 1e4 {
            continue;
        }
        let reference = update(MeasurementUpdate::Conventional, &pred(w0, true), &z, &model, w0).map_err(|e| e.to_string())?;
        let p_ref = reference.cov.matrix();
        for ((mu, w), slot) in weights[1..].iter().zip(worst.iter_mut()) {
            let est = update(*mu, &pred(w, false), &z, &model, w).map_err(|e| format!("{mu:?}: {e}"))?;
            if let Covariance::CholFactor(f) = &est.cov {
                if !f.diagonal().iter().all(|d| *d > 0.0) {
                    return Err(format!("{mu:?}: non-positive factor diagonal"));
                }
            }
            slot.1 = slot.1.max((&est.mean - &reference.mean).norm() / reference.mean.norm());
            slot.2 = slot.2.max((est.cov.matrix() - &p_ref).norm() / p_ref.norm());
        }
        checked += 1;
    }
    Ok(worst)
}
