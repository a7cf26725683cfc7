//! Continuous-discrete system models and truth simulation.

use crate::linalg::{cholesky_lower, LinalgError, Mat, Vector};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

/// `dx = f(t, x) dt + G dβ`, `z_k = h(k, x(t_k)) + v_k` with `dβ ~ N(0, Q dt)`, `v_k ~ N(0, R_k)`.
pub trait SystemModel: Sync {
    fn state_dim(&self) -> usize;
    fn meas_dim(&self) -> usize;

    /// Writes `f(t, x)` into `out`.
    fn drift(&self, t: f64, x: &[f64], out: &mut [f64]);

    /// `G`, `n × q`.
    fn diffusion(&self) -> &Mat;

    /// `Q`, `q × q`.
    fn process_noise(&self) -> &Mat;

    /// Writes `h(k, x)` into `out`.
    fn measure(&self, k: usize, x: &[f64], out: &mut [f64]);

    fn meas_noise(&self, k: usize) -> Mat;

    /// Lower factor of `R_k`.
    fn meas_noise_sqrt(&self, k: usize) -> Result<Mat, LinalgError> {
        cholesky_lower(&self.meas_noise(k))
    }

    fn initial_mean(&self) -> Vector;
    fn initial_cov(&self) -> Mat;

    /// `G Q Gᵀ`
    fn diffusion_cov(&self) -> Mat {
        let g = self.diffusion();
        g * self.process_noise() * g.transpose()
    }

    /// Applies the drift to every column of `nodes`.
    fn drift_nodes(&self, t: f64, nodes: &Mat) -> Mat {
        let mut out = Mat::zeros(nodes.nrows(), nodes.ncols());
        for c in 0..nodes.ncols() {
            let x = nodes.column(c);
            let mut col = out.column_mut(c);
            self.drift(t, x.as_slice(), col.as_mut_slice());
        }
        out
    }

    /// Applies the measurement function to every column of `nodes`.
    fn measure_nodes(&self, k: usize, nodes: &Mat) -> Mat {
        let mut out = Mat::zeros(self.meas_dim(), nodes.ncols());
        for c in 0..nodes.ncols() {
            let x = nodes.column(c);
            let mut col = out.column_mut(c);
            self.measure(k, x.as_slice(), col.as_mut_slice());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid sampling schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
    #[error("simulation produced a non-finite state at t = {t}")]
    NonFinite { t: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Strictly increasing measurement instants `t_1 < … < t_K`, all after `t_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingSchedule {
    instants: Vec<f64>,
}

impl SamplingSchedule {
    pub fn new(instants: Vec<f64>) -> Result<Self, ModelError> {
        if let Some(&first) = instants.first() {
            if !(first > 0.0) {
                return Err(ModelError::InvalidSchedule(format!("first instant {first} must be after t0 = 0")));
            }
        }
        if instants.iter().any(|t| !t.is_finite()) {
            return Err(ModelError::InvalidSchedule("instants must be finite".into()));
        }
        if let Some(w) = instants.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(ModelError::InvalidSchedule(format!(
                "instants must be strictly increasing ({} then {})",
                w[0], w[1]
            )));
        }
        Ok(SamplingSchedule { instants })
    }

    /// `t_k = k·dt`, `k = 1..=count`.
    pub fn regular(count: usize, dt: f64) -> Result<Self, ModelError> {
        if !(dt > 0.0) {
            return Err(ModelError::InvalidSchedule(format!("sampling interval {dt} must be positive")));
        }
        Self::new((1..=count).map(|k| k as f64 * dt).collect())
    }

    pub fn instants(&self) -> &[f64] {
        &self.instants
    }

    pub fn len(&self) -> usize {
        self.instants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instants.is_empty()
    }

    /// Keeps instants whose 1-based index satisfies `keep`.
    pub fn thinned(&self, keep: impl Fn(usize) -> bool) -> Self {
        SamplingSchedule {
            instants: self
                .instants
                .iter()
                .enumerate()
                .filter(|(i, _)| keep(i + 1))
                .map(|(_, &t)| t)
                .collect(),
        }
    }
}

pub fn deg_to_rad(v: f64) -> f64 {
    v.to_radians()
}

/// Aircraft in a coordinated horizontal turn, observed through the
/// ill-conditioned pair of summing sensors `H = [1ᵀ; 1ᵀ + δ e₇ᵀ]`, `R = δ² I₂`.
///
/// State layout `(ε, ε̇, η, η̇, ζ, ζ̇, ω)`.
#[derive(Debug, Clone)]
pub struct CoordinatedTurn {
    pub omega0: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub delta: f64,
    g: Mat,
    q: Mat,
    h: Mat,
}

impl CoordinatedTurn {
    pub const N: usize = 7;
    pub const M: usize = 2;

    /// Nominal parameters: `ω₀ = 3°/s`, `σ₁ = √0.2 m/s`, `σ₂ = 0.007°/s`, converted to rad/s.
    pub fn new(delta: f64) -> Result<Self, ModelError> {
        Self::with_parameters(deg_to_rad(3.0), 0.2f64.sqrt(), deg_to_rad(0.007), delta)
    }

    /// Same nominal values but with the angular rates used numerically as given in degrees.
    pub fn new_degree_valued(delta: f64) -> Result<Self, ModelError> {
        Self::with_parameters(3.0, 0.2f64.sqrt(), 0.007, delta)
    }

    pub fn with_parameters(omega0: f64, sigma1: f64, sigma2: f64, delta: f64) -> Result<Self, ModelError> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(ModelError::InvalidParameter(format!("delta must be positive, got {delta}")));
        }
        if !omega0.is_finite() || !(sigma1 >= 0.0) || !(sigma2 >= 0.0) {
            return Err(ModelError::InvalidParameter("turn rate and diffusion levels must be finite, non-negative".into()));
        }
        let g = Mat::from_diagonal(&Vector::from_vec(vec![0.0, sigma1, 0.0, sigma1, 0.0, sigma1, sigma2]));
        let mut h = Mat::from_element(2, 7, 1.0);
        h[(1, 6)] += delta;
        Ok(CoordinatedTurn {
            omega0,
            sigma1,
            sigma2,
            delta,
            g,
            q: Mat::identity(7, 7),
            h,
        })
    }

    pub fn measurement_matrix(&self) -> &Mat {
        &self.h
    }
}

impl SystemModel for CoordinatedTurn {
    fn state_dim(&self) -> usize {
        Self::N
    }

    fn meas_dim(&self) -> usize {
        Self::M
    }

    fn drift(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        let omega = x[6];
        out[0] = x[1];
        out[1] = -omega * x[3];
        out[2] = x[3];
        out[3] = omega * x[1];
        out[4] = x[5];
        out[5] = 0.0;
        out[6] = 0.0;
    }

    fn diffusion(&self) -> &Mat {
        &self.g
    }

    fn process_noise(&self) -> &Mat {
        &self.q
    }

    fn measure(&self, _k: usize, x: &[f64], out: &mut [f64]) {
        // Row-by-row products with the stored (1 + δ) entry; δ below machine
        // precision relative to 1 is then lost exactly as in H·x.
        for (r, o) in out.iter_mut().enumerate() {
            *o = (0..7).fold(0.0, |acc, c| acc + self.h[(r, c)] * x[c]);
        }
    }

    fn meas_noise(&self, _k: usize) -> Mat {
        Mat::identity(2, 2) * (self.delta * self.delta)
    }

    fn meas_noise_sqrt(&self, _k: usize) -> Result<Mat, LinalgError> {
        Ok(Mat::identity(2, 2) * self.delta)
    }

    fn initial_mean(&self) -> Vector {
        Vector::from_vec(vec![1000.0, 0.0, 2650.0, 150.0, 200.0, 0.0, self.omega0])
    }

    fn initial_cov(&self) -> Mat {
        Mat::identity(7, 7) * 0.01
    }
}

/// Draws `x(0) ~ N(x̄₀, Π₀)`.
pub fn sample_initial_state<M: SystemModel + ?Sized, R: Rng + ?Sized>(model: &M, rng: &mut R) -> Result<Vector, ModelError> {
    let l = cholesky_lower(&model.initial_cov())?;
    let e = Vector::from_fn(model.state_dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
    Ok(model.initial_mean() + l * e)
}

/// Euler–Maruyama simulation `x ← x + h f(t, x) + G √h w`, `w ~ N(0, Q)`, from
/// `x0` at `t = 0`. Returns the state at every schedule instant. Each gap is
/// split into `round(gap / h_sim)` equal steps.
pub fn euler_maruyama_truth<M: SystemModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    x0: &Vector,
    h_sim: f64,
    schedule: &SamplingSchedule,
    rng: &mut R,
) -> Result<Vec<Vector>, ModelError> {
    if !(h_sim > 0.0) {
        return Err(ModelError::InvalidParameter(format!("simulation step {h_sim} must be positive")));
    }
    let n = model.state_dim();
    let q = model.process_noise().ncols();
    let noise_gain = model.diffusion() * cholesky_lower(model.process_noise())?;
    let active: Vec<usize> = (0..q).filter(|&c| noise_gain.column(c).iter().any(|&v| v != 0.0)).collect();

    let mut x = x0.as_slice().to_vec();
    let mut f = vec![0.0; n];
    let mut w = vec![0.0; q];
    let mut t = 0.0;
    let mut out = Vec::with_capacity(schedule.len());
    for &t_next in schedule.instants() {
        let steps = ((t_next - t) / h_sim).round().max(1.0) as usize;
        let h = (t_next - t) / steps as f64;
        let sqrt_h = h.sqrt();
        for s in 0..steps {
            let ts = t + s as f64 * h;
            model.drift(ts, &x, &mut f);
            // Zero columns of G·Q^{1/2} still consume a draw so streams stay aligned.
            for wi in w.iter_mut() {
                *wi = rng.sample(StandardNormal);
            }
            for i in 0..n {
                let mut noise = 0.0;
                for &c in &active {
                    noise += noise_gain[(i, c)] * w[c];
                }
                x[i] += h * f[i] + sqrt_h * noise;
            }
        }
        t = t_next;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFinite { t });
        }
        out.push(Vector::from_column_slice(&x));
    }
    Ok(out)
}

/// `z_k = h(k, x_k) + R_k^{1/2} e_k` with `e_k` standard normal.
pub fn synthesize_measurements<M: SystemModel + ?Sized>(
    model: &M,
    truth: &[Vector],
    unit_noise: &[Vector],
) -> Result<Vec<Vector>, ModelError> {
    truth
        .iter()
        .zip(unit_noise)
        .enumerate()
        .map(|(i, (x, e))| {
            let k = i + 1;
            let mut z = Vector::zeros(model.meas_dim());
            model.measure(k, x.as_slice(), z.as_mut_slice());
            Ok(z + model.meas_noise_sqrt(k)? * e)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ct() -> CoordinatedTurn {
        CoordinatedTurn::new(0.1).unwrap()
    }

    #[test]
    fn drift_cases() {
        let m = ct();
        let mut out = [1.0; 7];
        m.drift(0.0, &[0.0; 7], &mut out);
        assert_eq!(out, [0.0; 7]);

        let w = 0.0523599;
        m.drift(0.0, &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, w], &mut out);
        assert_eq!(out, [1.0, 0.0, 0.0, w, 0.0, 0.0, 0.0]);

        m.drift(0.0, &[0.0, 0.0, 0.0, 0.0, 10.0, 2.0, w], &mut out);
        assert_eq!(out, [0.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        assert_relative_eq!(m.omega0, 3f64.to_radians());
        assert_relative_eq!(m.omega0, 0.0523599, epsilon = 1e-7);
    }

    #[test]
    fn measurement_cases() {
        let m = ct();
        let mut z = [0.0; 2];
        let mut e7 = [0.0; 7];
        e7[6] = 1.0;
        m.measure(1, &e7, &mut z);
        assert_eq!(z, [1.0, 1.1]);
        m.measure(1, &[1.0; 7], &mut z);
        assert_relative_eq!(z[0], 7.0);
        assert_relative_eq!(z[1], 7.1, epsilon = 1e-14);
        assert_relative_eq!(m.meas_noise(1), Mat::identity(2, 2) * 0.01, epsilon = 1e-17);
        let h = m.measurement_matrix();
        let mut z2 = [0.0; 2];
        let x = [0.3, -1.0, 2.0, 0.5, 7.0, 0.1, 0.05];
        m.measure(3, &x, &mut z2);
        let hx = h * Vector::from_row_slice(&x);
        assert_relative_eq!(z2[0], hx[0], epsilon = 1e-14);
        assert_relative_eq!(z2[1], hx[1], epsilon = 1e-14);
    }

    #[test]
    fn measurement_matrix_rank() {
        for delta in [1e-1, 1e-4, 1e-8] {
            let m = CoordinatedTurn::new(delta).unwrap();
            let h = m.measurement_matrix();
            // A 2x2 minor using the last column is non-zero for delta > 0.
            let minor = h[(0, 0)] * h[(1, 6)] - h[(0, 6)] * h[(1, 0)];
            assert_relative_eq!(minor, delta, max_relative = 1e-7);
        }
        // The singular limit itself is rejected.
        assert!(CoordinatedTurn::new(0.0).is_err());
    }

    #[test]
    fn schedule_validation() {
        assert!(SamplingSchedule::new(vec![1.0, 2.0, 2.0]).is_err());
        assert!(SamplingSchedule::new(vec![0.0, 1.0]).is_err());
        let s = SamplingSchedule::regular(150, 1.0).unwrap();
        assert_eq!(s.len(), 150);
        assert_eq!(s.instants()[149], 150.0);
        let thin = s.thinned(|k| k % 2 == 0);
        assert_eq!(thin.len(), 75);
        assert_eq!(thin.instants()[0], 2.0);
    }

    struct Brownian;
    impl SystemModel for Brownian {
        fn state_dim(&self) -> usize {
            1
        }
        fn meas_dim(&self) -> usize {
            1
        }
        fn drift(&self, _: f64, _: &[f64], out: &mut [f64]) {
            out[0] = 0.0;
        }
        fn diffusion(&self) -> &Mat {
            static G: std::sync::OnceLock<Mat> = std::sync::OnceLock::new();
            G.get_or_init(|| Mat::identity(1, 1))
        }
        fn process_noise(&self) -> &Mat {
            self.diffusion()
        }
        fn measure(&self, _: usize, x: &[f64], out: &mut [f64]) {
            out[0] = x[0];
        }
        fn meas_noise(&self, _: usize) -> Mat {
            Mat::identity(1, 1)
        }
        fn initial_mean(&self) -> Vector {
            Vector::zeros(1)
        }
        fn initial_cov(&self) -> Mat {
            Mat::identity(1, 1)
        }
    }

    #[test]
    fn brownian_variance_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let sched = SamplingSchedule::regular(1, 1.0).unwrap();
        let paths = 10_000;
        let mut sum2 = 0.0;
        let mut sum = 0.0;
        for _ in 0..paths {
            let x = euler_maruyama_truth(&Brownian, &Vector::zeros(1), 0.01, &sched, &mut rng).unwrap();
            sum += x[0][0];
            sum2 += x[0][0] * x[0][0];
        }
        let mean = sum / paths as f64;
        let var = sum2 / paths as f64 - mean * mean;
        assert!((var - 1.0).abs() <= 0.05, "variance {var}");
    }

    #[test]
    fn deterministic_turn_keeps_speed() {
        let m = CoordinatedTurn::with_parameters(3f64.to_radians(), 0.0, 0.0, 0.1).unwrap();
        let sched = SamplingSchedule::regular(150, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x0 = m.initial_mean();
        let traj = euler_maruyama_truth(&m, &x0, 0.0005, &sched, &mut rng).unwrap();
        let speed0 = x0[1].hypot(x0[3]);
        for x in &traj {
            assert!((x[1].hypot(x[3]) - speed0).abs() <= 1e-3 * speed0);
            assert_eq!(x[6], x0[6]);
        }
        // Turning: the heading has rotated by roughly omega * 150 s.
        let last = traj.last().unwrap();
        let heading = last[3].atan2(last[1]) - x0[3].atan2(x0[1]);
        let expected = (m.omega0 * 150.0 + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI;
        let got = (heading + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI;
        assert!((got - expected).abs() < 1e-2);
    }

    #[test]
    fn zero_diffusion_zero_drift_is_constant() {
        let m = CoordinatedTurn::with_parameters(0.0, 0.0, 0.0, 0.1).unwrap();
        let x0 = Vector::from_vec(vec![1.0, 0.0, 2.0, 0.0, 3.0, 0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sched = SamplingSchedule::regular(5, 1.0).unwrap();
        let traj = euler_maruyama_truth(&m, &x0, 0.01, &sched, &mut rng).unwrap();
        assert!(traj.iter().all(|x| *x == x0));
    }

    #[test]
    fn truth_is_reproducible() {
        let m = ct();
        let sched = SamplingSchedule::regular(3, 1.0).unwrap();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x0 = sample_initial_state(&m, &mut rng).unwrap();
            euler_maruyama_truth(&m, &x0, 0.001, &sched, &mut rng).unwrap()
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }
}
