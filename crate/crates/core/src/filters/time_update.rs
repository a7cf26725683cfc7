//! Time updates: moment ODEs for `(x̂, P)`, `(x̂, P^{1/2})`, and the sigma-node ODEs.

use super::FilterError;
use crate::linalg::{cholesky_lower, phi_map, tri_solve, Mat, TriSolve, Vector};
use crate::model::SystemModel;
use crate::ode::{integrate, OdeOptions};
use crate::ut::{recover_sqrt_from_sigma, sigma_matrix, UtWeights};

/// `X W Fᵀ + F W Xᵀ + G Q Gᵀ`.
fn moment_rhs(x: &Mat, f: &Mat, w: &UtWeights, gqg: &Mat) -> Mat {
    let xwf = x * &w.w * f.transpose();
    let fwx = xwf.transpose();
    xwf + fwx + gqg
}

/// `P^{1/2} Φ(P^{-1/2} B P^{-T/2})`.
fn factor_derivative(s: &Mat, b: &Mat) -> Result<Mat, FilterError> {
    let y = tri_solve(s, b, TriSolve::Left)?;
    let m = tri_solve(s, &y, TriSolve::RightTranspose)?;
    Ok(s * phi_map(&m))
}

fn check_finite(y: &[f64], what: &'static str) -> Result<(), FilterError> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(FilterError::NonFinite(what))
    }
}

/// Integrates the mean and covariance moment equations over `span`.
///
/// The covariance is re-factorized at every right-hand-side evaluation; a failure
/// there is reported as [`FilterError::CholeskyFailureInRhs`].
pub fn time_update_mde<M: SystemModel + ?Sized>(
    mean: &Vector,
    p: &Mat,
    span: (f64, f64),
    model: &M,
    w: &UtWeights,
    opts: &OdeOptions,
) -> Result<(Vector, Mat), FilterError> {
    let n = mean.len();
    let gqg = model.diffusion_cov();
    let mut y0 = Vec::with_capacity(n + n * n);
    y0.extend_from_slice(mean.as_slice());
    y0.extend_from_slice(p.as_slice());

    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<(), FilterError> {
        let xhat = Vector::from_column_slice(&y[..n]);
        let p = Mat::from_column_slice(n, n, &y[n..]);
        let s = cholesky_lower(&p).map_err(FilterError::CholeskyFailureInRhs)?;
        let x = sigma_matrix(&xhat, &s, w);
        let f = model.drift_nodes(t, &x);
        let dx = &f * &w.wm;
        let dp = moment_rhs(&x, &f, w, &gqg);
        dy[..n].copy_from_slice(dx.as_slice());
        dy[n..].copy_from_slice(dp.as_slice());
        Ok(())
    };
    let out = integrate(rhs, &y0, span, opts)?;
    check_finite(&out.y_end, "time update")?;
    let mean = Vector::from_column_slice(&out.y_end[..n]);
    let p = Mat::from_column_slice(n, n, &out.y_end[n..]);
    Ok((mean, p))
}

/// Integrates the mean and lower Cholesky-factor equations over `span`.
/// The factor at the endpoint is projected onto its lower triangle.
pub fn time_update_mde_sr<M: SystemModel + ?Sized>(
    mean: &Vector,
    s: &Mat,
    span: (f64, f64),
    model: &M,
    w: &UtWeights,
    opts: &OdeOptions,
) -> Result<(Vector, Mat), FilterError> {
    let n = mean.len();
    let gqg = model.diffusion_cov();
    let mut y0 = Vec::with_capacity(n + n * n);
    y0.extend_from_slice(mean.as_slice());
    y0.extend_from_slice(s.as_slice());

    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<(), FilterError> {
        let xhat = Vector::from_column_slice(&y[..n]);
        let s = Mat::from_column_slice(n, n, &y[n..]);
        let x = sigma_matrix(&xhat, &s, w);
        let f = model.drift_nodes(t, &x);
        let dx = &f * &w.wm;
        let ds = factor_derivative(&s, &moment_rhs(&x, &f, w, &gqg))?;
        dy[..n].copy_from_slice(dx.as_slice());
        dy[n..].copy_from_slice(ds.as_slice());
        Ok(())
    };
    let out = integrate(rhs, &y0, span, opts)?;
    check_finite(&out.y_end, "time update")?;
    let mean = Vector::from_column_slice(&out.y_end[..n]);
    let s = Mat::from_column_slice(n, n, &out.y_end[n..]).lower_triangle();
    Ok((mean, s))
}

/// Integrates the sigma nodes themselves over `span`:
/// `dXᵢ/dt = F(X) w_m + P^{1/2} Φ(M) ξᵢ`, with `P^{1/2}` recovered from the nodes.
pub fn time_update_spde<M: SystemModel + ?Sized>(
    nodes: &Mat,
    span: (f64, f64),
    model: &M,
    w: &UtWeights,
    opts: &OdeOptions,
) -> Result<Mat, FilterError> {
    let n = w.n();
    let count = w.node_count();
    let gqg = model.diffusion_cov();
    let center = w.center_index();

    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| -> Result<(), FilterError> {
        let x = Mat::from_column_slice(n, count, y);
        let xhat = x.column(center).into_owned();
        let s = recover_sqrt_from_sigma(&x, &xhat, w);
        let f = model.drift_nodes(t, &x);
        let drift_mean = &f * &w.wm;
        let a = factor_derivative(&s, &moment_rhs(&x, &f, w, &gqg))?;
        let mut dx = a * &w.xi;
        for mut col in dx.column_iter_mut() {
            col += &drift_mean;
        }
        dy.copy_from_slice(dx.as_slice());
        Ok(())
    };
    let out = integrate(rhs, nodes.as_slice(), span, opts)?;
    check_finite(&out.y_end, "time update")?;
    Ok(Mat::from_column_slice(n, count, &out.y_end))
}
