//! Measurement updates. All of them take the predicted nodes from a [`Predicted`]
//! and return the filtered estimate.

use super::{Covariance, Estimate, FilterError, Predicted};
use crate::linalg::{
    chol_update_columns, chol_update_rank1, cholesky_lower, jqr_r_factor, qr_r_factor, symmetrize, tri_solve, LinalgError, Mat,
    Signature, TriSolve, Vector,
};
use crate::model::SystemModel;
use crate::ut::UtWeights;

/// Measurement-side quantities shared by every update.
#[derive(Debug, Clone)]
pub struct InnovationData {
    /// `h(X)`, one column per node.
    pub z_nodes: Mat,
    pub z_hat: Vector,
    /// `X W Zᵀ`
    pub cross_cov: Mat,
}

impl InnovationData {
    pub fn new<M: SystemModel + ?Sized>(pred: &Predicted, k: usize, model: &M, w: &UtWeights) -> Self {
        let z_nodes = model.measure_nodes(k, &pred.nodes);
        let z_hat = &z_nodes * &w.wm;
        let cross_cov = &pred.nodes * &w.w * z_nodes.transpose();
        InnovationData {
            z_nodes,
            z_hat,
            cross_cov,
        }
    }
}

/// `K = P_xz R_e^{-T/2} R_e^{-1/2}` with `R_e^{1/2}` lower.
fn gain_from_factor(pxz: &Mat, re_sqrt: &Mat) -> Result<Mat, FilterError> {
    let y = tri_solve(re_sqrt, pxz, TriSolve::RightTranspose)?;
    Ok(tri_solve(re_sqrt, &y, TriSolve::Right)?)
}

fn posterior_mean(pred: &Predicted, gain: &Mat, z: &Vector, z_hat: &Vector) -> Result<Vector, FilterError> {
    let mean = &pred.mean + gain * (z - z_hat);
    if mean.iter().all(|v| v.is_finite()) {
        Ok(mean)
    } else {
        Err(FilterError::NonFinite("measurement update"))
    }
}

/// Rejects factors whose diagonal is not strictly positive and finite.
fn checked_factor(s: Mat) -> Result<Mat, FilterError> {
    match (0..s.nrows()).find(|&i| !(s[(i, i)] > 0.0 && s[(i, i)].is_finite())) {
        Some(index) => Err(FilterError::SingularTriangular(LinalgError::SingularTriangular { index })),
        None => Ok(s),
    }
}

fn finish_sr(pred: &Predicted, mean: Vector, s: Mat) -> Result<Estimate, FilterError> {
    Ok(Estimate {
        t: pred.t,
        mean,
        cov: Covariance::CholFactor(checked_factor(s)?),
    })
}

/// Columns of `a` other than the centre node's.
fn outer_columns(a: &Mat, w: &UtWeights) -> Mat {
    let range = w.outer_indices();
    a.columns(range.start, range.len()).into_owned()
}

fn center_column(a: &Mat, w: &UtWeights) -> Vector {
    a.column(w.center_index()).into_owned()
}

/// `[[A, B], [C, D]]`
fn block2x2(a: &Mat, b: &Mat, c: &Mat, d: &Mat) -> Mat {
    let (r1, c1) = a.shape();
    let (r2, c2) = d.shape();
    let mut out = Mat::zeros(r1 + r2, c1 + c2);
    out.view_mut((0, 0), (r1, c1)).copy_from(a);
    out.view_mut((0, c1), (r1, c2)).copy_from(b);
    out.view_mut((r1, 0), (r2, c1)).copy_from(c);
    out.view_mut((r1, c1), (r2, c2)).copy_from(d);
    out
}

fn hcat(a: &Mat, b: &Mat) -> Mat {
    let mut out = Mat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out
}

fn meas_noise_sqrt<M: SystemModel + ?Sized>(model: &M, k: usize) -> Result<Mat, FilterError> {
    model.meas_noise_sqrt(k).map_err(FilterError::ResidualCovSingular)
}

/// Textbook update on the full covariance.
pub fn mu_conventional<M: SystemModel + ?Sized>(
    pred: &Predicted,
    k: usize,
    z: &Vector,
    model: &M,
    w: &UtWeights,
) -> Result<Estimate, FilterError> {
    let inn = InnovationData::new(pred, k, model, w);
    let re = &inn.z_nodes * &w.w * inn.z_nodes.transpose() + model.meas_noise(k);
    let re_sqrt = cholesky_lower(&re).map_err(FilterError::ResidualCovSingular)?;
    let gain = gain_from_factor(&inn.cross_cov, &re_sqrt)?;
    let mean = posterior_mean(pred, &gain, z, &inn.z_hat)?;
    let p = pred.cov.matrix() - &gain * &re * gain.transpose();
    Ok(Estimate {
        t: pred.t,
        mean,
        cov: Covariance::Full(symmetrize(&p)),
    })
}

/// `R_e^{1/2}` (lower): QR of the outer-node part and `R^{1/2}`, then a signed
/// rank-one correction with the centre node.
fn pseudo_residual_factor<M: SystemModel + ?Sized>(
    inn: &InnovationData,
    k: usize,
    model: &M,
    w: &UtWeights,
) -> Result<Mat, FilterError> {
    let zw = &inn.z_nodes * &w.w_sqrt_abs;
    let pre = hcat(&outer_columns(&zw, w), &meas_noise_sqrt(model, k)?);
    let r = qr_r_factor(&pre.transpose())?;
    let sign = w.signature.get(w.center_index());
    let r = chol_update_rank1(&r, &center_column(&zw, w), sign)?;
    Ok(r.transpose())
}

/// Pseudo square-root update: the posterior factor comes from `m` Cholesky
/// downdates of the predicted factor by the columns of `K R_e^{1/2}`.
pub fn mu_pseudo_a<M: SystemModel + ?Sized>(
    pred: &Predicted,
    k: usize,
    z: &Vector,
    model: &M,
    w: &UtWeights,
) -> Result<Estimate, FilterError> {
    let inn = InnovationData::new(pred, k, model, w);
    let re_sqrt = pseudo_residual_factor(&inn, k, model, w)?;
    let gain = gain_from_factor(&inn.cross_cov, &re_sqrt)?;
    let mean = posterior_mean(pred, &gain, z, &inn.z_hat)?;
    let u = &gain * &re_sqrt;
    let s = chol_update_columns(&pred.factor()?.transpose(), &u, -1)?;
    finish_sr(pred, mean, s.transpose())
}

/// Pseudo square-root update in Joseph-like form: QR of `(X − K Z)|W|^{1/2}`
/// (outer nodes) and `K R^{1/2}`, then a signed rank-one correction.
pub fn mu_pseudo_b<M: SystemModel + ?Sized>(
    pred: &Predicted,
    k: usize,
    z: &Vector,
    model: &M,
    w: &UtWeights,
) -> Result<Estimate, FilterError> {
    let inn = InnovationData::new(pred, k, model, w);
    let re_sqrt = pseudo_residual_factor(&inn, k, model, w)?;
    let gain = gain_from_factor(&inn.cross_cov, &re_sqrt)?;
    let mean = posterior_mean(pred, &gain, z, &inn.z_hat)?;
    let dw = (&pred.nodes - &gain * &inn.z_nodes) * &w.w_sqrt_abs;
    let pre = hcat(&outer_columns(&dw, w), &(&gain * meas_noise_sqrt(model, k)?));
    let r = qr_r_factor(&pre.transpose())?;
    let sign = w.signature.get(w.center_index());
    let r = chol_update_rank1(&r, &center_column(&dw, w), sign)?;
    finish_sr(pred, mean, r.transpose())
}

/// Pseudo square-root update on the stacked pre-array
/// `[[Z|W|^{1/2}, R^{1/2}], [X|W|^{1/2}, 0]]`, which yields `R_e^{1/2}`, the
/// normalized cross term, and the posterior factor in one triangularization.
pub fn mu_pseudo_c<M: SystemModel + ?Sized>(
    pred: &Predicted,
    k: usize,
    z: &Vector,
    model: &M,
    w: &UtWeights,
) -> Result<Estimate, FilterError> {
    let n = pred.mean.len();
    let inn = InnovationData::new(pred, k, model, w);
    let m = inn.z_hat.len();
    let zw = &inn.z_nodes * &w.w_sqrt_abs;
    let xw = &pred.nodes * &w.w_sqrt_abs;
    let pre = block2x2(
        &outer_columns(&zw, w),
        &meas_noise_sqrt(model, k)?,
        &outer_columns(&xw, w),
        &Mat::zeros(n, m),
    );
    let r = qr_r_factor(&pre.transpose())?;
    let mut centre = Vector::zeros(m + n);
    centre.rows_mut(0, m).copy_from(&center_column(&zw, w));
    centre.rows_mut(m, n).copy_from(&center_column(&xw, w));
    let r = chol_update_rank1(&r, &centre, w.signature.get(w.center_index()))?;
    post_array_update(pred, z, &inn.z_hat, &r.transpose(), m)
}

/// Reads `[[R_e^{1/2}, 0], [P̄_xz, P^{1/2}]]` and applies the gain `P̄_xz R_e^{-1/2}`.
fn post_array_update(pred: &Predicted, z: &Vector, z_hat: &Vector, l: &Mat, m: usize) -> Result<Estimate, FilterError> {
    let n = pred.mean.len();
    let re_sqrt = l.view((0, 0), (m, m)).into_owned();
    let pxz_bar = l.view((m, 0), (n, m)).into_owned();
    let re_sqrt = checked_factor(re_sqrt).map_err(|e| match e {
        FilterError::SingularTriangular(inner) => FilterError::ResidualCovSingular(inner),
        other => other,
    })?;
    let gain = tri_solve(&re_sqrt, &pxz_bar, TriSolve::Right)?;
    let mean = posterior_mean(pred, &gain, z, z_hat)?;
    finish_sr(pred, mean, l.view((m, m), (n, n)).into_owned())
}

/// `R_e^{1/2}` from a J-orthogonal triangularization of `[R^{1/2}, Z|W|^{1/2}]`.
fn true_residual_factor<M: SystemModel + ?Sized>(
    inn: &InnovationData,
    k: usize,
    model: &M,
    w: &UtWeights,
) -> Result<Mat, FilterError> {
    let m = inn.z_hat.len();
    let zw = &inn.z_nodes * &w.w_sqrt_abs;
    let pre = hcat(&meas_noise_sqrt(model, k)?, &zw);
    let j = Signature::positive(m).concat(&w.signature);
    Ok(jqr_r_factor(&pre.transpose(), &j)?.transpose())
}

/// True square-root update: hyperbolic QR for `R_e^{1/2}`, then a second one
/// on `[P^{1/2}, K R_e^{1/2}]` with signature `diag(I, −I)`.
pub fn mu_true_a<M: SystemModel + ?Sized>(
    pred: &Predicted,
    k: usize,
    z: &Vector,
    model: &M,
    w: &UtWeights,
) -> Result<Estimate, FilterError> {
    let n = pred.mean.len();
    let inn = InnovationData::new(pred, k, model, w);
    let m = inn.z_hat.len();
    let re_sqrt = true_residual_factor(&inn, k, model, w)?;
    let gain = gain_from_factor(&inn.cross_cov, &re_sqrt)?;
    let mean = posterior_mean(pred, &gain, z, &inn.z_hat)?;
    let pre = hcat(&pred.factor()?, &(&gain * &re_sqrt));
    let j = Signature::positive(n).concat(&Signature::new(vec![-1; m]));
    let s = jqr_r_factor(&pre.transpose(), &j)?.transpose();
    finish_sr(pred, mean, s)
}

/// True square-root update in Joseph-like form on `[K R^{1/2}, (X − K Z)|W|^{1/2}]`.
pub fn mu_true_b<M: SystemModel + ?Sized>(
    pred: &Predicted,
    k: usize,
    z: &Vector,
    model: &M,
    w: &UtWeights,
) -> Result<Estimate, FilterError> {
    let inn = InnovationData::new(pred, k, model, w);
    let m = inn.z_hat.len();
    let re_sqrt = true_residual_factor(&inn, k, model, w)?;
    let gain = gain_from_factor(&inn.cross_cov, &re_sqrt)?;
    let mean = posterior_mean(pred, &gain, z, &inn.z_hat)?;
    let dw = (&pred.nodes - &gain * &inn.z_nodes) * &w.w_sqrt_abs;
    let pre = hcat(&(&gain * meas_noise_sqrt(model, k)?), &dw);
    let j = Signature::positive(m).concat(&w.signature);
    let s = jqr_r_factor(&pre.transpose(), &j)?.transpose();
    finish_sr(pred, mean, s)
}

/// True square-root update on `[[R^{1/2}, Z|W|^{1/2}], [0, X|W|^{1/2}]]`.
pub fn mu_true_c<M: SystemModel + ?Sized>(
    pred: &Predicted,
    k: usize,
    z: &Vector,
    model: &M,
    w: &UtWeights,
) -> Result<Estimate, FilterError> {
    let n = pred.mean.len();
    let inn = InnovationData::new(pred, k, model, w);
    let m = inn.z_hat.len();
    let zw = &inn.z_nodes * &w.w_sqrt_abs;
    let xw = &pred.nodes * &w.w_sqrt_abs;
    let pre = block2x2(&meas_noise_sqrt(model, k)?, &zw, &Mat::zeros(n, m), &xw);
    let j = Signature::positive(m).concat(&w.signature);
    let r = jqr_r_factor(&pre.transpose(), &j)?;
    post_array_update(pred, z, &inn.z_hat, &r.transpose(), m)
}
