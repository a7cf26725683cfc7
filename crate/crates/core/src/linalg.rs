//! Dense kernels shared by every filter variant.
//!
//! All factorizations follow the math-level contracts used by the array
//! algorithms: `qr_r_factor(A)` returns `R` with `RᵀR = AᵀA`, and
//! `jqr_r_factor(A, J)` returns `R` with `RᵀR = AᵀJA`. Callers decide which
//! way round a pre-array is stored. Triangular factors come back with a
//! non-negative diagonal so results are reproducible.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("rank-one downdate leaves a matrix that is not positive definite (column {column})")]
    DowndateNotPD { column: usize },
    #[error("hyperbolic rotation breakdown in column {column}: |f| = {f:e} <= |g| = {g:e}")]
    HyperbolicBreakdown { column: usize, f: f64, g: f64 },
    #[error("triangular matrix has a zero diagonal entry at {index}")]
    SingularTriangular { index: usize },
    #[error("non-finite input to {op}")]
    NonFiniteInput { op: &'static str },
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },
}

/// Diagonal of ±1 entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature(Vec<i8>);

impl Signature {
    /// Panics if an entry is not exactly ±1.
    pub fn new(signs: Vec<i8>) -> Self {
        assert!(
            signs.iter().all(|&s| s == 1 || s == -1),
            "signature entries must be +1 or -1"
        );
        Signature(signs)
    }

    pub fn positive(len: usize) -> Self {
        Signature(vec![1; len])
    }

    /// `diag(self, other)`.
    pub fn concat(&self, other: &Signature) -> Self {
        let mut signs = self.0.clone();
        signs.extend_from_slice(&other.0);
        Signature(signs)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> i8 {
        self.0[i]
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn to_matrix(&self) -> Mat {
        Mat::from_diagonal(&Vector::from_iterator(
            self.0.len(),
            self.0.iter().map(|&s| f64::from(s)),
        ))
    }
}

fn all_finite(a: &Mat) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Lower Cholesky factor of the symmetric part `(A + Aᵀ)/2`.
pub fn cholesky_lower(a: &Mat) -> Result<Mat, LinalgError> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(LinalgError::Dimension {
            op: "cholesky_lower",
            detail: format!("{}x{} is not square", n, a.ncols()),
        });
    }
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { pivot: j, value: d });
        }
        let ljj = d.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = 0.5 * (a[(i, j)] + a[(j, i)]);
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Flips rows of an upper-triangular factor so that its diagonal is non-negative.
fn normalize_rows(r: &mut Mat) {
    for i in 0..r.nrows().min(r.ncols()) {
        if r[(i, i)] < 0.0 {
            r.row_mut(i).neg_mut();
        }
    }
}

/// Rank-one modification of an upper-triangular Cholesky factor:
/// returns `R'` with `R'ᵀR' = RᵀR + sign·uuᵀ`.
///
/// Updates use Givens rotations. Downdates follow LINPACK `dchdd`: solve `Rᵀa = u`,
/// require `‖a‖ < 1`, then rebuild `R` with the rotations that zero `(a, √(1−‖a‖²))`.
pub fn chol_update_rank1(r: &Mat, u: &Vector, sign: i8) -> Result<Mat, LinalgError> {
    let n = r.nrows();
    if r.ncols() != n || u.len() != n {
        return Err(LinalgError::Dimension {
            op: "chol_update_rank1",
            detail: format!("factor {}x{}, vector {}", n, r.ncols(), u.len()),
        });
    }
    if !all_finite(r) || u.iter().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFiniteInput {
            op: "chol_update_rank1",
        });
    }
    let mut r = r.upper_triangle();
    normalize_rows(&mut r);
    let mut x = u.clone();
    if sign >= 0 {
        for k in 0..n {
            let a = r[(k, k)];
            let b = x[k];
            if b == 0.0 {
                continue;
            }
            let rho = a.hypot(b);
            let c = a / rho;
            let s = b / rho;
            r[(k, k)] = rho;
            for j in k + 1..n {
                let rkj = r[(k, j)];
                let xj = x[j];
                r[(k, j)] = c * rkj + s * xj;
                x[j] = c * xj - s * rkj;
            }
        }
    } else {
        downdate(&mut r, &x)?;
    }
    if !all_finite(&r) {
        return Err(LinalgError::NonFiniteInput {
            op: "chol_update_rank1",
        });
    }
    Ok(r)
}

fn downdate(r: &mut Mat, u: &Vector) -> Result<(), LinalgError> {
    let n = r.nrows();
    let mut a = u.clone();
    for i in 0..n {
        if !(r[(i, i)] > 0.0) {
            return Err(LinalgError::DowndateNotPD { column: i });
        }
        let mut acc = a[i];
        for k in 0..i {
            acc -= r[(k, i)] * a[k];
        }
        a[i] = acc / r[(i, i)];
    }
    let norm = a.norm();
    if !(norm < 1.0) {
        let column = (0..n).find(|&i| a.rows(0, i + 1).norm() >= 1.0).unwrap_or(n - 1);
        return Err(LinalgError::DowndateNotPD { column });
    }
    let mut alpha = ((1.0 - norm) * (1.0 + norm)).sqrt();
    let mut c = vec![0.0; n];
    let mut s = vec![0.0; n];
    for i in (0..n).rev() {
        let scale = alpha + a[i].abs();
        let ai = alpha / scale;
        let bi = a[i] / scale;
        let h = ai.hypot(bi);
        c[i] = ai / h;
        s[i] = bi / h;
        alpha = scale * h;
    }
    for j in 0..n {
        let mut xx = 0.0;
        for i in (0..=j).rev() {
            let t = c[i] * xx + s[i] * r[(i, j)];
            r[(i, j)] = c[i] * r[(i, j)] - s[i] * xx;
            xx = t;
        }
    }
    for i in 0..n {
        if r[(i, i)] < 0.0 {
            for j in i..n {
                r[(i, j)] = -r[(i, j)];
            }
        }
        if !(r[(i, i)] > 0.0) {
            return Err(LinalgError::DowndateNotPD { column: i });
        }
    }
    Ok(())
}

/// Applies one rank-one modification per column of `u`, left to right.
pub fn chol_update_columns(r: &Mat, u: &Mat, sign: i8) -> Result<Mat, LinalgError> {
    let mut out = r.clone();
    for c in 0..u.ncols() {
        out = chol_update_rank1(&out, &u.column(c).into_owned(), sign)?;
    }
    Ok(out)
}

/// Householder triangularization of a tall `p×n` matrix. Returns the `n×n`
/// factor `R` with `RᵀR = AᵀA` and non-negative diagonal.
pub fn qr_r_factor(a: &Mat) -> Result<Mat, LinalgError> {
    let (p, n) = a.shape();
    if p < n {
        return Err(LinalgError::Dimension {
            op: "qr_r_factor",
            detail: format!("{p}x{n} is not tall"),
        });
    }
    if !all_finite(a) {
        return Err(LinalgError::NonFiniteInput { op: "qr_r_factor" });
    }
    let mut w = a.clone();
    let mut v = vec![0.0; p];
    for j in 0..n {
        let mut scale = 0.0f64;
        for i in j..p {
            scale = scale.max(w[(i, j)].abs());
        }
        if scale == 0.0 {
            continue;
        }
        let mut norm2 = 0.0;
        for i in j..p {
            let t = w[(i, j)] / scale;
            norm2 += t * t;
        }
        let norm = scale * norm2.sqrt();
        let alpha = if w[(j, j)] >= 0.0 { -norm } else { norm };
        for i in j..p {
            v[i] = w[(i, j)];
        }
        v[j] -= alpha;
        let vtv: f64 = (j..p).map(|i| v[i] * v[i]).sum();
        if vtv == 0.0 {
            continue;
        }
        w[(j, j)] = alpha;
        for i in j + 1..p {
            w[(i, j)] = 0.0;
        }
        for c in j + 1..n {
            let dot: f64 = (j..p).map(|i| v[i] * w[(i, c)]).sum();
            let f = 2.0 * dot / vtv;
            for i in j..p {
                w[(i, c)] -= f * v[i];
            }
        }
    }
    let mut r = w.rows(0, n).upper_triangle();
    normalize_rows(&mut r);
    Ok(r)
}

/// Plane rotation bookkeeping for [`jqr_with_transform`].
#[derive(Debug, Clone, Copy)]
enum Rotation {
    Givens { c: f64, s: f64 },
    Hyperbolic { rho: f64, c: f64 },
}

impl Rotation {
    /// Applies the rotation to the pair `(x, y)` where `x` belongs to the kept row.
    #[inline]
    fn apply(self, x: f64, y: f64) -> (f64, f64) {
        match self {
            Rotation::Givens { c, s } => (c * x + s * y, c * y - s * x),
            Rotation::Hyperbolic { rho, c } => {
                let xn = (x - rho * y) * c;
                (xn, y / c - rho * xn)
            }
        }
    }
}

fn rotate_rows(w: &mut Mat, keep: usize, kill: usize, from_col: usize, rot: Rotation) {
    for c in from_col..w.ncols() {
        let (x, y) = rot.apply(w[(keep, c)], w[(kill, c)]);
        w[(keep, c)] = x;
        w[(kill, c)] = y;
    }
}

/// J-orthogonal triangularization. Returns `R` (`n×n`, upper, non-negative
/// diagonal) with `RᵀR = AᵀJA`.
pub fn jqr_r_factor(a: &Mat, j: &Signature) -> Result<Mat, LinalgError> {
    jqr_impl(a, j, false).map(|(r, _)| r)
}

/// As [`jqr_r_factor`], also returning the accumulated `p×p` transform `Q`
/// (`QᵀJQ = J`). `QA` is zero outside the pivot rows.
pub fn jqr_with_transform(a: &Mat, j: &Signature) -> Result<(Mat, Mat), LinalgError> {
    jqr_impl(a, j, true).map(|(r, q)| (r, q.expect("transform requested")))
}

fn jqr_impl(a: &Mat, sig: &Signature, track: bool) -> Result<(Mat, Option<Mat>), LinalgError> {
    let (p, n) = a.shape();
    if sig.len() != p {
        return Err(LinalgError::Dimension {
            op: "jqr_r_factor",
            detail: format!("{p} rows but signature of length {}", sig.len()),
        });
    }
    if p < n {
        return Err(LinalgError::Dimension {
            op: "jqr_r_factor",
            detail: format!("{p}x{n} is not tall"),
        });
    }
    if !all_finite(a) {
        return Err(LinalgError::NonFiniteInput { op: "jqr_r_factor" });
    }
    let mut w = a.clone();
    let mut q = track.then(|| Mat::identity(p, p));
    let mut used = vec![false; p];
    let mut pivots = Vec::with_capacity(n);

    for col in 0..n {
        // Fold every active row of one sign class into its first member.
        let mut rep = [None::<usize>, None::<usize>];
        for row in 0..p {
            if used[row] {
                continue;
            }
            let class = usize::from(sig.get(row) < 0);
            match rep[class] {
                None => rep[class] = Some(row),
                Some(keep) => {
                    let y = w[(row, col)];
                    if y == 0.0 {
                        continue;
                    }
                    let x = w[(keep, col)];
                    let h = x.hypot(y);
                    let rot = Rotation::Givens { c: x / h, s: y / h };
                    rotate_rows(&mut w, keep, row, col, rot);
                    w[(row, col)] = 0.0;
                    if let Some(q) = q.as_mut() {
                        rotate_rows(q, keep, row, 0, rot);
                    }
                }
            }
        }
        let Some(pos) = rep[0] else {
            return Err(LinalgError::HyperbolicBreakdown {
                column: col,
                f: 0.0,
                g: rep[1].map_or(0.0, |r| w[(r, col)].abs()),
            });
        };
        if let Some(neg) = rep[1] {
            let g = w[(neg, col)];
            if g != 0.0 {
                let f = w[(pos, col)];
                if f.abs() <= g.abs() {
                    return Err(LinalgError::HyperbolicBreakdown {
                        column: col,
                        f: f.abs(),
                        g: g.abs(),
                    });
                }
                let rho = g / f;
                let c = 1.0 / ((1.0 - rho) * (1.0 + rho)).sqrt();
                let rot = Rotation::Hyperbolic { rho, c };
                rotate_rows(&mut w, pos, neg, col, rot);
                w[(neg, col)] = 0.0;
                if let Some(q) = q.as_mut() {
                    rotate_rows(q, pos, neg, 0, rot);
                }
            }
        }
        if w[(pos, col)] < 0.0 {
            w.row_mut(pos).neg_mut();
            if let Some(q) = q.as_mut() {
                q.row_mut(pos).neg_mut();
            }
        }
        used[pos] = true;
        pivots.push(pos);
    }

    let mut r = Mat::zeros(n, n);
    for (i, &row) in pivots.iter().enumerate() {
        for c in i..n {
            r[(i, c)] = w[(row, c)];
        }
    }
    if !all_finite(&r) {
        return Err(LinalgError::NonFiniteInput { op: "jqr_r_factor" });
    }
    Ok((r, q))
}

/// Strictly-lower part plus half the diagonal.
pub fn phi_map(m: &Mat) -> Mat {
    let n = m.nrows();
    let mut out = Mat::zeros(n, m.ncols());
    for c in 0..m.ncols() {
        for r in c..n {
            out[(r, c)] = if r == c { 0.5 * m[(r, c)] } else { m[(r, c)] };
        }
    }
    out
}

/// Which system a triangular solve addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriSolve {
    /// `L·Y = B`
    Left,
    /// `Lᵀ·Y = B`
    LeftTranspose,
    /// `Y·L = B`
    Right,
    /// `Y·Lᵀ = B`
    RightTranspose,
}

/// Solves with a lower-triangular `L`. Only the lower triangle is read.
pub fn tri_solve(l: &Mat, b: &Mat, mode: TriSolve) -> Result<Mat, LinalgError> {
    let n = l.nrows();
    if l.ncols() != n {
        return Err(LinalgError::Dimension {
            op: "tri_solve",
            detail: "factor is not square".into(),
        });
    }
    if let Some(index) = (0..n).find(|&i| l[(i, i)] == 0.0) {
        return Err(LinalgError::SingularTriangular { index });
    }
    match mode {
        TriSolve::Left => {
            check_dim(b.nrows(), n)?;
            Ok(forward(l, b))
        }
        TriSolve::LeftTranspose => {
            check_dim(b.nrows(), n)?;
            Ok(backward_t(l, b))
        }
        // Y·L = B  <=>  Lᵀ·Yᵀ = Bᵀ
        TriSolve::Right => {
            check_dim(b.ncols(), n)?;
            Ok(backward_t(l, &b.transpose()).transpose())
        }
        // Y·Lᵀ = B  <=>  L·Yᵀ = Bᵀ
        TriSolve::RightTranspose => {
            check_dim(b.ncols(), n)?;
            Ok(forward(l, &b.transpose()).transpose())
        }
    }
}

fn check_dim(got: usize, want: usize) -> Result<(), LinalgError> {
    if got == want {
        Ok(())
    } else {
        Err(LinalgError::Dimension {
            op: "tri_solve",
            detail: format!("right-hand side has {got} rows/cols, factor has {want}"),
        })
    }
}

fn forward(l: &Mat, b: &Mat) -> Mat {
    let n = l.nrows();
    let mut y = b.clone();
    for c in 0..b.ncols() {
        for i in 0..n {
            let mut s = y[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * y[(k, c)];
            }
            y[(i, c)] = s / l[(i, i)];
        }
    }
    y
}

fn backward_t(l: &Mat, b: &Mat) -> Mat {
    let n = l.nrows();
    let mut y = b.clone();
    for c in 0..b.ncols() {
        for i in (0..n).rev() {
            let mut s = y[(i, c)];
            for k in i + 1..n {
                s -= l[(k, i)] * y[(k, c)];
            }
            y[(i, c)] = s / l[(i, i)];
        }
    }
    y
}

/// `(A + Aᵀ)/2`
pub fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

/// Relative Frobenius distance `‖a − b‖ / ‖b‖` (absolute when `b = 0`).
pub fn rel_err(a: &Mat, b: &Mat) -> f64 {
    let d = (a - b).norm();
    let s = b.norm();
    if s == 0.0 {
        d
    } else {
        d / s
    }
}
