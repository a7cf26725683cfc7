//! Unscented-transform nodes and weights.

use crate::linalg::{Mat, Signature, Vector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum UtError {
    #[error("invalid unscented-transform parameters: {0}")]
    InvalidParams(String),
}

/// Scaling parameters `alpha`, `beta`, `kappa` for an `n`-dimensional state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    pub n: usize,
}

impl UtParams {
    /// `alpha = 1`, `beta = 0`, `kappa = 3 - n`.
    pub fn classic(n: usize) -> Self {
        UtParams {
            alpha: 1.0,
            beta: 0.0,
            kappa: 3.0 - n as f64,
            n,
        }
    }

    pub fn lambda(&self) -> f64 {
        let n = self.n as f64;
        self.alpha * self.alpha * (self.kappa + n) - n
    }

    pub fn validate(&self) -> Result<(), UtError> {
        if self.n == 0 {
            return Err(UtError::InvalidParams("state dimension must be positive".into()));
        }
        if self.alpha == 0.0 || !self.alpha.is_finite() {
            return Err(UtError::InvalidParams("alpha must be finite and non-zero".into()));
        }
        let spread = self.n as f64 + self.lambda();
        if !(spread > 0.0) {
            return Err(UtError::InvalidParams(format!("n + lambda = {spread} must be positive")));
        }
        Ok(())
    }
}

/// Column order of the nodes and every weight-derived quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeOrdering {
    /// Centre node first.
    Standard,
    /// Centre node last, so a negative centre weight sits at the end of the signature.
    NegLast,
}

#[derive(Debug, Clone)]
pub struct UtWeights {
    pub params: UtParams,
    pub ordering: NodeOrdering,
    /// `n × (2n+1)` node offsets.
    pub xi: Mat,
    pub wm: Vector,
    pub wc: Vector,
    /// `(I - [wm … wm]) diag(wc) (I - [wm … wm])ᵀ`
    pub w: Mat,
    /// `(I - [wm … wm]) diag(√|wc|)`
    pub w_sqrt_abs: Mat,
    pub signature: Signature,
}

impl UtWeights {
    pub fn new(params: UtParams, ordering: NodeOrdering) -> Result<Self, UtError> {
        params.validate()?;
        let n = params.n;
        let count = 2 * n + 1;
        let lambda = params.lambda();
        let spread = (n as f64 + lambda).sqrt();

        let mut xi = Mat::zeros(n, count);
        let mut wm = Vector::from_element(count, 1.0 / (2.0 * (n as f64 + lambda)));
        let mut wc = wm.clone();
        wm[0] = lambda / (n as f64 + lambda);
        wc[0] = wm[0] + 1.0 - params.alpha * params.alpha + params.beta;
        for j in 0..n {
            xi[(j, 1 + j)] = spread;
            xi[(j, 1 + n + j)] = -spread;
        }

        if ordering == NodeOrdering::NegLast {
            let rotate = |v: &Vector| Vector::from_fn(count, |i, _| v[(i + 1) % count]);
            wm = rotate(&wm);
            wc = rotate(&wc);
            xi = Mat::from_fn(n, count, |r, c| xi[(r, (c + 1) % count)]);
        }

        let mut centering = Mat::identity(count, count);
        for c in 0..count {
            for r in 0..count {
                centering[(r, c)] -= wm[r];
            }
        }
        let w = &centering * Mat::from_diagonal(&wc) * centering.transpose();
        let w_sqrt_abs = &centering * Mat::from_diagonal(&wc.map(|v| v.abs().sqrt()));
        let signature = Signature::new(wc.iter().map(|&v| if v < 0.0 { -1 } else { 1 }).collect());

        Ok(UtWeights {
            params,
            ordering,
            xi,
            wm,
            wc,
            w,
            w_sqrt_abs,
            signature,
        })
    }

    pub fn n(&self) -> usize {
        self.params.n
    }

    pub fn node_count(&self) -> usize {
        2 * self.params.n + 1
    }

    pub fn lambda(&self) -> f64 {
        self.params.lambda()
    }

    /// Column holding the centre node.
    pub fn center_index(&self) -> usize {
        match self.ordering {
            NodeOrdering::Standard => 0,
            NodeOrdering::NegLast => 2 * self.params.n,
        }
    }

    /// First of the `n` columns holding the `+` offset nodes.
    pub fn plus_offset(&self) -> usize {
        match self.ordering {
            NodeOrdering::Standard => 1,
            NodeOrdering::NegLast => 0,
        }
    }

    /// Column indices other than the centre, in order.
    pub fn outer_indices(&self) -> std::ops::Range<usize> {
        match self.ordering {
            NodeOrdering::Standard => 1..self.node_count(),
            NodeOrdering::NegLast => 0..self.node_count() - 1,
        }
    }
}

/// Nodes `x̂ + P^{1/2} ξ_i` as columns, in the weights' ordering.
pub fn sigma_matrix(xhat: &Vector, p_sqrt: &Mat, w: &UtWeights) -> Mat {
    let mut x = p_sqrt * &w.xi;
    for mut col in x.column_iter_mut() {
        col += xhat;
    }
    x
}

/// Lower factor `tril(X₊ − x̂)/√(n+λ)` from the `+` offset nodes.
pub fn recover_sqrt_from_sigma(x: &Mat, xhat: &Vector, w: &UtWeights) -> Mat {
    let n = w.n();
    let scale = (n as f64 + w.lambda()).sqrt();
    let first = w.plus_offset();
    Mat::from_fn(n, n, |r, c| {
        if r >= c {
            (x[(r, first + c)] - xhat[r]) / scale
        } else {
            0.0
        }
    })
}
