//! Orthonormal basis `Psi_n(alpha) = P_{n-1}(alpha) e^alpha` of `L^2(-d, d)`.
//!
//! The basis is the Gram-Schmidt orthonormalization of
//! `{alpha^(n-1) e^alpha}`. Gram-Schmidt is carried out as a Cholesky
//! factorization of the moment matrix, whose entries are known in closed
//! form, followed by one re-orthogonalization pass against the stored
//! quadrature rule. Polynomials are stored in the scaled variable
//! `t = alpha / d`, which keeps the moment matrix far better conditioned
//! than raw monomials in `alpha`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::quadrature::Quadrature;

/// Default number of Gauss-Legendre nodes on `(-d, d)`.
pub const DEFAULT_QUAD_ORDER: usize = 256;

#[derive(Debug, Clone)]
pub struct BasisSet {
    len: usize,
    half_len: f64,
    /// Row `n` holds the coefficients of `P_n` in powers of `alpha / d`.
    coeffs: DMatrix<f64>,
    quadrature: Quadrature,
    /// `Psi_n` at the quadrature nodes, one row per basis function.
    values: DMatrix<f64>,
    /// `Psi_n'` at the quadrature nodes.
    derivatives: DMatrix<f64>,
}

impl BasisSet {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn half_len(&self) -> f64 {
        self.half_len
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quadrature
    }

    /// `N x Q` table of basis values at the quadrature nodes.
    pub fn values_at_nodes(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// `N x Q` table of basis derivatives at the quadrature nodes.
    pub fn derivatives_at_nodes(&self) -> &DMatrix<f64> {
        &self.derivatives
    }

    /// Coefficients of the polynomial part of the 0-based basis function
    /// `n`, in increasing powers of `alpha / d`.
    pub fn poly_coeffs(&self, n: usize) -> Vec<f64> {
        self.coeffs.row(n).iter().copied().collect()
    }

    /// Value of the 0-based basis function `n` at `alpha`.
    pub fn eval(&self, n: usize, alpha: f64) -> f64 {
        let t = alpha / self.half_len;
        horner(self.coeffs.row(n).iter().copied(), t) * alpha.exp()
    }

    /// Derivative of the 0-based basis function `n` at `alpha`.
    pub fn eval_derivative(&self, n: usize, alpha: f64) -> f64 {
        let t = alpha / self.half_len;
        let (p, dp) = horner_with_derivative(self.coeffs.row(n).iter().copied(), t);
        (dp / self.half_len + p) * alpha.exp()
    }

    /// All basis values at `alpha`.
    pub fn eval_all(&self, alpha: f64) -> DVector<f64> {
        DVector::from_iterator(self.len, (0..self.len).map(|n| self.eval(n, alpha)))
    }
}

fn horner(coeffs: impl DoubleEndedIterator<Item = f64>, t: f64) -> f64 {
    coeffs.rev().fold(0.0, |acc, c| acc * t + c)
}

fn horner_with_derivative(coeffs: impl DoubleEndedIterator<Item = f64>, t: f64) -> (f64, f64) {
    let mut p = 0.0;
    let mut dp = 0.0;
    for c in coeffs.rev() {
        dp = dp * t + p;
        p = p * t + c;
    }
    (p, dp)
}

/// `J_k = int_{-1}^{1} t^k e^{c t} dt` for `k = 0..=kmax`.
///
/// Integration by parts gives `J_k = T_k - (k / c) J_{k-1}` with
/// `T_k = (e^c - (-1)^k e^{-c}) / c`. The forward recurrence is stable for
/// `k <= c`; above that it amplifies rounding by `k / c` per step, so those
/// moments come from the backward recurrence started far above `kmax`.
pub fn exponential_moments(c: f64, kmax: usize) -> Vec<f64> {
    assert!(c > 0.0);
    let ec = c.exp();
    let emc = (-c).exp();
    let boundary = |k: usize| {
        let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
        (ec - sign * emc) / c
    };
    let mut out = vec![0.0; kmax + 1];
    out[0] = (ec - emc) / c;
    let switch = (c.floor() as usize).min(kmax);
    for k in 1..=switch {
        out[k] = boundary(k) - (k as f64 / c) * out[k - 1];
    }
    if switch < kmax {
        let start = kmax + 60 + c.ceil() as usize;
        let mut j = 0.0;
        for k in (switch + 2..=start).rev() {
            // j holds J_k, produce J_{k-1}
            j = (boundary(k) - j) * c / k as f64;
            if k - 1 <= kmax {
                out[k - 1] = j;
            }
        }
    }
    out
}

/// Build the first `len` basis functions on `(-half_len, half_len)`.
pub fn build_basis(len: usize, half_len: f64, quad_order: usize) -> Result<BasisSet> {
    if len == 0 {
        return Err(Error::Config("basis needs N >= 1".into()));
    }
    if !(half_len > 0.0) {
        return Err(Error::Config(format!("d must be positive, got {half_len}")));
    }
    if quad_order < 2 * len {
        return Err(Error::Config(format!(
            "quadrature order {quad_order} too small for N = {len} (need at least {})",
            2 * len
        )));
    }
    let d = half_len;
    let moments = exponential_moments(2.0 * d, 2 * len);
    let gram = DMatrix::from_fn(len, len, |j, k| d * moments[j + k]);
    let chol = gram.clone().cholesky().ok_or_else(|| {
        Error::Conditioning(format!(
            "moment matrix for N = {len}, d = {d} is not numerically positive definite"
        ))
    })?;
    let l = chol.l();
    let diag_ratio = l.diagonal().min() / l.diagonal().max();
    if !(diag_ratio > 1e-14) {
        return Err(Error::Conditioning(format!(
            "Cholesky pivot ratio {diag_ratio:.2e} for N = {len}, d = {d}"
        )));
    }
    let mut coeffs = invert_lower(&l)?;

    let quadrature = Quadrature::gauss_legendre(quad_order, -d, d);
    let (values, _) = tabulate(&coeffs, d, &quadrature);
    let g2 = weighted_gram(&values, &quadrature);
    let l2 = g2
        .cholesky()
        .ok_or_else(|| Error::Conditioning("re-orthogonalization Gram matrix not positive definite".into()))?
        .l();
    coeffs = invert_lower(&l2)? * coeffs;

    let (values, derivatives) = tabulate(&coeffs, d, &quadrature);
    let basis = BasisSet {
        len,
        half_len: d,
        coeffs,
        quadrature,
        values,
        derivatives,
    };
    let err = orthonormality_error(&basis);
    if err > 1e-8 {
        return Err(Error::Conditioning(format!(
            "orthonormality defect {err:.2e} after re-orthogonalization (N = {len}, d = {d})"
        )));
    }
    Ok(basis)
}

fn invert_lower(l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = l.nrows();
    let mut inv = DMatrix::<f64>::identity(n, n);
    if !l.solve_lower_triangular_mut(&mut inv) {
        return Err(Error::Conditioning("singular triangular factor".into()));
    }
    Ok(inv)
}

fn tabulate(coeffs: &DMatrix<f64>, d: f64, q: &Quadrature) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = coeffs.nrows();
    let mut values = DMatrix::zeros(n, q.len());
    let mut derivs = DMatrix::zeros(n, q.len());
    for (k, &alpha) in q.nodes.iter().enumerate() {
        let t = alpha / d;
        let e = alpha.exp();
        for row in 0..n {
            let (p, dp) = horner_with_derivative(coeffs.row(row).iter().copied(), t);
            values[(row, k)] = p * e;
            derivs[(row, k)] = (dp / d + p) * e;
        }
    }
    (values, derivs)
}

fn weighted_gram(values: &DMatrix<f64>, q: &Quadrature) -> DMatrix<f64> {
    let w = DMatrix::from_diagonal(&DVector::from_column_slice(&q.weights));
    values * w * values.transpose()
}

/// Largest deviation of the quadrature Gram matrix from the identity.
pub fn orthonormality_error(basis: &BasisSet) -> f64 {
    let g = weighted_gram(&basis.values, &basis.quadrature);
    let n = basis.len;
    (g - DMatrix::<f64>::identity(n, n)).abs().max()
}

/// `M_N` with entry `(m, n) = <Psi_n', Psi_m>`.
pub fn gram_derivative_matrix(basis: &BasisSet) -> DMatrix<f64> {
    let w = DMatrix::from_diagonal(&DVector::from_column_slice(&basis.quadrature.weights));
    &basis.values * w * basis.derivatives.transpose()
}
