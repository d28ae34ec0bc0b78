//! The coefficient field `U(x, y) = (u_1, ..., u_N)` on the lattice.

use crate::basis::BasisSet;

/// Values `u_n(x_i, y_j)` stored in the flat unknown order: 0-based point
/// `(i, j)` and component `n` live at `(i * P + j) * N + n`, `P = T_x + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    per_axis: usize,
    basis_len: usize,
    values: Vec<f64>,
}

impl CoefficientField {
    pub fn zeros(per_axis: usize, basis_len: usize) -> Self {
        Self {
            per_axis,
            basis_len,
            values: vec![0.0; per_axis * per_axis * basis_len],
        }
    }

    pub fn from_values(per_axis: usize, basis_len: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), per_axis * per_axis * basis_len);
        Self { per_axis, basis_len, values }
    }

    pub fn per_axis(&self) -> usize {
        self.per_axis
    }

    pub fn basis_len(&self) -> usize {
        self.basis_len
    }

    pub fn offset(&self, i: usize, j: usize) -> usize {
        (i * self.per_axis + j) * self.basis_len
    }

    pub fn get(&self, i: usize, j: usize, n: usize) -> f64 {
        self.values[self.offset(i, j) + n]
    }

    pub fn point(&self, i: usize, j: usize) -> &[f64] {
        let o = self.offset(i, j);
        &self.values[o..o + self.basis_len]
    }

    pub fn point_mut(&mut self, i: usize, j: usize) -> &mut [f64] {
        let o = self.offset(i, j);
        &mut self.values[o..o + self.basis_len]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Truncated series `sum_n u_n(x_i, y_j) Psi_n(alpha)` at a lattice point.
    pub fn evaluate_u(&self, basis: &BasisSet, i: usize, j: usize, alpha: f64) -> f64 {
        self.point(i, j)
            .iter()
            .enumerate()
            .map(|(n, &c)| c * basis.eval(n, alpha))
            .sum()
    }

    /// Replace each component by its mean over the in-lattice points of a
    /// centered `window x window` block.
    pub fn smoothed(&self, window: usize) -> Self {
        let p = self.per_axis;
        let n = self.basis_len;
        let mut out = Self::zeros(p, n);
        for comp in 0..n {
            let plane: Vec<f64> = (0..p * p).map(|k| self.values[k * n + comp]).collect();
            let smooth = crate::recon::box_mean(&plane, p, p, window);
            for (k, v) in smooth.into_iter().enumerate() {
                out.values[k * n + comp] = v;
            }
        }
        out
    }
}
