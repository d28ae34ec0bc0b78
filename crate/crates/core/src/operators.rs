//! Pointwise coefficient matrices of the first-order system
//! `A(x) U_x + B(x) U_y = 0`.

use std::io::Write;

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::basis::{gram_derivative_matrix, BasisSet};
use crate::domain::Grid;
use crate::error::{Error, Result};

/// Singular values below this mark a grid point as (nearly) singular.
pub const SINGULAR_FLAG: f64 = 1e-8;

/// Minimum singular value below which assembly logs a warning.
pub const WARN_SIGMA: f64 = 1e-6;

/// `D1(x, y)` and `D2(x, y)` computed with the basis quadrature.
pub fn assemble_d1_d2(basis: &BasisSet, x: f64, y: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if !(y > 0.0) {
        return Err(Error::Domain { x, y });
    }
    let q = basis.quadrature();
    let v = basis.values_at_nodes();
    let dv = basis.derivatives_at_nodes();
    let mut w1 = v.clone();
    let mut w2 = v.clone();
    let mut w3 = v.clone();
    for (k, (&alpha, &w)) in q.nodes.iter().zip(&q.weights).enumerate() {
        let dx = x - alpha;
        let r2 = dx * dx + y * y;
        w1.column_mut(k).scale_mut(w * dx / r2);
        w2.column_mut(k).scale_mut(-w * dx / y);
        w3.column_mut(k).scale_mut(w * y / r2);
    }
    let d1 = &w1 * v.transpose();
    let d1 = (&d1 + d1.transpose()) * 0.5;
    let d2 = &w2 * dv.transpose() + &w3 * v.transpose();
    Ok((d1, d2))
}

/// `A = -D2` and `B = M_N - D1` at every lattice point.
#[derive(Debug, Clone)]
pub struct OperatorMatrices {
    pub m_n: DMatrix<f64>,
    per_axis: usize,
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
}

impl OperatorMatrices {
    /// Build directly from per-point `A` and `B` (0-based `(i, j)` stored
    /// at `i * per_axis + j`). Mostly useful for synthetic tests.
    pub fn from_parts(
        m_n: DMatrix<f64>,
        per_axis: usize,
        a: Vec<DMatrix<f64>>,
        b: Vec<DMatrix<f64>>,
    ) -> Self {
        assert_eq!(a.len(), per_axis * per_axis);
        assert_eq!(b.len(), per_axis * per_axis);
        Self { m_n, per_axis, a, b }
    }

    pub fn basis_len(&self) -> usize {
        self.m_n.nrows()
    }

    pub fn per_axis(&self) -> usize {
        self.per_axis
    }

    /// `A` at 0-based lattice point `(i, j)`.
    pub fn a(&self, i: usize, j: usize) -> &DMatrix<f64> {
        &self.a[i * self.per_axis + j]
    }

    /// `B` at 0-based lattice point `(i, j)`.
    pub fn b(&self, i: usize, j: usize) -> &DMatrix<f64> {
        &self.b[i * self.per_axis + j]
    }

    pub fn d1(&self, i: usize, j: usize) -> DMatrix<f64> {
        &self.m_n - self.b(i, j)
    }

    pub fn d2(&self, i: usize, j: usize) -> DMatrix<f64> {
        -self.a(i, j)
    }

    /// Write `M_N`, `D1` and `D2` at the given 0-based points as CSV rows
    /// `(kind, i, j, m, n, value)`.
    pub fn dump_csv<W: Write>(&self, out: &mut W, points: &[(usize, usize)]) -> Result<()> {
        writeln!(out, "kind,i,j,m,n,value")?;
        let nb = self.basis_len();
        for m in 0..nb {
            for n in 0..nb {
                writeln!(out, "M_N,,,{},{},{:.17e}", m + 1, n + 1, self.m_n[(m, n)])?;
            }
        }
        for &(i, j) in points {
            for (kind, mat) in [("D1", self.d1(i, j)), ("D2", self.d2(i, j))] {
                for m in 0..nb {
                    for n in 0..nb {
                        writeln!(out, "{kind},{},{},{},{},{:.17e}", i + 1, j + 1, m + 1, n + 1, mat[(m, n)])?;
                    }
                }
            }
        }
        Ok(())
    }
}

/// Precompute `A` and `B` on every lattice point.
pub fn assemble_a_b(grid: &Grid, basis: &BasisSet) -> Result<OperatorMatrices> {
    let m_n = gram_derivative_matrix(basis);
    let p = grid.len_per_axis();
    let pairs: Vec<(DMatrix<f64>, DMatrix<f64>)> = (0..p * p)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / p, k % p);
            let (d1, d2) = assemble_d1_d2(basis, grid.xs[i], grid.ys[j])?;
            Ok((-d2, &m_n - d1))
        })
        .collect::<Result<_>>()?;
    let (a, b): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    let ops = OperatorMatrices { m_n, per_axis: p, a, b };
    let report = check_invertibility(&ops);
    if report.min_singular_value < WARN_SIGMA {
        warn!(
            "B is close to singular: min singular value {:.3e} at lattice point {:?}",
            report.min_singular_value, report.argmin
        );
    }
    Ok(ops)
}

#[derive(Debug, Clone)]
pub struct InvertibilityReport {
    /// Smallest singular value of `B` over the lattice.
    pub min_singular_value: f64,
    /// 0-based lattice point where it occurs.
    pub argmin: (usize, usize),
    /// Largest 2-norm condition number of `B` over the lattice.
    pub max_condition: f64,
    /// Points where `B` has a singular value below [`SINGULAR_FLAG`].
    pub flagged: Vec<(usize, usize)>,
}

pub fn check_invertibility(ops: &OperatorMatrices) -> InvertibilityReport {
    let p = ops.per_axis;
    let sv: Vec<(f64, f64)> = (0..p * p)
        .into_par_iter()
        .map(|k| {
            let s = ops.b[k].clone().singular_values();
            (s.min(), s.max())
        })
        .collect();
    let mut min_sv = f64::INFINITY;
    let mut argmin = (0, 0);
    let mut max_cond: f64 = 0.0;
    let mut flagged = Vec::new();
    for (k, &(lo, hi)) in sv.iter().enumerate() {
        let ij = (k / p, k % p);
        if lo < min_sv {
            min_sv = lo;
            argmin = ij;
        }
        max_cond = max_cond.max(if lo > 0.0 { hi / lo } else { f64::INFINITY });
        if lo < SINGULAR_FLAG {
            flagged.push(ij);
        }
    }
    InvertibilityReport {
        min_singular_value: min_sv,
        argmin,
        max_condition: max_cond,
        flagged,
    }
}
