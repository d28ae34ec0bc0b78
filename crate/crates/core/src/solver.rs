//! Quasi-reversibility solve: minimize
//! `|M U|^2 + eps1 |U|^2 + eps2 (|Dx U|^2 + |Dy U|^2)` subject to the
//! boundary values, by eliminating the boundary unknowns and solving the
//! reduced normal equations (sparse Cholesky, or Jacobi-preconditioned CG).

use std::io::Write;

use log::debug;
use rayon::prelude::*;
use sprs::{CsMat, TriMat};

use crate::domain::Grid;
use crate::error::{Error, Result};
use crate::field::CoefficientField;
use crate::forward::BoundaryData;
use crate::operators::OperatorMatrices;

/// Linear solver for the reduced normal equations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinearSolver {
    /// Sparse Cholesky factorization with one refinement step.
    #[default]
    Cholesky,
    /// Conjugate gradients with a diagonal preconditioner.
    Pcg,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub eps1: f64,
    pub eps2: f64,
    /// Relative residual required of the reduced system.
    pub tol: f64,
    /// CG iteration cap.
    pub max_iter: usize,
    pub method: LinearSolver,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { eps1: 0.1, eps2: 0.01, tol: 1e-10, max_iter: 100_000, method: LinearSolver::Cholesky }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps1 >= 0.0 && self.eps2 >= 0.0) {
            return Err(Error::Config(format!(
                "regularization weights must be >= 0, got eps1 = {}, eps2 = {}",
                self.eps1, self.eps2
            )));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(Error::Config("solver tolerance and iteration cap must be positive".into()));
        }
        Ok(())
    }
}

/// Sparse pieces of the discrete functional. Indices are 0-based flat
/// indices `(i * P + j) * N + n`.
#[derive(Debug, Clone)]
pub struct SparseSystem {
    pub m: CsMat<f64>,
    pub dx: CsMat<f64>,
    pub dy: CsMat<f64>,
    /// Boundary unknowns and their imposed values, sorted by index.
    pub constrained: Vec<(usize, f64)>,
    pub per_axis: usize,
    pub basis_len: usize,
}

impl SparseSystem {
    pub fn unknowns(&self) -> usize {
        self.per_axis * self.per_axis * self.basis_len
    }
}

/// Stencil rows for interior points `i, j = 2..=T_x` (1-based), one block
/// of `N` rows per point:
/// `-(A/h_x + B/h_y) U(i,j) + A/h_x U(i+1,j) + B/h_y U(i,j+1)`.
///
/// The y-neighbour is `(i, j+1)`, matching the forward difference of the
/// continuous functional.
pub fn assemble_functional_matrix(grid: &Grid, ops: &OperatorMatrices) -> CsMat<f64> {
    let p = grid.len_per_axis();
    let nb = ops.basis_len();
    assert_eq!(ops.per_axis(), p, "operators and grid sizes differ");
    let inner = p - 2;
    let blocks: Vec<Vec<(usize, usize, f64)>> = (0..inner * inner)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / inner + 1, k % inner + 1);
            let a = ops.a(i, j) / grid.hx;
            let b = ops.b(i, j) / grid.hy;
            let centre = -(&a + &b);
            let row0 = k * nb;
            let mut out = Vec::with_capacity(3 * nb * nb);
            for (mat, (ci, cj)) in [(&centre, (i, j)), (&a, (i + 1, j)), (&b, (i, j + 1))] {
                let col0 = (ci * p + cj) * nb;
                for r in 0..nb {
                    for c in 0..nb {
                        let v = mat[(r, c)];
                        if v != 0.0 {
                            out.push((row0 + r, col0 + c, v));
                        }
                    }
                }
            }
            out
        })
        .collect();
    let mut tri = TriMat::new((inner * inner * nb, p * p * nb));
    for block in blocks {
        for (r, c, v) in block {
            tri.add_triplet(r, c, v);
        }
    }
    tri.to_csr()
}

/// Forward differences over every lattice edge, divided by the step.
/// Rows of `dx` are indexed by `(i, j, n)` with `i < P - 1`, rows of `dy`
/// by `(i, j, n)` with `j < P - 1`.
pub fn difference_matrices(per_axis: usize, basis_len: usize, hx: f64, hy: f64) -> (CsMat<f64>, CsMat<f64>) {
    let p = per_axis;
    let nb = basis_len;
    let col = |i: usize, j: usize, n: usize| (i * p + j) * nb + n;
    let mut tx = TriMat::new(((p - 1) * p * nb, p * p * nb));
    let mut ty = TriMat::new((p * (p - 1) * nb, p * p * nb));
    for i in 0..p {
        for j in 0..p {
            for n in 0..nb {
                if i + 1 < p {
                    let r = (i * p + j) * nb + n;
                    tx.add_triplet(r, col(i + 1, j, n), 1.0 / hx);
                    tx.add_triplet(r, col(i, j, n), -1.0 / hx);
                }
                if j + 1 < p {
                    let r = (i * (p - 1) + j) * nb + n;
                    ty.add_triplet(r, col(i, j + 1, n), 1.0 / hy);
                    ty.add_triplet(r, col(i, j, n), -1.0 / hy);
                }
            }
        }
    }
    (tx.to_csr(), ty.to_csr())
}

/// Constraints `u_n(x_i, y_j) = g_n(x_i, y_j)` on every boundary point.
pub fn boundary_constraints(per_axis: usize, data: &BoundaryData) -> Vec<(usize, f64)> {
    let nb = data.g.nrows();
    let mut out: Vec<(usize, f64)> = data
        .raw
        .points
        .iter()
        .enumerate()
        .flat_map(|(k, &(i, j))| (0..nb).map(move |n| ((i * per_axis + j) * nb + n, data.g[(n, k)])))
        .collect();
    out.sort_by_key(|&(idx, _)| idx);
    out
}

pub fn build_system(grid: &Grid, ops: &OperatorMatrices, data: &BoundaryData) -> SparseSystem {
    let p = grid.len_per_axis();
    let nb = ops.basis_len();
    let m = assemble_functional_matrix(grid, ops);
    let (dx, dy) = difference_matrices(p, nb, grid.hx, grid.hy);
    SparseSystem { m, dx, dy, constrained: boundary_constraints(p, data), per_axis: p, basis_len: nb }
}

fn gram(a: &CsMat<f64>) -> CsMat<f64> {
    let at: CsMat<f64> = a.transpose_view().to_csr();
    &at * a
}

/// `C = M^T M + eps1 I + eps2 (Dx^T Dx + Dy^T Dy)`.
pub fn assemble_normal_matrix(system: &SparseSystem, cfg: &SolverConfig) -> Result<CsMat<f64>> {
    cfg.validate()?;
    let n = system.unknowns();
    let mut c = gram(&system.m);
    if cfg.eps2 > 0.0 {
        let d = &gram(&system.dx) + &gram(&system.dy);
        c = &c + &d.map(|v| cfg.eps2 * v);
    }
    if cfg.eps1 > 0.0 {
        c = &c + &CsMat::<f64>::eye(n).map(|v| cfg.eps1 * v);
    }
    if cfg.eps1 == 0.0 && cfg.eps2 == 0.0 {
        let constrained: std::collections::HashSet<usize> = system.constrained.iter().map(|c| c.0).collect();
        let diag = c.diag();
        if let Some(k) = (0..n).find(|k| !constrained.contains(k) && diag.get(*k).copied().unwrap_or(0.0) <= 0.0) {
            return Err(Error::Singular(format!("free unknown {k} does not enter the functional")));
        }
    }
    Ok(c)
}

/// Value of the quadratic functional (without the `h_x h_y` factor).
pub fn functional_value(system: &SparseSystem, cfg: &SolverConfig, u: &[f64]) -> f64 {
    let sq = |a: &CsMat<f64>| {
        let v = spmv(a, u);
        v.iter().map(|x| x * x).sum::<f64>()
    };
    let u2: f64 = u.iter().map(|x| x * x).sum();
    sq(&system.m) + cfg.eps1 * u2 + cfg.eps2 * (sq(&system.dx) + sq(&system.dy))
}

/// `|M U|^2`.
pub fn residual_norm_sq(system: &SparseSystem, u: &[f64]) -> f64 {
    spmv(&system.m, u).iter().map(|x| x * x).sum()
}

/// CSR matrix-vector product.
pub fn spmv(a: &CsMat<f64>, x: &[f64]) -> Vec<f64> {
    assert!(a.is_csr());
    assert_eq!(a.cols(), x.len());
    let indptr = a.proper_indptr();
    let (idx, val) = (a.indices(), a.data());
    (0..a.rows())
        .into_par_iter()
        .with_min_len(256)
        .map(|r| {
            let (s, e) = (indptr[r], indptr[r + 1]);
            idx[s..e].iter().zip(&val[s..e]).map(|(&c, &v)| v * x[c]).sum()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    /// Final relative residual of the reduced system.
    pub residual: f64,
    pub functional: f64,
}

impl SolveDiagnostics {
    pub const CSV_HEADER: &'static str = "iterations,residual,functional";

    pub fn write_csv<W: Write>(&self, out: &mut W, header: bool) -> Result<()> {
        if header {
            writeln!(out, "{}", Self::CSV_HEADER)?;
        }
        writeln!(out, "{},{:.6e},{:.10e}", self.iterations, self.residual, self.functional)?;
        Ok(())
    }
}

/// Free/constrained split of a symmetric matrix.
struct Reduced {
    cff: CsMat<f64>,
    rhs: Vec<f64>,
    free: Vec<usize>,
}

fn reduce(c: &CsMat<f64>, constraints: &[(usize, f64)]) -> Result<Reduced> {
    let n = c.rows();
    let mut fixed = vec![None; n];
    for &(k, v) in constraints {
        if k >= n {
            return Err(Error::Index(format!("constraint index {k} outside 0..{n}")));
        }
        fixed[k] = Some(v);
    }
    let free: Vec<usize> = (0..n).filter(|&k| fixed[k].is_none()).collect();
    let mut pos = vec![usize::MAX; n];
    for (p, &k) in free.iter().enumerate() {
        pos[k] = p;
    }
    let indptr = c.proper_indptr();
    let (idx, val) = (c.indices(), c.data());
    let mut ip = Vec::with_capacity(free.len() + 1);
    let mut ind = Vec::new();
    let mut dat = Vec::new();
    let mut rhs = vec![0.0; free.len()];
    ip.push(0);
    for (p, &r) in free.iter().enumerate() {
        for k in indptr[r]..indptr[r + 1] {
            let col = idx[k];
            match fixed[col] {
                Some(g) => rhs[p] -= val[k] * g,
                None => {
                    ind.push(pos[col]);
                    dat.push(val[k]);
                }
            }
        }
        ip.push(ind.len());
    }
    let m = free.len();
    let cff = CsMat::try_new((m, m), ip, ind, dat)
        .map_err(|e| Error::Singular(format!("reduced matrix: {:?}", e.3)))?;
    Ok(Reduced { cff, rhs, free })
}

/// Solve `min U^T C U` subject to the constraints. Returns the full vector
/// (constrained entries equal their imposed values exactly), the iteration
/// count and the final relative residual of the reduced system.
pub fn solve_constrained(
    c: &CsMat<f64>,
    constraints: &[(usize, f64)],
    cfg: &SolverConfig,
) -> Result<(Vec<f64>, usize, f64)> {
    let red = reduce(c, constraints)?;
    let (x, iters, res) = match cfg.method {
        LinearSolver::Pcg => pcg(&red.cff, &red.rhs, cfg.tol, cfg.max_iter)?,
        LinearSolver::Cholesky => {
            let (x, res) = cholesky_solve(&red.cff, &red.rhs)?;
            if res > cfg.tol {
                return Err(Error::NoConvergence { iterations: 1, residual: res });
            }
            (x, 1, res)
        }
    };
    let mut u = vec![0.0; c.rows()];
    for &(k, v) in constraints {
        u[k] = v;
    }
    for (p, &k) in red.free.iter().enumerate() {
        u[k] = x[p];
    }
    Ok((u, iters, res))
}

/// Direct solve of a symmetric positive definite CSR system (lower
/// triangle used), followed by one step of iterative refinement.
/// Returns the solution and its relative residual.
pub fn cholesky_solve(a: &CsMat<f64>, b: &[f64]) -> Result<(Vec<f64>, f64)> {
    use faer::linalg::solvers::Solve;
    use faer::sparse::{SparseColMat, Triplet};

    let n = b.len();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], 0.0));
    }
    // CSR of a symmetric matrix read as CSC: the upper triangle of rows is
    // the lower triangle of columns
    let triplets: Vec<Triplet<usize, usize, f64>> = a
        .iter()
        .filter(|(_, (r, c))| r >= c)
        .map(|(v, (r, c))| Triplet::new(r, c, *v))
        .collect();
    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| Error::Singular(format!("sparse matrix construction failed: {e:?}")))?;
    let llt = mat
        .sp_cholesky(faer::Side::Lower)
        .map_err(|e| Error::Singular(format!("Cholesky factorization failed: {e:?}")))?;
    let solve = |rhs: &[f64]| -> Vec<f64> {
        let col = faer::Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
        let x = llt.solve(&col);
        (0..n).map(|i| x[(i, 0)]).collect()
    };
    let mut x = solve(b);
    let residual = |x: &[f64]| -> Vec<f64> { spmv(a, x).iter().zip(b).map(|(ax, b)| b - ax).collect() };
    let r = residual(&x);
    let dx = solve(&r);
    x.iter_mut().zip(&dx).for_each(|(x, d)| *x += d);
    let rel = residual(&x).iter().map(|v| v * v).sum::<f64>().sqrt() / bnorm;
    if !rel.is_finite() {
        return Err(Error::Singular("Cholesky solve produced non-finite values".into()));
    }
    Ok((x, rel))
}

/// Jacobi-preconditioned conjugate gradients from a zero initial guess.
pub fn pcg(a: &CsMat<f64>, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, usize, f64)> {
    let n = b.len();
    let dot = |x: &[f64], y: &[f64]| -> f64 { x.par_iter().zip(y).with_min_len(1024).map(|(a, b)| a * b).sum() };
    let diag = a.diag();
    let mut inv = vec![0.0; n];
    for (k, v) in inv.iter_mut().enumerate() {
        let d = diag.get(k).copied().unwrap_or(0.0);
        if !(d > 0.0) {
            return Err(Error::Singular(format!("non-positive diagonal entry {d} at free unknown {k}")));
        }
        *v = 1.0 / d;
    }
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok((x, 0, 0.0));
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;
    for it in 1..=max_iter {
        let ap = spmv(a, &p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Singular(format!("CG breakdown: p^T C p = {pap:e} at iteration {it}")));
        }
        let alpha = rz / pap;
        x.par_iter_mut().zip(&p).for_each(|(x, p)| *x += alpha * p);
        r.par_iter_mut().zip(&ap).for_each(|(r, q)| *r -= alpha * q);
        rel = dot(&r, &r).sqrt() / bnorm;
        if rel <= tol {
            debug!("pcg converged in {it} iterations, residual {rel:.3e}");
            return Ok((x, it, rel));
        }
        z.par_iter_mut().zip(&r).zip(&inv).for_each(|((z, r), d)| *z = r * d);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
    }
    Err(Error::NoConvergence { iterations: max_iter, residual: rel })
}

/// Result of a full QRM solve.
#[derive(Debug, Clone)]
pub struct QrmSolution {
    pub field: CoefficientField,
    pub diagnostics: SolveDiagnostics,
}

/// Assemble `C`, eliminate the boundary and solve.
pub fn solve_qrm(system: &SparseSystem, cfg: &SolverConfig) -> Result<QrmSolution> {
    let c = assemble_normal_matrix(system, cfg)?;
    let (u, iterations, residual) = solve_constrained(&c, &system.constrained, cfg)?;
    let functional = functional_value(system, cfg, &u);
    Ok(QrmSolution {
        field: CoefficientField::from_values(system.per_axis, system.basis_len, u),
        diagnostics: SolveDiagnostics { iterations, residual, functional },
    })
}
