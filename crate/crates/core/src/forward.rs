//! Forward model: line integrals from sources to boundary points, noise,
//! and projection of the data onto the basis.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::basis::BasisSet;
use crate::domain::{Grid, SourceSet};
use crate::error::{Error, Result};
use crate::field::CoefficientField;
use crate::phantom::Phantom;
use crate::spline::not_a_knot_matrix;

/// Sample points along the part of each ray inside the domain.
pub const RAY_SAMPLES: usize = 150;

/// Parametric range `[t0, t1] ⊂ [0, 1]` of `p + t (q - p)` inside the
/// closed rectangle, or `None` when the intersection is empty or a point.
pub fn clip_segment(
    p: (f64, f64),
    q: (f64, f64),
    (x_lo, x_hi): (f64, f64),
    (y_lo, y_hi): (f64, f64),
) -> Option<(f64, f64)> {
    let d = (q.0 - p.0, q.1 - p.1);
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    for (dp, lo, hi, start) in [(d.0, x_lo, x_hi, p.0), (d.1, y_lo, y_hi, p.1)] {
        if dp == 0.0 {
            if start < lo || start > hi {
                return None;
            }
            continue;
        }
        let a = (lo - start) / dp;
        let b = (hi - start) / dp;
        let (enter, leave) = if a < b { (a, b) } else { (b, a) };
        t0 = t0.max(enter);
        t1 = t1.min(leave);
    }
    (t1 > t0).then_some((t0, t1))
}

/// Integral of the phantom along the segment from `(alpha, 0)` to `point`,
/// by the midpoint rule with [`RAY_SAMPLES`] cells on the part inside the
/// domain.
pub fn line_integral(phantom: &Phantom, point: (f64, f64), alpha: f64) -> f64 {
    line_integral_with(phantom, point, alpha, RAY_SAMPLES)
}

pub fn line_integral_with(phantom: &Phantom, point: (f64, f64), alpha: f64, samples: usize) -> f64 {
    segment_integral(phantom, (alpha, 0.0), point, samples)
}

/// Midpoint-rule integral of the phantom over the segment `p -> q`, with
/// `samples` cells on the part inside the domain.
pub fn segment_integral(phantom: &Phantom, p: (f64, f64), q: (f64, f64), samples: usize) -> f64 {
    let (r, a, b) = phantom.bounds();
    let Some((t0, t1)) = clip_segment(p, q, (-r, r), (a, b)) else {
        return 0.0;
    };
    let dx = q.0 - p.0;
    let dy = q.1 - p.1;
    let len = (dx * dx + dy * dy).sqrt() * (t1 - t0);
    let dt = (t1 - t0) / samples as f64;
    let sum: f64 = (0..samples)
        .map(|k| {
            let t = t0 + (k as f64 + 0.5) * dt;
            phantom.eval(p.0 + t * dx, p.1 + t * dy)
        })
        .sum();
    sum * len / samples as f64
}

/// Measured values `u(x, x_alpha)` for every boundary lattice point and source.
#[derive(Debug, Clone, PartialEq)]
pub struct RawData {
    /// 0-based boundary lattice points.
    pub points: Vec<(usize, usize)>,
    pub coords: Vec<(f64, f64)>,
    pub alphas: Vec<f64>,
    /// Row-major `points x alphas`.
    pub values: Vec<f64>,
}

impl RawData {
    pub fn get(&self, point: usize, source: usize) -> f64 {
        self.values[point * self.alphas.len() + source]
    }

    pub fn row(&self, point: usize) -> &[f64] {
        let s = self.alphas.len();
        &self.values[point * s..(point + 1) * s]
    }

    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "boundary_x,boundary_y,alpha,value")?;
        for (k, &(x, y)) in self.coords.iter().enumerate() {
            for (s, &alpha) in self.alphas.iter().enumerate() {
                writeln!(out, "{x:.10},{y:.10},{alpha:.10},{:.12e}", self.get(k, s))?;
            }
        }
        Ok(())
    }
}

/// Simulate noiseless data on every boundary lattice point.
pub fn simulate_raw(phantom: &Phantom, grid: &Grid, sources: &SourceSet) -> RawData {
    let points = grid.boundary_points();
    let coords: Vec<(f64, f64)> = points.iter().map(|&(i, j)| (grid.xs[i], grid.ys[j])).collect();
    let alphas = sources.alphas.clone();
    let values: Vec<f64> = coords
        .par_iter()
        .flat_map_iter(|&pt| alphas.iter().map(move |&al| line_integral(phantom, pt, al)))
        .collect();
    RawData { points, coords, alphas, values }
}

/// Multiplicative uniform noise `u (1 + delta (2 xi - 1))`.
///
/// `xi` for boundary point `k` and source `s` is drawn from a ChaCha stream
/// keyed by `(seed, k)` at word position `2 s`, so each sample depends only
/// on its own indices.
pub fn add_noise(raw: &RawData, delta: f64, seed: u64) -> Result<RawData> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(Error::Config(format!("noise level must be >= 0, got {delta}")));
    }
    if delta == 0.0 {
        return Ok(raw.clone());
    }
    let ns = raw.alphas.len();
    let values = raw
        .values
        .par_chunks(ns)
        .enumerate()
        .flat_map_iter(|(k, row)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            row.iter().enumerate().map(move |(s, &u)| {
                rng.set_word_pos(2 * s as u128);
                let xi: f64 = rng.random();
                u * (1.0 + delta * (2.0 * xi - 1.0))
            })
        })
        .collect();
    Ok(RawData { values, ..raw.clone() })
}

/// Quadrature used to turn samples on the source grid into coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AlphaProjection {
    /// Not-a-knot cubic spline through the samples, integrated against the
    /// basis with its Gauss-Legendre rule.
    #[default]
    Spline,
    /// Composite trapezoid rule on the samples.
    Trapezoid,
}

/// `N x S` matrix mapping the `S` samples on the source grid to the `N`
/// coefficients `int u Psi_n dalpha`.
pub fn projection_matrix(alphas: &[f64], basis: &BasisSet, rule: AlphaProjection) -> DMatrix<f64> {
    let s = alphas.len();
    let n = basis.len();
    let step = (alphas[s - 1] - alphas[0]) / (s - 1) as f64;
    match rule {
        AlphaProjection::Spline if s >= 4 => {
            let q = basis.quadrature();
            let interp = not_a_knot_matrix(alphas[0], step, s, &q.nodes);
            let mut vw = basis.values_at_nodes().clone();
            for (k, w) in q.weights.iter().enumerate() {
                vw.column_mut(k).scale_mut(*w);
            }
            vw * interp
        }
        _ => DMatrix::from_fn(n, s, |row, col| {
            let w = if col == 0 || col == s - 1 { 0.5 * step } else { step };
            w * basis.eval(row, alphas[col])
        }),
    }
}

/// Raw data together with their basis coefficients `g_n(x)`.
#[derive(Debug, Clone)]
pub struct BoundaryData {
    pub raw: RawData,
    /// `N x points`; column `k` is `g(x_k)`.
    pub g: DMatrix<f64>,
}

impl BoundaryData {
    pub fn coefficients(&self, point: usize) -> DVector<f64> {
        self.g.column(point).into_owned()
    }
}

/// Project every boundary sample row onto the basis; the bottom side `y = a`
/// carries no data and is set to zero.
pub fn boundary_coefficients(raw: RawData, basis: &BasisSet, rule: AlphaProjection) -> BoundaryData {
    let proj = projection_matrix(&raw.alphas, basis, rule);
    let samples = DMatrix::from_row_slice(raw.points.len(), raw.alphas.len(), &raw.values);
    let mut g = proj * samples.transpose();
    for (k, &(_, j)) in raw.points.iter().enumerate() {
        if j == 0 {
            g.column_mut(k).fill(0.0);
        }
    }
    BoundaryData { raw, g }
}

/// Coefficients of the exact data at every lattice point, computed by
/// line integration at the basis quadrature nodes. Independent of the
/// solver; used to check the reconstruction formula in isolation.
pub fn exact_lattice_field(phantom: &Phantom, grid: &Grid, basis: &BasisSet, samples: usize) -> CoefficientField {
    let p = grid.len_per_axis();
    let n = basis.len();
    let q = basis.quadrature();
    let v = basis.values_at_nodes();
    let values: Vec<f64> = (0..p * p)
        .into_par_iter()
        .flat_map_iter(|k| {
            let pt = (grid.xs[k / p], grid.ys[k % p]);
            let u: Vec<f64> = q
                .nodes
                .iter()
                .zip(&q.weights)
                .map(|(&al, &w)| w * line_integral_with(phantom, pt, al, samples))
                .collect();
            let u = DVector::from_vec(u);
            let coeffs = v * u;
            (0..n).map(move |m| coeffs[m])
        })
        .collect();
    CoefficientField::from_values(p, n, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_basis;
    use crate::domain::{build_grid, source_positions, DomainConfig};
    use crate::phantom::{test_case, PhantomKind};

    fn test1_domain(cells: usize) -> DomainConfig {
        DomainConfig::new(1.0, 1.0, 3.0, 3.5, cells, 100, 10).unwrap()
    }

    #[test]
    fn clipping() {
        let b = ((-1.0, 1.0), (1.0, 3.0));
        assert_eq!(clip_segment((0.0, 0.0), (0.0, 3.0), b.0, b.1), Some((1.0 / 3.0, 1.0)));
        assert_eq!(clip_segment((-3.0, 0.0), (-1.0, 2.0), b.0, b.1), None);
        assert_eq!(clip_segment((0.0, 0.0), (0.0, 1.0), b.0, b.1), None);
        let (t0, t1) = clip_segment((3.0, 0.0), (-1.0, 2.0), b.0, b.1).unwrap();
        assert!((t0 - 0.5).abs() < 1e-15 && t1 == 1.0);
    }

    #[test]
    fn zero_phantom_gives_zero_data() {
        let dom = test1_domain(6);
        let grid = build_grid(&dom).unwrap();
        let raw = simulate_raw(&Phantom::zero(&dom), &grid, &source_positions(&dom).unwrap());
        assert!(raw.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn uniform_phantom_vertical_chord() {
        let dom = test1_domain(6);
        let p = Phantom::new(PhantomKind::Uniform(1.0), &dom);
        assert!((line_integral(&p, (0.0, 3.0), 0.0) - 2.0).abs() < 1e-13);
        // slanted chord through the whole domain from the bottom edge
        let v = line_integral(&p, (1.0, 3.0), -1.0);
        let exact = ((2.0f64).powi(2) + 3.0f64.powi(2)).sqrt() * (2.0 / 3.0);
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn bottom_side_sees_nothing() {
        let tc = test_case(1).unwrap();
        let dom = test1_domain(10);
        let grid = build_grid(&dom).unwrap();
        let raw = simulate_raw(&tc.phantom(&dom), &grid, &source_positions(&dom).unwrap());
        for (k, &(_, j)) in raw.points.iter().enumerate() {
            if j == 0 {
                assert!(raw.row(k).iter().all(|&v| v == 0.0));
            }
        }
        assert!(raw.values.iter().any(|&v| v > 0.1));
    }

    #[test]
    fn noise_bounds_and_reproducibility() {
        let tc = test_case(1).unwrap();
        let dom = test1_domain(8);
        let grid = build_grid(&dom).unwrap();
        let raw = simulate_raw(&tc.phantom(&dom), &grid, &source_positions(&dom).unwrap());
        assert_eq!(add_noise(&raw, 0.0, 3).unwrap(), raw);
        let a = add_noise(&raw, 0.15, 7).unwrap();
        let b = add_noise(&raw, 0.15, 7).unwrap();
        let c = add_noise(&raw, 0.15, 8).unwrap();
        assert_eq!(a.values, b.values);
        assert_ne!(a.values, c.values);
        for (n, u) in a.values.iter().zip(&raw.values) {
            assert!((n - u).abs() <= 0.15 * u.abs() + 1e-15);
        }
        assert!(add_noise(&raw, -0.1, 1).is_err());
    }

    #[test]
    fn noise_is_unbiased() {
        let n = 100_000;
        let raw = RawData {
            points: vec![(0, 0); 1000],
            coords: vec![(0.0, 0.0); 1000],
            alphas: vec![0.0; n / 1000],
            values: vec![1.0; n],
        };
        let noisy = add_noise(&raw, 0.5, 11).unwrap();
        let mean: f64 = noisy.values.iter().sum::<f64>() / n as f64;
        // (1 + 0.5 (2 xi - 1)) has standard deviation 0.5 / sqrt(3)
        let se = 0.5 / 3f64.sqrt() / (n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn projecting_a_basis_function_recovers_unit_vector() {
        let basis = build_basis(15, 3.5, 256).unwrap();
        let dom = DomainConfig::new(1.0, 1.0, 3.0, 3.5, 4, 100, 15).unwrap();
        let alphas = source_positions(&dom).unwrap().alphas;
        let proj = projection_matrix(&alphas, &basis, AlphaProjection::Spline);
        let u = DVector::from_iterator(alphas.len(), alphas.iter().map(|&a| basis.eval(1, a)));
        let g = proj * u;
        for (n, gn) in g.iter().enumerate() {
            let want = if n == 1 { 1.0 } else { 0.0 };
            assert!((gn - want).abs() < 1e-6, "g[{n}] = {gn}");
        }
    }

    #[test]
    fn zero_data_projects_to_zero_and_bottom_is_cleared() {
        let basis = build_basis(4, 3.5, 64).unwrap();
        let dom = DomainConfig::new(1.0, 1.0, 3.0, 3.5, 4, 20, 4).unwrap();
        let grid = build_grid(&dom).unwrap();
        let raw = simulate_raw(&Phantom::zero(&dom), &grid, &source_positions(&dom).unwrap());
        let bd = boundary_coefficients(raw, &basis, AlphaProjection::Spline);
        assert!(bd.g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn data_mirror_symmetry_for_test_one() {
        let tc = test_case(1).unwrap();
        let dom = test1_domain(10);
        let grid = build_grid(&dom).unwrap();
        let raw = simulate_raw(&tc.phantom(&dom), &grid, &source_positions(&dom).unwrap());
        let ns = raw.alphas.len();
        for (k, &(x, y)) in raw.coords.iter().enumerate() {
            let mirror = raw
                .coords
                .iter()
                .position(|&(x2, y2)| (x2 + x).abs() < 1e-12 && (y2 - y).abs() < 1e-12)
                .unwrap();
            for s in 0..ns {
                let a = raw.get(k, s);
                let b = raw.get(mirror, ns - 1 - s);
                assert!((a - b).abs() < 1e-10 * (1.0 + a.abs()), "({x}, {y}) source {s}");
            }
        }
    }
}
