//! Recovery of the attenuation function from the coefficient field, and
//! the two-step post-processing (threshold, then box smoothing).

use nalgebra::DVector;
use rayon::prelude::*;

use crate::basis::BasisSet;
use crate::domain::Grid;
use crate::field::CoefficientField;

/// Default fraction of `max |f|` below which values are zeroed.
pub const DEFAULT_THRESHOLD: f64 = 0.2;
/// Default smoothing window, in lattice points per side.
pub const DEFAULT_WINDOW: usize = 7;

/// Values on the interior lattice `i, j = 2..=T_x` (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct ImageField {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// `values[i * ys.len() + j]` is the value at `(xs[i], ys[j])`.
    pub values: Vec<f64>,
    pub meta: ImageMeta,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImageMeta {
    pub test_id: Option<u32>,
    pub method: String,
    pub noise: f64,
}

impl ImageField {
    /// Interior-lattice image filled by `f(x, y)`.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let p = grid.len_per_axis();
        let xs = grid.xs[1..p - 1].to_vec();
        let ys = grid.ys[1..p - 1].to_vec();
        let values = xs.iter().flat_map(|&x| ys.iter().map(move |&y| (x, y))).map(|(x, y)| f(x, y)).collect();
        Self { xs, ys, values, meta: ImageMeta::default() }
    }

    pub fn zeros_like(&self) -> Self {
        Self { values: vec![0.0; self.values.len()], ..self.clone() }
    }

    pub fn with_meta(mut self, meta: ImageMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.xs.len(), self.ys.len())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.ys.len() + j]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Index and value of the maximum.
    pub fn argmax(&self) -> (usize, usize, f64) {
        let (k, v) = self
            .values
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, v)| if v > best.1 { (k, v) } else { best });
        (k / self.ys.len(), k % self.ys.len(), v)
    }

    /// Discrete `L^2` norm with cell weight `h_x h_y`.
    pub fn l2_norm(&self) -> f64 {
        let hx = if self.xs.len() > 1 { self.xs[1] - self.xs[0] } else { 1.0 };
        let hy = if self.ys.len() > 1 { self.ys[1] - self.ys[0] } else { 1.0 };
        (self.values.iter().map(|v| v * v).sum::<f64>() * hx * hy).sqrt()
    }

    pub fn relative_l2_error(&self, truth: &ImageField) -> f64 {
        let diff = ImageField {
            values: self.values.iter().zip(&truth.values).map(|(a, b)| a - b).collect(),
            ..self.clone()
        };
        diff.l2_norm() / truth.l2_norm()
    }
}

/// Average over the source segment of the transport equation evaluated on
/// the truncated series:
///
/// `f = 1/(2d) int sum_n [cos(phi) d_x u_n + sin(phi) d_y u_n] Psi_n(alpha) dalpha`
///
/// with `cos(phi) = (x - alpha) / |x - x_alpha|`, `sin(phi) = y / |x - x_alpha|`
/// and central differences for both derivatives.
pub fn reconstruct_f(field: &CoefficientField, basis: &BasisSet, grid: &Grid) -> ImageField {
    let p = grid.len_per_axis();
    assert_eq!(field.per_axis(), p, "field and grid sizes differ");
    assert_eq!(field.basis_len(), basis.len(), "field and basis sizes differ");
    let q = basis.quadrature();
    let vt = basis.values_at_nodes().transpose();
    let scale = 1.0 / (2.0 * basis.half_len());
    let inner = p - 2;
    let values: Vec<f64> = (0..inner * inner)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / inner + 1, k % inner + 1);
            let (x, y) = (grid.xs[i], grid.ys[j]);
            let dx = central(field.point(i + 1, j), field.point(i - 1, j), 2.0 * grid.hx);
            let dy = central(field.point(i, j + 1), field.point(i, j - 1), 2.0 * grid.hy);
            let sx = &vt * dx;
            let sy = &vt * dy;
            let mut acc = 0.0;
            for (node, (&alpha, &w)) in q.nodes.iter().zip(&q.weights).enumerate() {
                let ax = x - alpha;
                let r = (ax * ax + y * y).sqrt();
                acc += w * (ax * sx[node] + y * sy[node]) / r;
            }
            scale * acc
        })
        .collect();
    ImageField {
        xs: grid.xs[1..p - 1].to_vec(),
        ys: grid.ys[1..p - 1].to_vec(),
        values,
        meta: ImageMeta::default(),
    }
}

fn central(ahead: &[f64], behind: &[f64], span: f64) -> DVector<f64> {
    DVector::from_iterator(ahead.len(), ahead.iter().zip(behind).map(|(a, b)| (a - b) / span))
}

/// Zero every value with `|f| < fraction * max |f|`.
pub fn threshold_filter(image: &ImageField, fraction: f64) -> ImageField {
    let m = image.max_abs();
    if m == 0.0 {
        return image.clone();
    }
    let cut = fraction * m;
    ImageField {
        values: image.values.iter().map(|&v| if v.abs() < cut { 0.0 } else { v }).collect(),
        ..image.clone()
    }
}

/// Replace each value by the mean over the image points inside the
/// centered `window x window` block.
pub fn smooth(image: &ImageField, window: usize) -> ImageField {
    let (nx, ny) = image.dims();
    ImageField {
        values: box_mean(&image.values, nx, ny, window),
        ..image.clone()
    }
}

/// Threshold followed by smoothing.
pub fn post_process(image: &ImageField, fraction: f64, window: usize) -> ImageField {
    smooth(&threshold_filter(image, fraction), window)
}

/// Clipped box mean of a row-major `nx x ny` array.
pub fn box_mean(values: &[f64], nx: usize, ny: usize, window: usize) -> Vec<f64> {
    assert!(window % 2 == 1, "smoothing window must be odd");
    assert_eq!(values.len(), nx * ny);
    let half = window / 2;
    (0..nx * ny)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / ny, k % ny);
            let (i0, i1) = (i.saturating_sub(half), (i + half).min(nx - 1));
            let (j0, j1) = (j.saturating_sub(half), (j + half).min(ny - 1));
            let mut sum = 0.0;
            for a in i0..=i1 {
                sum += values[a * ny + j0..=a * ny + j1].iter().sum::<f64>();
            }
            sum / ((i1 - i0 + 1) * (j1 - j0 + 1)) as f64
        })
        .collect()
}
