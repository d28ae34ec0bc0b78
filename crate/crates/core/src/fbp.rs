//! Filtered back projection on an `(r, theta)` sinogram assembled from the
//! incomplete source-segment data, with unmeasured lines set to zero.

use std::f64::consts::PI;

use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::domain::{DomainConfig, Grid};
use crate::forward::{clip_segment, segment_integral, RawData};
use crate::phantom::Phantom;
use crate::recon::{ImageField, ImageMeta};

/// Number of intervals on the `r` axis.
pub const R_INTERVALS: usize = 216;
/// Number of projection angles (one per degree on `[0, 180)`).
pub const ANGLES: usize = 180;

/// `Rf(r, theta)` about the centre of the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub rs: Vec<f64>,
    /// Angles in radians.
    pub thetas: Vec<f64>,
    /// `values[k * rs.len() + i]` belongs to `(rs[i], thetas[k])`.
    pub values: Vec<f64>,
    /// True where the value comes from a measurement.
    pub measured: Vec<bool>,
    pub center: (f64, f64),
}

impl Sinogram {
    fn empty(domain: &DomainConfig) -> Self {
        let w = 2.0 * domain.half_width;
        let hgt = domain.y_max - domain.y_min;
        let l = (w * w + hgt * hgt).sqrt();
        let rs = (0..=R_INTERVALS)
            .map(|i| -0.5 * l + i as f64 * l / R_INTERVALS as f64)
            .collect();
        let thetas = (0..ANGLES).map(|k| (k as f64).to_radians()).collect();
        let n = (R_INTERVALS + 1) * ANGLES;
        Self {
            rs,
            thetas,
            values: vec![0.0; n],
            measured: vec![false; n],
            center: (0.0, 0.5 * (domain.y_min + domain.y_max)),
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rs.len(), self.thetas.len())
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[k * self.rs.len() + i]
    }

    pub fn spacing(&self) -> f64 {
        self.rs[1] - self.rs[0]
    }

    /// Fraction of bins that carry measured data.
    pub fn coverage(&self) -> f64 {
        self.measured.iter().filter(|&&m| m).count() as f64 / self.measured.len() as f64
    }

    /// Far and near end points of the line `(r, theta)` clipped to the
    /// closed domain, or `None` if it misses it.
    fn line(&self, r: f64, theta: f64, bounds: (f64, f64, f64)) -> Option<((f64, f64), (f64, f64))> {
        let (rr, a, b) = bounds;
        let (c, s) = (theta.cos(), theta.sin());
        let foot = (self.center.0 + r * c, self.center.1 + r * s);
        let span = 4.0 * (rr + (b - a) + b);
        let p = (foot.0 + span * s, foot.1 - span * c);
        let q = (foot.0 - span * s, foot.1 + span * c);
        let (t0, t1) = clip_segment(p, q, (-rr, rr), (a, b))?;
        let at = |t: f64| (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1));
        Some((at(t0), at(t1)))
    }
}

/// Sinogram from measured data: a line `(r, theta)` is measured when it
/// crosses the domain and meets `y = 0` inside the source segment. Its
/// value is the sample at the nearest boundary lattice point to the far
/// exit point and the nearest source.
pub fn build_sinogram(raw: &RawData, domain: &DomainConfig, grid: &Grid) -> Sinogram {
    let mut sino = Sinogram::empty(domain);
    let bounds = (domain.half_width, domain.y_min, domain.y_max);
    let d = domain.source_half_len;
    let alpha0 = raw.alphas[0];
    let dalpha = raw.alphas[1] - raw.alphas[0];
    let tol = grid.hx.max(grid.hy);
    let nr = sino.rs.len();
    let cells: Vec<Option<f64>> = (0..nr * sino.thetas.len())
        .into_par_iter()
        .map(|idx| {
            let (k, i) = (idx / nr, idx % nr);
            let (r, theta) = (sino.rs[i], sino.thetas[k]);
            let (c, s) = (theta.cos(), theta.sin());
            if c.abs() < 1e-12 {
                return None;
            }
            // the line is {foot + t (-sin, cos)}; it meets y = 0 at
            let foot = (sino.center.0 + r * c, sino.center.1 + r * s);
            let t = -foot.1 / c;
            let alpha = foot.0 - t * s;
            if !(alpha.abs() < d) {
                return None;
            }
            let (e0, e1) = sino.line(r, theta, bounds)?;
            let exit = if e0.1 > e1.1 || (e0.1 == e1.1 && (e0.0 - alpha).abs() > (e1.0 - alpha).abs()) {
                e0
            } else {
                e1
            };
            let (kp, dist) = raw
                .coords
                .iter()
                .enumerate()
                .map(|(kp, &(x, y))| (kp, (x - exit.0).hypot(y - exit.1)))
                .min_by(|a, b| a.1.total_cmp(&b.1))?;
            if dist > tol {
                return None;
            }
            let s_idx = (((alpha - alpha0) / dalpha).round() as usize).min(raw.alphas.len() - 1);
            Some(raw.get(kp, s_idx))
        })
        .collect();
    for (idx, cell) in cells.into_iter().enumerate() {
        if let Some(v) = cell {
            sino.values[idx] = v;
            sino.measured[idx] = true;
        }
    }
    sino
}

/// Complete sinogram by direct line integration of the phantom.
pub fn full_sinogram(phantom: &Phantom, domain: &DomainConfig, samples: usize) -> Sinogram {
    let mut sino = Sinogram::empty(domain);
    let bounds = phantom.bounds();
    let nr = sino.rs.len();
    let values: Vec<f64> = (0..nr * sino.thetas.len())
        .into_par_iter()
        .map(|idx| {
            let (k, i) = (idx / nr, idx % nr);
            match sino.line(sino.rs[i], sino.thetas[k], bounds) {
                Some((p, q)) => segment_integral(phantom, p, q, samples),
                None => 0.0,
            }
        })
        .collect();
    sino.values = values;
    sino.measured.fill(true);
    sino
}

/// Ram-Lak filtering of each projection (zero-padded FFT convolution with
/// the band-limited ramp kernel) followed by linearly interpolated back
/// projection onto the interior lattice.
pub fn fbp_reconstruct(sino: &Sinogram, grid: &Grid) -> ImageField {
    let (nr, nt) = sino.dims();
    let dr = sino.spacing();
    let len = (2 * nr - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);

    // h(0) = 1/(4 dr^2), h(n odd) = -1/(pi n dr)^2, h(n even) = 0; the
    // extra dr is the convolution weight
    let mut kernel = vec![Complex::new(0.0, 0.0); len];
    for n in 0..nr as isize {
        let v = if n == 0 {
            0.25 / (dr * dr)
        } else if n % 2 == 1 {
            -1.0 / (PI * n as f64 * dr).powi(2)
        } else {
            0.0
        };
        kernel[n as usize].re = v * dr;
        if n > 0 {
            kernel[len - n as usize].re = v * dr;
        }
    }
    fwd.process(&mut kernel);

    let filtered: Vec<Vec<f64>> = (0..nt)
        .into_par_iter()
        .map(|k| {
            let mut buf = vec![Complex::new(0.0, 0.0); len];
            for i in 0..nr {
                buf[i].re = sino.get(i, k);
            }
            fwd.process(&mut buf);
            for (b, h) in buf.iter_mut().zip(&kernel) {
                *b *= *h;
            }
            inv.process(&mut buf);
            buf[..nr].iter().map(|c| c.re / len as f64).collect()
        })
        .collect();

    let weight = PI / nt as f64;
    let trig: Vec<(f64, f64)> = sino.thetas.iter().map(|t| (t.cos(), t.sin())).collect();
    let r0 = sino.rs[0];
    ImageField::from_fn(grid, |x, y| {
        let (px, py) = (x - sino.center.0, y - sino.center.1);
        let mut acc = 0.0;
        for (q, &(c, s)) in filtered.iter().zip(&trig) {
            let pos = (px * c + py * s - r0) / dr;
            if pos < 0.0 || pos > (nr - 1) as f64 {
                continue;
            }
            let i = (pos.floor() as usize).min(nr - 2);
            let w = pos - i as f64;
            acc += (1.0 - w) * q[i] + w * q[i + 1];
        }
        weight * acc
    })
    .with_meta(ImageMeta { method: "fbp".into(), ..ImageMeta::default() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_grid, source_positions};
    use crate::forward::simulate_raw;
    use crate::phantom::test_case;

    fn test1() -> (DomainConfig, Grid, Phantom) {
        let tc = test_case(1).unwrap();
        let dom = DomainConfig::new(tc.half_width, tc.y_min, tc.y_max, tc.source_half_len, 40, 100, 4).unwrap();
        let grid = build_grid(&dom).unwrap();
        let ph = tc.phantom(&dom);
        (dom, grid, ph)
    }

    #[test]
    fn grid_sizes() {
        let (dom, _, _) = test1();
        let s = Sinogram::empty(&dom);
        assert_eq!(s.dims(), (217, 180));
        let l = 8.0f64.sqrt();
        assert!((s.rs[0] + l / 2.0).abs() < 1e-15);
        assert!((s.rs[216] - l / 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_phantom_and_zero_image() {
        let (dom, grid, _) = test1();
        let zero = Phantom::zero(&dom);
        let raw = simulate_raw(&zero, &grid, &source_positions(&dom).unwrap());
        let s = build_sinogram(&raw, &dom, &grid);
        assert!(s.values.iter().all(|&v| v == 0.0));
        let img = fbp_reconstruct(&s, &grid);
        assert!(img.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn horizontal_lines_unmeasured_and_partial_coverage() {
        let (dom, grid, ph) = test1();
        let raw = simulate_raw(&ph, &grid, &source_positions(&dom).unwrap());
        let s = build_sinogram(&raw, &dom, &grid);
        for i in 0..217 {
            assert!(!s.measured[90 * 217 + i]);
        }
        let c = s.coverage();
        assert!(c > 0.0 && c < 1.0, "coverage {c}");
    }

    #[test]
    fn measured_bins_match_direct_integrals() {
        let (dom, grid, ph) = test1();
        let raw = simulate_raw(&ph, &grid, &source_positions(&dom).unwrap());
        let s = build_sinogram(&raw, &dom, &grid);
        let full = full_sinogram(&ph, &dom, 300);
        let (mut err, mut scale) = (0.0f64, 0.0f64);
        for (k, m) in s.measured.iter().enumerate() {
            if *m {
                err = err.max((s.values[k] - full.values[k]).abs());
                scale = scale.max(full.values[k].abs());
            }
        }
        // nearest-sample lookup shifts each line by at most half a cell
        assert!(err < 0.35 * scale, "{err} vs {scale}");
    }

    #[test]
    fn complete_data_recovers_bump() {
        let (dom, grid, ph) = test1();
        let img = fbp_reconstruct(&full_sinogram(&ph, &dom, 200), &grid);
        let (i, j, v) = img.argmax();
        assert!(img.xs[i].abs() <= grid.hx + 1e-12);
        assert!((img.ys[j] - 2.0).abs() <= grid.hy + 1e-12);
        assert!((v - 1.0).abs() < 0.1, "peak {v}");
        let truth = ImageField::from_fn(&grid, |x, y| ph.eval(x, y));
        assert!(img.relative_l2_error(&truth) < 0.1);
    }
}
