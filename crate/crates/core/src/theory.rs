//! Numerical checks of the Carleman estimate on `H~^1(a, b)` and of the
//! noise-to-error convergence rate of the regularized solve.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::experiment::Problem;
use crate::field::CoefficientField;
use crate::solver::SolverConfig;

/// One evaluation of `int (w')^2 e^{2 lambda y} >= 1/2 int (w')^2 e^{2 lambda y}
/// + 1/2 lambda^2 int w^2 e^{2 lambda y}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarlemanEntry {
    pub lambda: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `lhs - rhs`.
    pub slack: f64,
    /// `slack / lhs` (0 when `lhs` is 0).
    pub rel_slack: f64,
    /// Relative change of the larger side between step `h` and `2h`.
    pub quad_error: f64,
}

/// Default number of uniform samples on `[a, b]`.
pub const CARLEMAN_SAMPLES: usize = 4001;

/// Derivative of uniform samples: central differences inside, second-order
/// one-sided at the ends.
fn derivative(w: &[f64], h: f64) -> Vec<f64> {
    let n = w.len();
    (0..n)
        .map(|k| {
            if k == 0 {
                (-3.0 * w[0] + 4.0 * w[1] - w[2]) / (2.0 * h)
            } else if k == n - 1 {
                (3.0 * w[n - 1] - 4.0 * w[n - 2] + w[n - 3]) / (2.0 * h)
            } else {
                (w[k + 1] - w[k - 1]) / (2.0 * h)
            }
        })
        .collect()
}

/// Composite Simpson on samples with spacing `h` taken every `stride`
/// points. The number of panels must be even.
fn simpson(f: &[f64], h: f64, stride: usize) -> f64 {
    let m = (f.len() - 1) / stride;
    let mut acc = f[0] + f[m * stride];
    for k in 1..m {
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f[k * stride];
    }
    acc * h * stride as f64 / 3.0
}

/// Check the estimate for `w` sampled uniformly on `[a, b]`.
pub fn carleman_check(w: &[f64], a: f64, b: f64, lambda: f64) -> Result<CarlemanEntry> {
    let n = w.len();
    if n < 5 || !(n - 1).is_multiple_of(2) {
        return Err(Error::Config(format!("need an odd number of at least 5 samples, got {n}")));
    }
    if !(b > a) || !(lambda > 0.0) {
        return Err(Error::Config(format!("need a < b and lambda > 0, got [{a}, {b}], {lambda}")));
    }
    let scale = w.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if w[n - 1].abs() > 1e-12 * scale {
        return Err(Error::Precondition(format!("w(b) = {} is not zero", w[n - 1])));
    }
    let h = (b - a) / (n - 1) as f64;
    let dw = derivative(w, h);
    // weights relative to e^{2 lambda b} keep large lambda finite
    let weight: Vec<f64> = (0..n).map(|k| (2.0 * lambda * (a + k as f64 * h - b)).exp()).collect();
    let grad: Vec<f64> = dw.iter().zip(&weight).map(|(d, e)| d * d * e).collect();
    let mass: Vec<f64> = w.iter().zip(&weight).map(|(v, e)| v * v * e).collect();
    let unscale = (2.0 * lambda * b).exp();
    let sides = |stride| {
        let g = simpson(&grad, h, stride) * unscale;
        let m = simpson(&mass, h, stride) * unscale;
        (g, 0.5 * g + 0.5 * lambda * lambda * m)
    };
    let (lhs, rhs) = sides(1);
    let quad_error = if (n - 1).is_multiple_of(4) {
        let (l2, r2) = sides(2);
        let big = lhs.abs().max(rhs.abs());
        if big > 0.0 {
            (lhs - l2).abs().max((rhs - r2).abs()) / big
        } else {
            0.0
        }
    } else {
        f64::NAN
    };
    let slack = lhs - rhs;
    Ok(CarlemanEntry {
        lambda,
        lhs,
        rhs,
        slack,
        rel_slack: if lhs > 0.0 { slack / lhs } else { 0.0 },
        quad_error,
    })
}

/// Smooth test function on `[a, b]`; evaluated with its value at `b`
/// subtracted so that `w(b) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    /// Coefficients in powers of `(y - a) / (b - a)`.
    Polynomial(Vec<f64>),
    /// `amp * sin(freq * pi * t + phase) * exp(-width * (t - centre)^2)`
    /// with `t = (y - a) / (b - a)`.
    TrigBump { amp: f64, freq: f64, phase: f64, centre: f64, width: f64 },
}

impl TestFunction {
    fn raw(&self, t: f64) -> f64 {
        match self {
            TestFunction::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ck| acc * t + ck),
            TestFunction::TrigBump { amp, freq, phase, centre, width } => {
                amp * (freq * std::f64::consts::PI * t + phase).sin() * (-width * (t - centre).powi(2)).exp()
            }
        }
    }

    /// Values on `samples` uniform points of `[a, b]`, the last exactly 0.
    pub fn sample(&self, samples: usize) -> Vec<f64> {
        let end = self.raw(1.0);
        let mut w: Vec<f64> = (0..samples)
            .map(|k| self.raw(k as f64 / (samples - 1) as f64) - end)
            .collect();
        w[samples - 1] = 0.0;
        w
    }
}

/// `count` random non-constant polynomials of degree at most 6 followed by `bumps`
/// random trigonometric bumps.
pub fn random_test_functions(count: usize, bumps: usize, seed: u64) -> Vec<TestFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count + bumps);
    for _ in 0..count {
        let deg = rng.random_range(1..=6usize);
        out.push(TestFunction::Polynomial((0..=deg).map(|_| rng.random_range(-1.0..1.0)).collect()));
    }
    for _ in 0..bumps {
        out.push(TestFunction::TrigBump {
            amp: rng.random_range(-2.0..2.0),
            freq: rng.random_range(0.5..6.0),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
            centre: rng.random_range(0.0..1.0),
            width: rng.random_range(0.0..20.0),
        });
    }
    out
}

/// Every function against every `lambda`, in function-major order.
pub fn carleman_sweep(
    functions: &[TestFunction],
    lambdas: &[f64],
    a: f64,
    b: f64,
    samples: usize,
) -> Result<Vec<CarlemanEntry>> {
    functions
        .par_iter()
        .flat_map_iter(|f| {
            let w = f.sample(samples);
            lambdas.iter().map(move |&l| carleman_check(&w, a, b, l)).collect::<Vec<_>>()
        })
        .collect()
}

/// Discrete `H^1` norm on the lattice: `h_x h_y` times the sum over
/// interior lines `x_i` of `(U_x)^2 + (U_y)^2 + U^2` with forward
/// differences, summed over all coefficients.
pub fn h1_norm(field: &CoefficientField, hx: f64, hy: f64) -> f64 {
    let p = field.per_axis();
    let nb = field.basis_len();
    let mut acc = 0.0;
    for i in 1..p - 1 {
        for j in 0..p - 1 {
            for n in 0..nb {
                let u = field.get(i, j, n);
                let ux = (field.get(i + 1, j, n) - u) / hx;
                let uy = (field.get(i, j + 1, n) - u) / hy;
                acc += ux * ux + uy * uy + u * u;
            }
        }
    }
    (acc * hx * hy).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub delta: f64,
    pub eps: f64,
    /// `||U_delta - U_0||` with both solves at the same `eps`.
    pub error: f64,
    /// `||U_0||`; NaN for `delta = 0`.
    pub clean_norm: f64,
}

/// For each `delta`, solve with noisy and noiseless data at
/// `eps1 = eps2 = delta^2` and measure the difference in the discrete
/// `H^1` norm. The noise uses one seed for all `delta`. At `delta = 0`
/// the data coincide and no solve is done (`eps = 0` is singular).
pub fn convergence_study(problem: &Problem, deltas: &[f64], seed: u64) -> Result<Vec<ConvergenceRow>> {
    let (hx, hy) = (problem.grid.hx, problem.grid.hy);
    deltas
        .par_iter()
        .map(|&delta| {
            let eps = delta * delta;
            if delta == 0.0 {
                return Ok(ConvergenceRow { delta, eps, error: 0.0, clean_norm: f64::NAN });
            }
            let cfg = SolverConfig { eps1: eps, eps2: eps, ..SolverConfig::default() };
            let clean = problem.solve(&problem.clean, &cfg)?.field;
            let noisy = problem.solve(&problem.noisy(delta, seed)?, &cfg)?.field;
            let diff: Vec<f64> = noisy.as_slice().iter().zip(clean.as_slice()).map(|(a, b)| a - b).collect();
            let diff = CoefficientField::from_values(clean.per_axis(), clean.basis_len(), diff);
            Ok(ConvergenceRow { delta, eps, error: h1_norm(&diff, hx, hy), clean_norm: h1_norm(&clean, hx, hy) })
        })
        .collect()
}

/// `error(delta_k) / error(delta_{k+1})` for consecutive rows.
pub fn error_ratios(rows: &[ConvergenceRow]) -> Vec<f64> {
    rows.windows(2).map(|w| w[0].error / w[1].error).collect()
}

/// Least-squares slope of `log error` against `log delta`.
pub fn loglog_slope(rows: &[ConvergenceRow]) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.delta > 0.0 && r.error > 0.0)
        .map(|r| (r.delta.ln(), r.error.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
