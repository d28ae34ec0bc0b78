//! Not-a-knot cubic spline on a uniform grid, kept in cardinal form so
//! that interpolation is a fixed linear map of the samples.

use nalgebra::DMatrix;

/// Linear map from samples on a uniform grid to spline values at `targets`.
///
/// Returns a `targets.len() x samples` matrix. Requires at least 4 samples.
pub fn not_a_knot_matrix(start: f64, step: f64, samples: usize, targets: &[f64]) -> DMatrix<f64> {
    assert!(samples >= 4, "not-a-knot spline needs at least 4 samples");
    let n = samples;
    let h2 = step * step;
    // second derivatives m satisfy sys * m = rhs * y
    let mut sys = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DMatrix::<f64>::zeros(n, n);
    sys[(0, 0)] = 1.0;
    sys[(0, 1)] = -2.0;
    sys[(0, 2)] = 1.0;
    sys[(n - 1, n - 3)] = 1.0;
    sys[(n - 1, n - 2)] = -2.0;
    sys[(n - 1, n - 1)] = 1.0;
    for i in 1..n - 1 {
        sys[(i, i - 1)] = 1.0;
        sys[(i, i)] = 4.0;
        sys[(i, i + 1)] = 1.0;
        rhs[(i, i - 1)] = 6.0 / h2;
        rhs[(i, i)] = -12.0 / h2;
        rhs[(i, i + 1)] = 6.0 / h2;
    }
    let second = sys
        .lu()
        .solve(&rhs)
        .expect("not-a-knot system is nonsingular for n >= 4");

    let mut out = DMatrix::<f64>::zeros(targets.len(), n);
    for (row, &x) in targets.iter().enumerate() {
        let pos = ((x - start) / step).clamp(0.0, (n - 1) as f64);
        let k = (pos.floor() as usize).min(n - 2);
        let s = pos - k as f64;
        let u = 1.0 - s;
        out[(row, k)] += u;
        out[(row, k + 1)] += s;
        let ck = h2 / 6.0 * (u * u * u - u);
        let ck1 = h2 / 6.0 * (s * s * s - s);
        for col in 0..n {
            out[(row, col)] += ck * second[(k, col)] + ck1 * second[(k + 1, col)];
        }
    }
    out
}
