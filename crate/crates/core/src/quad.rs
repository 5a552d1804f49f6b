//! Small quadrature helpers shared across modules.
//!
//! Everything here is the composite trapezoidal rule in one flavor or
//! another; the oscillatory integrals in this crate ride on compactly
//! supported smooth integrands, for which the trapezoidal rule on a uniform
//! grid is spectrally accurate (all Euler–Maclaurin boundary terms vanish).

use num_complex::Complex64;

/// Trapezoidal rule on a uniform grid with spacing `h`.
pub fn trapezoid_uniform(h: f64, values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => 0.0,
        n => {
            let mut acc = 0.5 * (values[0] + values[n - 1]);
            for v in &values[1..n - 1] {
                acc += v;
            }
            acc * h
        }
    }
}

/// Trapezoidal rule on an arbitrary increasing grid.
pub fn trapezoid(xs: &[f64], values: &[f64]) -> f64 {
    assert_eq!(xs.len(), values.len(), "grid/value length mismatch");
    let mut acc = 0.0;
    for i in 1..xs.len() {
        acc += 0.5 * (values[i] + values[i - 1]) * (xs[i] - xs[i - 1]);
    }
    acc
}

/// Complex-valued trapezoidal rule on a uniform grid.
pub fn trapezoid_uniform_complex(h: f64, values: &[Complex64]) -> Complex64 {
    match values.len() {
        0 | 1 => Complex64::new(0.0, 0.0),
        n => {
            let mut acc = 0.5 * (values[0] + values[n - 1]);
            for v in &values[1..n - 1] {
                acc += v;
            }
            acc * h
        }
    }
}

/// Trapezoidal weights for an arbitrary increasing grid: `w_i` such that
/// `Σ w_i f(x_i)` is the trapezoidal rule.
pub fn trapezoid_weights(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut w = vec![0.0; n];
    for i in 1..n {
        let half = 0.5 * (xs[i] - xs[i - 1]);
        w[i - 1] += half;
        w[i] += half;
    }
    w
}
