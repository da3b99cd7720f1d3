//! Small dense-vector kernels shared by the integrators.

/// `y += a * x`
#[inline]
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `z = a * x + b * y`
#[inline]
pub fn lincomb2(a: f64, x: &[f64], b: f64, y: &[f64], z: &mut [f64]) {
    debug_assert!(x.len() == z.len() && y.len() == z.len());
    for ((zi, xi), yi) in z.iter_mut().zip(x).zip(y) {
        *zi = a * xi + b * yi;
    }
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

pub fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn sub(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a - b).collect()
}
