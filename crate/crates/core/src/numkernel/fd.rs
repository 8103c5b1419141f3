use crate::par;

/// Default central-difference step.
pub const DEFAULT_EPS: f64 = 1e-5;

/// Floor of the denominator in [`relative_error`].
pub const REL_ERR_FLOOR: f64 = 1e-8;

/// Central-difference gradient `(f(x+eps) - f(x-eps)) / (2 eps)` per coordinate.
///
/// With the `parallel` feature, coordinates are evaluated concurrently; each
/// coordinate's estimate is computed identically either way.
pub fn finite_diff_grad<F>(f: F, params: &[f64], eps: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync + Send,
{
    par::map_indices(params.len(), |k| {
        let mut x = params.to_vec();
        x[k] = params[k] + eps;
        let up = f(&x);
        x[k] = params[k] - eps;
        let down = f(&x);
        (up - down) / (2.0 * eps)
    })
}

/// `|a - b| / max(|a|, |b|, 1e-8)`.
#[inline]
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERR_FLOOR)
}

pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(&x, &y)| relative_error(x, y))
        .fold(0.0, f64::max)
}
