/// Central-difference gradient of `f` at `params`: `(f(θ+εe) − f(θ−εe)) / 2ε` per coordinate.
///
/// Panics if `eps` is not strictly positive.
pub fn finite_diff_gradient<F>(mut f: F, params: &[f64], eps: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(eps > 0.0, "finite difference step must be positive");
    let mut theta = params.to_vec();
    (0..theta.len())
        .map(|i| {
            let orig = theta[i];
            theta[i] = orig + eps;
            let up = f(&theta);
            theta[i] = orig - eps;
            let down = f(&theta);
            theta[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Largest `|a − b| / max(|a|, |b|, floor)` over paired entries.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(floor))
        .fold(0.0, f64::max)
}
