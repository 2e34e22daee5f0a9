//! Central finite-difference gradient checking.
//!
//! The analytic gradients in this crate (log-probability, KL, SFT loss, the
//! full surrogate objective) are all verified against this independent
//! numerical route.
//!
//! ```
//! use grpo_lab::gradcheck::{central_diff, max_rel_error};
//!
//! // f(x, y) = x^2 + y^2, gradient (2x, 2y)
//! let g = central_diff(|v| v[0] * v[0] + v[1] * v[1], &[3.0, 4.0], 1e-5);
//! assert!(max_rel_error(&g, &[6.0, 8.0]) < 1e-8);
//! ```

/// Central finite differences of a scalar function at `point`.
pub fn central_diff<F>(f: F, point: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut grads = Vec::with_capacity(point.len());
    let mut x = point.to_vec();
    for i in 0..point.len() {
        x[i] = point[i] + h;
        let plus = f(&x);
        x[i] = point[i] - h;
        let minus = f(&x);
        x[i] = point[i];
        grads.push((plus - minus) / (2.0 * h));
    }
    grads
}

/// Maximum elementwise relative error between two gradient vectors.
///
/// The denominator is floored at 1e-6 so that components which are exactly
/// zero in both routes do not blow up the ratio.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}
