use crate::error::{Error, Result};

/// Relative error with denominator `max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares `analytic` against central differences of `loss_fn` around
/// `params`, one coordinate at a time, and returns the worst relative error.
pub fn finite_diff_check<F>(mut loss_fn: F, params: &[f64], analytic: &[f64], h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if h <= 0.0 || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    if params.len() != analytic.len() {
        return Err(Error::DimensionMismatch {
            expected: params.len(),
            found: analytic.len(),
        });
    }
    let mut x = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + h;
        let plus = loss_fn(&x)?;
        x[i] = orig - h;
        let minus = loss_fn(&x)?;
        x[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("loss at coordinate {i}")));
        }
        let numeric = (plus - minus) / (2.0 * h);
        worst = worst.max(relative_error(numeric, analytic[i]));
    }
    Ok(worst)
}
