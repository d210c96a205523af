//! Riemannian SGD on the Poincaré ball.
//!
//! The Euclidean gradient is rescaled by the inverse metric
//! `(1 - c|θ|²)² / 4` and the step is projected back inside the ball.

use crate::geometry::{raw, sq_norm, CurvatureSpace};

/// `grad * (1 - c|θ|²)² / 4`.
pub fn riemannian_rescale(space: &CurvatureSpace, theta: &[f64], grad: &[f64]) -> Vec<f64> {
    let factor = inverse_metric_factor(space.c(), theta);
    grad.iter().map(|g| g * factor).collect()
}

pub(crate) fn inverse_metric_factor(c: f64, theta: &[f64]) -> f64 {
    let t = 1.0 - c * sq_norm(theta);
    t * t / 4.0
}

/// `proj(θ - η · rescale(θ, grad))`.
pub fn rsgd_step(space: &CurvatureSpace, theta: &[f64], grad: &[f64], eta: f64) -> Vec<f64> {
    let mut out = theta.to_vec();
    rsgd_step_in_place(space.c(), &mut out, grad, eta);
    out
}

/// In-place variant used by the trainer on embedding table rows.
pub fn rsgd_step_in_place(c: f64, theta: &mut [f64], grad: &[f64], eta: f64) {
    let factor = inverse_metric_factor(c, theta);
    for (t, g) in theta.iter_mut().zip(grad) {
        *t -= eta * factor * g;
    }
    if c * sq_norm(theta) >= 1.0 {
        let projected = raw::project(c, theta);
        theta.copy_from_slice(&projected);
    }
}

/// Plain Euclidean step for feed-forward parameters.
pub fn sgd_step_in_place(param: &mut [f64], grad: &[f64], eta: f64) {
    for (p, g) in param.iter_mut().zip(grad) {
        *p -= eta * g;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rescale_examples() {
        let unit = CurvatureSpace::unit_ball(2).unwrap();
        assert_eq!(riemannian_rescale(&unit, &[0.0, 0.0], &[4.0, -8.0]), vec![1.0, -2.0]);
        let flat = CurvatureSpace::euclidean(2).unwrap();
        assert_eq!(riemannian_rescale(&flat, &[5.0, 5.0], &[4.0, -8.0]), vec![1.0, -2.0]);
        let t = [0.75f64.sqrt(), 0.0];
        let r = riemannian_rescale(&unit, &t, &[1.0, 2.0]);
        assert_abs_diff_eq!(r[0], 0.015625, epsilon = 1e-15);
        assert_abs_diff_eq!(r[1], 0.03125, epsilon = 1e-15);
    }

    #[test]
    fn step_examples() {
        let unit = CurvatureSpace::unit_ball(2).unwrap();
        assert_eq!(rsgd_step(&unit, &[0.3, 0.1], &[0.0, 0.0], 0.5), vec![0.3, 0.1]);
        let s = rsgd_step(&unit, &[0.0, 0.0], &[4.0, 0.0], 1.0);
        assert_abs_diff_eq!(s[0], -1.0 / 1.00001, epsilon = 1e-15);
        assert_eq!(s[1], 0.0);
        assert!(unit.contains(&s));
    }

    #[test]
    fn sgd_is_plain() {
        let mut p = vec![1.0, 2.0];
        sgd_step_in_place(&mut p, &[1.0, -1.0], 0.5);
        assert_eq!(p, vec![0.5, 2.5]);
    }
}
