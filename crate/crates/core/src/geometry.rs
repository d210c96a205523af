//! Closed-form operations on the Poincaré ball of curvature `c`.
//!
//! The ball is `D_c = { x in R^d : c |x|^2 < 1 }` with conformal factor
//! `lambda_x = 2 / (1 - c |x|^2)`. `c = 1` gives the unit ball and `c = 0`
//! degenerates to Euclidean space, where every operation falls back to its
//! flat counterpart (`u + v`, `r v`, `2 |u - v|`).
//!
//! The checked methods on [`CurvatureSpace`] validate dimensions and ball
//! membership. The free functions in [`raw`] skip validation and are what the
//! training hot path and the autodiff graph call.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rescaling margin used when projecting back inside the ball.
pub const PROJECTION_EPS: f64 = 1e-5;
/// Upper clamp on `atanh` arguments.
pub const ATANH_CLAMP: f64 = 1.0 - 1e-12;
/// Added to the Möbius addition denominator.
pub const DENOM_GUARD: f64 = 1e-15;

/// The ambient ball: dimension and curvature factor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSpace {
    dim: usize,
    c: f64,
}

/// A coordinate vector belonging to some [`CurvatureSpace`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BallPoint(Vec<f64>);

impl BallPoint {
    pub fn origin(dim: usize) -> Self {
        BallPoint(vec![0.0; dim])
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for BallPoint {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<BallPoint> for Vec<f64> {
    fn from(p: BallPoint) -> Self {
        p.0
    }
}

impl CurvatureSpace {
    pub fn new(dim: usize, c: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSpace("dimension must be at least 1".into()));
        }
        if !c.is_finite() || c < 0.0 {
            return Err(Error::InvalidSpace(format!(
                "curvature must be finite and non-negative, got {c}"
            )));
        }
        Ok(Self { dim, c })
    }

    pub fn unit_ball(dim: usize) -> Result<Self> {
        Self::new(dim, 1.0)
    }

    pub fn euclidean(dim: usize) -> Result<Self> {
        Self::new(dim, 0.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn is_euclidean(&self) -> bool {
        self.c == 0.0
    }

    /// Ball radius `1/sqrt(c)`, infinite for the flat space.
    pub fn radius(&self) -> f64 {
        if self.is_euclidean() {
            f64::INFINITY
        } else {
            1.0 / self.c.sqrt()
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim && x.iter().all(|v| v.is_finite()) && self.c * sq_norm(x) < 1.0
    }

    /// Validates dimension and ball membership.
    pub fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("point coordinates".into()));
        }
        let value = self.c * sq_norm(x);
        if value >= 1.0 {
            return Err(Error::OutsideBall { value });
        }
        Ok(())
    }

    pub fn point(&self, coords: Vec<f64>) -> Result<BallPoint> {
        self.check(&coords)?;
        Ok(BallPoint(coords))
    }

    /// Wraps coordinates produced by closed-form operations on valid inputs.
    pub(crate) fn point_unchecked(&self, coords: Vec<f64>) -> BallPoint {
        debug_assert_eq!(coords.len(), self.dim);
        BallPoint(coords)
    }

    /// `lambda_x = 2 / (1 - c |x|^2)`.
    pub fn conformal_factor(&self, x: &[f64]) -> f64 {
        2.0 / (1.0 - self.c * sq_norm(x))
    }

    pub fn mobius_add(&self, u: &[f64], v: &[f64]) -> Result<BallPoint> {
        self.check(u)?;
        self.check(v)?;
        Ok(BallPoint(raw::mobius_add(self.c, u, v)))
    }

    pub fn mobius_scalar_mul(&self, r: f64, v: &[f64]) -> Result<BallPoint> {
        self.check(v)?;
        if !r.is_finite() {
            return Err(Error::NonFinite("scalar factor".into()));
        }
        Ok(BallPoint(raw::mobius_scalar_mul(self.c, r, v)))
    }

    pub fn distance(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        Ok(raw::distance(self.c, u, v))
    }

    /// Distance through the `arcosh` closed form. Agrees with
    /// [`CurvatureSpace::distance`] up to rounding; kept as an independent route.
    pub fn distance_arcosh(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        self.check(u)?;
        self.check(v)?;
        Ok(raw::distance_arcosh(self.c, u, v))
    }

    pub fn project(&self, theta: &[f64]) -> Result<BallPoint> {
        if theta.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: theta.len(),
            });
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("projection input".into()));
        }
        Ok(BallPoint(raw::project(self.c, theta)))
    }

    /// Point at parameter `t` on the geodesic through `a` (t = 0) and `b` (t = 1):
    /// `a ⊕ ((-a ⊕ b) ⊗ t)`.
    pub fn geodesic_point(&self, a: &[f64], b: &[f64], t: f64) -> Result<BallPoint> {
        self.check(a)?;
        self.check(b)?;
        let dir = raw::mobius_add(self.c, &neg(a), b);
        let scaled = raw::mobius_scalar_mul(self.c, t, &dir);
        Ok(BallPoint(raw::mobius_add(self.c, a, &scaled)))
    }
}

/// Cosine of the angle between ambient coordinate vectors; 0 when either is zero.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    Ok(raw::cosine(u, v))
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn sq_norm(x: &[f64]) -> f64 {
    dot(x, x)
}

pub fn norm(x: &[f64]) -> f64 {
    sq_norm(x).sqrt()
}

pub fn neg(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| -v).collect()
}

pub fn clamped_atanh(x: f64) -> f64 {
    x.min(ATANH_CLAMP).atanh()
}

pub fn clamped_acosh(x: f64) -> f64 {
    x.max(1.0).acosh()
}

/// Unchecked kernels. Callers guarantee matching dimensions.
pub mod raw {
    use super::{clamped_acosh, clamped_atanh, dot, neg, norm, sq_norm, DENOM_GUARD, PROJECTION_EPS};

    pub fn mobius_add(c: f64, u: &[f64], v: &[f64]) -> Vec<f64> {
        if c == 0.0 {
            return u.iter().zip(v).map(|(a, b)| a + b).collect();
        }
        let uv = dot(u, v);
        let uu = sq_norm(u);
        let vv = sq_norm(v);
        let a = 1.0 + 2.0 * c * uv + c * vv;
        let b = 1.0 - c * uu;
        let denom = 1.0 + 2.0 * c * uv + c * c * uu * vv + DENOM_GUARD;
        u.iter().zip(v).map(|(x, y)| (a * x + b * y) / denom).collect()
    }

    pub fn mobius_scalar_mul(c: f64, r: f64, v: &[f64]) -> Vec<f64> {
        if c == 0.0 {
            return v.iter().map(|x| r * x).collect();
        }
        let n = norm(v);
        if n == 0.0 {
            return vec![0.0; v.len()];
        }
        let sc = c.sqrt();
        let scale = (r * clamped_atanh(sc * n)).tanh() / (sc * n);
        v.iter().map(|x| scale * x).collect()
    }

    pub fn distance(c: f64, u: &[f64], v: &[f64]) -> f64 {
        if c == 0.0 {
            let diff: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - b).collect();
            return 2.0 * norm(&diff);
        }
        let w = mobius_add(c, &neg(u), v);
        let sc = c.sqrt();
        2.0 / sc * clamped_atanh(sc * norm(&w))
    }

    pub fn distance_arcosh(c: f64, u: &[f64], v: &[f64]) -> f64 {
        let diff: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
        if c == 0.0 {
            return 2.0 * diff.sqrt();
        }
        let arg = 1.0 + 2.0 * c * diff / ((1.0 - c * sq_norm(u)) * (1.0 - c * sq_norm(v)));
        clamped_acosh(arg) / c.sqrt()
    }

    pub fn project(c: f64, theta: &[f64]) -> Vec<f64> {
        if c * sq_norm(theta) < 1.0 {
            return theta.to_vec();
        }
        let scale = 1.0 / (c.sqrt() * (norm(theta) + PROJECTION_EPS));
        theta.iter().map(|x| scale * x).collect()
    }

    pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
        let nu = norm(u);
        let nv = norm(v);
        if nu == 0.0 || nv == 0.0 {
            return 0.0;
        }
        (dot(u, v) / (nu * nv)).clamp(-1.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit2() -> CurvatureSpace {
        CurvatureSpace::unit_ball(2).unwrap()
    }

    #[test]
    fn rejects_bad_spaces() {
        assert!(CurvatureSpace::new(0, 1.0).is_err());
        assert!(CurvatureSpace::new(2, -0.1).is_err());
        assert!(CurvatureSpace::new(2, f64::NAN).is_err());
    }

    #[test]
    fn mobius_add_examples() {
        let s = unit2();
        let r = s.mobius_add(&[0.0, 0.0], &[0.3, 0.4]).unwrap();
        assert_abs_diff_eq!(r[0], 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(r[1], 0.4, epsilon = 1e-15);

        let r = s.mobius_add(&[0.5, 0.0], &[0.5, 0.0]).unwrap();
        assert_abs_diff_eq!(r[0], 0.8, epsilon = 1e-14);
        assert_abs_diff_eq!(r[1], 0.0, epsilon = 1e-15);

        let r = s.mobius_add(&[0.5, 0.0], &[0.0, 0.5]).unwrap();
        assert_abs_diff_eq!(r[0], 10.0 / 17.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r[1], 6.0 / 17.0, epsilon = 1e-14);
    }

    #[test]
    fn mobius_add_validates_inputs() {
        let s = unit2();
        assert!(matches!(
            s.mobius_add(&[0.1], &[0.1, 0.2]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            s.mobius_add(&[1.0, 0.0], &[0.1, 0.2]),
            Err(Error::OutsideBall { .. })
        ));
    }

    #[test]
    fn scalar_mul_examples() {
        let s = unit2();
        let r = s.mobius_scalar_mul(1.0, &[0.3, 0.4]).unwrap();
        assert_abs_diff_eq!(r[0], 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(r[1], 0.4, epsilon = 1e-12);

        let r = s.mobius_scalar_mul(5.0, &[0.0, 0.0]).unwrap();
        assert_eq!(r.coords(), &[0.0, 0.0]);

        let r = s.mobius_scalar_mul(2.0, &[0.5, 0.0]).unwrap();
        assert_abs_diff_eq!(r[0], 0.8, epsilon = 1e-12);
        let sum = s.mobius_add(&[0.5, 0.0], &[0.5, 0.0]).unwrap();
        assert_abs_diff_eq!(r[0], sum[0], epsilon = 1e-12);
    }

    #[test]
    fn distance_examples() {
        let s = unit2();
        assert_eq!(s.distance(&[0.0, 0.0], &[0.0, 0.0]).unwrap(), 0.0);
        let d = s.distance(&[0.0, 0.0], &[0.5, 0.0]).unwrap();
        assert_abs_diff_eq!(d, 3f64.ln(), epsilon = 1e-12);
        let d2 = s.distance_arcosh(&[0.0, 0.0], &[0.5, 0.0]).unwrap();
        assert_abs_diff_eq!(d2, 3f64.ln(), epsilon = 1e-12);
        let (u, v) = ([0.1, -0.7], [0.45, 0.2]);
        assert_eq!(s.distance(&u, &v).unwrap(), s.distance(&v, &u).unwrap());
    }

    #[test]
    fn euclidean_limit_is_special_cased() {
        let s = CurvatureSpace::euclidean(2).unwrap();
        assert_eq!(s.mobius_add(&[1.0, 2.0], &[3.0, -1.0]).unwrap().coords(), &[4.0, 1.0]);
        assert_eq!(s.mobius_scalar_mul(3.0, &[1.0, 2.0]).unwrap().coords(), &[3.0, 6.0]);
        assert_abs_diff_eq!(s.distance(&[0.0, 0.0], &[3.0, 4.0]).unwrap(), 10.0);
        assert_eq!(s.project(&[100.0, 0.0]).unwrap().coords(), &[100.0, 0.0]);
    }

    #[test]
    fn project_examples() {
        let s = unit2();
        assert_eq!(s.project(&[0.3, 0.4]).unwrap().coords(), &[0.3, 0.4]);
        let p = s.project(&[2.0, 0.0]).unwrap();
        assert_abs_diff_eq!(p[0], 2.0 / 2.00001, epsilon = 1e-15);
        assert!(s.contains(&p));

        let quarter = CurvatureSpace::new(2, 0.25).unwrap();
        let p = quarter.project(&[3.0, 0.0]).unwrap();
        assert_abs_diff_eq!(p[0], 2.0 * 3.0 / 3.00001, epsilon = 1e-14);
        assert!(quarter.contains(&p));
    }

    #[test]
    fn geodesic_endpoints_and_midpoint() {
        let s = unit2();
        let (a, b) = ([0.2, -0.3], [-0.5, 0.4]);
        let p0 = s.geodesic_point(&a, &b, 0.0).unwrap();
        assert_abs_diff_eq!(p0[0], a[0], epsilon = 1e-15);
        assert_abs_diff_eq!(p0[1], a[1], epsilon = 1e-15);
        let p1 = s.geodesic_point(&a, &b, 1.0).unwrap();
        assert_abs_diff_eq!(p1[0], b[0], epsilon = 1e-12);
        assert_abs_diff_eq!(p1[1], b[1], epsilon = 1e-12);
        let m = s.geodesic_point(&a, &b, 0.5).unwrap();
        let da = s.distance(&a, &m).unwrap();
        let db = s.distance(&m, &b).unwrap();
        assert_abs_diff_eq!(da, db, epsilon = 1e-10);
        assert_abs_diff_eq!(da + db, s.distance(&a, &b).unwrap(), epsilon = 1e-10);
    }

    #[test]
    fn cosine_examples() {
        assert_abs_diff_eq!(cosine(&[0.3, 0.4], &[0.3, 0.4]).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(cosine(&[0.1, 0.0], &[0.0, 0.1]).unwrap(), 0.0);
        assert_abs_diff_eq!(cosine(&[0.5, 0.0], &[0.3, 0.4]).unwrap(), 0.6, epsilon = 1e-15);
        assert_eq!(cosine(&[0.0, 0.0], &[0.3, 0.4]).unwrap(), 0.0);
    }

    #[test]
    fn conformal_factor_at_origin() {
        assert_eq!(unit2().conformal_factor(&[0.0, 0.0]), 2.0);
    }
}
