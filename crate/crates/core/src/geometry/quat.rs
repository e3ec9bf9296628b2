//! Unit quaternions with a fixed convention: Hamilton product, component
//! order (w, x, y, z), and canonical sign w >= 0. Every constructor and
//! product renormalizes and re-canonicalizes, so a value of this type is
//! always a valid rotation with norm 1 (within 1e-9) and no double-cover
//! ambiguity.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// A rotation as a unit quaternion, (w, x, y, z) order, w >= 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl UnitQuaternion {
    /// Normalizes the given components and applies the canonical sign.
    pub fn new_normalize(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n < 1e-12 {
            return Err(CoreError::InvalidValue(format!(
                "cannot normalize quaternion with norm {n}"
            )));
        }
        let mut q = Self {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        };
        q.canonicalize();
        Ok(q)
    }

    pub fn identity() -> Self {
        Self {
            w: 1.0,
            x: 0.0,
            y: 0.0,
            z: 0.0,
        }
    }

    /// Rotation of `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64) -> Result<Self> {
        let n = axis.norm();
        if !n.is_finite() || n < 1e-12 {
            return Err(CoreError::InvalidValue(
                "rotation axis has zero norm".into(),
            ));
        }
        let half = 0.5 * angle;
        let s = half.sin() / n;
        Self::new_normalize(half.cos(), axis.x * s, axis.y * s, axis.z * s)
    }

    /// Exponential map: rotation by `v.norm()` radians about `v`.
    /// The zero vector maps to the identity.
    pub fn from_scaled_axis(v: &Vector3<f64>) -> Self {
        let theta = v.norm();
        if theta < 1e-12 {
            // First-order expansion; renormalization absorbs the truncation.
            let mut q = Self {
                w: 1.0,
                x: 0.5 * v.x,
                y: 0.5 * v.y,
                z: 0.5 * v.z,
            };
            q.renormalize();
            return q;
        }
        let half = 0.5 * theta;
        let s = half.sin() / theta;
        let mut q = Self {
            w: half.cos(),
            x: v.x * s,
            y: v.y * s,
            z: v.z * s,
        };
        q.canonicalize();
        q
    }

    /// Recovers a quaternion from an orthonormal rotation matrix
    /// (Shepperd's method).
    pub fn from_rotation_matrix(m: &Matrix3<f64>) -> Result<Self> {
        let ortho = (m * m.transpose() - Matrix3::identity()).abs().max();
        if !ortho.is_finite() || ortho > 1e-6 || (m.determinant() - 1.0).abs() > 1e-6 {
            return Err(CoreError::InvalidValue(
                "matrix is not a proper rotation within 1e-6".into(),
            ));
        }
        let tr = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let (w, x, y, z);
        if tr > 0.0 {
            let s = (tr + 1.0).sqrt() * 2.0;
            w = 0.25 * s;
            x = (m[(2, 1)] - m[(1, 2)]) / s;
            y = (m[(0, 2)] - m[(2, 0)]) / s;
            z = (m[(1, 0)] - m[(0, 1)]) / s;
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt() * 2.0;
            w = (m[(2, 1)] - m[(1, 2)]) / s;
            x = 0.25 * s;
            y = (m[(0, 1)] + m[(1, 0)]) / s;
            z = (m[(0, 2)] + m[(2, 0)]) / s;
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt() * 2.0;
            w = (m[(0, 2)] - m[(2, 0)]) / s;
            x = (m[(0, 1)] + m[(1, 0)]) / s;
            y = 0.25 * s;
            z = (m[(1, 2)] + m[(2, 1)]) / s;
        } else {
            let s = (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt() * 2.0;
            w = (m[(1, 0)] - m[(0, 1)]) / s;
            x = (m[(0, 2)] + m[(2, 0)]) / s;
            y = (m[(1, 2)] + m[(2, 1)]) / s;
            z = 0.25 * s;
        }
        Self::new_normalize(w, x, y, z)
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    fn canonicalize(&mut self) {
        if self.w < 0.0 {
            self.w = -self.w;
            self.x = -self.x;
            self.y = -self.y;
            self.z = -self.z;
        }
    }

    fn renormalize(&mut self) {
        let n = self.norm();
        self.w /= n;
        self.x /= n;
        self.y /= n;
        self.z /= n;
        self.canonicalize();
    }

    /// Hamilton product `self * rhs` (apply `rhs` first, then `self`).
    pub fn compose(&self, rhs: &Self) -> Self {
        let (a, b, c, d) = (self.w, self.x, self.y, self.z);
        let (e, f, g, h) = (rhs.w, rhs.x, rhs.y, rhs.z);
        let mut q = Self {
            w: a * e - b * f - c * g - d * h,
            x: a * f + b * e + c * h - d * g,
            y: a * g - b * h + c * e + d * f,
            z: a * h + b * g - c * f + d * e,
        };
        q.renormalize();
        q
    }

    pub fn inverse(&self) -> Self {
        Self {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Applies the rotation to a 3-vector.
    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        let u = Vector3::new(self.x, self.y, self.z);
        let t = 2.0 * u.cross(v);
        v + self.w * t + u.cross(&t)
    }

    pub fn to_rotation_matrix(&self) -> Matrix3<f64> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Geodesic angle to another rotation, in radians.
    pub fn angle_to(&self, other: &Self) -> f64 {
        let dot = self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z;
        2.0 * dot.abs().clamp(0.0, 1.0).acos()
    }
}

impl TryFrom<[f64; 4]> for UnitQuaternion {
    type Error = CoreError;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3]).sqrt();
        if !n.is_finite() || (n - 1.0).abs() > 1e-6 {
            return Err(CoreError::InvalidValue(format!(
                "quaternion [{}, {}, {}, {}] is not unit norm",
                v[0], v[1], v[2], v[3]
            )));
        }
        Self::new_normalize(v[0], v[1], v[2], v[3])
    }
}

impl From<UnitQuaternion> for [f64; 4] {
    fn from(q: UnitQuaternion) -> Self {
        q.as_array()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn assert_vec_eq(a: &Vector3<f64>, b: &Vector3<f64>, eps: f64) {
        assert_abs_diff_eq!(a.x, b.x, epsilon = eps);
        assert_abs_diff_eq!(a.y, b.y, epsilon = eps);
        assert_abs_diff_eq!(a.z, b.z, epsilon = eps);
    }

    #[test]
    fn identity_rotation_is_noop() {
        let q = UnitQuaternion::identity();
        let v = Vector3::new(1.0, 2.0, 3.0);
        assert_vec_eq(&q.rotate(&v), &v, 0.0);
    }

    #[test]
    fn rotate_90_about_z() {
        // (1,0,0) -> (0,1,0)
        let q = UnitQuaternion::from_axis_angle(&Vector3::z(), FRAC_PI_2).unwrap();
        let r = q.rotate(&Vector3::new(1.0, 0.0, 0.0));
        assert_vec_eq(&r, &Vector3::new(0.0, 1.0, 0.0), 1e-12);
    }

    #[test]
    fn rotate_90_about_x_sends_z_down() {
        let q = UnitQuaternion::from_axis_angle(&Vector3::x(), FRAC_PI_2).unwrap();
        let r = q.rotate(&Vector3::new(0.0, 0.0, 1.0));
        assert_vec_eq(&r, &Vector3::new(0.0, -1.0, 0.0), 1e-12);
    }

    #[test]
    fn canonical_sign_is_nonnegative() {
        let q = UnitQuaternion::new_normalize(-1.0, 0.3, -0.2, 0.5).unwrap();
        assert!(q.w() >= 0.0);
        let r = UnitQuaternion::from_axis_angle(&Vector3::y(), 1.9 * PI).unwrap();
        assert!(r.w() >= 0.0);
    }

    #[test]
    fn zero_norm_rejected() {
        assert!(UnitQuaternion::new_normalize(0.0, 0.0, 0.0, 0.0).is_err());
        assert!(UnitQuaternion::from_axis_angle(&Vector3::zeros(), 1.0).is_err());
    }

    #[test]
    fn rotation_matrix_roundtrip() {
        let q = UnitQuaternion::from_axis_angle(&Vector3::new(1.0, -2.0, 0.5), 1.2).unwrap();
        let m = q.to_rotation_matrix();
        let back = UnitQuaternion::from_rotation_matrix(&m).unwrap();
        assert!(q.angle_to(&back) < 1e-9);
    }

    #[test]
    fn from_rotation_matrix_rejects_non_orthonormal() {
        let m = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(UnitQuaternion::from_rotation_matrix(&m).is_err());
    }

    fn arb_unit_quat() -> impl Strategy<Value = UnitQuaternion> {
        (
            -1.0..1.0f64,
            -1.0..1.0f64,
            -1.0..1.0f64,
            -1.0..1.0f64,
        )
            .prop_filter_map("non-zero quaternion", |(w, x, y, z)| {
                if w * w + x * x + y * y + z * z > 0.01 {
                    Some(UnitQuaternion::new_normalize(w, x, y, z).unwrap())
                } else {
                    None
                }
            })
    }

    fn arb_vec3() -> impl Strategy<Value = Vector3<f64>> {
        (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64)
            .prop_map(|(x, y, z)| Vector3::new(x, y, z))
    }

    proptest! {
        // Norm preservation, checked over many random draws.
        #[test]
        fn rotation_preserves_norm(q in arb_unit_quat(), v in arb_vec3()) {
            prop_assert!((q.rotate(&v).norm() - v.norm()).abs() < 1e-9);
        }

        // rotate(q1, rotate(q2, v)) == rotate(q1 * q2, v)
        #[test]
        fn rotation_composes(q1 in arb_unit_quat(), q2 in arb_unit_quat(), v in arb_vec3()) {
            let a = q1.rotate(&q2.rotate(&v));
            let b = q1.compose(&q2).rotate(&v);
            prop_assert!((a - b).norm() < 1e-9);
        }

        #[test]
        fn construction_is_unit_norm(q in arb_unit_quat()) {
            prop_assert!((q.norm() - 1.0).abs() < 1e-9);
            prop_assert!(q.w() >= 0.0);
        }

        #[test]
        fn inverse_undoes_rotation(q in arb_unit_quat(), v in arb_vec3()) {
            let r = q.inverse().rotate(&q.rotate(&v));
            prop_assert!((r - v).norm() < 1e-9);
        }

        #[test]
        fn matrix_agrees_with_rotate(q in arb_unit_quat(), v in arb_vec3()) {
            let via_matrix = q.to_rotation_matrix() * v;
            prop_assert!((via_matrix - q.rotate(&v)).norm() < 1e-9);
        }

        #[test]
        fn scaled_axis_matches_axis_angle(
            v in (-1.8..1.8f64, -1.8..1.8f64, -1.8..1.8f64)
                .prop_map(|(x, y, z)| Vector3::new(x, y, z))
        ) {
            prop_assume!(v.norm() > 1e-6);
            let a = UnitQuaternion::from_scaled_axis(&v);
            let b = UnitQuaternion::from_axis_angle(&v, v.norm()).unwrap();
            // Componentwise: angle_to cannot resolve below ~1e-8 near 0.
            for (x, y) in a.as_array().iter().zip(b.as_array()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn norm_preservation_over_1000_draws() {
        // Dedicated loop so the draw count is pinned, independent of
        // proptest's case budget.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let q = UnitQuaternion::new_normalize(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let q = match q {
                Ok(q) => q,
                Err(_) => continue,
            };
            let v = Vector3::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            );
            assert!((q.rotate(&v).norm() - v.norm()).abs() < 1e-9);
        }
    }
}
