//! Weak-perspective camera: rotate, drop z, scale, translate.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::quat::UnitQuaternion;
use crate::error::{CoreError, Result};

/// Weak-perspective camera `(s, t, q)` with `s > 0`.
///
/// A 3D point projects as `x = s * (R(q) X)_xy + t`: the point is rotated
/// into the camera frame, its z coordinate is dropped, and the remaining
/// 2-vector is scaled and translated in image units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraRaw", into = "CameraRaw")]
pub struct WeakPerspectiveCamera {
    scale: f64,
    translation: Vector2<f64>,
    rotation: UnitQuaternion,
}

#[derive(Serialize, Deserialize)]
struct CameraRaw {
    s: f64,
    t: [f64; 2],
    q: [f64; 4],
}

impl WeakPerspectiveCamera {
    pub fn new(scale: f64, translation: Vector2<f64>, rotation: UnitQuaternion) -> Result<Self> {
        if !scale.is_finite() || scale <= 0.0 {
            return Err(CoreError::InvalidValue(format!(
                "camera scale must be positive, got {scale}"
            )));
        }
        if !translation.x.is_finite() || !translation.y.is_finite() {
            return Err(CoreError::InvalidValue(
                "camera translation must be finite".into(),
            ));
        }
        Ok(Self {
            scale,
            translation,
            rotation,
        })
    }

    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            translation: Vector2::zeros(),
            rotation: UnitQuaternion::identity(),
        }
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn translation(&self) -> Vector2<f64> {
        self.translation
    }

    pub fn rotation(&self) -> UnitQuaternion {
        self.rotation
    }

    pub fn project_point(&self, p: &Vector3<f64>) -> Vector2<f64> {
        let r = self.rotation.rotate(p);
        Vector2::new(self.scale * r.x, self.scale * r.y) + self.translation
    }

    pub fn project(&self, points: &[Vector3<f64>]) -> Vec<Vector2<f64>> {
        points.iter().map(|p| self.project_point(p)).collect()
    }
}

impl TryFrom<CameraRaw> for WeakPerspectiveCamera {
    type Error = CoreError;

    fn try_from(raw: CameraRaw) -> Result<Self> {
        Self::new(
            raw.s,
            Vector2::new(raw.t[0], raw.t[1]),
            UnitQuaternion::try_from(raw.q)?,
        )
    }
}

impl From<WeakPerspectiveCamera> for CameraRaw {
    fn from(c: WeakPerspectiveCamera) -> Self {
        Self {
            s: c.scale,
            t: [c.translation.x, c.translation.y],
            q: c.rotation.as_array(),
        }
    }
}
