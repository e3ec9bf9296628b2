//! Invertible 2D similarity transforms (uniform scale, rotation,
//! translation), used by the multi-transform consistency check.

use nalgebra::Vector2;

use crate::error::{CoreError, Result};

/// `p -> scale * R(angle) p + translation`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Similarity2 {
    pub scale: f64,
    pub angle: f64,
    pub translation: Vector2<f64>,
}

impl Similarity2 {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            angle: 0.0,
            translation: Vector2::zeros(),
        }
    }

    /// Rotation by `angle` radians about `center`.
    pub fn rotation_about(center: &Vector2<f64>, angle: f64) -> Self {
        let mut t = Self {
            scale: 1.0,
            angle,
            translation: Vector2::zeros(),
        };
        t.translation = center - t.linear(center);
        t
    }

    /// Uniform scaling by `scale` about `center`.
    pub fn scaling_about(center: &Vector2<f64>, scale: f64) -> Self {
        Self {
            scale,
            angle: 0.0,
            translation: center - scale * center,
        }
    }

    /// Rotation by `angle` and scaling by `scale`, both about `center`.
    pub fn about_point(center: &Vector2<f64>, angle: f64, scale: f64) -> Self {
        let mut t = Self {
            scale,
            angle,
            translation: Vector2::zeros(),
        };
        t.translation = center - t.linear(center);
        t
    }

    fn linear(&self, p: &Vector2<f64>) -> Vector2<f64> {
        let (s, c) = self.angle.sin_cos();
        self.scale * Vector2::new(c * p.x - s * p.y, s * p.x + c * p.y)
    }

    pub fn apply(&self, p: &Vector2<f64>) -> Vector2<f64> {
        self.linear(p) + self.translation
    }

    pub fn inverse(&self) -> Result<Self> {
        if !self.scale.is_finite() || self.scale.abs() < 1e-12 {
            return Err(CoreError::InvalidValue(format!(
                "similarity transform with scale {} is not invertible",
                self.scale
            )));
        }
        let inv = Self {
            scale: 1.0 / self.scale,
            angle: -self.angle,
            translation: Vector2::zeros(),
        };
        Ok(Self {
            translation: -inv.linear(&self.translation),
            ..inv
        })
    }
}
