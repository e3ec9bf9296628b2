//! Axis-aligned image-space bounding boxes.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// `(x_min, y_min, w, h)` in image units, with positive area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BboxRaw", into = "BboxRaw")]
pub struct Bbox {
    pub x_min: f64,
    pub y_min: f64,
    pub w: f64,
    pub h: f64,
}

#[derive(Serialize, Deserialize)]
struct BboxRaw {
    x_min: f64,
    y_min: f64,
    w: f64,
    h: f64,
}

impl Bbox {
    pub fn new(x_min: f64, y_min: f64, w: f64, h: f64) -> Result<Self> {
        if ![x_min, y_min, w, h].iter().all(|v| v.is_finite()) || w <= 0.0 || h <= 0.0 {
            return Err(CoreError::InvalidValue(format!(
                "bbox ({x_min}, {y_min}, {w}, {h}) must be finite with positive extent"
            )));
        }
        Ok(Self { x_min, y_min, w, h })
    }

    /// Tight box around a point set, expanded by `margin * max extent` on
    /// every side.
    pub fn around_points(points: &[Vector2<f64>], margin: f64) -> Result<Self> {
        if points.is_empty() {
            return Err(CoreError::InvalidValue(
                "cannot build a bbox around zero points".into(),
            ));
        }
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        let extent = (hi.x - lo.x).max(hi.y - lo.y).max(1e-9);
        let pad = margin * extent;
        Self::new(
            lo.x - pad,
            lo.y - pad,
            hi.x - lo.x + 2.0 * pad,
            hi.y - lo.y + 2.0 * pad,
        )
    }

    pub fn max_dim(&self) -> f64 {
        self.w.max(self.h)
    }

    pub fn center(&self) -> Vector2<f64> {
        Vector2::new(self.x_min + 0.5 * self.w, self.y_min + 0.5 * self.h)
    }

    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        p.x >= self.x_min
            && p.x <= self.x_min + self.w
            && p.y >= self.y_min
            && p.y <= self.y_min + self.h
    }
}

impl TryFrom<BboxRaw> for Bbox {
    type Error = CoreError;

    fn try_from(r: BboxRaw) -> Result<Self> {
        Self::new(r.x_min, r.y_min, r.w, r.h)
    }
}

impl From<Bbox> for BboxRaw {
    fn from(b: Bbox) -> Self {
        Self {
            x_min: b.x_min,
            y_min: b.y_min,
            w: b.w,
            h: b.h,
        }
    }
}
