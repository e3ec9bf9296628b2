//! Confidence-weighted reprojection losses with analytic gradients,
//! per-instance pose/shape optimization, and weak-perspective camera
//! initialization from 2D-3D correspondences.
//!
//! All functions are pure and reentrant; instances may be fit in
//! parallel with no coordination.

mod grad;
mod init;
mod loss;
mod optimizer;

pub use grad::{apply_tangent, grad, param_dim, Gradient, ShapeGradient, TangentPair};
pub use init::init_camera;
pub use loss::{loss_labeled, loss_pseudo, predicted_keypoints, LossKind};
pub use optimizer::{fit_instance, FitConfig, FitTrace};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::bbox::Bbox;
use crate::error::{CoreError, Result};
use crate::geometry::{ShapeParams, WeakPerspectiveCamera};

/// Per-image 2D keypoint estimates with per-keypoint confidences.
#[derive(Debug, Clone, PartialEq)]
pub struct KeypointObservation {
    pub keypoints: Vec<Vector2<f64>>,
    pub conf: Vec<f64>,
    pub bbox: Bbox,
}

impl KeypointObservation {
    pub fn new(keypoints: Vec<Vector2<f64>>, conf: Vec<f64>, bbox: Bbox) -> Result<Self> {
        if conf.len() != keypoints.len() {
            return Err(CoreError::DimensionMismatch {
                context: "keypoint confidences",
                expected: keypoints.len(),
                got: conf.len(),
            });
        }
        for (i, p) in keypoints.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(CoreError::InvalidValue(format!(
                    "keypoint {i} is not finite"
                )));
            }
        }
        for (i, &c) in conf.iter().enumerate() {
            if !c.is_finite() || !(0.0..=1.0).contains(&c) {
                return Err(CoreError::InvalidValue(format!(
                    "confidence {i} = {c} is outside [0, 1]"
                )));
            }
        }
        Ok(Self {
            keypoints,
            conf,
            bbox,
        })
    }

    /// Observation with all confidences set to 1 (labeled data).
    pub fn labeled(keypoints: Vec<Vector2<f64>>, bbox: Bbox) -> Result<Self> {
        let conf = vec![1.0; keypoints.len()];
        Self::new(keypoints, conf, bbox)
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }
}

/// Per-instance camera plus shape parameters (articulation or free
/// vertex displacements).
#[derive(Debug, Clone, PartialEq)]
pub struct PoseParams {
    pub camera: WeakPerspectiveCamera,
    pub shape: ShapeParams,
}

impl PoseParams {
    pub fn mode(&self) -> ShapeMode {
        match self.shape {
            ShapeParams::Articulation(_) => ShapeMode::Articulation,
            ShapeParams::Displacement(_) => ShapeMode::Displacement,
        }
    }
}

/// Which shape parameterization the optimizer adjusts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeMode {
    Articulation,
    Displacement,
}

/// Affine map between raw image coordinates and bbox-relative ones.
///
/// Fitting normalizes coordinates so that `max(w, h)` maps to 1; this
/// conditions the optimization and matches the normalization PCK uses.
#[derive(Debug, Clone, Copy)]
pub struct NormFrame {
    origin: Vector2<f64>,
    scale: f64,
}

impl NormFrame {
    pub fn from_bbox(bbox: &Bbox) -> Self {
        Self {
            origin: Vector2::new(bbox.x_min, bbox.y_min),
            scale: bbox.max_dim(),
        }
    }

    pub fn normalize_point(&self, p: &Vector2<f64>) -> Vector2<f64> {
        (p - self.origin) / self.scale
    }

    pub fn denormalize_point(&self, p: &Vector2<f64>) -> Vector2<f64> {
        p * self.scale + self.origin
    }

    pub fn normalize_obs(&self, obs: &KeypointObservation) -> Result<KeypointObservation> {
        KeypointObservation::new(
            obs.keypoints
                .iter()
                .map(|p| self.normalize_point(p))
                .collect(),
            obs.conf.clone(),
            Bbox::new(
                (obs.bbox.x_min - self.origin.x) / self.scale,
                (obs.bbox.y_min - self.origin.y) / self.scale,
                obs.bbox.w / self.scale,
                obs.bbox.h / self.scale,
            )?,
        )
    }

    pub fn normalize_camera(&self, cam: &WeakPerspectiveCamera) -> Result<WeakPerspectiveCamera> {
        WeakPerspectiveCamera::new(
            cam.scale() / self.scale,
            (cam.translation() - self.origin) / self.scale,
            cam.rotation(),
        )
    }

    pub fn denormalize_camera(
        &self,
        cam: &WeakPerspectiveCamera,
    ) -> Result<WeakPerspectiveCamera> {
        WeakPerspectiveCamera::new(
            cam.scale() * self.scale,
            cam.translation() * self.scale + self.origin,
            cam.rotation(),
        )
    }
}
