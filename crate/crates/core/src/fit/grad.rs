//! Analytic gradients of the reprojection losses.
//!
//! Parameters live in a tangent space that preserves constraints:
//! camera scale is differentiated as `log s`, rotations (camera and
//! per-part) in a 3-dim axis-angle tangent applied by left
//! multiplication, translations and vertex displacements directly.
//! [`apply_tangent`] is the matching retraction; finite differences
//! through it must agree with [`grad`] componentwise.
//!
//! At an exactly-zero per-keypoint residual the Euclidean norm is
//! nonsmooth; the subgradient 0 is used for that keypoint, so a perfect
//! fit is a stationary point.

use nalgebra::{Matrix3, Vector2, Vector3};

use super::loss::{check_keypoint_count, LossKind};
use super::{KeypointObservation, PoseParams};
use crate::error::{CoreError, Result};
use crate::geometry::{
    forward_kinematics, Articulation, RigidTransform, ShapeParams, TemplateModel, UnitQuaternion,
    VertexDisplacement, WeakPerspectiveCamera,
};

/// Gradient w.r.t. one rigid transform, rotation part in the axis-angle
/// tangent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentPair {
    pub rotation: Vector3<f64>,
    pub translation: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ShapeGradient {
    Articulation(Vec<TangentPair>),
    Displacement(Vec<Vector3<f64>>),
}

/// Gradient over `(log s, t, camera rotation tangent, shape params)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub log_scale: f64,
    pub translation: Vector2<f64>,
    pub rotation: Vector3<f64>,
    pub shape: ShapeGradient,
}

impl Gradient {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = vec![
            self.log_scale,
            self.translation.x,
            self.translation.y,
            self.rotation.x,
            self.rotation.y,
            self.rotation.z,
        ];
        match &self.shape {
            ShapeGradient::Articulation(parts) => {
                for p in parts {
                    out.extend_from_slice(&[
                        p.rotation.x,
                        p.rotation.y,
                        p.rotation.z,
                        p.translation.x,
                        p.translation.y,
                        p.translation.z,
                    ]);
                }
            }
            ShapeGradient::Displacement(offsets) => {
                for d in offsets {
                    out.extend_from_slice(&[d.x, d.y, d.z]);
                }
            }
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.flatten().iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Number of tangent parameters for a model under the given shape mode.
pub fn param_dim(model: &TemplateModel, mode: super::ShapeMode) -> usize {
    6 + match mode {
        super::ShapeMode::Articulation => 6 * model.num_parts(),
        super::ShapeMode::Displacement => 3 * model.num_vertices(),
    }
}

/// Retraction: applies a tangent-space increment to pose parameters.
///
/// Layout: `[d log s, dt_x, dt_y, dw_cam(3)]` followed by per-part
/// `[dw(3), dtau(3)]` in articulation mode or per-vertex `[dx, dy, dz]`
/// in displacement mode.
pub fn apply_tangent(params: &PoseParams, delta: &[f64]) -> Result<PoseParams> {
    let expected = 6 + match &params.shape {
        ShapeParams::Articulation(a) => 6 * a.len(),
        ShapeParams::Displacement(d) => 3 * d.len(),
    };
    if delta.len() != expected {
        return Err(CoreError::DimensionMismatch {
            context: "tangent increment",
            expected,
            got: delta.len(),
        });
    }
    let camera = WeakPerspectiveCamera::new(
        params.camera.scale() * delta[0].exp(),
        params.camera.translation() + Vector2::new(delta[1], delta[2]),
        UnitQuaternion::from_scaled_axis(&Vector3::new(delta[3], delta[4], delta[5]))
            .compose(&params.camera.rotation()),
    )?;
    let shape = match &params.shape {
        ShapeParams::Articulation(art) => {
            let mut transforms = Vec::with_capacity(art.len());
            for (i, t) in art.transforms.iter().enumerate() {
                let base = 6 + 6 * i;
                let dw = Vector3::new(delta[base], delta[base + 1], delta[base + 2]);
                let dt = Vector3::new(delta[base + 3], delta[base + 4], delta[base + 5]);
                transforms.push(RigidTransform::new(
                    UnitQuaternion::from_scaled_axis(&dw).compose(&t.rotation),
                    t.translation + dt,
                ));
            }
            ShapeParams::Articulation(Articulation { transforms })
        }
        ShapeParams::Displacement(disp) => {
            let mut offsets = Vec::with_capacity(disp.len());
            for (i, o) in disp.offsets.iter().enumerate() {
                let base = 6 + 3 * i;
                offsets.push(o + Vector3::new(delta[base], delta[base + 1], delta[base + 2]));
            }
            ShapeParams::Displacement(VertexDisplacement { offsets })
        }
    };
    Ok(PoseParams { camera, shape })
}

/// Analytic gradient of the chosen loss at `params`.
pub fn grad(
    kind: LossKind,
    obs: &KeypointObservation,
    model: &TemplateModel,
    params: &PoseParams,
) -> Result<Gradient> {
    check_keypoint_count(obs, model)?;

    // Forward pass.
    let globals: Option<Vec<RigidTransform>> = match &params.shape {
        ShapeParams::Articulation(a) => Some(forward_kinematics(model.parts(), a)?),
        ShapeParams::Displacement(_) => None,
    };
    let vertices = match (&params.shape, &globals) {
        (ShapeParams::Articulation(_), Some(g)) => model.skin(g)?,
        (ShapeParams::Displacement(d), _) => model.deform(d)?,
        _ => unreachable!(),
    };
    let kp3d = model.keypoints3d(&vertices)?;

    let s = params.camera.scale();
    let t = params.camera.translation();
    let rot = params.camera.rotation().to_rotation_matrix();

    // dL/dY per keypoint; the subgradient 0 handles exact fits.
    let k = obs.len();
    let mut g_log_scale = 0.0;
    let mut g_translation = Vector2::zeros();
    let mut g_rotation = Vector3::zeros();
    let mut z = vec![Vector3::zeros(); k]; // dL/dX_k
    for i in 0..k {
        let rotated = rot * kp3d[i];
        let proj = Vector2::new(s * rotated.x, s * rotated.y) + t;
        let r = obs.keypoints[i] - proj;
        let n = r.norm();
        if n == 0.0 {
            continue;
        }
        let w = kind.weight(obs, i);
        if w == 0.0 {
            continue;
        }
        let u = -(w / n) * r;
        g_translation += u;
        g_log_scale += u.dot(&(proj - t));
        let a = Vector3::new(u.x, u.y, 0.0);
        g_rotation += s * rotated.cross(&a);
        z[i] = s * (rot.transpose() * a);
    }

    // dL/dV per vertex through the regressor.
    let mut y = vec![Vector3::zeros(); model.num_vertices()];
    for i in 0..k {
        if z[i] == Vector3::zeros() {
            continue;
        }
        for v in 0..model.num_vertices() {
            let a = model.regressor()[(i, v)];
            if a != 0.0 {
                y[v] += a * z[i];
            }
        }
    }

    let shape = match &params.shape {
        ShapeParams::Displacement(_) => ShapeGradient::Displacement(y),
        ShapeParams::Articulation(art) => {
            let globals = globals.expect("computed above");
            let tree = model.parts();
            let num_parts = tree.len();

            // Adjoints of the per-part global transforms.
            let mut d_rot_g = vec![Matrix3::zeros(); num_parts];
            let mut d_t_g = vec![Vector3::zeros(); num_parts];
            for v in 0..model.num_vertices() {
                if y[v] == Vector3::zeros() {
                    continue;
                }
                let rest = model.vertices()[v];
                for p in 0..num_parts {
                    let a = model.memberships()[(v, p)];
                    if a != 0.0 {
                        d_rot_g[p] += (a * y[v]) * rest.transpose();
                        d_t_g[p] += a * y[v];
                    }
                }
            }

            // Back through forward kinematics, children before parents.
            let mut pairs = vec![
                TangentPair {
                    rotation: Vector3::zeros(),
                    translation: Vector3::zeros(),
                };
                num_parts
            ];
            for i in (0..num_parts).rev() {
                let (d_rot_local, d_t_local) = match tree.parts()[i].parent {
                    None => (d_rot_g[i], d_t_g[i]),
                    Some(p) => {
                        let parent_rot = globals[p].rotation.to_rotation_matrix();
                        let local = &art.transforms[i];
                        let local_rot = local.rotation.to_rotation_matrix();
                        let d_rl = parent_rot.transpose() * d_rot_g[i];
                        let d_tl = parent_rot.transpose() * d_t_g[i];
                        let extra_rot = d_rot_g[i] * local_rot.transpose()
                            + d_t_g[i] * local.translation.transpose();
                        let extra_t = d_t_g[i];
                        d_rot_g[p] += extra_rot;
                        d_t_g[p] += extra_t;
                        (d_rl, d_tl)
                    }
                };
                let local_rot = art.transforms[i].rotation.to_rotation_matrix();
                let q = d_rot_local * local_rot.transpose();
                pairs[i] = TangentPair {
                    rotation: Vector3::new(
                        q[(2, 1)] - q[(1, 2)],
                        q[(0, 2)] - q[(2, 0)],
                        q[(1, 0)] - q[(0, 1)],
                    ),
                    translation: d_t_local,
                };
            }
            ShapeGradient::Articulation(pairs)
        }
    };

    Ok(Gradient {
        log_scale: g_log_scale,
        translation: g_translation,
        rotation: g_rotation,
        shape,
    })
}
