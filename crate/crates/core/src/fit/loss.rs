//! Keypoint reprojection losses.
//!
//! The loss is a sum over keypoints of (optionally confidence-scaled)
//! Euclidean residual norms. There is no averaging over k, so
//! zero-confidence keypoints drop out exactly.

use nalgebra::Vector2;

use super::{KeypointObservation, PoseParams};
use crate::error::{CoreError, Result};
use crate::geometry::TemplateModel;

/// Whether residuals are weighted by per-keypoint confidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// `L = sum_k ||x_k - proj_k||`
    Labeled,
    /// `L = sum_k c_k * ||x_k - proj_k||`
    Pseudo,
}

impl LossKind {
    pub(crate) fn weight(&self, obs: &KeypointObservation, k: usize) -> f64 {
        match self {
            LossKind::Labeled => 1.0,
            LossKind::Pseudo => obs.conf[k],
        }
    }
}

/// Projects the model's regressed keypoints under the given parameters.
pub fn predicted_keypoints(
    model: &TemplateModel,
    params: &PoseParams,
) -> Result<Vec<Vector2<f64>>> {
    let vertices = model.posed_vertices(&params.shape)?;
    let kp3d = model.keypoints3d(&vertices)?;
    Ok(params.camera.project(&kp3d))
}

pub(crate) fn check_keypoint_count(obs: &KeypointObservation, model: &TemplateModel) -> Result<()> {
    if obs.len() != model.num_keypoints() {
        return Err(CoreError::DimensionMismatch {
            context: "observation keypoints vs model regressor",
            expected: model.num_keypoints(),
            got: obs.len(),
        });
    }
    Ok(())
}

pub(crate) fn loss_weighted(
    obs: &KeypointObservation,
    model: &TemplateModel,
    params: &PoseParams,
    kind: LossKind,
) -> Result<f64> {
    check_keypoint_count(obs, model)?;
    let pred = predicted_keypoints(model, params)?;
    let mut total = 0.0;
    for k in 0..obs.len() {
        total += kind.weight(obs, k) * (obs.keypoints[k] - pred[k]).norm();
    }
    Ok(total)
}

/// Reprojection loss with every keypoint weighted 1 (labeled data).
pub fn loss_labeled(
    obs: &KeypointObservation,
    model: &TemplateModel,
    params: &PoseParams,
) -> Result<f64> {
    loss_weighted(obs, model, params, LossKind::Labeled)
}

/// Reprojection loss with per-keypoint confidences scaling the residual
/// norms (pseudo-labeled data).
pub fn loss_pseudo(
    obs: &KeypointObservation,
    model: &TemplateModel,
    params: &PoseParams,
) -> Result<f64> {
    loss_weighted(obs, model, params, LossKind::Pseudo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbox::Bbox;
    use crate::fit::KeypointObservation;
    use crate::geometry::{Articulation, ShapeParams, UnitQuaternion, WeakPerspectiveCamera};
    use nalgebra::{Vector2, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rest_params(model: &TemplateModel) -> PoseParams {
        PoseParams {
            camera: WeakPerspectiveCamera::identity(),
            shape: ShapeParams::Articulation(Articulation::identity(model.num_parts())),
        }
    }

    fn exact_obs(model: &TemplateModel, params: &PoseParams) -> KeypointObservation {
        let pred = predicted_keypoints(model, params).unwrap();
        let bbox = Bbox::around_points(&pred, 0.1).unwrap();
        KeypointObservation::labeled(pred, bbox).unwrap()
    }

    #[test]
    fn exact_predictions_give_zero_loss() {
        let model = TemplateModel::synthetic_quadruped();
        let params = rest_params(&model);
        let obs = exact_obs(&model, &params);
        assert_eq!(loss_labeled(&obs, &model, &params).unwrap(), 0.0);
        assert_eq!(loss_pseudo(&obs, &model, &params).unwrap(), 0.0);
    }

    #[test]
    fn single_three_four_residual_gives_five() {
        let model = TemplateModel::synthetic_quadruped();
        let params = rest_params(&model);
        let mut obs = exact_obs(&model, &params);
        obs.keypoints[2] += Vector2::new(3.0, 4.0);
        assert!((loss_labeled(&obs, &model, &params).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn pseudo_loss_scales_residuals_by_confidence() {
        let model = TemplateModel::synthetic_quadruped();
        let params = rest_params(&model);
        let mut obs = exact_obs(&model, &params);
        obs.keypoints[5] += Vector2::new(3.0, 4.0);
        obs.conf[5] = 0.5;
        assert!((loss_pseudo(&obs, &model, &params).unwrap() - 2.5).abs() < 1e-12);

        // All-zero confidences kill the loss regardless of residuals.
        obs.conf.iter_mut().for_each(|c| *c = 0.0);
        assert_eq!(loss_pseudo(&obs, &model, &params).unwrap(), 0.0);
    }

    #[test]
    fn unit_confidence_reduces_pseudo_to_labeled() {
        let model = TemplateModel::synthetic_quadruped();
        let params = rest_params(&model);
        let mut obs = exact_obs(&model, &params);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for p in obs.keypoints.iter_mut() {
            *p += Vector2::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
        }
        let a = loss_labeled(&obs, &model, &params).unwrap();
        let b = loss_pseudo(&obs, &model, &params).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn loss_matches_direct_recomputation() {
        // Brute-force recompute oracle: skin, regress, project, and sum
        // the weighted norms with independent code.
        let model = TemplateModel::synthetic_quadruped();
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..20 {
            let q = UnitQuaternion::new_normalize(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .unwrap();
            let camera = WeakPerspectiveCamera::new(
                rng.random_range(0.5..3.0),
                Vector2::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)),
                q,
            )
            .unwrap();
            let params = PoseParams {
                camera,
                shape: ShapeParams::Articulation(Articulation::identity(model.num_parts())),
            };
            let keypoints: Vec<Vector2<f64>> = (0..model.num_keypoints())
                .map(|_| Vector2::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
                .collect();
            let conf: Vec<f64> = (0..model.num_keypoints())
                .map(|_| rng.random_range(0.0..1.0))
                .collect();
            let obs = KeypointObservation::new(
                keypoints,
                conf,
                Bbox::new(-3.0, -3.0, 6.0, 6.0).unwrap(),
            )
            .unwrap();

            let mut expected = 0.0;
            let verts = model.posed_vertices(&params.shape).unwrap();
            for k in 0..model.num_keypoints() {
                let mut x = Vector3::zeros();
                for v in 0..model.num_vertices() {
                    x += model.regressor()[(k, v)] * verts[v];
                }
                let rotated = params.camera.rotation().rotate(&x);
                let proj = Vector2::new(
                    params.camera.scale() * rotated.x,
                    params.camera.scale() * rotated.y,
                ) + params.camera.translation();
                let d = obs.keypoints[k] - proj;
                expected += obs.conf[k] * (d.x * d.x + d.y * d.y).sqrt();
            }

            let got = loss_pseudo(&obs, &model, &params).unwrap();
            assert!(
                (got - expected).abs() < 1e-9,
                "loss {got} differs from oracle {expected}"
            );
        }
    }

    #[test]
    fn keypoint_count_mismatch_is_an_error() {
        let model = TemplateModel::synthetic_quadruped();
        let params = rest_params(&model);
        let obs = KeypointObservation::labeled(
            vec![Vector2::zeros(); 3],
            Bbox::new(0.0, 0.0, 1.0, 1.0).unwrap(),
        )
        .unwrap();
        assert!(loss_labeled(&obs, &model, &params).is_err());
    }

    #[test]
    fn relabeling_keypoints_consistently_preserves_loss() {
        // Swapping keypoint order in both the observation and the
        // regressor rows leaves the loss unchanged.
        let model = TemplateModel::synthetic_quadruped();
        let params = rest_params(&model);
        let mut obs = exact_obs(&model, &params);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for p in obs.keypoints.iter_mut() {
            *p += Vector2::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2));
        }
        for c in obs.conf.iter_mut() {
            *c = rng.random_range(0.1..1.0);
        }
        let base = loss_pseudo(&obs, &model, &params).unwrap();

        let k = model.num_keypoints();
        let perm: Vec<usize> = (0..k).rev().collect();
        let mut regressor = model.regressor().clone();
        for (row, &src) in perm.iter().enumerate() {
            for v in 0..model.num_vertices() {
                regressor[(row, v)] = model.regressor()[(src, v)];
            }
        }
        let relabeled_model = TemplateModel::new(
            model.vertices().to_vec(),
            model.faces().to_vec(),
            model.parts().clone(),
            model.memberships().clone(),
            regressor,
            perm.iter().map(|&i| model.kp_names()[i].clone()).collect(),
        )
        .unwrap();
        let relabeled_obs = KeypointObservation::new(
            perm.iter().map(|&i| obs.keypoints[i]).collect(),
            perm.iter().map(|&i| obs.conf[i]).collect(),
            obs.bbox,
        )
        .unwrap();
        let permuted = loss_pseudo(&relabeled_obs, &relabeled_model, &params).unwrap();
        assert!((base - permuted).abs() < 1e-12);
    }
}
