//! Weak-perspective camera initialization from 2D-3D correspondences.
//!
//! Confidence-weighted orthographic absolute orientation: both point
//! sets are centered at their weighted means, a weighted affine camera
//! is solved from the 3D-to-2D cross-covariance and the 3D scatter, and
//! the affine map is projected onto the weak-perspective manifold by
//! SVD. Scale and translation then follow in closed form. For exact
//! weak-perspective observations with nondegenerate geometry the
//! recovery is exact.

use nalgebra::{Matrix2x3, Matrix3, Vector2, Vector3};

use super::KeypointObservation;
use crate::error::{CoreError, Result};
use crate::geometry::{UnitQuaternion, WeakPerspectiveCamera};

const RANK_TOL: f64 = 1e-12;

/// Estimates `(s, t, q)` so that `s * (R(q) X)_xy + t` matches the
/// observed keypoints, weighting each correspondence by its confidence.
///
/// Zero-confidence keypoints are ignored exactly. Fails with
/// [`CoreError::DegenerateConfiguration`] when fewer than 3 keypoints
/// have positive confidence or when their 3D positions are collinear.
pub fn init_camera(
    points3d: &[Vector3<f64>],
    obs: &KeypointObservation,
) -> Result<WeakPerspectiveCamera> {
    if points3d.len() != obs.len() {
        return Err(CoreError::DimensionMismatch {
            context: "init_camera correspondences",
            expected: points3d.len(),
            got: obs.len(),
        });
    }

    let usable: Vec<usize> = (0..obs.len()).filter(|&k| obs.conf[k] > 0.0).collect();
    if usable.len() < 3 {
        return Err(CoreError::DegenerateConfiguration(format!(
            "need at least 3 keypoints with positive confidence, got {}",
            usable.len()
        )));
    }

    let total_w: f64 = usable.iter().map(|&k| obs.conf[k]).sum();
    let mean3d: Vector3<f64> = usable
        .iter()
        .map(|&k| obs.conf[k] * points3d[k])
        .sum::<Vector3<f64>>()
        / total_w;
    let mean2d: Vector2<f64> = usable
        .iter()
        .map(|&k| obs.conf[k] * obs.keypoints[k])
        .sum::<Vector2<f64>>()
        / total_w;

    // Weighted 3D scatter and 3D-to-2D cross-covariance.
    let mut scatter = Matrix3::zeros();
    let mut cross = Matrix2x3::zeros();
    for &k in &usable {
        let w = obs.conf[k];
        let x = points3d[k] - mean3d;
        let u = obs.keypoints[k] - mean2d;
        scatter += w * x * x.transpose();
        cross += w * u * x.transpose();
    }

    // Rank check on the 3D scatter: collinear points leave at most one
    // significant eigenvalue.
    let eig = nalgebra::SymmetricEigen::new(scatter);
    let mut lambdas: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    lambdas.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
    if lambdas[0] <= 0.0 || lambdas[1] <= RANK_TOL * lambdas[0] {
        return Err(CoreError::DegenerateConfiguration(
            "3D keypoints are collinear".into(),
        ));
    }

    // Pseudo-inverse of the scatter (rank 2 is allowed: coplanar points
    // still determine the camera up to the plane-reflection ambiguity).
    let mut scatter_pinv = Matrix3::zeros();
    for i in 0..3 {
        let lambda = eig.eigenvalues[i];
        if lambda > RANK_TOL * lambdas[0] {
            let v = eig.eigenvectors.column(i);
            scatter_pinv += (v * v.transpose()) / lambda;
        }
    }

    // Weighted affine camera, then projection onto orthonormal rows.
    let affine = cross * scatter_pinv;
    let svd = affine.svd(true, true);
    let u = svd.u.expect("svd with u requested");
    let v_t = svd.v_t.expect("svd with v_t requested");
    let sigma1 = svd.singular_values[0];
    let sigma2 = svd.singular_values[1];
    if sigma2 <= RANK_TOL * sigma1.max(1.0) {
        return Err(CoreError::DegenerateConfiguration(
            "projected keypoints do not span the image plane".into(),
        ));
    }
    let m = u * v_t; // 2x3 with orthonormal rows
    let scale = 0.5 * (sigma1 + sigma2);

    let r1 = Vector3::new(m[(0, 0)], m[(0, 1)], m[(0, 2)]);
    let r2 = Vector3::new(m[(1, 0)], m[(1, 1)], m[(1, 2)]);
    let r3 = r1.cross(&r2);
    let rot = Matrix3::from_rows(&[r1.transpose(), r2.transpose(), r3.transpose()]);
    let q = UnitQuaternion::from_rotation_matrix(&rot)?;

    let translation = mean2d - scale * (m * mean3d);
    WeakPerspectiveCamera::new(scale, translation, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbox::Bbox;
    use crate::metrics::rot_err;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-0.6..0.6),
                    rng.random_range(-0.4..0.4),
                )
            })
            .collect()
    }

    fn random_camera(rng: &mut ChaCha8Rng) -> WeakPerspectiveCamera {
        WeakPerspectiveCamera::new(
            rng.random_range(50.0..150.0),
            Vector2::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0)),
            UnitQuaternion::new_normalize(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            )
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn exact_roundtrip_recovers_camera() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..50 {
            let pts = random_cloud(&mut rng, 16);
            let cam = random_camera(&mut rng);
            let projected = cam.project(&pts);
            let bbox = Bbox::around_points(&projected, 0.1).unwrap();
            let obs = KeypointObservation::labeled(projected, bbox).unwrap();
            let est = init_camera(&pts, &obs).unwrap();

            assert!(
                (est.scale() - cam.scale()).abs() < 1e-6,
                "scale {} vs {}",
                est.scale(),
                cam.scale()
            );
            assert!((est.translation() - cam.translation()).norm() < 1e-6);
            let err = rot_err(
                &est.rotation().to_rotation_matrix(),
                &cam.rotation().to_rotation_matrix(),
            )
            .unwrap();
            assert!(err < 0.1, "rotation error {err} deg");
        }
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let pts: Vec<Vector3<f64>> = (0..6)
            .map(|i| Vector3::new(i as f64 * 0.3, 2.0 * i as f64 * 0.3, -0.3 * i as f64))
            .collect();
        let obs = KeypointObservation::labeled(
            pts.iter().map(|p| Vector2::new(p.x, p.y)).collect(),
            Bbox::new(-1.0, -1.0, 4.0, 4.0).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            init_camera(&pts, &obs),
            Err(CoreError::DegenerateConfiguration(_))
        ));
    }

    #[test]
    fn fewer_than_three_usable_keypoints_is_degenerate() {
        let pts = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(0.0, 0.0, 1.0),
        ];
        let obs = KeypointObservation::new(
            pts.iter().map(|p| Vector2::new(p.x, p.y)).collect(),
            vec![1.0, 1.0, 0.0, 0.0],
            Bbox::new(-1.0, -1.0, 3.0, 3.0).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            init_camera(&pts, &obs),
            Err(CoreError::DegenerateConfiguration(_))
        ));
    }

    #[test]
    fn zero_confidence_outlier_is_ignored_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let pts = random_cloud(&mut rng, 12);
        let cam = random_camera(&mut rng);
        let projected = cam.project(&pts);
        let bbox = Bbox::around_points(&projected, 0.1).unwrap();

        let clean = KeypointObservation::new(
            projected.clone(),
            vec![1.0; pts.len()],
            bbox,
        )
        .unwrap();
        let mut wild = projected;
        wild[4] = Vector2::new(1e6, -1e6);
        let mut conf = vec![1.0; pts.len()];
        conf[4] = 0.0;
        let outlier = KeypointObservation::new(wild, conf, bbox).unwrap();

        // Drop the same keypoint from the clean solve so both see
        // identical correspondences.
        let mut clean_conf = clean.conf.clone();
        clean_conf[4] = 0.0;
        let clean =
            KeypointObservation::new(clean.keypoints.clone(), clean_conf, bbox).unwrap();

        let a = init_camera(&pts, &clean).unwrap();
        let b = init_camera(&pts, &outlier).unwrap();
        assert!((a.scale() - b.scale()).abs() < 1e-9);
        assert!((a.translation() - b.translation()).norm() < 1e-9);
        assert!(a.rotation().angle_to(&b.rotation()) < 1e-9);
    }

    #[test]
    fn equivariant_to_2d_translation() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let pts = random_cloud(&mut rng, 10);
        let cam = random_camera(&mut rng);
        let projected = cam.project(&pts);
        let bbox = Bbox::around_points(&projected, 0.1).unwrap();
        let obs = KeypointObservation::labeled(projected.clone(), bbox).unwrap();

        let d = Vector2::new(17.5, -3.25);
        let shifted_points: Vec<Vector2<f64>> = projected.iter().map(|p| p + d).collect();
        let shifted_bbox = Bbox::around_points(&shifted_points, 0.1).unwrap();
        let shifted = KeypointObservation::labeled(shifted_points, shifted_bbox).unwrap();

        let a = init_camera(&pts, &obs).unwrap();
        let b = init_camera(&pts, &shifted).unwrap();
        assert!((a.scale() - b.scale()).abs() < 1e-9);
        assert!(a.rotation().angle_to(&b.rotation()) < 1e-9);
        assert!((b.translation() - (a.translation() + d)).norm() < 1e-9);
    }
}
