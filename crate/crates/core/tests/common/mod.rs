//! Shared helpers for the integration and acceptance suites: rank
//! statistics, ground-truth perturbations, and true-error oracles. All
//! of this is harness-side code, independent of the library paths it
//! checks.

use artfit_core::records::{keypoints_to_vec, DetectionRecord};
use artfit_core::{
    Articulation, PoseParams, RigidTransform, SceneTruth, ShapeParams, TemplateModel,
    UnitQuaternion, WeakPerspectiveCamera,
};
use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    pearson(&rx, &ry)
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).expect("finite values"));
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    cov / (vx.sqrt() * vy.sqrt())
}

/// Random unit vector.
pub fn random_axis(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 1e-3 {
            return v / n;
        }
    }
}

/// Rotates the camera by `angle_deg` about a random axis and jitters
/// the articulated (non-root) parts, leaving scale and translation at
/// truth. The root stays put: it is gauge-fixed during fitting.
pub fn perturb_pose(
    truth: &PoseParams,
    camera_angle_deg: f64,
    part_angle_deg: f64,
    part_trans: f64,
    rng: &mut ChaCha8Rng,
) -> PoseParams {
    let tweak = UnitQuaternion::from_axis_angle(
        &random_axis(rng),
        camera_angle_deg.to_radians(),
    )
    .unwrap();
    let camera = WeakPerspectiveCamera::new(
        truth.camera.scale(),
        truth.camera.translation(),
        tweak.compose(&truth.camera.rotation()),
    )
    .unwrap();
    let shape = match &truth.shape {
        ShapeParams::Articulation(art) => {
            let transforms = art
                .transforms
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    if i == 0 {
                        return *t;
                    }
                    let dq = UnitQuaternion::from_axis_angle(
                        &random_axis(rng),
                        part_angle_deg.to_radians() * rng.random_range(0.0..1.0),
                    )
                    .unwrap();
                    let dt = Vector3::new(
                        rng.random_range(-part_trans..=part_trans),
                        rng.random_range(-part_trans..=part_trans),
                        rng.random_range(-part_trans..=part_trans),
                    );
                    RigidTransform::new(dq.compose(&t.rotation), t.translation + dt)
                })
                .collect();
            ShapeParams::Articulation(Articulation { transforms })
        }
        other => other.clone(),
    };
    PoseParams { camera, shape }
}

/// Mean bbox-normalized distance between a detection and the scene's
/// exact keypoints: the "true per-image keypoint error" used as the
/// selection oracle target.
pub fn true_error(record: &DetectionRecord, scene: &SceneTruth) -> f64 {
    let preds = keypoints_to_vec(&record.keypoints);
    let m = scene.bbox.max_dim();
    preds
        .iter()
        .zip(&scene.keypoints)
        .map(|(p, t)| (p - t).norm() / m)
        .sum::<f64>()
        / preds.len() as f64
}

/// Mean bbox-normalized reprojection error of fitted parameters against
/// the scene's exact keypoints.
pub fn reprojection_error(
    model: &TemplateModel,
    params: &PoseParams,
    scene: &SceneTruth,
) -> f64 {
    let verts = model.posed_vertices(&params.shape).unwrap();
    let kp3d = model.keypoints3d(&verts).unwrap();
    let pred = params.camera.project(&kp3d);
    let m = scene.bbox.max_dim();
    pred.iter()
        .zip(&scene.keypoints)
        .map(|(p, t)| (p - t).norm() / m)
        .sum::<f64>()
        / pred.len() as f64
}

/// Rotation error in degrees between a fitted camera and the truth.
pub fn camera_rot_err(fitted: &PoseParams, scene: &SceneTruth) -> f64 {
    artfit_core::rot_err(
        &fitted.camera.rotation().to_rotation_matrix(),
        &scene.pose.camera.rotation().to_rotation_matrix(),
    )
    .unwrap()
}

#[allow(dead_code)]
pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

