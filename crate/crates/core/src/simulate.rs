//! Synthetic scenes with known ground truth and emulated keypoint
//! detectors.
//!
//! Pools stand in for web-scraped images: each scene carries an exact
//! camera/articulation/keypoint ground truth, and a corruption flag
//! marking scenes whose detections come from a wrong or truncated
//! object. A corrupted scene keeps its exact truth; every detector call
//! on it perceives an independent uniform-in-bbox keypoint set instead
//! of the real one, localizes that confidently, and therefore produces
//! pseudo-labels whose true error is large while its reported
//! confidence stays high.
//!
//! All randomness flows from the pool seed through labeled splitmix
//! derivations, so identical seeds give identical pools and detections,
//! independent of threading or call order.

use nalgebra::{Vector2, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, UnitSphere};

use crate::bbox::Bbox;
use crate::error::{CoreError, Result};
use crate::fit::PoseParams;
use crate::geometry::{
    forward_kinematics, Articulation, RigidTransform, ShapeParams, TemplateModel, UnitQuaternion,
};
use crate::records::{
    articulation_from_records, articulation_to_records, keypoints_from_vec, keypoints_to_vec,
    DetectionRecord, MtPrediction, PoolRecord, TruthRecord,
};
use crate::seed::{derive_seed, derive_seed_indexed, splitmix64};
use crate::select::MtSpec;

/// Pool generation parameters. Camera azimuth is uniform; elevation,
/// roll, and per-part articulation angles are bounded.
#[derive(Debug, Clone)]
pub struct PoolConfig {
    pub n: usize,
    pub corruption_rate: f64,
    pub seed: u64,
    pub category: String,
    pub scale_range: (f64, f64),
    pub center: Vector2<f64>,
    pub center_jitter: f64,
    pub elevation_deg: f64,
    pub roll_deg: f64,
    pub articulation_deg: f64,
    /// Per-scene difficulty multiplier on detector noise, log-uniform.
    pub difficulty_range: (f64, f64),
    pub bbox_margin: f64,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            n: 0,
            corruption_rate: 0.0,
            seed: 0,
            category: "quadruped".into(),
            scale_range: (70.0, 130.0),
            center: Vector2::new(128.0, 128.0),
            center_jitter: 25.0,
            elevation_deg: 25.0,
            roll_deg: 10.0,
            articulation_deg: 18.0,
            difficulty_range: (0.6, 1.8),
            bbox_margin: 0.08,
        }
    }
}

impl PoolConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.corruption_rate) || !self.corruption_rate.is_finite() {
            return Err(CoreError::InvalidValue(format!(
                "corruption_rate {} is outside [0, 1]",
                self.corruption_rate
            )));
        }
        if self.scale_range.0 <= 0.0 || self.scale_range.1 < self.scale_range.0 {
            return Err(CoreError::InvalidValue(
                "scale_range must be positive and ordered".into(),
            ));
        }
        if self.difficulty_range.0 <= 0.0 || self.difficulty_range.1 < self.difficulty_range.0 {
            return Err(CoreError::InvalidValue(
                "difficulty_range must be positive and ordered".into(),
            ));
        }
        Ok(())
    }
}

/// Ground truth for one simulated scene. The stored keypoints are the
/// exact projections of the posed model under the stored camera.
#[derive(Debug, Clone)]
pub struct SceneTruth {
    pub image_id: String,
    pub category: String,
    pub pose: PoseParams,
    pub keypoints: Vec<Vector2<f64>>,
    pub bbox: Bbox,
    pub corrupted: bool,
    /// Per-keypoint noise multipliers (scene difficulty).
    pub kp_sigma_scale: Vec<f64>,
    pub seed: u64,
    pub box_conf: f64,
    pub dhash_bits: u64,
}

impl SceneTruth {
    pub fn to_truth_record(&self, model: &TemplateModel) -> TruthRecord {
        let articulation = match &self.pose.shape {
            ShapeParams::Articulation(a) => articulation_to_records(model.parts(), a),
            ShapeParams::Displacement(_) => vec![],
        };
        TruthRecord {
            image_id: self.image_id.clone(),
            category: self.category.clone(),
            camera: crate::records::CameraRecord::from_camera(&self.pose.camera),
            articulation,
            keypoints: keypoints_from_vec(&self.keypoints),
            bbox: self.bbox,
            corrupted: self.corrupted,
            kp_sigma_scale: self.kp_sigma_scale.clone(),
            seed: self.seed,
        }
    }

    pub fn from_truth_record(record: &TruthRecord, model: &TemplateModel) -> Result<Self> {
        let articulation = articulation_from_records(model.parts(), &record.articulation)?;
        Ok(Self {
            image_id: record.image_id.clone(),
            category: record.category.clone(),
            pose: PoseParams {
                camera: record.camera.to_camera()?,
                shape: ShapeParams::Articulation(articulation),
            },
            keypoints: keypoints_to_vec(&record.keypoints),
            bbox: record.bbox,
            corrupted: record.corrupted,
            kp_sigma_scale: record.kp_sigma_scale.clone(),
            seed: record.seed,
            box_conf: 0.0,
            dhash_bits: 0,
        })
    }

    pub fn to_pool_record(&self) -> PoolRecord {
        PoolRecord {
            image_id: self.image_id.clone(),
            category: self.category.clone(),
            bbox: self.bbox,
            box_conf: self.box_conf,
            dhash: format!("{:016x}", self.dhash_bits),
        }
    }
}

/// An emulated heatmap detector: localization noise, per-keypoint bias,
/// equivariance-violation noise, and a monotone-decreasing map from the
/// realized localization error to the reported confidence.
#[derive(Debug, Clone)]
pub struct DetectorProfile {
    pub name: String,
    /// Localization noise, bbox-relative units.
    pub sigma: f64,
    /// Systematic per-keypoint offset, bbox-relative units.
    pub bias: Vec<Vector2<f64>>,
    /// Extra noise applied only under equivariant transforms.
    pub sigma_e: f64,
    /// Confidence falloff: `c = exp(-err / conf_scale)`.
    pub conf_scale: f64,
}

impl DetectorProfile {
    pub fn new(
        name: String,
        sigma: f64,
        bias: Vec<Vector2<f64>>,
        sigma_e: f64,
        conf_scale: f64,
    ) -> Result<Self> {
        if sigma < 0.0 || sigma_e < 0.0 || !sigma.is_finite() || !sigma_e.is_finite() {
            return Err(CoreError::InvalidValue(
                "detector noise levels must be nonnegative".into(),
            ));
        }
        if conf_scale <= 0.0 || !conf_scale.is_finite() {
            return Err(CoreError::InvalidValue(
                "conf_scale must be positive".into(),
            ));
        }
        Ok(Self {
            name,
            sigma,
            bias,
            sigma_e,
            conf_scale,
        })
    }

    /// Exact detector: zero noise, zero bias, confidence pinned at 1.
    pub fn noise_free(name: &str, num_keypoints: usize) -> Self {
        Self {
            name: name.into(),
            sigma: 0.0,
            bias: vec![Vector2::zeros(); num_keypoints],
            sigma_e: 0.0,
            conf_scale: 0.05,
        }
    }

    /// Deterministic per-keypoint bias pattern rotating around the unit
    /// circle; `phase` differentiates detector architectures.
    pub fn with_bias_pattern(
        name: &str,
        num_keypoints: usize,
        sigma: f64,
        sigma_e: f64,
        conf_scale: f64,
        bias_mag: f64,
        phase: f64,
    ) -> Result<Self> {
        let golden = 2.399_963_229_728_653;
        let bias = (0..num_keypoints)
            .map(|k| {
                let a = phase + golden * k as f64;
                bias_mag * Vector2::new(a.cos(), a.sin())
            })
            .collect();
        Self::new(name.into(), sigma, bias, sigma_e, conf_scale)
    }

    /// Monotone-decreasing confidence from bbox-relative error.
    pub fn confidence(&self, err: f64) -> f64 {
        (-err / self.conf_scale).exp()
    }
}

/// Generates `cfg.n` scenes with exact ground truth; `floor(rate * n)`
/// of them (chosen by a seeded shuffle) are flagged corrupted.
pub fn make_pool(model: &TemplateModel, cfg: &PoolConfig) -> Result<Vec<SceneTruth>> {
    cfg.validate()?;
    let mut corrupted = vec![false; cfg.n];
    let num_corrupted = (cfg.corruption_rate * cfg.n as f64).floor() as usize;
    let mut indices: Vec<usize> = (0..cfg.n).collect();
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "corruption"));
    indices.shuffle(&mut shuffle_rng);
    for &i in indices.iter().take(num_corrupted) {
        corrupted[i] = true;
    }

    let mut pool = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let scene_seed = derive_seed_indexed(cfg.seed, "scene", i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(scene_seed);

        // Camera: uniform azimuth, bounded elevation and roll.
        let azimuth = rng.random_range(0.0..std::f64::consts::TAU);
        let elevation = rng.random_range(-1.0..1.0) * cfg.elevation_deg.to_radians();
        let roll = rng.random_range(-1.0..1.0) * cfg.roll_deg.to_radians();
        let q_az = UnitQuaternion::from_axis_angle(&Vector3::y(), azimuth).expect("unit axis");
        let q_el = UnitQuaternion::from_axis_angle(&Vector3::x(), elevation).expect("unit axis");
        let q_roll = UnitQuaternion::from_axis_angle(&Vector3::z(), roll).expect("unit axis");
        let rotation = q_roll.compose(&q_el).compose(&q_az);
        let scale = rng.random_range(cfg.scale_range.0..=cfg.scale_range.1);
        let translation = cfg.center
            + Vector2::new(
                rng.random_range(-cfg.center_jitter..=cfg.center_jitter),
                rng.random_range(-cfg.center_jitter..=cfg.center_jitter),
            );
        let camera =
            crate::geometry::WeakPerspectiveCamera::new(scale, translation, rotation)?;

        // Articulation: bounded rotation of each non-root part about its
        // pivot.
        let max_angle = cfg.articulation_deg.to_radians();
        let mut transforms = vec![RigidTransform::identity(); model.num_parts()];
        for (p, t) in transforms.iter_mut().enumerate().skip(1) {
            let axis: [f64; 3] = UnitSphere.sample(&mut rng);
            let angle = rng.random_range(-max_angle..=max_angle);
            let q = UnitQuaternion::from_axis_angle(
                &Vector3::new(axis[0], axis[1], axis[2]),
                angle,
            )
            .expect("unit axis");
            *t = RigidTransform::about_pivot(q, &model.parts().parts()[p].pivot);
        }
        let articulation = Articulation { transforms };

        let globals = forward_kinematics(model.parts(), &articulation)?;
        let vertices = model.skin(&globals)?;
        let kp3d = model.keypoints3d(&vertices)?;
        let keypoints = camera.project(&kp3d);
        let projected_vertices = camera.project(&vertices);
        let bbox = Bbox::around_points(&projected_vertices, cfg.bbox_margin)?;

        let difficulty = {
            let (lo, hi) = cfg.difficulty_range;
            (rng.random_range(lo.ln()..=hi.ln())).exp()
        };
        let kp_sigma_scale: Vec<f64> = (0..model.num_keypoints())
            .map(|_| difficulty * rng.random_range(-0.1..0.1f64).exp())
            .collect();

        let u: f64 = rng.random();
        let box_conf = if corrupted[i] {
            1.0 - 0.25 * u * u
        } else {
            1.0 - 0.1 * u * u
        };

        pool.push(SceneTruth {
            image_id: format!("img_{i:06}"),
            category: cfg.category.clone(),
            pose: PoseParams {
                camera,
                shape: ShapeParams::Articulation(articulation),
            },
            keypoints,
            bbox,
            corrupted: corrupted[i],
            kp_sigma_scale,
            seed: scene_seed,
            box_conf,
            dhash_bits: splitmix64(scene_seed ^ 0xD1FF_E7E4_5EED_0001),
        });
    }
    Ok(pool)
}

/// The keypoints a detector perceives on a scene: the exact truth, or a
/// fresh uniform-in-bbox draw when the scene is corrupted. Each call
/// site passes a distinct label so different detectors and transform
/// branches hallucinate independently.
fn perceived_target(scene: &SceneTruth, rng: &mut ChaCha8Rng) -> Vec<Vector2<f64>> {
    if !scene.corrupted {
        return scene.keypoints.clone();
    }
    (0..scene.keypoints.len())
        .map(|_| {
            Vector2::new(
                scene.bbox.x_min + rng.random::<f64>() * scene.bbox.w,
                scene.bbox.y_min + rng.random::<f64>() * scene.bbox.h,
            )
        })
        .collect()
}

fn check_profile(profile: &DetectorProfile, scene: &SceneTruth) -> Result<()> {
    if profile.bias.len() != scene.keypoints.len() {
        return Err(CoreError::DimensionMismatch {
            context: "detector bias vector",
            expected: scene.keypoints.len(),
            got: profile.bias.len(),
        });
    }
    if scene.kp_sigma_scale.len() != scene.keypoints.len() {
        return Err(CoreError::DimensionMismatch {
            context: "scene noise metadata",
            expected: scene.keypoints.len(),
            got: scene.kp_sigma_scale.len(),
        });
    }
    Ok(())
}

/// Runs the detector on a scene: prediction = perceived keypoint + bias
/// + Gaussian noise, confidence from the profile's monotone map of the
/// realized (perceived) localization error.
pub fn detect(profile: &DetectorProfile, scene: &SceneTruth) -> Result<DetectionRecord> {
    check_profile(profile, scene)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
        scene.seed,
        &format!("detect:{}", profile.name),
    ));
    let m = scene.bbox.max_dim();
    let target = perceived_target(scene, &mut rng);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut keypoints = Vec::with_capacity(target.len());
    let mut conf = Vec::with_capacity(target.len());
    for (k, t) in target.iter().enumerate() {
        let sigma = profile.sigma * scene.kp_sigma_scale[k];
        let noise = Vector2::new(normal.sample(&mut rng), normal.sample(&mut rng)) * sigma * m;
        let pred = t + profile.bias[k] * m + noise;
        let err = (pred - t).norm() / m;
        keypoints.push(pred);
        conf.push(profile.confidence(err));
    }
    Ok(DetectionRecord {
        image_id: scene.image_id.clone(),
        category: scene.category.clone(),
        profile: profile.name.clone(),
        keypoints: keypoints_from_vec(&keypoints),
        conf,
        bbox: scene.bbox,
        transformed: None,
    })
}

/// Detector output in a transformed frame: the perceived keypoints are
/// mapped through the transform, then bias, localization noise, and
/// equivariance-violation noise are applied in that frame.
pub fn detect_transformed(
    profile: &DetectorProfile,
    scene: &SceneTruth,
    spec: &MtSpec,
    tag: u64,
) -> Result<Vec<Vector2<f64>>> {
    check_profile(profile, scene)?;
    let transform = spec.to_similarity(&scene.bbox);
    if transform.scale.abs() < 1e-12 {
        return Err(CoreError::InvalidValue(
            "transform with zero scale is not invertible".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed_indexed(
        scene.seed,
        &format!("detect-mt:{}", profile.name),
        tag,
    ));
    let m = scene.bbox.max_dim() * transform.scale.abs();
    let target = perceived_target(scene, &mut rng);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");

    let mut out = Vec::with_capacity(target.len());
    for (k, t) in target.iter().enumerate() {
        let sigma = profile.sigma * scene.kp_sigma_scale[k];
        let loc_noise =
            Vector2::new(normal.sample(&mut rng), normal.sample(&mut rng)) * sigma * m;
        let equiv_noise = Vector2::new(normal.sample(&mut rng), normal.sample(&mut rng))
            * profile.sigma_e
            * m;
        out.push(transform.apply(t) + profile.bias[k] * m + loc_noise + equiv_noise);
    }
    Ok(out)
}

/// Full detection record including transformed predictions for CF-MT.
pub fn detect_with_transforms(
    profile: &DetectorProfile,
    scene: &SceneTruth,
    specs: &[MtSpec],
) -> Result<DetectionRecord> {
    let mut record = detect(profile, scene)?;
    let mut preds = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let kps = detect_transformed(profile, scene, spec, i as u64)?;
        preds.push(MtPrediction {
            rot_deg: spec.rot_deg,
            scale: spec.scale,
            keypoints: keypoints_from_vec(&kps),
        });
    }
    record.transformed = Some(preds);
    Ok(record)
}
