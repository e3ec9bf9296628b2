//! Pseudo-label selection: score records with one of the four criteria
//! and keep the best N.
//!
//! KP-conf is higher-is-better; the three consistency-filtering scores
//! are lower-is-better discrepancies, nonnegative and zero only when the
//! inputs agree exactly. Discrepancies are averaged over keypoints so
//! scores stay comparable across categories with different k.

use std::collections::BTreeMap;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::bbox::Bbox;
use crate::error::{CoreError, Result};
use crate::fit::{
    fit_instance, init_camera, predicted_keypoints, FitConfig, PoseParams, ShapeMode,
};
use crate::geometry::{
    Articulation, ShapeParams, Similarity2, TemplateModel, VertexDisplacement,
    WeakPerspectiveCamera,
};
use crate::records::{keypoints_to_vec, DetectionRecord};

/// One CF-MT transform: rotation in degrees and uniform scale, applied
/// about the observation's bbox center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MtSpec {
    pub rot_deg: f64,
    pub scale: f64,
}

impl MtSpec {
    /// The default transform set: rotations of +/-30 degrees and
    /// scalings by 0.75 and 1.25, applied deterministically.
    pub fn default_set() -> Vec<MtSpec> {
        vec![
            MtSpec { rot_deg: -30.0, scale: 1.0 },
            MtSpec { rot_deg: 30.0, scale: 1.0 },
            MtSpec { rot_deg: 0.0, scale: 0.75 },
            MtSpec { rot_deg: 0.0, scale: 1.25 },
        ]
    }

    pub fn to_similarity(&self, bbox: &Bbox) -> Similarity2 {
        Similarity2::about_point(&bbox.center(), self.rot_deg.to_radians(), self.scale)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    KpConf,
    CfMt,
    CfCm,
    CfCm2,
}

impl Criterion {
    /// KP-conf ranks by highest score; the CF family by lowest
    /// discrepancy.
    pub fn higher_is_better(&self) -> bool {
        matches!(self, Criterion::KpConf)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Criterion::KpConf => "kp-conf",
            Criterion::CfMt => "cf-mt",
            Criterion::CfCm => "cf-cm",
            Criterion::CfCm2 => "cf-cm2",
        }
    }
}

impl std::str::FromStr for Criterion {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kp-conf" => Ok(Criterion::KpConf),
            "cf-mt" => Ok(Criterion::CfMt),
            "cf-cm" => Ok(Criterion::CfCm),
            "cf-cm2" => Ok(Criterion::CfCm2),
            other => Err(CoreError::InvalidValue(format!(
                "unknown criterion '{other}' (expected kp-conf|cf-mt|cf-cm|cf-cm2)"
            ))),
        }
    }
}

/// One scored record.
#[derive(Debug, Clone, PartialEq)]
pub struct CriterionScore {
    pub image_id: String,
    pub criterion: Criterion,
    pub value: f64,
}

/// Ranked scores with the selected prefix flagged.
#[derive(Debug, Clone)]
pub struct SelectionReport {
    pub criterion: Criterion,
    pub requested_n: usize,
    pub rows: Vec<SelectionRow>,
    /// True when fewer than `requested_n` records were available.
    pub shortfall: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionRow {
    pub rank: usize,
    pub image_id: String,
    pub score: f64,
    pub selected: bool,
}

impl SelectionReport {
    pub fn selected_ids(&self) -> Vec<&str> {
        self.rows
            .iter()
            .filter(|r| r.selected)
            .map(|r| r.image_id.as_str())
            .collect()
    }

    pub fn selected_n(&self) -> usize {
        self.rows.iter().filter(|r| r.selected).count()
    }
}

/// Sum of per-keypoint confidences.
pub fn kp_conf_score(conf: &[f64]) -> f64 {
    conf.iter().sum()
}

/// Multi-transform consistency: mean over transforms and keypoints of
/// the distance between the base prediction and the inverse-mapped
/// transformed prediction.
pub fn cf_mt_score(
    base: &[Vector2<f64>],
    transformed: &[(Similarity2, Vec<Vector2<f64>>)],
) -> Result<f64> {
    if transformed.is_empty() {
        return Err(CoreError::InvalidValue(
            "cf_mt_score needs at least one transformed prediction".into(),
        ));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (transform, preds) in transformed {
        if preds.len() != base.len() {
            return Err(CoreError::DimensionMismatch {
                context: "cf_mt transformed keypoints",
                expected: base.len(),
                got: preds.len(),
            });
        }
        let inv = transform.inverse()?;
        for (b, p) in base.iter().zip(preds) {
            total += (b - inv.apply(p)).norm();
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Cross-model consistency: mean keypoint distance between two
/// detectors' predictions. Symmetric in its arguments.
pub fn cf_cm_score(pred_a: &[Vector2<f64>], pred_b: &[Vector2<f64>]) -> Result<f64> {
    if pred_a.len() != pred_b.len() {
        return Err(CoreError::DimensionMismatch {
            context: "cf_cm keypoints",
            expected: pred_a.len(),
            got: pred_b.len(),
        });
    }
    if pred_a.is_empty() {
        return Err(CoreError::InvalidValue("cf_cm needs keypoints".into()));
    }
    let total: f64 = pred_a
        .iter()
        .zip(pred_b)
        .map(|(a, b)| (a - b).norm())
        .sum();
    Ok(total / pred_a.len() as f64)
}

/// Cross-model cross-modality consistency: mean distance between the
/// detector's keypoints and the fitted model's reprojected keypoints.
pub fn cf_cm2_score(
    pred: &[Vector2<f64>],
    model: &TemplateModel,
    params: &PoseParams,
) -> Result<f64> {
    if pred.len() != model.num_keypoints() {
        return Err(CoreError::DimensionMismatch {
            context: "cf_cm2 keypoints",
            expected: model.num_keypoints(),
            got: pred.len(),
        });
    }
    let reprojected = predicted_keypoints(model, params)?;
    cf_cm_score(pred, &reprojected)
}

// Record-level scoring used by the pipeline. Distances are expressed in
// bbox-relative units (divided by max(w, h)) so scores are comparable
// across scenes of different size; rankings within a fixed scene are
// unchanged by this.

/// Scores every record by its summed keypoint confidence.
pub fn score_kp_conf(records: &[DetectionRecord]) -> Vec<CriterionScore> {
    let mut out: Vec<CriterionScore> = records
        .iter()
        .map(|r| CriterionScore {
            image_id: r.image_id.clone(),
            criterion: Criterion::KpConf,
            value: kp_conf_score(&r.conf),
        })
        .collect();
    out.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    out
}

/// Scores records by multi-transform consistency, using the transformed
/// predictions embedded in each record.
pub fn score_cf_mt(records: &[DetectionRecord]) -> Result<Vec<CriterionScore>> {
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let preds = r.transformed.as_ref().ok_or_else(|| {
            CoreError::InvalidValue(format!(
                "record '{}' has no transformed predictions for cf-mt",
                r.image_id
            ))
        })?;
        let base = keypoints_to_vec(&r.keypoints);
        let pairs: Vec<(Similarity2, Vec<Vector2<f64>>)> = preds
            .iter()
            .map(|p| {
                let spec = MtSpec {
                    rot_deg: p.rot_deg,
                    scale: p.scale,
                };
                (spec.to_similarity(&r.bbox), keypoints_to_vec(&p.keypoints))
            })
            .collect();
        out.push(CriterionScore {
            image_id: r.image_id.clone(),
            criterion: Criterion::CfMt,
            value: cf_mt_score(&base, &pairs)? / r.bbox.max_dim(),
        });
    }
    out.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    Ok(out)
}

/// Scores records by cross-model consistency between two detectors'
/// predictions, joined on image id.
pub fn score_cf_cm(
    primary: &[DetectionRecord],
    auxiliary: &[DetectionRecord],
) -> Result<Vec<CriterionScore>> {
    let by_id: BTreeMap<&str, &DetectionRecord> = auxiliary
        .iter()
        .map(|r| (r.image_id.as_str(), r))
        .collect();
    let mut out = Vec::with_capacity(primary.len());
    for r in primary {
        let other = by_id.get(r.image_id.as_str()).ok_or_else(|| {
            CoreError::InvalidValue(format!(
                "no auxiliary detection for image '{}'",
                r.image_id
            ))
        })?;
        let a = keypoints_to_vec(&r.keypoints);
        let b = keypoints_to_vec(&other.keypoints);
        out.push(CriterionScore {
            image_id: r.image_id.clone(),
            criterion: Criterion::CfCm,
            value: cf_cm_score(&a, &b)? / r.bbox.max_dim(),
        });
    }
    out.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    Ok(out)
}

/// Scores records by cross-model cross-modality consistency: the
/// template is fit to each record's pseudo-labels (camera initialized
/// from correspondences, shape from rest) and the discrepancy between
/// the pseudo-labels and the fitted reprojection is measured.
pub fn score_cf_cm2(
    records: &[DetectionRecord],
    model: &TemplateModel,
    cfg: &FitConfig,
) -> Result<Vec<CriterionScore>> {
    let rest_kp3d = model.keypoints3d(model.vertices())?;
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let obs = r.observation()?;
        let camera = match init_camera(&rest_kp3d, &obs) {
            Ok(c) => c,
            // Degenerate correspondences: fall back to a frontal camera
            // roughly framing the bbox.
            Err(CoreError::DegenerateConfiguration(_)) => WeakPerspectiveCamera::new(
                obs.bbox.max_dim() / 4.0,
                obs.bbox.center(),
                crate::geometry::UnitQuaternion::identity(),
            )?,
            Err(e) => return Err(e),
        };
        let shape = match cfg.mode {
            ShapeMode::Articulation => {
                ShapeParams::Articulation(Articulation::identity(model.num_parts()))
            }
            ShapeMode::Displacement => {
                ShapeParams::Displacement(VertexDisplacement::zeros(model.num_vertices()))
            }
        };
        let init = PoseParams { camera, shape };
        let (fitted, _) = fit_instance(&obs, model, &init, cfg)?;
        out.push(CriterionScore {
            image_id: r.image_id.clone(),
            criterion: Criterion::CfCm2,
            value: cf_cm2_score(&obs.keypoints, model, &fitted)? / r.bbox.max_dim(),
        });
    }
    out.sort_by(|a, b| a.image_id.cmp(&b.image_id));
    Ok(out)
}

/// Stable sort by score (direction per criterion), ties broken by
/// ascending image id; the first `min(n, pool)` entries are selected.
/// Requesting more than the pool flags a shortfall instead of failing.
pub fn select_top_n(scores: &[CriterionScore], n: usize) -> Result<SelectionReport> {
    let criterion = match scores.first() {
        Some(s) => s.criterion,
        None => {
            return Ok(SelectionReport {
                criterion: Criterion::KpConf,
                requested_n: n,
                rows: vec![],
                shortfall: n > 0,
            })
        }
    };
    for s in scores {
        if s.criterion != criterion {
            return Err(CoreError::InvalidValue(format!(
                "mixed criteria in selection input: {} vs {}",
                s.criterion.as_str(),
                criterion.as_str()
            )));
        }
        if !s.value.is_finite() {
            return Err(CoreError::InvalidValue(format!(
                "non-finite score for image '{}'",
                s.image_id
            )));
        }
        if !criterion.higher_is_better() && s.value < 0.0 {
            return Err(CoreError::InvalidValue(format!(
                "negative discrepancy {} for image '{}'",
                s.value, s.image_id
            )));
        }
    }

    let mut order: Vec<&CriterionScore> = scores.iter().collect();
    order.sort_by(|a, b| {
        let by_value = if criterion.higher_is_better() {
            b.value.partial_cmp(&a.value).expect("finite scores")
        } else {
            a.value.partial_cmp(&b.value).expect("finite scores")
        };
        by_value.then_with(|| a.image_id.cmp(&b.image_id))
    });

    let selected_n = n.min(order.len());
    let rows = order
        .into_iter()
        .enumerate()
        .map(|(i, s)| SelectionRow {
            rank: i + 1,
            image_id: s.image_id.clone(),
            score: s.value,
            selected: i < selected_n,
        })
        .collect();
    Ok(SelectionReport {
        criterion,
        requested_n: n,
        rows,
        shortfall: n > scores.len(),
    })
}
