//! Evaluation metrics: PCK, AUC, camera rotation error, and aggregate
//! per-category reports.

use nalgebra::{Matrix3, Vector2};

use crate::bbox::Bbox;
use crate::error::{CoreError, Result};

/// AUC integration bounds used throughout the evaluation.
pub const AUC_LO: f64 = 0.06;
pub const AUC_HI: f64 = 0.1;
/// Number of PCK thresholds sampled when building report curves.
pub const PCK_SAMPLES: usize = 17;

/// A PCK-vs-threshold curve: strictly increasing thresholds, values in
/// `[0, 1]` and non-decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct PckCurve {
    thresholds: Vec<f64>,
    values: Vec<f64>,
}

impl PckCurve {
    pub fn new(thresholds: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if thresholds.len() != values.len() || thresholds.is_empty() {
            return Err(CoreError::InvalidValue(
                "curve needs matching, nonempty thresholds and values".into(),
            ));
        }
        for pair in thresholds.windows(2) {
            if !(pair[0] < pair[1]) {
                return Err(CoreError::InvalidValue(
                    "curve thresholds must be strictly increasing".into(),
                ));
            }
        }
        for pair in values.windows(2) {
            if pair[1] < pair[0] {
                return Err(CoreError::InvalidValue(
                    "PCK values must be non-decreasing in the threshold".into(),
                ));
            }
        }
        if values
            .iter()
            .any(|v| !v.is_finite() || !(0.0..=1.0).contains(v))
        {
            return Err(CoreError::InvalidValue(
                "PCK values must lie in [0, 1]".into(),
            ));
        }
        Ok(Self { thresholds, values })
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Linear interpolation inside the curve's range.
    fn value_at(&self, t: f64) -> f64 {
        match self
            .thresholds
            .binary_search_by(|x| x.partial_cmp(&t).expect("finite thresholds"))
        {
            Ok(i) => self.values[i],
            Err(i) => {
                let (lo, hi) = (i - 1, i);
                let f = (t - self.thresholds[lo]) / (self.thresholds[hi] - self.thresholds[lo]);
                self.values[lo] + f * (self.values[hi] - self.values[lo])
            }
        }
    }
}

/// Fraction of keypoints within `t * max(w, h)` of the ground truth
/// (boundary inclusive).
pub fn pck(pred: &[Vector2<f64>], gt: &[Vector2<f64>], bbox: &Bbox, t: f64) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(CoreError::DimensionMismatch {
            context: "pck keypoints",
            expected: gt.len(),
            got: pred.len(),
        });
    }
    if pred.is_empty() {
        return Err(CoreError::InvalidValue("pck needs at least one keypoint".into()));
    }
    if !t.is_finite() || t <= 0.0 {
        return Err(CoreError::InvalidValue(format!(
            "pck threshold must be positive, got {t}"
        )));
    }
    let radius = t * bbox.max_dim();
    let hits = pred
        .iter()
        .zip(gt)
        .filter(|(p, g)| (*p - *g).norm() <= radius)
        .count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Area under the PCK curve over `[a1, a2]`, normalized by `a2 - a1` and
/// reported in percent.
pub fn auc(curve: &PckCurve, a1: f64, a2: f64) -> Result<f64> {
    if !(a1 < a2) {
        return Err(CoreError::InvalidValue(format!(
            "auc bounds must satisfy a1 < a2, got [{a1}, {a2}]"
        )));
    }
    let lo = *curve.thresholds.first().expect("nonempty");
    let hi = *curve.thresholds.last().expect("nonempty");
    if a1 < lo - 1e-12 || a2 > hi + 1e-12 {
        return Err(CoreError::InvalidValue(format!(
            "curve covers [{lo}, {hi}] but auc needs [{a1}, {a2}]"
        )));
    }

    // Trapezoid over interior samples plus interpolated endpoints.
    let mut xs = vec![a1];
    xs.extend(
        curve
            .thresholds
            .iter()
            .copied()
            .filter(|&x| x > a1 && x < a2),
    );
    xs.push(a2);
    let mut area = 0.0;
    for pair in xs.windows(2) {
        let (x0, x1) = (pair[0], pair[1]);
        area += 0.5 * (curve.value_at(x0) + curve.value_at(x1)) * (x1 - x0);
    }
    Ok(100.0 * area / (a2 - a1))
}

/// Geodesic rotation error in degrees:
/// `arccos((Tr(R_hat^T R_tilde) - 1) / 2)` with the trace argument
/// clamped to `[-1, 1]`.
pub fn rot_err(r_hat: &Matrix3<f64>, r_tilde: &Matrix3<f64>) -> Result<f64> {
    for (name, r) in [("r_hat", r_hat), ("r_tilde", r_tilde)] {
        let defect = (r * r.transpose() - Matrix3::identity()).abs().max();
        if !defect.is_finite() || defect > 1e-6 {
            return Err(CoreError::InvalidValue(format!(
                "{name} is not orthonormal within 1e-6 (defect {defect})"
            )));
        }
    }
    let tr = (r_hat.transpose() * r_tilde).trace();
    let arg = ((tr - 1.0) / 2.0).clamp(-1.0, 1.0);
    Ok(arg.acos().to_degrees())
}

/// One evaluation instance: predicted and ground-truth 2D keypoints plus
/// camera rotations.
#[derive(Debug, Clone)]
pub struct EvalInstance {
    pub image_id: String,
    pub category: String,
    pub pred_keypoints: Vec<Vector2<f64>>,
    pub gt_keypoints: Vec<Vector2<f64>>,
    pub bbox: Bbox,
    pub pred_rotation: Matrix3<f64>,
    pub gt_rotation: Matrix3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryReport {
    pub category: String,
    pub n_eval: usize,
    pub auc: f64,
    pub err_r_mean_deg: f64,
}

/// Per-category evaluation table; deterministic, sorted by category.
#[derive(Debug, Clone, Default)]
pub struct Report {
    pub rows: Vec<CategoryReport>,
    pub warnings: Vec<String>,
}

impl Report {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("category,N_eval,AUC,err_R_mean_deg\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{:.4},{:.4}\n",
                row.category, row.n_eval, row.auc, row.err_r_mean_deg
            ));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<16} {:>8} {:>8} {:>16}\n",
            "category", "N_eval", "AUC", "err_R_mean_deg"
        ));
        for row in &self.rows {
            out.push_str(&format!(
                "{:<16} {:>8} {:>8.2} {:>16.2}\n",
                row.category, row.n_eval, row.auc, row.err_r_mean_deg
            ));
        }
        if self.rows.is_empty() {
            out.push_str("(no evaluation instances)\n");
        }
        out
    }
}

/// Aggregates instances into a per-category table. The PCK curve is
/// sampled at 17 evenly spaced thresholds in `[0.06, 0.1]`; AUC
/// integrates that curve and `err_R` is averaged in degrees.
///
/// Empty input produces an empty table plus a warning, not an error.
pub fn report(instances: &[EvalInstance]) -> Result<Report> {
    let mut out = Report::default();
    if instances.is_empty() {
        out.warnings.push("no evaluation instances".into());
        return Ok(out);
    }

    let thresholds: Vec<f64> = (0..PCK_SAMPLES)
        .map(|i| AUC_LO + (AUC_HI - AUC_LO) * i as f64 / (PCK_SAMPLES - 1) as f64)
        .collect();

    let mut categories: Vec<String> = instances.iter().map(|e| e.category.clone()).collect();
    categories.sort();
    categories.dedup();

    for category in categories {
        let members: Vec<&EvalInstance> = instances
            .iter()
            .filter(|e| e.category == category)
            .collect();
        let mut values = Vec::with_capacity(thresholds.len());
        for &t in &thresholds {
            let mut sum = 0.0;
            for e in &members {
                sum += pck(&e.pred_keypoints, &e.gt_keypoints, &e.bbox, t)?;
            }
            values.push(sum / members.len() as f64);
        }
        let curve = PckCurve::new(thresholds.clone(), values)?;
        let mut err_sum = 0.0;
        for e in &members {
            err_sum += rot_err(&e.pred_rotation, &e.gt_rotation)?;
        }
        out.rows.push(CategoryReport {
            category,
            n_eval: members.len(),
            auc: auc(&curve, AUC_LO, AUC_HI)?,
            err_r_mean_deg: err_sum / members.len() as f64,
        });
    }
    Ok(out)
}
