//! JSONL wire formats shared by the pipeline stages.
//!
//! Every record file is UTF-8 JSONL, one object per line, rows sorted by
//! `image_id` before writing. Floats round-trip exactly through JSON
//! (shortest representation), which the byte-identical determinism
//! guarantees rely on.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bbox::Bbox;
use crate::error::{CoreError, Result};
use crate::fit::{KeypointObservation, PoseParams, ShapeMode};
use crate::geometry::{
    Articulation, RigidTransform, ShapeParams, UnitQuaternion, VertexDisplacement,
    WeakPerspectiveCamera,
};

/// Public pool row: what the pipeline knows about an image before
/// detection (bounding box, detector box confidence, perceptual hash).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PoolRecord {
    pub image_id: String,
    pub category: String,
    pub bbox: Bbox,
    pub box_conf: f64,
    /// 16-hex-digit dHash of the source image.
    pub dhash: String,
}

/// Simulator ground truth; written to `truth.jsonl`, which only the
/// evaluation stage reads.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthRecord {
    pub image_id: String,
    pub category: String,
    pub camera: CameraRecord,
    pub articulation: Vec<PartPoseRecord>,
    pub keypoints: Vec<[f64; 2]>,
    pub bbox: Bbox,
    pub corrupted: bool,
    pub kp_sigma_scale: Vec<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CameraRecord {
    pub s: f64,
    pub t: [f64; 2],
    pub q: [f64; 4],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartPoseRecord {
    pub part: String,
    pub q: [f64; 4],
    pub t: [f64; 3],
}

/// Per-image keypoint estimates with confidences and provenance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: String,
    pub category: String,
    /// Detector that produced the record.
    pub profile: String,
    pub keypoints: Vec<[f64; 2]>,
    pub conf: Vec<f64>,
    pub bbox: Bbox,
    /// Predictions under equivariant transforms, for CF-MT.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transformed: Option<Vec<MtPrediction>>,
}

/// Keypoints predicted in a transformed frame: rotation (degrees) and
/// uniform scale about the bbox center.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MtPrediction {
    pub rot_deg: f64,
    pub scale: f64,
    pub keypoints: Vec<[f64; 2]>,
}

/// One fitted instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitRecord {
    pub image_id: String,
    pub category: String,
    pub camera: CameraRecord,
    pub mode: ShapeMode,
    pub shape: ShapeRecord,
    pub final_loss: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeRecord {
    Articulation(Vec<PartPoseRecord>),
    Displacement(Vec<[f64; 3]>),
}

/// Selection output lines: one summary line followed by ranked rows.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SelectionLine {
    Summary {
        criterion: String,
        requested_n: usize,
        selected_n: usize,
        /// Set when the pool was smaller than the requested N.
        shortfall: bool,
    },
    Row {
        rank: usize,
        image_id: String,
        score: f64,
        selected: bool,
    },
}

impl CameraRecord {
    pub fn to_camera(&self) -> Result<WeakPerspectiveCamera> {
        WeakPerspectiveCamera::new(
            self.s,
            Vector2::new(self.t[0], self.t[1]),
            UnitQuaternion::try_from(self.q)?,
        )
    }

    pub fn from_camera(c: &WeakPerspectiveCamera) -> Self {
        Self {
            s: c.scale(),
            t: [c.translation().x, c.translation().y],
            q: c.rotation().as_array(),
        }
    }
}

pub fn keypoints_to_vec(kps: &[[f64; 2]]) -> Vec<Vector2<f64>> {
    kps.iter().map(|k| Vector2::new(k[0], k[1])).collect()
}

pub fn keypoints_from_vec(kps: &[Vector2<f64>]) -> Vec<[f64; 2]> {
    kps.iter().map(|k| [k.x, k.y]).collect()
}

impl DetectionRecord {
    pub fn observation(&self) -> Result<KeypointObservation> {
        KeypointObservation::new(
            keypoints_to_vec(&self.keypoints),
            self.conf.clone(),
            self.bbox,
        )
    }
}

pub fn articulation_to_records(
    parts: &crate::geometry::PartTree,
    art: &Articulation,
) -> Vec<PartPoseRecord> {
    parts
        .parts()
        .iter()
        .zip(&art.transforms)
        .map(|(p, t)| PartPoseRecord {
            part: p.name.clone(),
            q: t.rotation.as_array(),
            t: [t.translation.x, t.translation.y, t.translation.z],
        })
        .collect()
}

pub fn articulation_from_records(
    parts: &crate::geometry::PartTree,
    records: &[PartPoseRecord],
) -> Result<Articulation> {
    if records.len() != parts.len() {
        return Err(CoreError::Structural(format!(
            "articulation record covers {} parts, template has {}",
            records.len(),
            parts.len()
        )));
    }
    let mut transforms = Vec::with_capacity(records.len());
    for (part, rec) in parts.parts().iter().zip(records) {
        if part.name != rec.part {
            return Err(CoreError::Structural(format!(
                "articulation part '{}' does not match template part '{}'",
                rec.part, part.name
            )));
        }
        transforms.push(RigidTransform::new(
            UnitQuaternion::try_from(rec.q)?,
            Vector3::new(rec.t[0], rec.t[1], rec.t[2]),
        ));
    }
    Ok(Articulation { transforms })
}

impl FitRecord {
    pub fn from_params(
        image_id: String,
        category: String,
        parts: &crate::geometry::PartTree,
        params: &PoseParams,
        final_loss: f64,
        iterations: usize,
    ) -> Self {
        let (mode, shape) = match &params.shape {
            ShapeParams::Articulation(a) => (
                ShapeMode::Articulation,
                ShapeRecord::Articulation(articulation_to_records(parts, a)),
            ),
            ShapeParams::Displacement(d) => (
                ShapeMode::Displacement,
                ShapeRecord::Displacement(
                    d.offsets.iter().map(|o| [o.x, o.y, o.z]).collect(),
                ),
            ),
        };
        Self {
            image_id,
            category,
            camera: CameraRecord::from_camera(&params.camera),
            mode,
            shape,
            final_loss,
            iterations,
        }
    }

    pub fn to_params(&self, parts: &crate::geometry::PartTree) -> Result<PoseParams> {
        let shape = match &self.shape {
            ShapeRecord::Articulation(records) => {
                ShapeParams::Articulation(articulation_from_records(parts, records)?)
            }
            ShapeRecord::Displacement(offsets) => {
                ShapeParams::Displacement(VertexDisplacement {
                    offsets: offsets
                        .iter()
                        .map(|o| Vector3::new(o[0], o[1], o[2]))
                        .collect(),
                })
            }
        };
        Ok(PoseParams {
            camera: self.camera.to_camera()?,
            shape,
        })
    }
}

/// Reads a JSONL file, reporting schema violations with their row number.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| {
        CoreError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    let reader = BufReader::new(file);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| CoreError::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Writes records as JSONL. Callers sort by `image_id` first; this
/// function preserves order.
pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    for rec in records {
        let line = serde_json::to_string(rec)
            .map_err(|e| CoreError::InvalidValue(format!("serialization failed: {e}")))?;
        w.write_all(line.as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
