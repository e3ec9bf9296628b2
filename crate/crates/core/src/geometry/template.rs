//! Articulated template meshes.
//!
//! A template carries rest-pose vertices, triangle faces, a part tree,
//! per-vertex part memberships (convex weights), and a row-stochastic
//! keypoint regressor mapping vertices to semantic keypoints. Shape
//! changes are expressed either as part articulation (skinned through
//! forward kinematics) or as free per-vertex displacements.
//!
//! On disk a template is a minimal OBJ subset (`v`/`f` lines only) plus a
//! JSON sidecar holding the part tree, memberships, regressor, and
//! keypoint names.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use super::kinematics::{forward_kinematics, Articulation, Part, PartTree};
use super::rigid::RigidTransform;
use crate::error::{CoreError, Result};

const WEIGHT_SUM_TOL: f64 = 1e-9;

/// Free per-vertex offsets added to the rest pose.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexDisplacement {
    pub offsets: Vec<Vector3<f64>>,
}

impl VertexDisplacement {
    pub fn zeros(num_vertices: usize) -> Self {
        Self {
            offsets: vec![Vector3::zeros(); num_vertices],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (i, o) in self.offsets.iter().enumerate() {
            if !(o.x.is_finite() && o.y.is_finite() && o.z.is_finite()) {
                return Err(CoreError::InvalidValue(format!(
                    "vertex displacement {i} is not finite"
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

/// Either shape parameterization accepted by the fitting pipeline.
#[derive(Debug, Clone, PartialEq)]
pub enum ShapeParams {
    Articulation(Articulation),
    Displacement(VertexDisplacement),
}

#[derive(Debug, Clone)]
pub struct TemplateModel {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[usize; 3]>,
    parts: PartTree,
    /// `|V| x P`, rows are convex weights.
    memberships: DMatrix<f64>,
    /// `k x |V|`, rows are convex weights.
    regressor: DMatrix<f64>,
    kp_names: Vec<String>,
}

impl TemplateModel {
    pub fn new(
        vertices: Vec<Vector3<f64>>,
        faces: Vec<[usize; 3]>,
        parts: PartTree,
        memberships: DMatrix<f64>,
        regressor: DMatrix<f64>,
        kp_names: Vec<String>,
    ) -> Result<Self> {
        if vertices.is_empty() {
            return Err(CoreError::InvalidValue("template has no vertices".into()));
        }
        for (i, v) in vertices.iter().enumerate() {
            if !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()) {
                return Err(CoreError::InvalidValue(format!(
                    "vertex {i} is not finite"
                )));
            }
        }
        for (i, f) in faces.iter().enumerate() {
            if f.iter().any(|&ix| ix >= vertices.len()) {
                return Err(CoreError::InvalidValue(format!(
                    "face {i} references a vertex index >= {}",
                    vertices.len()
                )));
            }
        }
        check_convex_rows(&memberships, vertices.len(), parts.len(), "memberships")?;
        check_convex_rows(&regressor, kp_names.len(), vertices.len(), "regressor")?;
        Ok(Self {
            vertices,
            faces,
            parts,
            memberships,
            regressor,
            kp_names,
        })
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_parts(&self) -> usize {
        self.parts.len()
    }

    pub fn num_keypoints(&self) -> usize {
        self.kp_names.len()
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn parts(&self) -> &PartTree {
        &self.parts
    }

    pub fn memberships(&self) -> &DMatrix<f64> {
        &self.memberships
    }

    pub fn regressor(&self) -> &DMatrix<f64> {
        &self.regressor
    }

    pub fn kp_names(&self) -> &[String] {
        &self.kp_names
    }

    /// Blends per-part global transforms by vertex memberships:
    /// `V[v] = sum_p a[v,p] * T_p(rest[v])`.
    pub fn skin(&self, transforms: &[RigidTransform]) -> Result<Vec<Vector3<f64>>> {
        if transforms.len() != self.parts.len() {
            return Err(CoreError::DimensionMismatch {
                context: "skin transforms",
                expected: self.parts.len(),
                got: transforms.len(),
            });
        }
        let mut out = Vec::with_capacity(self.vertices.len());
        for (v, rest) in self.vertices.iter().enumerate() {
            let mut p = Vector3::zeros();
            for (j, t) in transforms.iter().enumerate() {
                let a = self.memberships[(v, j)];
                if a != 0.0 {
                    p += a * t.apply(rest);
                }
            }
            out.push(p);
        }
        Ok(out)
    }

    /// Rest pose plus per-vertex offsets.
    pub fn deform(&self, displacement: &VertexDisplacement) -> Result<Vec<Vector3<f64>>> {
        if displacement.len() != self.vertices.len() {
            return Err(CoreError::DimensionMismatch {
                context: "vertex displacement",
                expected: self.vertices.len(),
                got: displacement.len(),
            });
        }
        Ok(self
            .vertices
            .iter()
            .zip(&displacement.offsets)
            .map(|(v, d)| v + d)
            .collect())
    }

    /// Regresses 3D keypoints from posed vertices: `X = A * V`.
    pub fn keypoints3d(&self, vertices: &[Vector3<f64>]) -> Result<Vec<Vector3<f64>>> {
        if vertices.len() != self.vertices.len() {
            return Err(CoreError::DimensionMismatch {
                context: "keypoints3d vertices",
                expected: self.vertices.len(),
                got: vertices.len(),
            });
        }
        let mut out = Vec::with_capacity(self.kp_names.len());
        for k in 0..self.kp_names.len() {
            let mut x = Vector3::zeros();
            for (v, vertex) in vertices.iter().enumerate() {
                let a = self.regressor[(k, v)];
                if a != 0.0 {
                    x += a * vertex;
                }
            }
            out.push(x);
        }
        Ok(out)
    }

    /// Vertices for either shape parameterization.
    pub fn posed_vertices(&self, shape: &ShapeParams) -> Result<Vec<Vector3<f64>>> {
        match shape {
            ShapeParams::Articulation(a) => {
                let transforms = forward_kinematics(&self.parts, a)?;
                self.skin(&transforms)
            }
            ShapeParams::Displacement(d) => self.deform(d),
        }
    }

    /// Writes `*.obj` plus the `*.meta.json` sidecar.
    pub fn save(&self, obj_path: &Path) -> Result<()> {
        let mut obj = String::new();
        for v in &self.vertices {
            obj.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
        }
        for f in &self.faces {
            obj.push_str(&format!("f {} {} {}\n", f[0] + 1, f[1] + 1, f[2] + 1));
        }
        fs::write(obj_path, obj)?;

        let meta = TemplateMeta {
            kp_names: self.kp_names.clone(),
            parts: self
                .parts
                .parts()
                .iter()
                .map(|p| PartMeta {
                    name: p.name.clone(),
                    parent: p.parent.map(|i| self.parts.parts()[i].name.clone()),
                    pivot: [p.pivot.x, p.pivot.y, p.pivot.z],
                })
                .collect(),
            memberships: matrix_rows(&self.memberships),
            regressor: matrix_rows(&self.regressor),
        };
        let json = serde_json::to_string_pretty(&meta)
            .map_err(|e| CoreError::InvalidValue(format!("meta serialization failed: {e}")))?;
        fs::write(sidecar_path(obj_path), json)?;
        Ok(())
    }

    /// Loads `*.obj` and its `*.meta.json` sidecar.
    pub fn load(obj_path: &Path) -> Result<Self> {
        let obj_text = fs::read_to_string(obj_path)?;
        let (vertices, faces) = parse_obj(&obj_text, &obj_path.display().to_string())?;

        let meta_path = sidecar_path(obj_path);
        let meta_text = fs::read_to_string(&meta_path)?;
        let meta: TemplateMeta = serde_json::from_str(&meta_text).map_err(|e| CoreError::Parse {
            path: meta_path.display().to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;

        let mut parts = Vec::with_capacity(meta.parts.len());
        for pm in &meta.parts {
            let parent = match &pm.parent {
                None => None,
                Some(name) => Some(
                    meta.parts
                        .iter()
                        .position(|q| &q.name == name)
                        .ok_or_else(|| {
                            CoreError::Structural(format!(
                                "part '{}' names unknown parent '{}'",
                                pm.name, name
                            ))
                        })?,
                ),
            };
            parts.push(Part {
                name: pm.name.clone(),
                parent,
                pivot: Vector3::new(pm.pivot[0], pm.pivot[1], pm.pivot[2]),
            });
        }

        Self::new(
            vertices,
            faces,
            PartTree::new(parts)?,
            rows_to_matrix(&meta.memberships, "memberships")?,
            rows_to_matrix(&meta.regressor, "regressor")?,
            meta.kp_names,
        )
    }

    /// A small articulated quadruped used by the simulator and tests:
    /// 36 vertices, 10 parts (torso, head, four two-segment legs), and 16
    /// keypoints with Pascal-style names.
    pub fn synthetic_quadruped() -> Self {
        let mut vertices = Vec::new();
        // Torso box corners (x fore/aft, y up, z left), then spine and belly.
        for &x in &[-0.7, 0.7] {
            for &y in &[-0.1, 0.35] {
                for &z in &[-0.25, 0.25] {
                    vertices.push(Vector3::new(x, y, z));
                }
            }
        }
        vertices.push(Vector3::new(0.0, 0.4, 0.0)); // 8: spine mid
        vertices.push(Vector3::new(0.0, -0.15, 0.0)); // 9: belly
        // Head cluster.
        vertices.push(Vector3::new(0.8, 0.45, 0.0)); // 10: neck base
        vertices.push(Vector3::new(1.05, 0.55, 0.0)); // 11: head center
        vertices.push(Vector3::new(1.25, 0.45, 0.0)); // 12: nose
        vertices.push(Vector3::new(1.0, 0.75, 0.12)); // 13: left ear
        vertices.push(Vector3::new(1.0, 0.75, -0.12)); // 14: right ear
        vertices.push(Vector3::new(1.15, 0.35, 0.0)); // 15: chin
        // Legs: (hip, mid upper, knee, shin, hoof) x (fl, fr, bl, br).
        let leg_anchors = [
            (0.6, 0.25),
            (0.6, -0.25),
            (-0.6, 0.25),
            (-0.6, -0.25),
        ];
        for &(x, z) in &leg_anchors {
            vertices.push(Vector3::new(x, -0.1, z));
            vertices.push(Vector3::new(x, -0.35, z));
            vertices.push(Vector3::new(x, -0.55, z));
            vertices.push(Vector3::new(x, -0.75, z));
            vertices.push(Vector3::new(x, -0.95, z));
        }

        let parts = PartTree::new(vec![
            Part {
                name: "torso".into(),
                parent: None,
                pivot: Vector3::zeros(),
            },
            Part {
                name: "head".into(),
                parent: Some(0),
                pivot: Vector3::new(0.8, 0.4, 0.0),
            },
            Part {
                name: "leg_fl_upper".into(),
                parent: Some(0),
                pivot: Vector3::new(0.6, -0.1, 0.25),
            },
            Part {
                name: "leg_fl_lower".into(),
                parent: Some(2),
                pivot: Vector3::new(0.6, -0.55, 0.25),
            },
            Part {
                name: "leg_fr_upper".into(),
                parent: Some(0),
                pivot: Vector3::new(0.6, -0.1, -0.25),
            },
            Part {
                name: "leg_fr_lower".into(),
                parent: Some(4),
                pivot: Vector3::new(0.6, -0.55, -0.25),
            },
            Part {
                name: "leg_bl_upper".into(),
                parent: Some(0),
                pivot: Vector3::new(-0.6, -0.1, 0.25),
            },
            Part {
                name: "leg_bl_lower".into(),
                parent: Some(6),
                pivot: Vector3::new(-0.6, -0.55, 0.25),
            },
            Part {
                name: "leg_br_upper".into(),
                parent: Some(0),
                pivot: Vector3::new(-0.6, -0.1, -0.25),
            },
            Part {
                name: "leg_br_lower".into(),
                parent: Some(8),
                pivot: Vector3::new(-0.6, -0.55, -0.25),
            },
        ])
        .expect("builtin part tree is valid");

        let nv = vertices.len();
        let mut memberships = DMatrix::zeros(nv, parts.len());
        for v in 0..10 {
            memberships[(v, 0)] = 1.0; // torso block
        }
        memberships[(10, 0)] = 0.5; // neck base blends torso/head
        memberships[(10, 1)] = 0.5;
        for v in 11..16 {
            memberships[(v, 1)] = 1.0;
        }
        for leg in 0..4 {
            let base = 16 + 5 * leg;
            let upper = 2 + 2 * leg;
            let lower = upper + 1;
            memberships[(base, 0)] = 0.6; // hip blends into torso
            memberships[(base, upper)] = 0.4;
            memberships[(base + 1, upper)] = 1.0;
            memberships[(base + 2, upper)] = 0.5; // knee blends the segments
            memberships[(base + 2, lower)] = 0.5;
            memberships[(base + 3, lower)] = 1.0;
            memberships[(base + 4, lower)] = 1.0;
        }

        let kp_names: Vec<String> = [
            "nose",
            "chin",
            "l_ear",
            "r_ear",
            "l_eye",
            "r_eye",
            "withers",
            "tail_base",
            "l_f_knee",
            "l_f_hoof",
            "r_f_knee",
            "r_f_hoof",
            "l_b_knee",
            "l_b_hoof",
            "r_b_knee",
            "r_b_hoof",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();

        let mut regressor = DMatrix::zeros(kp_names.len(), nv);
        regressor[(0, 12)] = 1.0; // nose
        regressor[(1, 15)] = 1.0; // chin
        regressor[(2, 13)] = 1.0; // l_ear
        regressor[(3, 14)] = 1.0; // r_ear
        regressor[(4, 11)] = 0.6; // l_eye between head center and ear
        regressor[(4, 13)] = 0.4;
        regressor[(5, 11)] = 0.6;
        regressor[(5, 14)] = 0.4;
        regressor[(6, 6)] = 0.5; // withers: front top edge midpoint
        regressor[(6, 7)] = 0.5;
        regressor[(7, 2)] = 0.5; // tail base: rear top edge midpoint
        regressor[(7, 3)] = 0.5;
        for leg in 0..4 {
            let base = 16 + 5 * leg;
            regressor[(8 + 2 * leg, base + 2)] = 1.0; // knee
            regressor[(9 + 2 * leg, base + 4)] = 1.0; // hoof
        }

        let faces = vec![
            // Torso box shell.
            [0, 1, 3],
            [0, 3, 2],
            [4, 6, 7],
            [4, 7, 5],
            [0, 2, 6],
            [0, 6, 4],
            [1, 5, 7],
            [1, 7, 3],
            [2, 3, 8],
            [6, 8, 7],
            [0, 4, 9],
            [1, 9, 5],
            // Head fan.
            [10, 11, 13],
            [10, 14, 11],
            [11, 12, 13],
            [11, 14, 12],
            [12, 15, 10],
            // One thin strip per leg.
            [16, 17, 18],
            [18, 19, 20],
            [21, 22, 23],
            [23, 24, 25],
            [26, 27, 28],
            [28, 29, 30],
            [31, 32, 33],
            [33, 34, 35],
        ];

        Self::new(vertices, faces, parts, memberships, regressor, kp_names)
            .expect("builtin template satisfies all invariants")
    }
}

fn check_convex_rows(
    m: &DMatrix<f64>,
    rows: usize,
    cols: usize,
    what: &'static str,
) -> Result<()> {
    if m.nrows() != rows || m.ncols() != cols {
        return Err(CoreError::InvalidValue(format!(
            "{what} must be {rows}x{cols}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    for r in 0..rows {
        let mut sum = 0.0;
        for c in 0..cols {
            let w = m[(r, c)];
            if !w.is_finite() || w < 0.0 {
                return Err(CoreError::InvalidValue(format!(
                    "{what} entry ({r}, {c}) = {w} must be finite and nonnegative"
                )));
            }
            sum += w;
        }
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(CoreError::InvalidValue(format!(
                "{what} row {r} sums to {sum}, expected 1"
            )));
        }
    }
    Ok(())
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(CoreError::InvalidValue(format!("{what} is empty")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(CoreError::InvalidValue(format!("{what} rows are ragged")));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

/// `model.obj` -> `model.meta.json`
pub fn sidecar_path(obj_path: &Path) -> PathBuf {
    obj_path.with_extension("meta.json")
}

#[derive(Serialize, Deserialize)]
struct TemplateMeta {
    kp_names: Vec<String>,
    parts: Vec<PartMeta>,
    memberships: Vec<Vec<f64>>,
    regressor: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct PartMeta {
    name: String,
    parent: Option<String>,
    pivot: [f64; 3],
}

fn parse_obj(text: &str, path: &str) -> Result<(Vec<Vector3<f64>>, Vec<[usize; 3]>)> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut tok = line.split_whitespace();
        let parse_err = |message: String| CoreError::Parse {
            path: path.to_string(),
            line: lineno + 1,
            message,
        };
        match tok.next() {
            Some("v") => {
                let coords: Vec<f64> = tok
                    .map(|t| t.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| parse_err(format!("bad vertex coordinate: {e}")))?;
                if coords.len() != 3 {
                    return Err(parse_err(format!(
                        "vertex line needs 3 coordinates, got {}",
                        coords.len()
                    )));
                }
                vertices.push(Vector3::new(coords[0], coords[1], coords[2]));
            }
            Some("f") => {
                let idx: Vec<usize> = tok
                    .map(|t| t.parse::<usize>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| parse_err(format!("bad face index: {e}")))?;
                if idx.len() != 3 {
                    return Err(parse_err(format!(
                        "face line needs 3 vertex indices, got {}",
                        idx.len()
                    )));
                }
                if idx.iter().any(|&i| i == 0) {
                    return Err(parse_err("face indices are 1-based".into()));
                }
                faces.push([idx[0] - 1, idx[1] - 1, idx[2] - 1]);
            }
            Some(other) => {
                return Err(parse_err(format!(
                    "unsupported OBJ element '{other}' (only v/f lines are accepted)"
                )));
            }
            None => {}
        }
    }
    Ok((vertices, faces))
}
