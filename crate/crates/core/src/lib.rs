//! artfit-core: fit articulated 3D template shapes to 2D keypoints and
//! curate noisy keypoint pseudo-labels.
//!
//! The crate is organized around the pipeline stages:
//!
//! - [`geometry`]: templates, rotations, forward kinematics, skinning,
//!   keypoint regression, weak-perspective projection.
//! - [`fit`]: confidence-weighted reprojection losses with analytic
//!   gradients, per-instance pose/shape optimization, and camera
//!   initialization from 2D-3D correspondences.
//! - [`select`]: the four pseudo-label selection criteria and top-N
//!   subset selection.
//! - [`curate`]: perceptual-hash dedup and detection-confidence
//!   thresholding of a raw image pool.
//! - [`simulate`]: synthetic scenes with known ground truth and noisy
//!   detector emulation, so selection and fitting can be verified against
//!   oracles.
//! - [`metrics`]: PCK, AUC, camera rotation error, and aggregate reports.
//! - [`records`]: the JSONL wire formats shared by the CLI stages.

pub mod bbox;
pub mod curate;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod metrics;
pub mod records;
pub mod seed;
pub mod select;
pub mod simulate;

pub use bbox::Bbox;
pub use error::{CoreError, Result};
pub use fit::{
    fit_instance, grad, init_camera, loss_labeled, loss_pseudo, FitConfig, FitTrace, Gradient,
    KeypointObservation, LossKind, PoseParams, ShapeMode,
};
pub use geometry::{
    forward_kinematics, Articulation, Part, PartTree, RigidTransform, ShapeParams, Similarity2,
    TemplateModel, UnitQuaternion, VertexDisplacement, WeakPerspectiveCamera,
};
pub use metrics::{auc, pck, rot_err, PckCurve};
pub use select::{
    score_cf_cm, score_cf_cm2, score_cf_mt, score_kp_conf, select_top_n, Criterion,
    CriterionScore, MtSpec, SelectionReport,
};
pub use simulate::{DetectorProfile, PoolConfig, SceneTruth};
