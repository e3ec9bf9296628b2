//! Template representation, rotations, forward kinematics, skinning,
//! keypoint regression, and weak-perspective projection.
//!
//! Everything here is a pure function over immutable inputs.

mod camera;
mod kinematics;
mod quat;
mod rigid;
mod similarity2d;
mod template;

pub use camera::WeakPerspectiveCamera;
pub use kinematics::{forward_kinematics, Articulation, Part, PartTree};
pub use quat::UnitQuaternion;
pub use rigid::RigidTransform;
pub use similarity2d::Similarity2;
pub use template::{sidecar_path, ShapeParams, TemplateModel, VertexDisplacement};
