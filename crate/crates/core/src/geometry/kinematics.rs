//! Part hierarchies and forward kinematics.
//!
//! Parts form a single-rooted tree (the root is the torso by convention)
//! stored in topological order: the root sits at index 0 and every part's
//! parent has a smaller index. Articulation assigns one local rigid
//! transform per part, relative to its parent; forward kinematics turns
//! these into per-part global transforms.

use nalgebra::Vector3;

use super::rigid::RigidTransform;
use crate::error::{CoreError, Result};

#[derive(Debug, Clone)]
pub struct Part {
    pub name: String,
    /// Index of the parent part; `None` only for the root.
    pub parent: Option<usize>,
    /// Joint location in object units, used when sampling articulations
    /// that rotate the part about its joint.
    pub pivot: Vector3<f64>,
}

/// A validated single-rooted part tree in topological order.
#[derive(Debug, Clone)]
pub struct PartTree {
    parts: Vec<Part>,
}

impl PartTree {
    pub fn new(parts: Vec<Part>) -> Result<Self> {
        if parts.is_empty() {
            return Err(CoreError::Structural("part tree is empty".into()));
        }
        if parts[0].parent.is_some() {
            return Err(CoreError::Structural(
                "part 0 must be the root (no parent)".into(),
            ));
        }
        let mut names = std::collections::HashSet::new();
        for (i, part) in parts.iter().enumerate() {
            if !names.insert(part.name.as_str()) {
                return Err(CoreError::Structural(format!(
                    "duplicate part name '{}'",
                    part.name
                )));
            }
            match part.parent {
                None if i != 0 => {
                    return Err(CoreError::Structural(format!(
                        "part '{}' is a second root; the tree must be single-rooted",
                        part.name
                    )));
                }
                Some(p) if p >= i => {
                    return Err(CoreError::Structural(format!(
                        "part '{}' has parent index {p} >= its own index {i}; \
                         parts must be listed parent-first",
                        part.name
                    )));
                }
                _ => {}
            }
        }
        Ok(Self { parts })
    }

    pub fn len(&self) -> usize {
        self.parts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn parts(&self) -> &[Part] {
        &self.parts
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.parts.iter().position(|p| p.name == name)
    }
}

/// One local rigid transform per part, aligned with the tree's part order.
#[derive(Debug, Clone, PartialEq)]
pub struct Articulation {
    pub transforms: Vec<RigidTransform>,
}

impl Articulation {
    pub fn identity(num_parts: usize) -> Self {
        Self {
            transforms: vec![RigidTransform::identity(); num_parts],
        }
    }

    pub fn len(&self) -> usize {
        self.transforms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transforms.is_empty()
    }
}

/// Composes local part transforms into global ones.
///
/// The root's global transform is its local transform; every other part's
/// global transform is `parent_global ∘ local`.
pub fn forward_kinematics(tree: &PartTree, articulation: &Articulation) -> Result<Vec<RigidTransform>> {
    if articulation.len() != tree.len() {
        return Err(CoreError::Structural(format!(
            "articulation covers {} parts but the tree has {}",
            articulation.len(),
            tree.len()
        )));
    }
    let mut global = Vec::with_capacity(tree.len());
    for (i, part) in tree.parts().iter().enumerate() {
        let local = &articulation.transforms[i];
        let g = match part.parent {
            None => *local,
            Some(p) => {
                let parent: &RigidTransform = &global[p];
                parent.compose(local)
            }
        };
        global.push(g);
    }
    Ok(global)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::quat::UnitQuaternion;
    use std::f64::consts::FRAC_PI_2;

    fn two_part_tree() -> PartTree {
        PartTree::new(vec![
            Part {
                name: "torso".into(),
                parent: None,
                pivot: Vector3::zeros(),
            },
            Part {
                name: "head".into(),
                parent: Some(0),
                pivot: Vector3::new(1.0, 0.0, 0.0),
            },
        ])
        .unwrap()
    }

    #[test]
    fn identity_articulation_gives_identity_transforms() {
        let tree = two_part_tree();
        let global = forward_kinematics(&tree, &Articulation::identity(2)).unwrap();
        for g in &global {
            assert_eq!(*g, RigidTransform::identity());
        }
    }

    #[test]
    fn root_translation_propagates_to_children() {
        let tree = two_part_tree();
        let mut art = Articulation::identity(2);
        art.transforms[0] = RigidTransform::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let global = forward_kinematics(&tree, &art).unwrap();
        for g in &global {
            let p = g.apply(&Vector3::new(0.5, 0.5, 0.5));
            assert!((p - Vector3::new(1.5, 0.5, 0.5)).norm() < 1e-12);
        }
    }

    #[test]
    fn chain_composition_matches_hand_result() {
        // Parent rotated 90 deg about z, child translated (1,0,0) locally:
        // the child's global transform maps the origin to (0,1,0).
        let tree = two_part_tree();
        let mut art = Articulation::identity(2);
        art.transforms[0] = RigidTransform::new(
            UnitQuaternion::from_axis_angle(&Vector3::z(), FRAC_PI_2).unwrap(),
            Vector3::zeros(),
        );
        art.transforms[1] = RigidTransform::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let global = forward_kinematics(&tree, &art).unwrap();
        let p = global[1].apply(&Vector3::zeros());
        assert!((p - Vector3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn missing_part_entry_is_structural_error() {
        let tree = two_part_tree();
        let art = Articulation::identity(1);
        assert!(matches!(
            forward_kinematics(&tree, &art),
            Err(CoreError::Structural(_))
        ));
    }

    #[test]
    fn tree_validation_rejects_bad_shapes() {
        // Second root.
        assert!(PartTree::new(vec![
            Part { name: "a".into(), parent: None, pivot: Vector3::zeros() },
            Part { name: "b".into(), parent: None, pivot: Vector3::zeros() },
        ])
        .is_err());
        // Parent listed after child.
        assert!(PartTree::new(vec![
            Part { name: "a".into(), parent: None, pivot: Vector3::zeros() },
            Part { name: "b".into(), parent: Some(1), pivot: Vector3::zeros() },
        ])
        .is_err());
        // Duplicate names.
        assert!(PartTree::new(vec![
            Part { name: "a".into(), parent: None, pivot: Vector3::zeros() },
            Part { name: "a".into(), parent: Some(0), pivot: Vector3::zeros() },
        ])
        .is_err());
    }
}
