//! Scene-object sequence generation.
//!
//! A static scan and a rigid object are combined into a short sequence: the
//! object follows a trajectory sampled on the free floor, scene points are
//! resampled and chunk-removed per frame, and every point keeps the id of the
//! canonical point it came from. Correspondences between frames are exact
//! id matches.

mod augment;
mod compose;
mod correspond;
mod dataset;
pub mod format;
mod params;
mod trajectory;
mod validate;

pub use augment::{augment_frame_static, augment_scene, apply_scene_augmentation, sample_chunks, Chunk};
pub use compose::{canonicalize_object, compose_frame, object_radius, sample_object, tag_scene};
pub use correspond::{build_correspondences, CorrespondenceSet};
pub use dataset::{derive_seed, generate_dataset, generate_sequence, generate_sequences, GenOutcome, GenReport, SceneInput};
pub use params::{GenParams, HeadingPolicy, SceneAugParams, StaticAugParams};
pub use trajectory::{sample_trajectory, valid_positions, valid_positions_with, CandidateSet};
pub use validate::{check_sequence, validate_sequence, validate_sequence_with, ValidationReport};

use crate::geom::{apply_transform, PointCloud, SimilarityTransform};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Waypoint {
    /// Floor-plane position, meters.
    pub position: [f64; 2],
    /// Object yaw, radians.
    pub heading: f64,
    /// Floor height under the waypoint; the object base is placed here.
    pub base_z: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub waypoints: Vec<Waypoint>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceFrame {
    /// Scene and object points in sequence coordinates, provenance-tagged.
    pub cloud: PointCloud,
    /// Places the canonical object in this frame.
    pub object_pose: SimilarityTransform,
    /// Applied to the 3D-branch view only.
    pub static_aug: SimilarityTransform,
}

impl SequenceFrame {
    /// The frame as seen by the 3D branch.
    pub fn view_3d(&self) -> PointCloud {
        apply_transform(&self.cloud, &self.static_aug)
    }

    pub fn ids(&self) -> &[u32] {
        self.cloud.provenance.as_deref().unwrap_or(&[])
    }
}

/// Denominators for the sequence acceptance rules.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SequenceStats {
    /// Canonical scene sample size (scene at the composition voxel size).
    pub scene_points: u32,
    /// Object sample size.
    pub object_points: u32,
    /// Per-frame point count before scene augmentation.
    pub composed: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub scene_id: u64,
    pub object_id: u64,
    pub frames: Vec<SequenceFrame>,
    pub trajectory: Trajectory,
    pub stats: SequenceStats,
}

impl Sequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Stats inferred from the frames alone: the canonical samples are taken
    /// to be the union of ids seen, and nothing was removed by augmentation.
    pub fn inferred_stats(&self) -> SequenceStats {
        let mut scene = std::collections::BTreeSet::new();
        let mut object = std::collections::BTreeSet::new();
        for f in &self.frames {
            for &id in f.ids() {
                if crate::geom::is_object_id(id) {
                    object.insert(id);
                } else {
                    scene.insert(id);
                }
            }
        }
        SequenceStats {
            scene_points: scene.len() as u32,
            object_points: object.len() as u32,
            composed: self.frames.iter().map(|f| f.cloud.len() as u32).collect(),
        }
    }
}
