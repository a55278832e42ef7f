use rand::seq::index;
use rand::Rng;

use super::{SequenceFrame, Waypoint};
use crate::error::{Error, Result};
use crate::geom::{voxel_downsample, PointCloud, SimilarityTransform, OBJECT_ID_BASE};

/// Tags every scene point with its index.
pub fn tag_scene(scene: &PointCloud) -> PointCloud {
    PointCloud::with_provenance(scene.points.clone(), (0..scene.len() as u32).collect())
}

/// Moves the object so its footprint is centered on the origin and its base
/// rests on z = 0, and tags point `k` with `OBJECT_ID_BASE + k`.
pub fn canonicalize_object(object: &PointCloud) -> Result<PointCloud> {
    let (lo, hi) = object.bounds().ok_or(Error::EmptyInput("object"))?;
    let c = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0, lo[2]];
    let points = object
        .points
        .iter()
        .map(|p| [p[0] - c[0], p[1] - c[1], p[2] - c[2]])
        .collect();
    Ok(PointCloud::with_provenance(
        points,
        (0..object.len() as u32).map(|k| OBJECT_ID_BASE + k).collect(),
    ))
}

/// Bounding-sphere radius about the bounding-box center.
pub fn object_radius(object: &PointCloud) -> f64 {
    let Some((lo, hi)) = object.bounds() else { return 0.0 };
    let c = [0, 1, 2].map(|a| (lo[a] + hi[a]) / 2.0);
    object
        .points
        .iter()
        .map(|p| ((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2) + (p[2] - c[2]).powi(2)).sqrt())
        .fold(0.0, f64::max)
}

/// Uniform subset of at most `k` points, kept in index order.
pub fn sample_object(object: &PointCloud, k: usize, rng: &mut impl Rng) -> PointCloud {
    if object.len() <= k {
        return object.clone();
    }
    let mut picked = index::sample(rng, object.len(), k).into_vec();
    picked.sort_unstable();
    let keep: std::collections::HashSet<usize> = picked.into_iter().collect();
    object.filter(|i, _| keep.contains(&i))
}

/// Places `object` at the waypoint on top of the scene sampled at `scene_voxel`.
///
/// The object is used as given: callers subsample it once per sequence so all
/// frames share the same object points. Pose parameters are rounded to f32 so
/// that persisted poses reproduce the stored points exactly.
pub fn compose_frame(
    scene: &PointCloud,
    object: &PointCloud,
    waypoint: &Waypoint,
    scene_voxel: f64,
) -> Result<SequenceFrame> {
    if scene.is_empty() {
        return Err(Error::EmptyInput("scene"));
    }
    if object.is_empty() {
        return Err(Error::EmptyInput("object"));
    }
    let scene = if scene.provenance.is_some() { scene.clone() } else { tag_scene(scene) };
    let object = if object.provenance.is_some() {
        object.clone()
    } else {
        canonicalize_object(object)?
    };
    let r32 = |v: f64| v as f32 as f64;
    let pose = SimilarityTransform::yaw(
        r32(waypoint.heading),
        1.0,
        [r32(waypoint.position[0]), r32(waypoint.position[1]), r32(waypoint.base_z)],
    );
    let mut cloud = voxel_downsample(&scene, scene_voxel)?;
    let ids = cloud.provenance.get_or_insert_with(Vec::new);
    ids.extend_from_slice(object.provenance.as_deref().unwrap());
    cloud.points.extend(object.points.iter().map(|p| pose.apply(p)));
    Ok(SequenceFrame {
        cloud,
        object_pose: pose,
        static_aug: SimilarityTransform::identity(),
    })
}
