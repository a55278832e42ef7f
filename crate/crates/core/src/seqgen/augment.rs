use rand::Rng;

use super::{SceneAugParams, SequenceFrame, StaticAugParams};
use crate::geom::{is_object_id, Point3, PointCloud, SimilarityTransform};

/// Axis-aligned box removed from the background scene.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Chunk {
    pub center: Point3,
    pub half_extent: Point3,
    /// Edge length relative to the scene extent.
    pub fraction: f64,
}

impl Chunk {
    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|a| (p[a] - self.center[a]).abs() <= self.half_extent[a])
    }
}

/// Draws the chunk set for one frame. Each chunk spans `fraction` of the
/// scene extent along every axis, i.e. a cube in extent-normalized
/// coordinates, centered uniformly inside the scene bounds.
pub fn sample_chunks(bounds: (Point3, Point3), params: &SceneAugParams, rng: &mut impl Rng) -> Vec<Chunk> {
    let (lo, hi) = bounds;
    let (cmin, cmax) = params.chunk_count;
    let n = if cmax == 0 { 0 } else { rng.gen_range(cmin..=cmax) };
    (0..n)
        .map(|_| {
            let fraction = rng.gen_range(params.chunk_fraction.0..=params.chunk_fraction.1);
            let mut center = [0.0; 3];
            let mut half_extent = [0.0; 3];
            for a in 0..3 {
                center[a] = if hi[a] > lo[a] { rng.gen_range(lo[a]..=hi[a]) } else { lo[a] };
                half_extent[a] = fraction * (hi[a] - lo[a]) / 2.0;
            }
            Chunk { center, half_extent, fraction }
        })
        .collect()
}

/// Removes scene points inside any chunk, then keeps every remaining point
/// with probability `keep`. Object points are only subject to resampling.
pub fn apply_scene_augmentation(frame: &SequenceFrame, chunks: &[Chunk], keep: f64, rng: &mut impl Rng) -> SequenceFrame {
    let ids = frame.ids().to_vec();
    let cloud = frame.cloud.filter(|i, p| {
        let object = ids.get(i).copied().is_some_and(is_object_id);
        let chunked = !object && chunks.iter().any(|c| c.contains(p));
        // The draw happens for every point so the stream does not depend on chunks.
        let kept = keep >= 1.0 || rng.gen::<f64>() < keep;
        kept && !chunked
    });
    SequenceFrame {
        cloud,
        ..frame.clone()
    }
}

/// Per-frame resampling and chunk removal; returns the chunks used.
pub fn augment_scene(frame: &SequenceFrame, params: &SceneAugParams, rng: &mut impl Rng) -> (SequenceFrame, Vec<Chunk>) {
    let ids = frame.ids();
    let scene = PointCloud::new(
        frame
            .cloud
            .points
            .iter()
            .zip(ids)
            .filter(|(_, &id)| !is_object_id(id))
            .map(|(p, _)| *p)
            .collect(),
    );
    let chunks = match scene.bounds() {
        Some(b) => sample_chunks(b, params, rng),
        None => Vec::new(),
    };
    (apply_scene_augmentation(frame, &chunks, params.resample_keep, rng), chunks)
}

/// Records a random yaw/scale/translation for the 3D view of the frame.
pub fn augment_frame_static(frame: &SequenceFrame, params: &StaticAugParams, rng: &mut impl Rng) -> SequenceFrame {
    let draw = |rng: &mut _, (a, b): (f64, f64)| if b > a { Rng::gen_range(rng, a..b) } else { a };
    let yaw = draw(rng, params.yaw);
    let scale = draw(rng, params.scale);
    let t = params.translation;
    let translation = [0; 3].map(|_| draw(rng, (-t, t)));
    SequenceFrame {
        static_aug: SimilarityTransform::yaw(yaw, scale, translation),
        ..frame.clone()
    }
}
