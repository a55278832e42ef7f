use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geom::{Point3, PointCloud};
use crate::seqgen::Sequence;
use crate::tensor::{Coord, CoordSet, Matrix};

/// Occupancy input for one encoder pass.
#[derive(Clone, Debug)]
pub struct VoxelInput {
    /// Sorted, so the input is independent of point order.
    pub coords: Arc<CoordSet>,
    /// All ones: every occupied cell carries the same occupancy feature.
    pub feats: Matrix,
    /// Per frame, the row of every point of that frame.
    pub point_rows: Vec<Vec<u32>>,
}

/// Voxel coordinate of a point in batch slot `batch` at time `t`.
pub fn voxelize_points(p: &Point3, voxel: f64, batch: i32, t: i32) -> Coord {
    [
        batch,
        (p[0] / voxel).floor() as i32,
        (p[1] / voxel).floor() as i32,
        (p[2] / voxel).floor() as i32,
        t,
    ]
}

fn build(dim: usize, clouds: &[&PointCloud], voxel: f64, in_channels: usize) -> Result<VoxelInput> {
    if clouds.iter().all(|c| c.is_empty()) {
        return Err(Error::EmptyInput("encoder input has no points"));
    }
    let slot = |i: usize| -> (i32, i32) {
        if dim == 4 { (0, i as i32) } else { (i as i32, 0) }
    };
    let mut all: Vec<Coord> = Vec::new();
    for (i, c) in clouds.iter().enumerate() {
        let (b, t) = slot(i);
        all.extend(c.points.iter().map(|p| voxelize_points(p, voxel, b, t)));
    }
    all.sort_unstable();
    all.dedup();
    let coords = Arc::new(CoordSet::new(dim, all)?);
    let point_rows = clouds
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let (b, t) = slot(i);
            c.points
                .iter()
                .map(|p| coords.get(&voxelize_points(p, voxel, b, t)).unwrap() as u32)
                .collect()
        })
        .collect();
    let feats = Matrix::filled(coords.len(), in_channels, 1.0);
    Ok(VoxelInput { coords, feats, point_rows })
}

/// 3D input with one batch slot per frame view.
pub fn frames_to_3d(views: &[PointCloud], voxel: f64, in_channels: usize) -> Result<VoxelInput> {
    build(3, &views.iter().collect::<Vec<_>>(), voxel, in_channels)
}

/// 4D input: sequence coordinates quantized at `voxel`, time = frame index.
pub fn sequence_to_4d(seq: &Sequence, voxel: f64, in_channels: usize) -> Result<VoxelInput> {
    build(4, &seq.frames.iter().map(|f| &f.cloud).collect::<Vec<_>>(), voxel, in_channels)
}

/// Row of each location's voxel, `None` where the voxel is unoccupied.
pub fn locate(coords: &CoordSet, points: &[Point3], voxel: f64, batch: i32, t: i32) -> Vec<Option<u32>> {
    points
        .iter()
        .map(|p| coords.get(&voxelize_points(p, voxel, batch, t)).map(|r| r as u32))
        .collect()
}

/// Like [`locate`] but an unoccupied voxel is an error.
pub fn gather_rows(coords: &CoordSet, points: &[Point3], voxel: f64, batch: i32, t: i32) -> Result<Vec<u32>> {
    points
        .iter()
        .map(|p| {
            let c = voxelize_points(p, voxel, batch, t);
            coords.get(&c).map(|r| r as u32).ok_or(Error::MissingFeature(c))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::SimilarityTransform;
    use crate::seqgen::{SequenceFrame, SequenceStats, Trajectory};

    fn seq(frames: Vec<Vec<Point3>>) -> Sequence {
        Sequence {
            scene_id: 0,
            object_id: 0,
            frames: frames
                .into_iter()
                .map(|p| {
                    let n = p.len() as u32;
                    SequenceFrame {
                        cloud: PointCloud::with_provenance(p, (0..n).collect()),
                        object_pose: SimilarityTransform::identity(),
                        static_aug: SimilarityTransform::identity(),
                    }
                })
                .collect(),
            trajectory: Trajectory::default(),
            stats: SequenceStats::default(),
        }
    }

    #[test]
    fn point_maps_to_expected_4d_coordinate() {
        let s = seq(vec![vec![[0.10, 0.0, 0.0]]]);
        let v = sequence_to_4d(&s, 0.05, 3).unwrap();
        assert_eq!(v.coords.coords(), &[[0, 2, 0, 0, 0]]);
        assert_eq!(v.feats.row(0), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn disjoint_frames_add_their_voxels() {
        let s = seq(vec![vec![[0.0; 3], [0.2, 0.0, 0.0]], vec![[1.0, 1.0, 1.0]]]);
        assert_eq!(sequence_to_4d(&s, 0.05, 3).unwrap().coords.len(), 3);
    }

    #[test]
    fn nearby_points_share_a_voxel_and_missing_is_an_error() {
        let c = PointCloud::new(vec![[0.005, 0.005, 0.005], [0.006, 0.005, 0.005]]);
        let v = frames_to_3d(&[c], 0.02, 3).unwrap();
        assert_eq!(v.coords.len(), 1);
        assert_eq!(v.point_rows[0], vec![0, 0]);
        assert!(matches!(
            gather_rows(&v.coords, &[[1.0, 0.0, 0.0]], 0.02, 0, 0),
            Err(Error::MissingFeature(_))
        ));
        assert_eq!(locate(&v.coords, &[[1.0, 0.0, 0.0], [0.01, 0.01, 0.01]], 0.02, 0, 0), vec![None, Some(0)]);
    }
}
