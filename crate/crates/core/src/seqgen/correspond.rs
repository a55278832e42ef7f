use std::collections::{BTreeMap, HashMap};

use super::Sequence;

/// Exact point correspondences between the frames of a sequence.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorrespondenceSet {
    pub frames: usize,
    /// For `i < j`: `(index in F_i, index in F_j)` pairs, sorted by the first index.
    pub pair_maps: BTreeMap<(usize, usize), Vec<(u32, u32)>>,
    /// Per frame, ascending indices of points matched in at least one other frame.
    pub per_frame: Vec<Vec<u32>>,
}

impl CorrespondenceSet {
    /// Pairs oriented from frame `i` to frame `j`; works for either order.
    pub fn pairs(&self, i: usize, j: usize) -> Vec<(u32, u32)> {
        if i < j {
            self.pair_maps.get(&(i, j)).cloned().unwrap_or_default()
        } else {
            let mut v: Vec<_> = self
                .pair_maps
                .get(&(j, i))
                .map(|m| m.iter().map(|&(a, b)| (b, a)).collect())
                .unwrap_or_default();
            v.sort_unstable();
            v
        }
    }
}

pub fn build_correspondences(seq: &Sequence) -> CorrespondenceSet {
    let t = seq.frames.len();
    let lookups: Vec<HashMap<u32, u32>> = seq
        .frames
        .iter()
        .map(|f| f.ids().iter().enumerate().map(|(k, &id)| (id, k as u32)).collect())
        .collect();
    let mut pair_maps = BTreeMap::new();
    let mut matched = vec![vec![false; 0]; t];
    for (i, f) in seq.frames.iter().enumerate() {
        matched[i] = vec![false; f.cloud.len()];
    }
    for i in 0..t {
        for j in i + 1..t {
            let mut pairs = Vec::new();
            for (a, id) in seq.frames[i].ids().iter().enumerate() {
                if let Some(&b) = lookups[j].get(id) {
                    pairs.push((a as u32, b));
                    matched[i][a] = true;
                    matched[j][b as usize] = true;
                }
            }
            pair_maps.insert((i, j), pairs);
        }
    }
    let per_frame = matched
        .into_iter()
        .map(|m| m.iter().enumerate().filter(|(_, &x)| x).map(|(k, _)| k as u32).collect())
        .collect();
    CorrespondenceSet {
        frames: t,
        pair_maps,
        per_frame,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{PointCloud, SimilarityTransform};
    use crate::seqgen::{SequenceFrame, SequenceStats, Trajectory};

    fn seq(frames: Vec<Vec<u32>>) -> Sequence {
        Sequence {
            scene_id: 0,
            object_id: 0,
            frames: frames
                .into_iter()
                .map(|ids| SequenceFrame {
                    cloud: PointCloud::with_provenance(vec![[0.0; 3]; ids.len()], ids),
                    object_pose: SimilarityTransform::identity(),
                    static_aug: SimilarityTransform::identity(),
                })
                .collect(),
            trajectory: Trajectory::default(),
            stats: SequenceStats::default(),
        }
    }

    #[test]
    fn identical_frames_map_identically() {
        let c = build_correspondences(&seq(vec![vec![4, 1, 9], vec![4, 1, 9]]));
        assert_eq!(c.pairs(0, 1), vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(c.per_frame, vec![vec![0, 1, 2], vec![0, 1, 2]]);
    }

    #[test]
    fn removed_point_is_absent_and_maps_are_symmetric() {
        let c = build_correspondences(&seq(vec![vec![1, 2, 3], vec![3, 1], vec![2, 3, 1]]));
        assert_eq!(c.pairs(0, 1), vec![(0, 1), (2, 0)]);
        assert_eq!(c.pairs(1, 0), vec![(0, 2), (1, 0)]);
        assert!(c.pairs(0, 1).iter().all(|&(a, _)| a != 1));
        assert_eq!(c.per_frame[1], vec![0, 1]);
    }

    #[test]
    fn single_frame_has_no_pairs() {
        let c = build_correspondences(&seq(vec![vec![1, 2]]));
        assert!(c.pair_maps.is_empty());
        assert_eq!(c.per_frame, vec![Vec::<u32>::new()]);
    }
}
