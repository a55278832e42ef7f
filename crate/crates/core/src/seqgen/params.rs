use std::f64::consts::TAU;

/// How the object yaw is chosen along a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadingPolicy {
    /// Object faces its direction of travel.
    FollowPath,
    /// Independent uniform yaw per waypoint.
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneAugParams {
    /// Inclusive range of chunks removed per frame.
    pub chunk_count: (usize, usize),
    /// Chunk size as a fraction of the scene extent along each axis.
    pub chunk_fraction: (f64, f64),
    /// Per-point keep probability of the per-frame resampling.
    pub resample_keep: f64,
}

impl Default for SceneAugParams {
    fn default() -> Self {
        Self {
            chunk_count: (5, 15),
            chunk_fraction: (0.15, 0.45),
            resample_keep: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StaticAugParams {
    pub yaw: (f64, f64),
    /// Uniform in `[-translation, translation]` per axis, meters.
    pub translation: f64,
    pub scale: (f64, f64),
}

impl Default for StaticAugParams {
    fn default() -> Self {
        Self {
            yaw: (0.0, TAU),
            translation: 0.2,
            scale: (0.8, 1.2),
        }
    }
}

impl StaticAugParams {
    pub fn identity() -> Self {
        Self {
            yaw: (0.0, 0.0),
            translation: 0.0,
            scale: (1.0, 1.0),
        }
    }
}

/// Every threshold of the generation pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct GenParams {
    /// Occupancy map resolution.
    pub map_cell: f64,
    /// A placement cell may hold at most this many occupied voxels.
    pub max_accumulation: u32,
    /// Allowed height of a placement cell above the floor estimate.
    pub floor_band: f64,
    pub floor_fraction: f64,
    pub step_min: f64,
    pub step_max: f64,
    /// Exclusive bound on the turn between consecutive steps, radians.
    pub max_turn: f64,
    /// Step attempts per waypoint before the trajectory is abandoned.
    pub step_retries: usize,
    /// Fresh starting positions tried per trajectory.
    pub start_attempts: usize,
    pub heading: HeadingPolicy,
    /// Voxel size at which scene points are sampled for composition.
    pub scene_voxel: f64,
    pub object_points: usize,
    pub scene_aug: SceneAugParams,
    pub static_aug: StaticAugParams,
    pub min_scene_consistent: f64,
    pub min_object_consistent: f64,
    pub min_retention: f64,
    pub per_scene: usize,
    pub frames: usize,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            map_cell: 0.10,
            max_accumulation: 1,
            floor_band: 0.20,
            floor_fraction: crate::geom::FLOOR_FRACTION,
            step_min: 0.30,
            step_max: 0.90,
            max_turn: 150f64.to_radians(),
            step_retries: 64,
            start_attempts: 8,
            heading: HeadingPolicy::FollowPath,
            scene_voxel: 0.02,
            object_points: 1000,
            scene_aug: SceneAugParams::default(),
            static_aug: StaticAugParams::default(),
            min_scene_consistent: 0.30,
            min_object_consistent: 0.30,
            min_retention: 0.50,
            per_scene: 20,
            frames: 4,
        }
    }
}
