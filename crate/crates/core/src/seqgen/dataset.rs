use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{
    augment_frame_static, augment_scene, canonicalize_object, check_sequence, compose_frame, format, object_radius,
    sample_object, sample_trajectory, tag_scene, valid_positions_with, CandidateSet, GenParams, Sequence,
    SequenceStats, ValidationReport,
};
use crate::error::{Error, Result};
use crate::geom::occupancy::{height_accumulate_with, OccupancyMap2D};
use crate::geom::{voxel_downsample, PointCloud};

/// A named input cloud (scene scan or object model).
#[derive(Clone, Debug)]
pub struct SceneInput {
    pub id: u64,
    pub cloud: PointCloud,
}

#[derive(Clone, Debug)]
pub enum GenOutcome {
    Accepted(Box<Sequence>),
    /// The chosen object fits nowhere in the scene.
    NoCandidates,
    /// Every starting position exhausted its step retries.
    TrajectoryFailed,
    Rejected(ValidationReport),
}

#[derive(Clone, Debug, Default)]
pub struct GenReport {
    pub accepted: usize,
    pub trajectory_failures: usize,
    pub validation_rejects: usize,
    pub no_candidates: usize,
    pub skipped_scenes: Vec<u64>,
    pub files: Vec<PathBuf>,
}

struct PreparedScene {
    id: u64,
    sample: PointCloud,
    map: OccupancyMap2D,
}

struct PreparedObject {
    id: u64,
    canonical: PointCloud,
    radius: f64,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-sequence seed from the dataset seed and the (scene, trajectory) position.
pub fn derive_seed(seed: u64, scene_index: u64, trajectory_index: u64) -> u64 {
    splitmix(splitmix(splitmix(seed) ^ scene_index) ^ trajectory_index)
}

fn prepare_scene(input: &SceneInput, params: &GenParams) -> Result<PreparedScene> {
    let map = height_accumulate_with(&input.cloud, params.map_cell, params.floor_fraction)?;
    let sample = voxel_downsample(&tag_scene(&input.cloud), params.scene_voxel)?;
    Ok(PreparedScene { id: input.id, sample, map })
}

fn prepare_object(input: &SceneInput) -> Result<PreparedObject> {
    let canonical = canonicalize_object(&input.cloud)?;
    let radius = object_radius(&canonical);
    Ok(PreparedObject { id: input.id, canonical, radius })
}

fn candidates(scene: &PreparedScene, object: &PreparedObject, params: &GenParams) -> CandidateSet {
    valid_positions_with(&scene.map, object.radius, params.max_accumulation, params.floor_band)
}

fn run_one(
    scene: &PreparedScene,
    object: &PreparedObject,
    cands: &CandidateSet,
    params: &GenParams,
    rng: &mut impl Rng,
) -> Result<GenOutcome> {
    if cands.is_empty() {
        return Ok(GenOutcome::NoCandidates);
    }
    let mut trajectory = None;
    for _ in 0..params.start_attempts.max(1) {
        match sample_trajectory(cands, params.frames, params, rng) {
            Ok(t) => {
                trajectory = Some(t);
                break;
            }
            Err(Error::TrajectoryFailure { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    let Some(trajectory) = trajectory else {
        log::warn!(
            "scene {} object {}: step retries exhausted from {} starts",
            scene.id,
            object.id,
            params.start_attempts
        );
        return Ok(GenOutcome::TrajectoryFailed);
    };

    let object_sample = sample_object(&object.canonical, params.object_points, rng);
    let mut frames = Vec::with_capacity(trajectory.len());
    let mut composed = Vec::with_capacity(trajectory.len());
    for w in &trajectory.waypoints {
        let f = compose_frame(&scene.sample, &object_sample, w, params.scene_voxel)?;
        composed.push(f.cloud.len() as u32);
        let (f, _) = augment_scene(&f, &params.scene_aug, rng);
        frames.push(augment_frame_static(&f, &params.static_aug, rng));
    }
    let seq = Sequence {
        scene_id: scene.id,
        object_id: object.id,
        frames,
        trajectory,
        stats: SequenceStats {
            scene_points: scene.sample.len() as u32,
            object_points: object_sample.len() as u32,
            composed,
        },
    };
    let report = check_sequence(&seq, params);
    Ok(if report.ok {
        GenOutcome::Accepted(Box::new(seq))
    } else {
        GenOutcome::Rejected(report)
    })
}

/// One generation attempt for a single scene and object.
pub fn generate_sequence(
    scene: &SceneInput,
    object: &SceneInput,
    params: &GenParams,
    rng: &mut impl Rng,
) -> Result<GenOutcome> {
    let s = prepare_scene(scene, params)?;
    let o = prepare_object(object)?;
    let c = candidates(&s, &o, params);
    run_one(&s, &o, &c, params, rng)
}

/// All `(scene index, trajectory index, outcome)` triples in positional order.
/// Scenes without any valid floor cell are reported in the second list.
pub fn generate_sequences(
    scenes: &[SceneInput],
    objects: &[SceneInput],
    params: &GenParams,
    seed: u64,
    workers: usize,
) -> Result<(Vec<(usize, usize, GenOutcome)>, Vec<u64>)> {
    if scenes.is_empty() {
        return Err(Error::EmptyInput("scene set"));
    }
    if objects.is_empty() {
        return Err(Error::EmptyInput("object set"));
    }
    if params.frames < 1 {
        return Err(Error::InvalidArgument("frames must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
    pool.install(|| {
        let objs: Vec<PreparedObject> = objects.par_iter().map(prepare_object).collect::<Result<_>>()?;
        let prepared: Vec<(PreparedScene, Vec<CandidateSet>)> = scenes
            .par_iter()
            .map(|s| {
                let ps = prepare_scene(s, params)?;
                let cands = objs.iter().map(|o| candidates(&ps, o, params)).collect();
                Ok((ps, cands))
            })
            .collect::<Result<_>>()?;

        let mut skipped = Vec::new();
        let mut jobs = Vec::new();
        for (si, (ps, _)) in prepared.iter().enumerate() {
            if valid_positions_with(&ps.map, 0.0, params.max_accumulation, params.floor_band).is_empty() {
                log::warn!("scene {}: no valid floor positions, skipped", ps.id);
                skipped.push(ps.id);
                continue;
            }
            jobs.extend((0..params.per_scene).map(|k| (si, k)));
        }
        let results = jobs
            .par_iter()
            .map(|&(si, k)| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, si as u64, k as u64));
                let oi = rng.gen_range(0..objs.len());
                let (ps, cands) = &prepared[si];
                run_one(ps, &objs[oi], &cands[oi], params, &mut rng).map(|o| (si, k, o))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((results, skipped))
    })
}

fn param_lines(params: &GenParams, seed: u64) -> Vec<(String, String)> {
    let p = params;
    let s = |v: &dyn std::fmt::Display| v.to_string();
    vec![
        ("seed".into(), s(&seed)),
        ("map_cell".into(), s(&p.map_cell)),
        ("max_accumulation".into(), s(&p.max_accumulation)),
        ("floor_band".into(), s(&p.floor_band)),
        ("step_range".into(), format!("{},{}", p.step_min, p.step_max)),
        ("max_turn_deg".into(), s(&p.max_turn.to_degrees())),
        ("heading".into(), format!("{:?}", p.heading)),
        ("scene_voxel".into(), s(&p.scene_voxel)),
        ("object_sample".into(), s(&p.object_points)),
        ("chunk_count".into(), format!("{},{}", p.scene_aug.chunk_count.0, p.scene_aug.chunk_count.1)),
        ("chunk_fraction".into(), format!("{},{}", p.scene_aug.chunk_fraction.0, p.scene_aug.chunk_fraction.1)),
        ("resample_keep".into(), s(&p.scene_aug.resample_keep)),
        ("static_yaw".into(), format!("{},{}", p.static_aug.yaw.0, p.static_aug.yaw.1)),
        ("static_translation".into(), s(&p.static_aug.translation)),
        ("static_scale".into(), format!("{},{}", p.static_aug.scale.0, p.static_aug.scale.1)),
    ]
}

/// Generates and persists every accepted sequence under `out_dir`.
pub fn generate_dataset(
    scenes: &[SceneInput],
    objects: &[SceneInput],
    params: &GenParams,
    seed: u64,
    workers: usize,
    out_dir: &Path,
) -> Result<GenReport> {
    let (results, skipped) = generate_sequences(scenes, objects, params, seed, workers)?;
    fs::create_dir_all(out_dir)?;
    let mut report = GenReport {
        skipped_scenes: skipped,
        ..Default::default()
    };
    for (si, k, outcome) in results {
        match outcome {
            GenOutcome::Accepted(seq) => {
                let path = out_dir.join(format!("seq_s{:06}_t{:03}.4dc", scenes[si].id, k));
                let mut extra = param_lines(params, seed);
                extra.push(("sequence_seed".into(), derive_seed(seed, si as u64, k as u64).to_string()));
                format::save(&path, &seq, &extra)?;
                report.accepted += 1;
                report.files.push(path);
            }
            GenOutcome::NoCandidates => report.no_candidates += 1,
            GenOutcome::TrajectoryFailed => report.trajectory_failures += 1,
            GenOutcome::Rejected(r) => {
                log::info!(
                    "scene {} trajectory {k}: rejected (scene {:.2}, object {:.2}, retention {:.2})",
                    scenes[si].id,
                    r.scene_consistent,
                    r.object_consistent,
                    r.min_retention
                );
                report.validation_rejects += 1;
            }
        }
    }
    let mut summary = String::new();
    for (k, v) in param_lines(params, seed) {
        summary.push_str(&format!("{k} = {v}\n"));
    }
    summary.push_str(&format!(
        "per_scene = {}\nframes = {}\naccepted = {}\ntrajectory_failures = {}\nvalidation_rejects = {}\nno_candidates = {}\nskipped_scenes = {}\n",
        params.per_scene,
        params.frames,
        report.accepted,
        report.trajectory_failures,
        report.validation_rejects,
        report.no_candidates,
        report.skipped_scenes.len()
    ));
    fs::write(out_dir.join("dataset.txt"), summary)?;
    Ok(report)
}
