//! Trajectory, augmentation, correspondence and file-format properties.

mod common;

use std::collections::HashMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seq4d_core::geom::{height_accumulate_with, is_object_id};
use seq4d_core::gradcheck::small_sequence;
use seq4d_core::seqgen::{
    apply_scene_augmentation, augment_frame_static, build_correspondences, canonicalize_object, format,
    object_radius, sample_chunks, sample_trajectory, valid_positions_with, GenParams, SceneAugParams,
    StaticAugParams,
};
use seq4d_core::synth::RoomParams;
use seq4d_core::Error;

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn trajectories_respect_step_and_turn_limits(seed in any::<u64>(), frames in 2usize..7) {
        let params = GenParams::default();
        let scene = &common::rooms(1, &RoomParams::default(), seed)[0];
        let object = canonicalize_object(&common::objects(1, 500, seed ^ 7)[0].cloud).unwrap();
        let map = height_accumulate_with(&scene.cloud, params.map_cell, params.floor_fraction).unwrap();
        let cands = valid_positions_with(&map, object_radius(&object), params.max_accumulation, params.floor_band);
        prop_assume!(!cands.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let Ok(traj) = sample_trajectory(&cands, frames, &params, &mut rng) else { return Ok(()) };
        prop_assert_eq!(traj.len(), frames);
        let w: Vec<[f64; 2]> = traj.waypoints.iter().map(|w| w.position).collect();
        for (k, p) in w.iter().enumerate() {
            prop_assert!(cands.cell_at(*p).is_some_and(|c| cands.contains(c)), "waypoint {} off the candidate set", k);
        }
        for k in 1..w.len() {
            let step = dist(w[k], w[k - 1]);
            prop_assert!((params.step_min..=params.step_max).contains(&step), "step {}", step);
        }
        for k in 2..w.len() {
            let a = [w[k - 1][0] - w[k - 2][0], w[k - 1][1] - w[k - 2][1]];
            let b = [w[k][0] - w[k - 1][0], w[k][1] - w[k - 1][1]];
            let cos = (a[0] * b[0] + a[1] * b[1]) / (a[0].hypot(a[1]) * b[0].hypot(b[1]));
            prop_assert!(cos.clamp(-1.0, 1.0).acos() < params.max_turn);
        }
    }

    #[test]
    fn chunk_removal_spares_objects_and_empties_every_chunk(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq = small_sequence(&mut rng);
        let frame = &seq.frames[0];
        let bounds = frame.cloud.bounds().unwrap();
        let chunks = sample_chunks(bounds, &SceneAugParams::default(), &mut rng);
        prop_assert!((5..=15).contains(&chunks.len()));
        let out = apply_scene_augmentation(frame, &chunks, 1.0, &mut rng);
        let kept: HashMap<u32, [f64; 3]> = out.ids().iter().copied().zip(out.cloud.points.iter().copied()).collect();
        for (p, &id) in frame.cloud.points.iter().zip(frame.ids()) {
            let inside = chunks.iter().any(|c| c.contains(p));
            let expect = is_object_id(id) || !inside;
            prop_assert_eq!(kept.contains_key(&id), expect, "id {}", id);
            if expect {
                prop_assert_eq!(kept[&id], *p);
            }
        }
    }

    #[test]
    fn static_augmentation_is_an_invertible_similarity(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq = small_sequence(&mut rng);
        let frame = augment_frame_static(&seq.frames[1], &StaticAugParams::default(), &mut rng);
        prop_assert_eq!(&frame.cloud, &seq.frames[1].cloud);
        let s = frame.static_aug.scale;
        prop_assert!((0.8..=1.2).contains(&s));
        let view = frame.view_3d();
        prop_assert_eq!(view.provenance.as_deref(), Some(frame.ids()));
        let back = frame.static_aug.inverse();
        let pts = &frame.cloud.points;
        for k in 0..pts.len() {
            let q = back.apply(&view.points[k]);
            for a in 0..3 {
                prop_assert!((q[a] - pts[k][a]).abs() < 1e-9);
            }
            if k > 0 {
                let d0: f64 = (0..3).map(|a| (pts[k][a] - pts[0][a]).powi(2)).sum::<f64>().sqrt();
                let d1: f64 = (0..3).map(|a| (view.points[k][a] - view.points[0][a]).powi(2)).sum::<f64>().sqrt();
                prop_assert!((d1 - s * d0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn correspondences_pair_exactly_the_shared_ids(seed in any::<u64>()) {
        let seq = small_sequence(&mut ChaCha8Rng::seed_from_u64(seed));
        let corr = build_correspondences(&seq);
        prop_assert_eq!(corr.pair_maps.len(), 3);
        for (&(i, j), pairs) in &corr.pair_maps {
            let (fi, fj) = (seq.frames[i].ids(), seq.frames[j].ids());
            let shared = fi.iter().filter(|id| fj.contains(id)).count();
            prop_assert_eq!(pairs.len(), shared);
            for &(a, b) in pairs {
                prop_assert_eq!(fi[a as usize], fj[b as usize]);
            }
        }
    }

    #[test]
    fn encoding_is_a_fixed_point_after_one_round_trip(seed in any::<u64>()) {
        let seq = small_sequence(&mut ChaCha8Rng::seed_from_u64(seed));
        let bytes = format::encode(&seq).unwrap();
        let back = format::decode(&bytes).unwrap();
        prop_assert_eq!(back.frames.len(), seq.frames.len());
        for (a, b) in back.frames.iter().zip(&seq.frames) {
            prop_assert_eq!(a.ids(), b.ids());
            for (p, q) in a.cloud.points.iter().zip(&b.cloud.points) {
                for k in 0..3 {
                    prop_assert!((p[k] - q[k]).abs() <= 1e-6);
                }
            }
        }
        prop_assert_eq!(format::encode(&back).unwrap(), bytes);
    }

    #[test]
    fn any_single_byte_corruption_is_rejected(seed in any::<u64>(), pos in any::<prop::sample::Index>(), flip in 1u8..=255) {
        let seq = small_sequence(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut bytes = format::encode(&seq).unwrap();
        let at = pos.index(bytes.len());
        bytes[at] ^= flip;
        let r = format::decode(&bytes);
        prop_assert!(matches!(r, Err(Error::Format { .. })), "byte {} accepted", at);
    }
}

#[test]
fn truncated_files_are_rejected_at_every_length() {
    let seq = small_sequence(&mut ChaCha8Rng::seed_from_u64(3));
    let bytes = format::encode(&seq).unwrap();
    for n in 0..bytes.len() {
        assert!(format::decode(&bytes[..n]).is_err(), "accepted {n} of {} bytes", bytes.len());
    }
}

#[test]
fn sidecar_restores_generation_stats() {
    let dir = tempfile::tempdir().unwrap();
    let mut params = GenParams::default();
    params.per_scene = 3;
    let scenes = common::rooms(1, &RoomParams::compact(), 4);
    let objects = common::objects(2, 800, 5);
    let seqs = common::accepted(&scenes, &objects, &params, 6);
    assert!(!seqs.is_empty());
    for (k, s) in seqs.iter().enumerate() {
        let path = dir.path().join(format!("s{k}.4dc"));
        format::save(&path, s, &[]).unwrap();
        let back = format::load(&path).unwrap();
        assert_eq!(back.stats, s.stats);
        assert_eq!((back.scene_id, back.object_id), (s.scene_id, s.object_id));
    }
    assert_eq!(format::list_dir(dir.path()).unwrap().len(), seqs.len());
}
