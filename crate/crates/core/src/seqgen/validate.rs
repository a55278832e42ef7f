use std::collections::HashMap;

use super::{GenParams, Sequence};
use crate::geom::is_object_id;

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    /// Share of the canonical scene sample present in every frame.
    pub scene_consistent: f64,
    /// Share of the object sample present in every frame.
    pub object_consistent: f64,
    /// Lowest per-frame share of points surviving augmentation.
    pub min_retention: f64,
    pub ok: bool,
}

pub fn check_sequence(seq: &Sequence, params: &GenParams) -> ValidationReport {
    let t = seq.frames.len();
    let mut seen: HashMap<u32, usize> = HashMap::new();
    for f in &seq.frames {
        for &id in f.ids() {
            *seen.entry(id).or_default() += 1;
        }
    }
    let (mut scene, mut object) = (0usize, 0usize);
    for (&id, &n) in &seen {
        if n == t {
            if is_object_id(id) {
                object += 1;
            } else {
                scene += 1;
            }
        }
    }
    let ratio = |a: usize, b: u32| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let scene_consistent = ratio(scene, seq.stats.scene_points);
    let object_consistent = ratio(object, seq.stats.object_points);
    let min_retention = seq
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| ratio(f.cloud.len(), seq.stats.composed.get(i).copied().unwrap_or(0)))
        .fold(f64::INFINITY, f64::min);
    let min_retention = if t == 0 { 0.0 } else { min_retention };
    let ok = t >= 1
        && seq.stats.composed.len() == t
        && scene_consistent >= params.min_scene_consistent
        && object_consistent >= params.min_object_consistent
        && min_retention >= params.min_retention;
    ValidationReport {
        scene_consistent,
        object_consistent,
        min_retention,
        ok,
    }
}

pub fn validate_sequence(seq: &Sequence) -> bool {
    validate_sequence_with(seq, &GenParams::default())
}

pub fn validate_sequence_with(seq: &Sequence, params: &GenParams) -> bool {
    check_sequence(seq, params).ok
}
