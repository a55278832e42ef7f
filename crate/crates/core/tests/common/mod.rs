//! Shared oracles and fixtures for the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seq4d_core::seqgen::{generate_sequences, GenOutcome, GenParams, SceneInput, Sequence};
use seq4d_core::synth::{generate_object, generate_room, ObjectKind, RoomParams};
use seq4d_core::tensor::{Coord, Matrix};

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    Matrix::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

/// All coordinates of a dense box, x slowest.
pub fn full_grid(extent: [i32; 4], dim: usize) -> Vec<Coord> {
    let mut out = Vec::new();
    let t_max = if dim == 4 { extent[3] } else { 1 };
    for x in 0..extent[0] {
        for y in 0..extent[1] {
            for z in 0..extent[2] {
                for t in 0..t_max {
                    out.push([0, x, y, z, t]);
                }
            }
        }
    }
    out
}

/// Dense zero-padded "same" convolution written directly over the box.
pub fn dense_conv(extent: [i32; 4], dim: usize, input: &Matrix, w: &Matrix, k: usize) -> Matrix {
    let coords = full_grid(extent, dim);
    let lin = |c: &[i32; 4]| -> Option<usize> {
        for a in 0..dim {
            if c[a] < 0 || c[a] >= extent[a] {
                return None;
            }
        }
        let t_max = if dim == 4 { extent[3] } else { 1 };
        let t = if dim == 4 { c[3] } else { 0 };
        Some((((c[0] * extent[1] + c[1]) * extent[2] + c[2]) * t_max + t) as usize)
    };
    let r = (k / 2) as i32;
    let cin = input.cols();
    let cout = w.cols();
    let mut out = Matrix::zeros(coords.len(), cout);
    for (o, c) in coords.iter().enumerate() {
        let mut tap = 0usize;
        let range_t = if dim == 4 { -r..=r } else { 0..=0 };
        for dx in -r..=r {
            for dy in -r..=r {
                for dz in -r..=r {
                    for dt in range_t.clone() {
                        let n = [c[1] + dx, c[2] + dy, c[3] + dz, c[4] + dt];
                        if let Some(i) = lin(&n) {
                            for co in 0..cout {
                                let mut acc = 0.0;
                                for ci in 0..cin {
                                    acc += input.get(i, ci) * w.get(tap * cin + ci, co);
                                }
                                out.set(o, co, out.get(o, co) + acc);
                            }
                        }
                        tap += 1;
                    }
                }
            }
        }
    }
    out
}

pub fn rooms(n: usize, params: &RoomParams, seed: u64) -> Vec<SceneInput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| SceneInput {
            id: i as u64,
            cloud: generate_room(params, &mut rng),
        })
        .collect()
}

pub fn objects(n: usize, points: usize, seed: u64) -> Vec<SceneInput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| SceneInput {
            id: i as u64,
            cloud: generate_object(ObjectKind::ALL[i % ObjectKind::ALL.len()], points, &mut rng),
        })
        .collect()
}

/// Accepted sequences only, in job order.
pub fn accepted(scenes: &[SceneInput], objects: &[SceneInput], params: &GenParams, seed: u64) -> Vec<Sequence> {
    let (res, _) = generate_sequences(scenes, objects, params, seed, 1).unwrap();
    res.into_iter()
        .filter_map(|(_, _, o)| match o {
            GenOutcome::Accepted(s) => Some(*s),
            _ => None,
        })
        .collect()
}

/// `-(p/|p|) . (z/|z|)` written out directly.
pub fn d(p: &[f64], z: &[f64]) -> f64 {
    let mut pz = 0.0;
    let mut pp = 0.0;
    let mut zz = 0.0;
    for k in 0..p.len() {
        pz += p[k] * z[k];
        pp += p[k] * p[k];
        zz += z[k] * z[k];
    }
    -pz / (pp.sqrt() * zz.sqrt())
}

/// Nested-loop mean over each set, then over non-empty sets, of
/// `1/2 d(p[a], zb[b]) + 1/2 d(pb[b], z[a])`.
pub fn brute_term(p: &Matrix, z: &Matrix, pb: &Matrix, zb: &Matrix, sets: &[Vec<(u32, u32)>]) -> f64 {
    let mut total = 0.0;
    let mut used = 0;
    for set in sets {
        if set.is_empty() {
            continue;
        }
        let mut s = 0.0;
        for &(a, b) in set {
            let (a, b) = (a as usize, b as usize);
            s += 0.5 * d(p.row(a), zb.row(b)) + 0.5 * d(pb.row(b), z.row(a));
        }
        total += s / set.len() as f64;
        used += 1;
    }
    total / used as f64
}
