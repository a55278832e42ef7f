use std::collections::BTreeSet;
use std::f64::consts::{PI, TAU};

use rand::Rng;

use super::{GenParams, HeadingPolicy, Trajectory, Waypoint};
use crate::error::{Error, Result};
use crate::geom::occupancy::{Cell, OccupancyMap2D};

/// Placement cells with their centers and floor heights.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CandidateSet {
    pub cell_size: f64,
    pub cells: Vec<Cell>,
    pub centers: Vec<[f64; 2]>,
    pub base_z: Vec<f64>,
    lookup: BTreeSet<Cell>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, cell: Cell) -> bool {
        self.lookup.contains(&cell)
    }

    /// Candidate whose cell contains `p`, if any.
    pub fn cell_at(&self, p: [f64; 2]) -> Option<Cell> {
        let c = [(p[0] / self.cell_size).floor() as i32, (p[1] / self.cell_size).floor() as i32];
        self.contains(c).then_some(c)
    }

    /// Index of the candidate center nearest to `p`; ties go to the lowest index.
    pub fn nearest(&self, p: [f64; 2]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in self.centers.iter().enumerate() {
            let d = (c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| i)
    }

    fn push(&mut self, cell: Cell, center: [f64; 2], base_z: f64) {
        self.cells.push(cell);
        self.centers.push(center);
        self.base_z.push(base_z);
        self.lookup.insert(cell);
    }
}

/// Candidates with the default thresholds (accumulation at most 1, within
/// 20 cm of the floor).
pub fn valid_positions(map: &OccupancyMap2D, object_radius: f64) -> CandidateSet {
    let p = GenParams::default();
    valid_positions_with(map, object_radius, p.max_accumulation, p.floor_band)
}

pub fn valid_positions_with(
    map: &OccupancyMap2D,
    object_radius: f64,
    max_accumulation: u32,
    floor_band: f64,
) -> CandidateSet {
    let cs = map.cell_size;
    let mut out = CandidateSet {
        cell_size: cs,
        ..Default::default()
    };
    let ceiling = map.floor_height + floor_band + 1e-9;
    let is_valid = |c: Cell| match map.column(c) {
        Some(col) => col.accumulation >= 1 && col.accumulation <= max_accumulation && col.max_height <= ceiling,
        None => false,
    };
    let reach = (object_radius.max(0.0) / cs).ceil() as i32;
    for (cell, col) in map.cells() {
        if !is_valid(cell) {
            continue;
        }
        let center = map.cell_center(cell);
        let mut ok = true;
        'disc: for dx in -reach..=reach {
            for dy in -reach..=reach {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let n = [cell[0] + dx, cell[1] + dy];
                if disc_touches_cell(center, object_radius, n, cs) && !is_valid(n) {
                    ok = false;
                    break 'disc;
                }
            }
        }
        if ok {
            out.push(cell, center, col.base_z);
        }
    }
    out
}

/// Whether the open disc of radius `r` around `center` overlaps the cell.
/// Tangency within rounding noise does not count.
fn disc_touches_cell(center: [f64; 2], r: f64, cell: Cell, cs: f64) -> bool {
    let lo = [cell[0] as f64 * cs, cell[1] as f64 * cs];
    let dx = (lo[0] - center[0]).max(0.0).max(center[0] - (lo[0] + cs));
    let dy = (lo[1] - center[1]).max(0.0).max(center[1] - (lo[1] + cs));
    (dx * dx + dy * dy).sqrt() < r - 1e-9
}

/// Signed angle from `a` to `b` in (-pi, pi].
pub(crate) fn turn_angle(a: [f64; 2], b: [f64; 2]) -> f64 {
    let cross = a[0] * b[1] - a[1] * b[0];
    let dot = a[0] * b[0] + a[1] * b[1];
    cross.atan2(dot)
}

pub fn sample_trajectory(
    candidates: &CandidateSet,
    t: usize,
    params: &GenParams,
    rng: &mut impl Rng,
) -> Result<Trajectory> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("candidate set"));
    }
    if t == 0 {
        return Err(Error::InvalidArgument("trajectory length must be at least 1".into()));
    }
    let start = rng.gen_range(0..candidates.len());
    let mut idx = vec![start];
    let mut dirs: Vec<[f64; 2]> = Vec::new();
    for k in 1..t {
        let here = candidates.centers[idx[k - 1]];
        let mut accepted = None;
        for _ in 0..params.step_retries {
            let dist = rng.gen_range(params.step_min..=params.step_max);
            let theta = match dirs.last() {
                None => rng.gen_range(0.0..TAU),
                Some(d) => d[1].atan2(d[0]) + rng.gen_range(-params.max_turn..params.max_turn),
            };
            let target = [here[0] + dist * theta.cos(), here[1] + dist * theta.sin()];
            let Some(j) = candidates.nearest(target) else { break };
            let c = candidates.centers[j];
            let v = [c[0] - here[0], c[1] - here[1]];
            let realized = v[0].hypot(v[1]);
            if realized < params.step_min || realized > params.step_max {
                continue;
            }
            if let Some(d) = dirs.last() {
                if turn_angle(*d, v).abs() >= params.max_turn {
                    continue;
                }
            }
            accepted = Some((j, v));
            break;
        }
        let (j, v) = accepted.ok_or(Error::TrajectoryFailure {
            retries: params.step_retries,
            waypoint: k,
        })?;
        idx.push(j);
        dirs.push(v);
    }

    let waypoints = idx
        .iter()
        .enumerate()
        .map(|(k, &i)| {
            let heading = match params.heading {
                HeadingPolicy::Random => rng.gen_range(0.0..TAU),
                HeadingPolicy::FollowPath => match dirs.get(k.saturating_sub(1)) {
                    Some(d) => d[1].atan2(d[0]),
                    None => rng.gen_range(-PI..PI),
                },
            };
            Waypoint {
                position: candidates.centers[i],
                heading,
                base_z: candidates.base_z[i],
            }
        })
        .collect();
    Ok(Trajectory { waypoints })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::occupancy::ColumnStats;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flat(n: i32, m: i32) -> Vec<(Cell, ColumnStats)> {
        let mut v = Vec::new();
        for x in 0..n {
            for y in 0..m {
                v.push((
                    [x, y],
                    ColumnStats {
                        accumulation: 1,
                        max_height: 0.1,
                        base_z: 0.0,
                    },
                ));
            }
        }
        v
    }

    #[test]
    fn flat_floor_radius_zero_keeps_everything() {
        let map = OccupancyMap2D::from_columns(0.1, 0.1, flat(10, 10));
        assert_eq!(valid_positions(&map, 0.0).len(), 100);
    }

    #[test]
    fn accumulation_and_height_exclude() {
        let mut cols = flat(5, 5);
        cols[0].1.accumulation = 2;
        cols[1].1.max_height = 0.1 + 0.30;
        let map = OccupancyMap2D::from_columns(0.1, 0.1, cols);
        let c = valid_positions(&map, 0.0);
        assert_eq!(c.len(), 23);
        assert!(!c.contains([0, 0]) && !c.contains([0, 1]));
    }

    #[test]
    fn radius_shrinks_the_region() {
        let map = OccupancyMap2D::from_columns(0.1, 0.1, flat(10, 10));
        // 0.15 m reaches one ring of neighbours.
        let c = valid_positions(&map, 0.15);
        assert_eq!(c.len(), 64);
        // Just under half a cell touches only the own cell.
        assert_eq!(valid_positions(&map, 0.049).len(), 100);
    }

    #[test]
    fn single_waypoint_and_forced_failure() {
        let map = OccupancyMap2D::from_columns(0.1, 0.1, flat(1, 1));
        let c = valid_positions(&map, 0.0);
        let p = GenParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(sample_trajectory(&c, 1, &p, &mut rng).unwrap().len(), 1);
        assert!(matches!(
            sample_trajectory(&c, 2, &p, &mut rng),
            Err(Error::TrajectoryFailure { retries: 64, waypoint: 1 })
        ));
        assert!(sample_trajectory(&CandidateSet::default(), 2, &p, &mut rng).is_err());
    }

    #[test]
    fn heading_follows_the_path() {
        let map = OccupancyMap2D::from_columns(0.1, 0.0, flat(50, 50));
        let c = valid_positions(&map, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tr = sample_trajectory(&c, 4, &GenParams::default(), &mut rng).unwrap();
        for k in 1..4 {
            let a = tr.waypoints[k - 1].position;
            let b = tr.waypoints[k].position;
            let h = (b[1] - a[1]).atan2(b[0] - a[0]);
            assert!((h - tr.waypoints[k].heading).abs() < 1e-12);
        }
    }
}
