//! Procedural rooms and objects for tests, demos, and the toy training run.
//!
//! Rooms are rectangular with a flat floor, low walls, and clutter pushed
//! against the walls so the middle stays free for object trajectories.

use std::f64::consts::TAU;

use rand::Rng;

use crate::geom::{occupancy::height_accumulate, PointCloud, Point3};
use crate::seqgen::valid_positions;

#[derive(Clone, Debug, PartialEq)]
pub struct RoomParams {
    pub size: (f64, f64),
    pub wall_height: (f64, f64),
    /// Surface samples per square meter.
    pub density: f64,
    pub clutter: (usize, usize),
    /// Clutter stays within this distance of a wall.
    pub clutter_band: f64,
}

impl Default for RoomParams {
    fn default() -> Self {
        Self {
            size: (3.5, 4.5),
            wall_height: (0.8, 1.2),
            density: 100.0,
            clutter: (2, 4),
            clutter_band: 0.6,
        }
    }
}

impl RoomParams {
    /// Smaller rooms with lower walls, sized for quick training runs.
    pub fn compact() -> Self {
        Self {
            size: (2.8, 3.2),
            wall_height: (0.6, 0.8),
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjectKind {
    Box,
    Cylinder,
    LShape,
    Torus,
}

impl ObjectKind {
    pub const ALL: [ObjectKind; 4] = [ObjectKind::Box, ObjectKind::Cylinder, ObjectKind::LShape, ObjectKind::Torus];

    pub fn name(self) -> &'static str {
        match self {
            ObjectKind::Box => "box",
            ObjectKind::Cylinder => "cylinder",
            ObjectKind::LShape => "lshape",
            ObjectKind::Torus => "torus",
        }
    }
}

fn count(area: f64, density: f64) -> usize {
    (area * density).round().max(1.0) as usize
}

fn sample_rect(out: &mut Vec<Point3>, n: usize, rng: &mut impl Rng, f: impl Fn(f64, f64) -> Point3) {
    for _ in 0..n {
        let (u, v) = (rng.gen::<f64>(), rng.gen::<f64>());
        out.push(f(u, v));
    }
}

/// Surface samples of an axis-aligned box without its bottom face.
fn box_surface(out: &mut Vec<Point3>, lo: Point3, hi: Point3, density: f64, rng: &mut impl Rng) {
    let (dx, dy, dz) = (hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2]);
    sample_rect(out, count(dx * dy, density), rng, |u, v| [lo[0] + u * dx, lo[1] + v * dy, hi[2]]);
    for x in [lo[0], hi[0]] {
        sample_rect(out, count(dy * dz, density), rng, |u, v| [x, lo[1] + u * dy, lo[2] + v * dz]);
    }
    for y in [lo[1], hi[1]] {
        sample_rect(out, count(dx * dz, density), rng, |u, v| [lo[0] + u * dx, y, lo[2] + v * dz]);
    }
}

fn cylinder_surface(out: &mut Vec<Point3>, c: [f64; 2], r: f64, z0: f64, h: f64, density: f64, rng: &mut impl Rng) {
    sample_rect(out, count(std::f64::consts::PI * r * r, density), rng, |u, v| {
        let (rr, a) = (r * u.sqrt(), TAU * v);
        [c[0] + rr * a.cos(), c[1] + rr * a.sin(), z0 + h]
    });
    sample_rect(out, count(TAU * r * h, density), rng, |u, v| {
        let a = TAU * u;
        [c[0] + r * a.cos(), c[1] + r * a.sin(), z0 + v * h]
    });
}

pub fn generate_room(params: &RoomParams, rng: &mut impl Rng) -> PointCloud {
    let w = rng.gen_range(params.size.0..=params.size.1);
    let d = rng.gen_range(params.size.0..=params.size.1);
    let h = rng.gen_range(params.wall_height.0..=params.wall_height.1);
    let rho = params.density;
    let mut pts = Vec::new();
    // Jittered grid: one floor sample per cell of side 1/sqrt(density), so
    // at density 100 every 10 cm map cell is occupied.
    let s = 1.0 / rho.sqrt();
    let (nx, ny) = ((w / s).ceil() as usize, (d / s).ceil() as usize);
    for i in 0..nx {
        for j in 0..ny {
            let x = (i as f64 + rng.gen_range(0.05..0.95)) * s;
            let y = (j as f64 + rng.gen_range(0.05..0.95)) * s;
            if x < w && y < d {
                pts.push([x, y, 0.0]);
            }
        }
    }
    for x in [0.0, w] {
        sample_rect(&mut pts, count(d * h, rho), rng, |u, v| [x, u * d, v * h]);
    }
    for y in [0.0, d] {
        sample_rect(&mut pts, count(w * h, rho), rng, |u, v| [u * w, y, v * h]);
    }

    let n = rng.gen_range(params.clutter.0..=params.clutter.1);
    for _ in 0..n {
        let size = [rng.gen_range(0.25..0.5), rng.gen_range(0.25..0.5)];
        let height = rng.gen_range(0.3..0.8);
        let gap = rng.gen_range(0.02..(params.clutter_band - 0.5).max(0.03));
        // Pick a wall and slide along it.
        let (cx, cy) = match rng.gen_range(0..4) {
            0 => (gap + size[0] / 2.0, rng.gen_range(size[1]..d - size[1])),
            1 => (w - gap - size[0] / 2.0, rng.gen_range(size[1]..d - size[1])),
            2 => (rng.gen_range(size[0]..w - size[0]), gap + size[1] / 2.0),
            _ => (rng.gen_range(size[0]..w - size[0]), d - gap - size[1] / 2.0),
        };
        if rng.gen_bool(0.5) {
            let lo = [cx - size[0] / 2.0, cy - size[1] / 2.0, 0.0];
            let hi = [cx + size[0] / 2.0, cy + size[1] / 2.0, height];
            box_surface(&mut pts, lo, hi, rho, rng);
        } else {
            cylinder_surface(&mut pts, [cx, cy], size[0].min(size[1]) / 2.0, 0.0, height, rho, rng);
        }
    }
    PointCloud::new(pts)
}

/// About `points` surface samples of a small rigid object.
pub fn generate_object(kind: ObjectKind, points: usize, rng: &mut impl Rng) -> PointCloud {
    let mut pts = Vec::new();
    match kind {
        ObjectKind::Box => {
            let s = [rng.gen_range(0.2..0.4), rng.gen_range(0.2..0.4), rng.gen_range(0.25..0.5)];
            let area = s[0] * s[1] + 2.0 * (s[0] + s[1]) * s[2];
            box_surface(&mut pts, [0.0; 3], s, points as f64 / area, rng);
        }
        ObjectKind::Cylinder => {
            let r = rng.gen_range(0.1..0.2);
            let h = rng.gen_range(0.25..0.55);
            let area = std::f64::consts::PI * r * r + TAU * r * h;
            cylinder_surface(&mut pts, [0.0, 0.0], r, 0.0, h, points as f64 / area, rng);
        }
        ObjectKind::LShape => {
            let (a, b, t, h) = (rng.gen_range(0.3..0.4), rng.gen_range(0.25..0.35), 0.12, rng.gen_range(0.2..0.4));
            let area = 2.0 * (a * t + (b - t) * t) + 2.0 * (a + b) * h;
            let rho = points as f64 / area;
            box_surface(&mut pts, [0.0; 3], [a, t, h], rho, rng);
            box_surface(&mut pts, [0.0, t, 0.0], [t, b, h], rho, rng);
        }
        ObjectKind::Torus => {
            let big = rng.gen_range(0.15..0.22);
            let small = rng.gen_range(0.04..0.07);
            for _ in 0..points {
                let (u, v) = (TAU * rng.gen::<f64>(), TAU * rng.gen::<f64>());
                let ring = big + small * v.cos();
                pts.push([ring * u.cos(), ring * u.sin(), small + small * v.sin()]);
            }
        }
    }
    PointCloud::new(pts)
}

/// Area of the largest 4-connected set of radius-0 placement cells.
pub fn free_floor_area(scene: &PointCloud, map_cell: f64) -> f64 {
    let Ok(map) = height_accumulate(scene, map_cell) else { return 0.0 };
    let cands = valid_positions(&map, 0.0);
    let mut seen = std::collections::BTreeSet::new();
    let mut best = 0usize;
    for &start in &cands.cells {
        if !seen.insert(start) {
            continue;
        }
        let mut stack = vec![start];
        let mut size = 0;
        while let Some(c) = stack.pop() {
            size += 1;
            for n in [[c[0] + 1, c[1]], [c[0] - 1, c[1]], [c[0], c[1] + 1], [c[0], c[1] - 1]] {
                if cands.contains(n) && seen.insert(n) {
                    stack.push(n);
                }
            }
        }
        best = best.max(size);
    }
    best as f64 * map_cell * map_cell
}
