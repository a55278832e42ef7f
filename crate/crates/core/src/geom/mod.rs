//! Point clouds, similarity transforms and voxel quantization.
//!
//! All geometry is float64 in meters. Provenance ids tie every point back to
//! its source: scene points use ids below [`OBJECT_ID_BASE`], object points use
//! `OBJECT_ID_BASE + index`.

pub mod io;
pub mod occupancy;

pub use occupancy::{height_accumulate, height_accumulate_with, Cell, ColumnStats, OccupancyMap2D, FLOOR_FRACTION};

use std::collections::BTreeSet;

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

/// First provenance id used for object points.
pub const OBJECT_ID_BASE: u32 = 0x8000_0000;

pub fn is_object_id(id: u32) -> bool {
    id >= OBJECT_ID_BASE
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    /// Per-point source id; `None` for raw input.
    pub provenance: Option<Vec<u32>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self {
            points,
            provenance: None,
        }
    }

    pub fn with_provenance(points: Vec<Point3>, provenance: Vec<u32>) -> Self {
        assert_eq!(points.len(), provenance.len());
        Self {
            points,
            provenance: Some(provenance),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn id(&self, i: usize) -> Option<u32> {
        self.provenance.as_ref().map(|p| p[i])
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> Option<(Point3, Point3)> {
        let first = *self.points.first()?;
        let mut lo = first;
        let mut hi = first;
        for p in &self.points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        Some((lo, hi))
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|p| p.iter().all(|c| c.is_finite()))
    }

    /// Keeps the points for which `keep` returns true, preserving order.
    pub fn filter(&self, mut keep: impl FnMut(usize, &Point3) -> bool) -> PointCloud {
        let mut points = Vec::new();
        let mut ids = self.provenance.as_ref().map(|_| Vec::new());
        for (i, p) in self.points.iter().enumerate() {
            if keep(i, p) {
                points.push(*p);
                if let (Some(out), Some(src)) = (ids.as_mut(), self.provenance.as_ref()) {
                    out.push(src[i]);
                }
            }
        }
        PointCloud {
            points,
            provenance: ids,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Rotation {
    /// Rotation about the up (z) axis, radians.
    Yaw(f64),
    Matrix([[f64; 3]; 3]),
}

impl Rotation {
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        match *self {
            Rotation::Yaw(a) => {
                let (s, c) = a.sin_cos();
                [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
            }
            Rotation::Matrix(m) => m,
        }
    }

    fn inverse(&self) -> Rotation {
        match *self {
            Rotation::Yaw(a) => Rotation::Yaw(-a),
            Rotation::Matrix(m) => Rotation::Matrix(transpose(&m)),
        }
    }
}

/// `p' = scale * R * p + translation`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimilarityTransform {
    pub rotation: Rotation,
    pub translation: Point3,
    pub scale: f64,
}

impl Default for SimilarityTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Rotation::Yaw(0.0),
            translation: [0.0; 3],
            scale: 1.0,
        }
    }

    pub fn yaw(yaw: f64, scale: f64, translation: Point3) -> Self {
        Self {
            rotation: Rotation::Yaw(yaw),
            translation,
            scale,
        }
    }

    /// Checks `scale > 0` and that the rotation is orthonormal with det +1.
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "similarity scale must be positive, got {}",
                self.scale
            )));
        }
        if let Rotation::Matrix(m) = self.rotation {
            let mtm = mul(&transpose(&m), &m);
            for (i, row) in mtm.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    let want = if i == j { 1.0 } else { 0.0 };
                    if (v - want).abs() > 1e-9 {
                        return Err(Error::InvalidArgument("rotation is not orthonormal".into()));
                    }
                }
            }
            if (det(&m) - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument("rotation determinant is not +1".into()));
            }
        }
        Ok(())
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        let r = self.rotation.matrix();
        let mut out = [0.0; 3];
        for (a, row) in r.iter().enumerate() {
            let rp = row[0] * p[0] + row[1] * p[1] + row[2] * p[2];
            out[a] = self.scale * rp + self.translation[a];
        }
        out
    }

    pub fn inverse(&self) -> SimilarityTransform {
        let rot = self.rotation.inverse();
        let r = rot.matrix();
        let inv_s = 1.0 / self.scale;
        let t = self.translation;
        let mut translation = [0.0; 3];
        for (a, row) in r.iter().enumerate() {
            translation[a] = -inv_s * (row[0] * t[0] + row[1] * t[1] + row[2] * t[2]);
        }
        SimilarityTransform {
            rotation: rot,
            translation,
            scale: inv_s,
        }
    }

    /// Yaw angle when the rotation is a pure yaw.
    pub fn yaw_angle(&self) -> Option<f64> {
        match self.rotation {
            Rotation::Yaw(a) => Some(a),
            Rotation::Matrix(_) => None,
        }
    }
}

fn transpose(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut t = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            t[i][j] = m[j][i];
        }
    }
    t
}

fn mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    c
}

fn det(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Applies `transform` to every point; provenance is carried over unchanged.
pub fn apply_transform(cloud: &PointCloud, transform: &SimilarityTransform) -> PointCloud {
    PointCloud {
        points: cloud.points.iter().map(|p| transform.apply(p)).collect(),
        provenance: cloud.provenance.clone(),
    }
}

/// Integer cell containing `p` at the given cell size.
pub fn voxel_of(p: &Point3, cell_size: f64) -> [i32; 3] {
    [
        (p[0] / cell_size).floor() as i32,
        (p[1] / cell_size).floor() as i32,
        (p[2] / cell_size).floor() as i32,
    ]
}

/// The set of occupied cells `floor(p / cell_size)`.
pub fn voxelize(cloud: &PointCloud, cell_size: f64) -> Result<BTreeSet<[i32; 3]>> {
    if cloud.is_empty() {
        return Err(Error::EmptyInput("voxelize: empty cloud"));
    }
    check_cell_size(cell_size)?;
    Ok(cloud.points.iter().map(|p| voxel_of(p, cell_size)).collect())
}

/// Keeps the first point (in index order) of every occupied cell.
pub fn voxel_downsample(cloud: &PointCloud, cell_size: f64) -> Result<PointCloud> {
    check_cell_size(cell_size)?;
    let mut seen = std::collections::HashSet::with_capacity(cloud.len());
    Ok(cloud.filter(|_, p| seen.insert(voxel_of(p, cell_size))))
}

pub(crate) fn check_cell_size(cell_size: f64) -> Result<()> {
    if cell_size > 0.0 && cell_size.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "cell size must be positive, got {cell_size}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn voxelize_examples() {
        let one = PointCloud::new(vec![[0.0, 0.0, 0.0]]);
        assert_eq!(voxelize(&one, 0.1).unwrap().into_iter().collect::<Vec<_>>(), vec![[0, 0, 0]]);

        let same = PointCloud::new(vec![[0.05, 0.05, 0.01], [0.05, 0.05, 0.09]]);
        assert_eq!(voxelize(&same, 0.1).unwrap().len(), 1);

        let two = PointCloud::new(vec![[0.05, 0.05, 0.0], [0.05, 0.05, 0.5]]);
        let cells: Vec<_> = voxelize(&two, 0.1).unwrap().into_iter().collect();
        assert_eq!(cells, vec![[0, 0, 0], [0, 0, 5]]);
    }

    #[test]
    fn voxelize_rejects_empty_and_bad_cell() {
        assert!(matches!(voxelize(&PointCloud::default(), 0.1), Err(Error::EmptyInput(_))));
        let one = PointCloud::new(vec![[0.0; 3]]);
        assert!(voxelize(&one, 0.0).is_err());
    }

    #[test]
    fn transform_examples() {
        let cloud = PointCloud::with_provenance(vec![[1.0, 0.0, 0.0]], vec![7]);
        assert_eq!(apply_transform(&cloud, &SimilarityTransform::identity()), cloud);

        let scaled = apply_transform(&cloud, &SimilarityTransform::yaw(0.0, 2.0, [0.0; 3]));
        assert_eq!(scaled.points[0], [2.0, 0.0, 0.0]);
        assert_eq!(scaled.provenance, Some(vec![7]));

        let rotated = apply_transform(&cloud, &SimilarityTransform::yaw(FRAC_PI_2, 1.0, [0.0; 3]));
        let p = rotated.points[0];
        assert!((p[0] - 0.0).abs() < 1e-9 && (p[1] - 1.0).abs() < 1e-9 && p[2].abs() < 1e-9);
    }

    #[test]
    fn validate_rejects_bad_transforms() {
        assert!(SimilarityTransform::yaw(0.3, 0.0, [0.0; 3]).validate().is_err());
        let reflect = SimilarityTransform {
            rotation: Rotation::Matrix([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]]),
            translation: [0.0; 3],
            scale: 1.0,
        };
        assert!(reflect.validate().is_err());
        assert!(SimilarityTransform::yaw(1.0, 1.5, [1.0, 2.0, 3.0]).validate().is_ok());
    }

    proptest! {
        #[test]
        fn transform_round_trip(
            yaw in 0.0..std::f64::consts::TAU,
            scale in 0.5f64..2.0,
            t in prop::array::uniform3(-5.0f64..5.0),
            pts in prop::collection::vec(prop::array::uniform3(-10.0f64..10.0), 1..50),
        ) {
            let tf = SimilarityTransform::yaw(yaw, scale, t);
            let cloud = PointCloud::new(pts);
            let back = apply_transform(&apply_transform(&cloud, &tf), &tf.inverse());
            for (a, b) in cloud.points.iter().zip(&back.points) {
                for k in 0..3 {
                    prop_assert!((a[k] - b[k]).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn revoxelizing_centers_is_idempotent(
            pts in prop::collection::vec(prop::array::uniform3(-3.0f64..3.0), 1..200),
            cell in 0.01f64..0.5,
        ) {
            let cells = voxelize(&PointCloud::new(pts), cell).unwrap();
            let centers: Vec<Point3> = cells
                .iter()
                .map(|c| [(c[0] as f64 + 0.5) * cell, (c[1] as f64 + 0.5) * cell, (c[2] as f64 + 0.5) * cell])
                .collect();
            let again = voxelize(&PointCloud::new(centers), cell).unwrap();
            prop_assert_eq!(cells, again);
        }
    }
}
