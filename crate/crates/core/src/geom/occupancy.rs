use std::collections::{BTreeMap, BTreeSet};

use super::{check_cell_size, voxel_of, PointCloud};
use crate::error::{Error, Result};

/// Integer floor-plane cell `(ix, iy)`.
pub type Cell = [i32; 2];

/// Share of occupied columns (lowest minima first) averaged into the floor height.
pub const FLOOR_FRACTION: f64 = 0.25;

#[derive(Clone, Debug, Default)]
struct Column {
    /// Distinct occupied voxel layers.
    layers: BTreeSet<i32>,
    min_z: f64,
}

/// Per-column summary of occupied surface voxels.
#[derive(Clone, Debug)]
pub struct OccupancyMap2D {
    pub origin: [f64; 2],
    pub cell_size: f64,
    pub floor_height: f64,
    columns: BTreeMap<Cell, ColumnStats>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ColumnStats {
    /// Number of distinct occupied voxels in the column.
    pub accumulation: u32,
    /// Top of the highest occupied voxel.
    pub max_height: f64,
    /// Lowest point z in the column; objects are placed on it.
    pub base_z: f64,
}

impl OccupancyMap2D {
    /// Builds a map from explicit column statistics.
    pub fn from_columns(cell_size: f64, floor_height: f64, columns: impl IntoIterator<Item = (Cell, ColumnStats)>) -> Self {
        Self {
            origin: [0.0, 0.0],
            cell_size,
            floor_height,
            columns: columns.into_iter().collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    /// Accumulation of a cell; 0 for unoccupied cells.
    pub fn accumulation(&self, cell: Cell) -> u32 {
        self.columns.get(&cell).map_or(0, |c| c.accumulation)
    }

    /// Defined only for cells with accumulation > 0.
    pub fn max_height(&self, cell: Cell) -> Option<f64> {
        self.columns.get(&cell).map(|c| c.max_height)
    }

    pub fn column(&self, cell: Cell) -> Option<&ColumnStats> {
        self.columns.get(&cell)
    }

    /// Occupied cells in ascending `(ix, iy)` order.
    pub fn cells(&self) -> impl Iterator<Item = (Cell, &ColumnStats)> {
        self.columns.iter().map(|(c, s)| (*c, s))
    }

    pub fn cell_center(&self, cell: Cell) -> [f64; 2] {
        [
            (cell[0] as f64 + 0.5) * self.cell_size,
            (cell[1] as f64 + 0.5) * self.cell_size,
        ]
    }
}

pub fn height_accumulate(scene: &PointCloud, cell_size: f64) -> Result<OccupancyMap2D> {
    height_accumulate_with(scene, cell_size, FLOOR_FRACTION)
}

/// Voxelizes the scene and collapses every height column into one cell.
///
/// The floor height is the mean top of the lowest occupied voxel over the
/// `floor_fraction` of columns with the lowest minima.
pub fn height_accumulate_with(scene: &PointCloud, cell_size: f64, floor_fraction: f64) -> Result<OccupancyMap2D> {
    if scene.is_empty() {
        return Err(Error::EmptyInput("height_accumulate: empty scene"));
    }
    check_cell_size(cell_size)?;
    if !(floor_fraction > 0.0 && floor_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "floor fraction must be in (0, 1], got {floor_fraction}"
        )));
    }

    let mut columns: BTreeMap<Cell, Column> = BTreeMap::new();
    for p in &scene.points {
        let v = voxel_of(p, cell_size);
        let col = columns.entry([v[0], v[1]]).or_insert_with(|| Column {
            layers: BTreeSet::new(),
            min_z: f64::INFINITY,
        });
        col.layers.insert(v[2]);
        col.min_z = col.min_z.min(p[2]);
    }

    let mut minima: Vec<i32> = columns.values().map(|c| *c.layers.first().unwrap()).collect();
    minima.sort_unstable();
    let take = ((minima.len() as f64 * floor_fraction).ceil() as usize).clamp(1, minima.len());
    let floor_height = minima[..take]
        .iter()
        .map(|&iz| (iz + 1) as f64 * cell_size)
        .sum::<f64>()
        / take as f64;

    let (lo, _) = scene.bounds().unwrap();
    let origin = [
        (lo[0] / cell_size).floor() * cell_size,
        (lo[1] / cell_size).floor() * cell_size,
    ];
    let columns = columns
        .into_iter()
        .map(|(cell, col)| {
            let top = *col.layers.last().unwrap();
            (
                cell,
                ColumnStats {
                    accumulation: col.layers.len() as u32,
                    max_height: (top + 1) as f64 * cell_size,
                    base_z: col.min_z,
                },
            )
        })
        .collect();

    Ok(OccupancyMap2D {
        origin,
        cell_size,
        floor_height,
        columns,
    })
}
