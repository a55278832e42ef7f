use std::sync::Arc;

use rustc_hash::FxHashMap;

use super::Matrix;
use crate::error::{Error, Result};

/// `[batch, x, y, z, t]`; axes beyond the tensor dimension stay 0.
pub type Coord = [i32; 5];

/// Unique integer coordinates of one sparse tensor level, with a hash index.
///
/// Coordinates are stored in level units: a tensor at stride 2 keeps
/// `floor(c / 2)` rather than multiples of two. `stride` records the
/// cumulative stride per spatial axis relative to the input grid.
#[derive(Clone, Debug)]
pub struct CoordSet {
    dim: usize,
    stride: [u32; 4],
    coords: Vec<Coord>,
    index: FxHashMap<Coord, u32>,
}

impl CoordSet {
    /// Fails on duplicate coordinates or an unsupported dimension.
    pub fn new(dim: usize, coords: Vec<Coord>) -> Result<Self> {
        Self::with_stride(dim, [1; 4], coords)
    }

    pub fn with_stride(dim: usize, stride: [u32; 4], coords: Vec<Coord>) -> Result<Self> {
        if dim != 3 && dim != 4 {
            return Err(Error::InvalidArgument(format!("tensor dim must be 3 or 4, got {dim}")));
        }
        let mut index = FxHashMap::with_capacity_and_hasher(coords.len(), Default::default());
        for (i, c) in coords.iter().enumerate() {
            if dim == 3 && c[4] != 0 {
                return Err(Error::InvalidArgument("dim-3 coordinate with nonzero time axis".into()));
            }
            if index.insert(*c, i as u32).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate coordinate {c:?}")));
            }
        }
        Ok(Self {
            dim,
            stride,
            coords,
            index,
        })
    }

    /// Deduplicates, keeping first occurrences in order.
    pub fn from_iter_dedup(dim: usize, stride: [u32; 4], it: impl IntoIterator<Item = Coord>) -> Result<Self> {
        let mut index = FxHashMap::default();
        let mut coords = Vec::new();
        for c in it {
            if let std::collections::hash_map::Entry::Vacant(e) = index.entry(c) {
                e.insert(coords.len() as u32);
                coords.push(c);
            }
        }
        if dim != 3 && dim != 4 {
            return Err(Error::InvalidArgument(format!("tensor dim must be 3 or 4, got {dim}")));
        }
        Ok(Self {
            dim,
            stride,
            coords,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn stride(&self) -> [u32; 4] {
        self.stride
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn coords(&self) -> &[Coord] {
        &self.coords
    }

    pub fn get(&self, c: &Coord) -> Option<usize> {
        self.index.get(c).map(|&i| i as usize)
    }

    /// Same coordinates in the same row order.
    pub fn same_layout(&self, other: &CoordSet) -> bool {
        self.dim == other.dim && self.coords == other.coords
    }
}

/// A feature field on sparse integer coordinates.
#[derive(Clone, Debug)]
pub struct SparseTensor {
    pub coords: Arc<CoordSet>,
    pub feats: Matrix,
}

impl SparseTensor {
    pub fn new(coords: Arc<CoordSet>, feats: Matrix) -> Result<Self> {
        if coords.len() != feats.rows() {
            return Err(Error::InvalidArgument(format!(
                "{} coordinates but {} feature rows",
                coords.len(),
                feats.rows()
            )));
        }
        if feats.cols() == 0 {
            return Err(Error::InvalidArgument("feature width must be at least 1".into()));
        }
        Ok(Self { coords, feats })
    }

    pub fn dim(&self) -> usize {
        self.coords.dim()
    }

    pub fn channels(&self) -> usize {
        self.feats.cols()
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn feature(&self, c: &Coord) -> Option<&[f64]> {
        self.coords.get(c).map(|i| self.feats.row(i))
    }
}
