//! Sparse 3D/4D tensors, kernel maps, and reverse-mode differentiation.
//!
//! The value-level functions here ([`sparse_conv`], [`transpose_conv`], ...)
//! evaluate one primitive without recording a graph. Networks use the same
//! kernels through [`Graph`].

pub mod checkpoint;
mod coords;
mod graph;
mod kernel;
mod matrix;
mod params;

use std::sync::Arc;

pub use coords::{Coord, CoordSet, SparseTensor};
pub use graph::{neg_cosine, Gradients, Graph, Var};
pub use kernel::{downsample_coords, kernel_offsets, strided_map, submanifold_map, KernelMap};
pub use matrix::Matrix;
pub use params::{fan_in_uniform, ParamId, ParamStore};

use crate::error::{Error, Result};

/// Convolution with weights laid out `(taps * c_in) x c_out`, taps ordered as
/// [`kernel_offsets`] (stride 1) or by position within the 2-block (stride 2).
///
/// Stride 1 is submanifold: the output keeps the input coordinates. Stride 2
/// requires kernel 2 on every strided axis and 1 elsewhere; the output holds
/// the occupied downsampled cells.
pub fn sparse_conv(x: &SparseTensor, weights: &Matrix, kernel: [usize; 4], stride: [u32; 4]) -> Result<SparseTensor> {
    let dim = x.dim();
    let strided = stride.iter().take(dim).any(|&s| s != 1);
    let (out_coords, map) = if strided {
        for a in 0..dim {
            if kernel[a] != stride[a] as usize {
                return Err(Error::InvalidArgument(format!(
                    "strided convolution needs kernel == stride per axis, axis {a} has kernel {} stride {}",
                    kernel[a], stride[a]
                )));
            }
        }
        let coarse = Arc::new(downsample_coords(&x.coords, stride)?);
        let map = strided_map(&x.coords, &coarse, stride)?;
        (coarse, map)
    } else {
        (x.coords.clone(), submanifold_map(&x.coords, kernel)?)
    };
    let feats = kernel::conv_apply(&x.feats, weights, &map, false)?;
    SparseTensor::new(out_coords, feats)
}

/// Adjoint of a stride-2 [`sparse_conv`], evaluated onto `target` (the fine
/// coordinates of the matching encoder level). Uses the same weight tensor as
/// the forward convolution, so channels map `c_out -> c_in`.
pub fn transpose_conv(y: &SparseTensor, weights: &Matrix, target: &Arc<CoordSet>, stride: [u32; 4]) -> Result<SparseTensor> {
    if target.is_empty() {
        return Err(Error::EmptyInput("transpose_conv: empty target coordinates"));
    }
    if target.dim() != y.dim() {
        return Err(Error::DimMismatch {
            expected: y.dim(),
            got: target.dim(),
        });
    }
    let map = strided_map(target, &y.coords, stride)?;
    let feats = kernel::conv_apply(&y.feats, weights, &map, true)?;
    SparseTensor::new(target.clone(), feats)
}

pub fn relu(x: &SparseTensor) -> SparseTensor {
    SparseTensor {
        coords: x.coords.clone(),
        feats: x.feats.map(|v| v.max(0.0)),
    }
}

/// Per-coordinate affine map, i.e. a 1x..x1 convolution.
pub fn linear_1x1(x: &SparseTensor, w: &Matrix, b: &[f64]) -> Result<SparseTensor> {
    if w.rows() != x.channels() {
        return Err(Error::ChannelMismatch {
            expected: w.rows(),
            got: x.channels(),
        });
    }
    if b.len() != w.cols() {
        return Err(Error::ChannelMismatch {
            expected: w.cols(),
            got: b.len(),
        });
    }
    let mut g = Graph::new();
    let xv = g.constant(x.feats.clone());
    let wv = g.constant(w.clone());
    let bv = g.constant(Matrix::from_vec(1, b.len(), b.to_vec()));
    let out = g.linear(xv, wv, Some(bv))?;
    SparseTensor::new(x.coords.clone(), g.value(out).clone())
}

pub fn add(x: &SparseTensor, y: &SparseTensor) -> Result<SparseTensor> {
    if !x.coords.same_layout(&y.coords) {
        return Err(Error::CoordinateMismatch);
    }
    if x.channels() != y.channels() {
        return Err(Error::ChannelMismatch {
            expected: x.channels(),
            got: y.channels(),
        });
    }
    let mut feats = x.feats.clone();
    feats.add_assign(&y.feats);
    SparseTensor::new(x.coords.clone(), feats)
}
