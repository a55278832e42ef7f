//! Kernel maps and the gather-GEMM-scatter convolution kernels.
//!
//! A kernel map lists, for every kernel offset, the `(input row, output row)`
//! pairs it connects. Convolution is then one small GEMM per offset.

use super::coords::{Coord, CoordSet};
use super::matrix::{gemm, Matrix};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct KernelMap {
    pub n_in: usize,
    pub n_out: usize,
    /// Per kernel offset, `(input row, output row)` pairs.
    pub pairs: Vec<Vec<(u32, u32)>>,
}

impl KernelMap {
    pub fn volume(&self) -> usize {
        self.pairs.len()
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.iter().map(Vec::len).sum()
    }
}

/// Centered offsets of an odd kernel, lexicographic with the first axis slowest.
pub fn kernel_offsets(dim: usize, size: [usize; 4]) -> Result<Vec<[i32; 4]>> {
    let mut offsets = vec![[0i32; 4]];
    for (axis, &s) in size.iter().enumerate().take(dim) {
        if s % 2 == 0 {
            return Err(Error::InvalidArgument(format!(
                "stride-1 kernel size must be odd, got {s} on axis {axis}"
            )));
        }
        let r = (s / 2) as i32;
        let mut next = Vec::with_capacity(offsets.len() * s);
        for o in &offsets {
            for d in -r..=r {
                let mut n = *o;
                n[axis] = d;
                next.push(n);
            }
        }
        offsets = next;
    }
    Ok(offsets)
}

fn shifted(c: &Coord, off: &[i32; 4]) -> Coord {
    [c[0], c[1] + off[0], c[2] + off[1], c[3] + off[2], c[4] + off[3]]
}

/// Submanifold map: output coordinates are the input coordinates, and each
/// output gathers its occupied neighbors.
pub fn submanifold_map(coords: &CoordSet, size: [usize; 4]) -> Result<KernelMap> {
    let offsets = kernel_offsets(coords.dim(), size)?;
    let pairs = offsets
        .iter()
        .map(|off| {
            // Output o reads input at o + off.
            coords
                .coords()
                .iter()
                .enumerate()
                .filter_map(|(o, c)| coords.get(&shifted(c, off)).map(|i| (i as u32, o as u32)))
                .collect()
        })
        .collect();
    Ok(KernelMap {
        n_in: coords.len(),
        n_out: coords.len(),
        pairs,
    })
}

fn check_axis_stride(dim: usize, axis_stride: [u32; 4]) -> Result<()> {
    for (a, &s) in axis_stride.iter().enumerate() {
        let ok = if a < dim { s == 1 || s == 2 } else { s == 1 };
        if !ok {
            return Err(Error::InvalidArgument(format!("unsupported stride {s} on axis {a}")));
        }
    }
    Ok(())
}

fn coarse_of(c: &Coord, axis_stride: [u32; 4]) -> (Coord, usize) {
    let mut out = *c;
    let mut offset = 0usize;
    for a in 0..4 {
        let s = axis_stride[a] as i32;
        out[a + 1] = c[a + 1].div_euclid(s);
        if s > 1 {
            offset = offset * s as usize + c[a + 1].rem_euclid(s) as usize;
        }
    }
    (out, offset)
}

/// Occupied cells of the downsampled grid, in first-occurrence order.
pub fn downsample_coords(fine: &CoordSet, axis_stride: [u32; 4]) -> Result<CoordSet> {
    check_axis_stride(fine.dim(), axis_stride)?;
    let mut stride = fine.stride();
    for a in 0..4 {
        stride[a] *= axis_stride[a];
    }
    CoordSet::from_iter_dedup(
        fine.dim(),
        stride,
        fine.coords().iter().map(|c| coarse_of(c, axis_stride).0),
    )
}

/// Map of a stride-2, kernel-2 convolution from `fine` onto `coarse`.
///
/// Fine cells whose parent is absent from `coarse` are skipped, so the map
/// also serves transposed convolution onto an arbitrary target set.
pub fn strided_map(fine: &CoordSet, coarse: &CoordSet, axis_stride: [u32; 4]) -> Result<KernelMap> {
    check_axis_stride(fine.dim(), axis_stride)?;
    if fine.dim() != coarse.dim() {
        return Err(Error::DimMismatch {
            expected: fine.dim(),
            got: coarse.dim(),
        });
    }
    let volume: usize = axis_stride.iter().map(|&s| s as usize).product();
    let mut pairs = vec![Vec::new(); volume];
    for (i, c) in fine.coords().iter().enumerate() {
        let (parent, k) = coarse_of(c, axis_stride);
        if let Some(o) = coarse.get(&parent) {
            pairs[k].push((i as u32, o as u32));
        }
    }
    Ok(KernelMap {
        n_in: fine.len(),
        n_out: coarse.len(),
        pairs,
    })
}

fn gather(src: &Matrix, rows: impl Iterator<Item = usize>, buf: &mut Vec<f64>) {
    buf.clear();
    for r in rows {
        buf.extend_from_slice(src.row(r));
    }
}

fn scatter_add(dst: &mut Matrix, rows: impl Iterator<Item = usize>, buf: &[f64]) {
    let c = dst.cols();
    for (n, r) in rows.enumerate() {
        for (d, s) in dst.row_mut(r).iter_mut().zip(&buf[n * c..(n + 1) * c]) {
            *d += s;
        }
    }
}

fn weight_block(w: &Matrix, k: usize, cin: usize) -> &[f64] {
    &w.data()[k * cin * w.cols()..(k + 1) * cin * w.cols()]
}

/// Infers `(c_in, c_out)` from a `(volume * c_in) x c_out` weight.
pub(crate) fn weight_channels(w: &Matrix, volume: usize) -> Result<(usize, usize)> {
    if volume == 0 || !w.rows().is_multiple_of(volume) {
        return Err(Error::InvalidArgument(format!(
            "weight with {} rows does not split into {volume} kernel taps",
            w.rows()
        )));
    }
    Ok((w.rows() / volume, w.cols()))
}

/// Forward convolution. `transpose == false`: `out[o] += x[i] W_k`
/// (`n_out x c_out`). `transpose == true`: `out[i] += x[o] W_k^T`
/// (`n_in x c_in`), the adjoint of the former.
pub(crate) fn conv_apply(x: &Matrix, w: &Matrix, map: &KernelMap, transpose: bool) -> Result<Matrix> {
    let (cin, cout) = weight_channels(w, map.volume())?;
    let (src_c, dst_c, src_n, dst_n) = if transpose {
        (cout, cin, map.n_out, map.n_in)
    } else {
        (cin, cout, map.n_in, map.n_out)
    };
    if x.cols() != src_c {
        return Err(Error::ChannelMismatch {
            expected: src_c,
            got: x.cols(),
        });
    }
    if x.rows() != src_n {
        return Err(Error::InvalidArgument(format!(
            "input has {} rows, kernel map expects {src_n}",
            x.rows()
        )));
    }
    let mut out = Matrix::zeros(dst_n, dst_c);
    let mut a = Vec::new();
    let mut c = Vec::new();
    for (k, pairs) in map.pairs.iter().enumerate() {
        if pairs.is_empty() {
            continue;
        }
        let n = pairs.len();
        let wk = weight_block(w, k, cin);
        c.clear();
        c.resize(n * dst_c, 0.0);
        if transpose {
            gather(x, pairs.iter().map(|p| p.1 as usize), &mut a);
            gemm(n, cout, cin, &a, false, wk, true, &mut c, 0.0);
            scatter_add(&mut out, pairs.iter().map(|p| p.0 as usize), &c);
        } else {
            gather(x, pairs.iter().map(|p| p.0 as usize), &mut a);
            gemm(n, cin, cout, &a, false, wk, false, &mut c, 0.0);
            scatter_add(&mut out, pairs.iter().map(|p| p.1 as usize), &c);
        }
    }
    Ok(out)
}

/// Gradients of [`conv_apply`] w.r.t. its input and weight.
pub(crate) fn conv_backward(
    x: &Matrix,
    w: &Matrix,
    map: &KernelMap,
    transpose: bool,
    dout: &Matrix,
    need_dx: bool,
    need_dw: bool,
) -> (Option<Matrix>, Option<Matrix>) {
    let cin = w.rows() / map.volume();
    let cout = w.cols();
    let mut dx = need_dx.then(|| Matrix::zeros(x.rows(), x.cols()));
    let mut dw = need_dw.then(|| Matrix::zeros(w.rows(), w.cols()));
    let (mut g, mut h, mut c) = (Vec::new(), Vec::new(), Vec::new());
    for (k, pairs) in map.pairs.iter().enumerate() {
        if pairs.is_empty() {
            continue;
        }
        let n = pairs.len();
        let wk = weight_block(w, k, cin);
        // Rows of the forward input (`src`) and output (`dst`) for this tap.
        let src_rows = || pairs.iter().map(move |p| if transpose { p.1 } else { p.0 } as usize);
        let dst_rows = || pairs.iter().map(move |p| if transpose { p.0 } else { p.1 } as usize);
        if let Some(dx) = dx.as_mut() {
            gather(dout, dst_rows(), &mut h);
            if transpose {
                c.clear();
                c.resize(n * cout, 0.0);
                gemm(n, cin, cout, &h, false, wk, false, &mut c, 0.0);
            } else {
                c.clear();
                c.resize(n * cin, 0.0);
                gemm(n, cout, cin, &h, false, wk, true, &mut c, 0.0);
            }
            scatter_add(dx, src_rows(), &c);
        }
        if let Some(dw) = dw.as_mut() {
            let block = &mut dw.data_mut()[k * cin * cout..(k + 1) * cin * cout];
            if transpose {
                // dW_k += dOut[i]^T x[o]
                gather(dout, dst_rows(), &mut g);
                gather(x, src_rows(), &mut h);
            } else {
                // dW_k += x[i]^T dOut[o]
                gather(x, src_rows(), &mut g);
                gather(dout, dst_rows(), &mut h);
            }
            gemm(cin, n, cout, &g, true, &h, false, block, 1.0);
        }
    }
    (dx, dw)
}
