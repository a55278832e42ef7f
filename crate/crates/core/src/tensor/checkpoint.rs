//! `4DCW` parameter files.
//!
//! Layout (little-endian): magic `4DCW`, version u32, tensor count u32, then per
//! tensor: name length u32, UTF-8 name, rank u32, dims u32 x rank, float32
//! row-major payload. A metadata block (length u32 + UTF-8 `key = value` text)
//! follows the tensors, and a CRC-32 of every preceding byte closes the file.

use super::{Matrix, ParamStore};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"4DCW";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct WeightFile {
    pub params: ParamStore,
    /// Free-form `key = value` lines (config snapshot, step count).
    pub meta: String,
}

pub fn encode(params: &ParamStore, meta: &str) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, m) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&2u32.to_le_bytes());
        out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
        for v in m.data() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(meta.as_bytes());
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn pos(&self) -> u64 {
        self.pos as u64
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(self.pos as u64, format!("unexpected end of file, wanted {n} bytes")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

/// Splits off and verifies the trailing CRC-32.
pub(crate) fn verify_checksum(buf: &[u8]) -> Result<&[u8]> {
    if buf.len() < 4 {
        return Err(Error::format(0, "file too short for checksum"));
    }
    let (body, tail) = buf.split_at(buf.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let actual = crc32fast::hash(body);
    if stored != actual {
        return Err(Error::format(
            body.len() as u64,
            format!("checksum mismatch: stored {stored:08x}, computed {actual:08x}"),
        ));
    }
    Ok(body)
}

pub fn decode(buf: &[u8]) -> Result<WeightFile> {
    let body = verify_checksum(buf)?;
    let mut r = Reader::new(body);
    if r.take(4)? != MAGIC {
        return Err(Error::format(0, "bad magic, expected 4DCW"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let count = r.u32()?;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let at = r.pos();
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::format(at + 4, "tensor name is not UTF-8"))?
            .to_string();
        let rank_at = r.pos();
        let rank = r.u32()?;
        let dims: Vec<usize> = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<_>>()?;
        let (rows, cols) = match dims.as_slice() {
            [n] => (1, *n),
            [a, b] => (*a, *b),
            _ => return Err(Error::format(rank_at, format!("unsupported rank {rank}"))),
        };
        let n = rows
            .checked_mul(cols)
            .filter(|n| n * 4 <= r.remaining())
            .ok_or_else(|| Error::format(r.pos(), "tensor payload exceeds file"))?;
        let data = (0..n).map(|_| r.f32().map(f64::from)).collect::<Result<Vec<_>>>()?;
        params
            .add(name, Matrix::from_vec(rows, cols, data))
            .map_err(|e| Error::format(at, e.to_string()))?;
    }
    let at = r.pos();
    let len = r.u32()? as usize;
    let meta = std::str::from_utf8(r.take(len)?)
        .map_err(|_| Error::format(at + 4, "metadata is not UTF-8"))?
        .to_string();
    if r.remaining() != 0 {
        return Err(Error::format(r.pos(), "trailing bytes after metadata"));
    }
    Ok(WeightFile { params, meta })
}
