//! `4DC1` sequence files and their `key = value` sidecars.
//!
//! Layout (little-endian): magic `4DC1`, version u32, frame count u32,
//! scene_id u64, object_id u64; per frame: point count u32, float32 xyz
//! triplets, u32 provenance ids, object pose (yaw, scale, tx, ty, tz) and
//! static-aug transform (same five fields) as float32; a trailing CRC-32 of
//! every preceding byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::{Sequence, SequenceFrame, SequenceStats, Trajectory, Waypoint};
use crate::error::{Error, Result};
use crate::geom::{PointCloud, SimilarityTransform};
use crate::tensor::checkpoint::{verify_checksum, Reader};

pub const MAGIC: &[u8; 4] = b"4DC1";
pub const VERSION: u32 = 1;

fn push_transform(out: &mut Vec<u8>, t: &SimilarityTransform) -> Result<()> {
    let yaw = t
        .yaw_angle()
        .ok_or_else(|| Error::InvalidArgument("only yaw rotations can be stored".into()))?;
    for v in [yaw, t.scale, t.translation[0], t.translation[1], t.translation[2]] {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(())
}

fn read_transform(r: &mut Reader) -> Result<SimilarityTransform> {
    let at = r.pos();
    let mut v = [0.0f64; 5];
    for x in v.iter_mut() {
        *x = f64::from(r.f32()?);
    }
    let t = SimilarityTransform::yaw(v[0], v[1], [v[2], v[3], v[4]]);
    if !v.iter().all(|x| x.is_finite()) {
        return Err(Error::format(at, "non-finite transform"));
    }
    t.validate().map_err(|e| Error::format(at, e.to_string()))?;
    Ok(t)
}

pub fn encode(seq: &Sequence) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(seq.frames.len() as u32).to_le_bytes());
    out.extend_from_slice(&seq.scene_id.to_le_bytes());
    out.extend_from_slice(&seq.object_id.to_le_bytes());
    for f in &seq.frames {
        let ids = f
            .cloud
            .provenance
            .as_ref()
            .filter(|ids| ids.len() == f.cloud.len())
            .ok_or_else(|| Error::InvalidArgument("every point needs a provenance id".into()))?;
        out.extend_from_slice(&(f.cloud.len() as u32).to_le_bytes());
        for p in &f.cloud.points {
            for c in p {
                out.extend_from_slice(&(*c as f32).to_le_bytes());
            }
        }
        for id in ids {
            out.extend_from_slice(&id.to_le_bytes());
        }
        push_transform(&mut out, &f.object_pose)?;
        push_transform(&mut out, &f.static_aug)?;
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Decodes a sequence file. The trajectory is rebuilt from the object poses
/// and the stats are inferred from the frames; see [`apply_sidecar`].
pub fn decode(buf: &[u8]) -> Result<Sequence> {
    let body = verify_checksum(buf)?;
    let mut r = Reader::new(body);
    if r.take(4)? != MAGIC {
        return Err(Error::format(0, "bad magic, expected 4DC1"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let t = r.u32()? as usize;
    let scene_id = r.u64()?;
    let object_id = r.u64()?;
    let mut frames = Vec::with_capacity(t.min(1024));
    for _ in 0..t {
        let at = r.pos();
        let n = r.u32()? as usize;
        if n.saturating_mul(16) > r.remaining() {
            return Err(Error::format(at, format!("point count {n} exceeds file")));
        }
        let mut points = Vec::with_capacity(n);
        for _ in 0..n {
            let p_at = r.pos();
            let p = [r.f32()?, r.f32()?, r.f32()?].map(f64::from);
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::format(p_at, "non-finite coordinate"));
            }
            points.push(p);
        }
        let ids = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let object_pose = read_transform(&mut r)?;
        let static_aug = read_transform(&mut r)?;
        frames.push(SequenceFrame {
            cloud: PointCloud::with_provenance(points, ids),
            object_pose,
            static_aug,
        });
    }
    if r.remaining() != 0 {
        return Err(Error::format(r.pos(), "trailing bytes after last frame"));
    }
    let waypoints = frames
        .iter()
        .map(|f| Waypoint {
            position: [f.object_pose.translation[0], f.object_pose.translation[1]],
            heading: f.object_pose.yaw_angle().unwrap_or(0.0),
            base_z: f.object_pose.translation[2],
        })
        .collect();
    let mut seq = Sequence {
        scene_id,
        object_id,
        frames,
        trajectory: Trajectory { waypoints },
        stats: SequenceStats::default(),
    };
    seq.stats = seq.inferred_stats();
    Ok(seq)
}

/// Sidecar text: sequence stats followed by `extra` (generation parameters).
pub fn sidecar_text(seq: &Sequence, extra: &[(String, String)]) -> String {
    let composed: Vec<String> = seq.stats.composed.iter().map(|c| c.to_string()).collect();
    let mut s = format!(
        "format = 4DC1\nscene_id = {}\nobject_id = {}\nframes = {}\nscene_points = {}\nobject_points = {}\ncomposed = {}\n",
        seq.scene_id,
        seq.object_id,
        seq.frames.len(),
        seq.stats.scene_points,
        seq.stats.object_points,
        composed.join(",")
    );
    for (k, v) in extra {
        s.push_str(&format!("{k} = {v}\n"));
    }
    s
}

/// Parses `key = value` lines; `#` comments and blank lines are skipped.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Replaces inferred stats with the ones recorded at generation time.
pub fn apply_sidecar(seq: &mut Sequence, text: &str) -> Result<()> {
    let kv = parse_kv(text)?;
    let num = |k: &str| -> Result<u32> {
        kv.get(k)
            .ok_or_else(|| Error::Config(format!("sidecar lacks {k}")))?
            .parse()
            .map_err(|_| Error::Config(format!("sidecar {k} is not a count")))
    };
    let composed = kv
        .get("composed")
        .ok_or_else(|| Error::Config("sidecar lacks composed".into()))?
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|s| s.trim().parse().map_err(|_| Error::Config("bad composed count".into())))
        .collect::<Result<Vec<u32>>>()?;
    if composed.len() != seq.frames.len() {
        return Err(Error::Config(format!(
            "sidecar lists {} frames, file has {}",
            composed.len(),
            seq.frames.len()
        )));
    }
    seq.stats = SequenceStats {
        scene_points: num("scene_points")?,
        object_points: num("object_points")?,
        composed,
    };
    Ok(())
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("txt")
}

/// Writes the sequence and its sidecar next to it.
pub fn save(path: &Path, seq: &Sequence, extra: &[(String, String)]) -> Result<()> {
    fs::write(path, encode(seq)?)?;
    fs::write(sidecar_path(path), sidecar_text(seq, extra))?;
    Ok(())
}

/// Reads a sequence file, applying its sidecar when one exists.
pub fn load(path: &Path) -> Result<Sequence> {
    let mut seq = decode(&fs::read(path)?)?;
    let side = sidecar_path(path);
    if side.exists() {
        apply_sidecar(&mut seq, &fs::read_to_string(side)?)?;
    }
    Ok(seq)
}

/// Every `.4dc` file directly inside `dir`, sorted by file name.
pub fn list_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.extension().is_some_and(|e| e == "4dc"));
    files.sort();
    Ok(files)
}

pub fn load_dir(dir: &Path) -> Result<Vec<Sequence>> {
    list_dir(dir)?.iter().map(|p| load(p)).collect()
}
