//! ASCII XYZ and PLY point files (positions only).

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Point3, PointCloud};
use crate::error::{Error, Result};

/// Parses `x y z` lines. Blank lines and `#` comments are skipped; extra
/// columns after z are ignored.
pub fn parse_xyz(text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        let body = line.trim();
        if !body.is_empty() && !body.starts_with('#') {
            points.push(parse_triplet(body, offset)?);
        }
        offset += line.len() as u64;
    }
    Ok(PointCloud::new(points))
}

fn parse_triplet(body: &str, offset: u64) -> Result<Point3> {
    let mut it = body.split_whitespace();
    let mut p = [0.0; 3];
    for c in p.iter_mut() {
        let tok = it
            .next()
            .ok_or_else(|| Error::format(offset, "expected three coordinates"))?;
        *c = tok
            .parse::<f64>()
            .map_err(|_| Error::format(offset, format!("bad coordinate {tok:?}")))?;
        if !c.is_finite() {
            return Err(Error::format(offset, "non-finite coordinate"));
        }
    }
    Ok(p)
}

/// Parses an ASCII PLY file, reading the x/y/z properties of the vertex element.
pub fn parse_ply(text: &str) -> Result<PointCloud> {
    let mut offset = 0u64;
    let mut lines = text.split_inclusive('\n');
    let mut next_line = |offset: &mut u64| -> Option<(u64, &str)> {
        let l = lines.next()?;
        let at = *offset;
        *offset += l.len() as u64;
        Some((at, l.trim()))
    };

    match next_line(&mut offset) {
        Some((_, "ply")) => {}
        _ => return Err(Error::format(0, "missing 'ply' magic")),
    }

    let mut vertex_count: Option<usize> = None;
    let mut in_vertex = false;
    let mut props: Vec<String> = Vec::new();
    // Elements declared before the vertex element; their rows are skipped.
    let mut rows_before_vertex = 0usize;
    loop {
        let (at, line) = next_line(&mut offset).ok_or_else(|| Error::format(offset, "unterminated header"))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["format", "ascii", _] => {}
            ["format", other, ..] => {
                return Err(Error::format(at, format!("unsupported PLY format {other:?}")));
            }
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", name, n] => {
                let n: usize = n.parse().map_err(|_| Error::format(at, "bad element count"))?;
                if *name == "vertex" {
                    vertex_count = Some(n);
                    in_vertex = true;
                } else {
                    if vertex_count.is_none() {
                        rows_before_vertex += n;
                    }
                    in_vertex = false;
                }
            }
            ["property", "list", ..] if in_vertex => {
                return Err(Error::format(at, "list properties on vertices are not supported"));
            }
            ["property", "list", ..] => {}
            ["property", _ty, name] => {
                if in_vertex {
                    props.push(name.to_string());
                }
            }
            ["end_header"] => break,
            [] => {}
            _ => return Err(Error::format(at, format!("unexpected header line {line:?}"))),
        }
    }

    let n = vertex_count.ok_or_else(|| Error::format(offset, "no vertex element"))?;
    let idx = |name: &str| props.iter().position(|p| p == name);
    let (ix, iy, iz) = match (idx("x"), idx("y"), idx("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(Error::format(offset, "vertex element lacks x/y/z")),
    };

    for _ in 0..rows_before_vertex {
        next_line(&mut offset).ok_or_else(|| Error::format(offset, "truncated element data"))?;
    }
    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        let (at, line) = next_line(&mut offset)
            .ok_or_else(|| Error::format(offset, format!("expected {n} vertices, found {}", points.len())))?;
        if line.is_empty() {
            continue;
        }
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() < props.len() {
            return Err(Error::format(at, "vertex row has too few values"));
        }
        let get = |i: usize| -> Result<f64> {
            let v: f64 = vals[i]
                .parse()
                .map_err(|_| Error::format(at, format!("bad vertex value {:?}", vals[i])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::format(at, "non-finite vertex value"))
            }
        };
        points.push([get(ix)?, get(iy)?, get(iz)?]);
    }
    Ok(PointCloud::new(points))
}

/// Reads `.ply` files as PLY and anything else as XYZ.
pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let text = fs::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("ply") => parse_ply(&text),
        _ => parse_xyz(&text),
    }
}

/// Coordinates are written as float32 in shortest round-trip form.
pub fn write_xyz(w: &mut impl Write, cloud: &PointCloud) -> Result<()> {
    for p in &cloud.points {
        writeln!(w, "{} {} {}", p[0] as f32, p[1] as f32, p[2] as f32)?;
    }
    Ok(())
}

pub fn write_ply(w: &mut impl Write, cloud: &PointCloud, colors: Option<&[[u8; 3]]>) -> Result<()> {
    if let Some(c) = colors {
        if c.len() != cloud.len() {
            return Err(Error::InvalidArgument("one color per point required".into()));
        }
    }
    writeln!(w, "ply\nformat ascii 1.0\nelement vertex {}", cloud.len())?;
    writeln!(w, "property float x\nproperty float y\nproperty float z")?;
    if colors.is_some() {
        writeln!(w, "property uchar red\nproperty uchar green\nproperty uchar blue")?;
    }
    writeln!(w, "end_header")?;
    for (i, p) in cloud.points.iter().enumerate() {
        write!(w, "{} {} {}", p[0] as f32, p[1] as f32, p[2] as f32)?;
        if let Some(c) = colors {
            write!(w, " {} {} {}", c[i][0], c[i][1], c[i][2])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

pub fn save_xyz(path: &Path, cloud: &PointCloud) -> Result<()> {
    let mut buf = Vec::new();
    write_xyz(&mut buf, cloud)?;
    fs::write(path, buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xyz_round_trip_and_comments() {
        let text = "# header\n0 0 0\n\n1.5 -2 3.25 extra\n";
        let c = parse_xyz(text).unwrap();
        assert_eq!(c.points, vec![[0.0, 0.0, 0.0], [1.5, -2.0, 3.25]]);
        let mut out = Vec::new();
        write_xyz(&mut out, &c).unwrap();
        assert_eq!(parse_xyz(std::str::from_utf8(&out).unwrap()).unwrap(), c);
    }

    #[test]
    fn xyz_error_reports_byte_offset() {
        let err = parse_xyz("0 0 0\n1 2\n").unwrap_err();
        match err {
            Error::Format { offset, .. } => assert_eq!(offset, 6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ply_reads_positions_and_ignores_other_properties() {
        let text = "ply\nformat ascii 1.0\ncomment made by hand\nelement vertex 2\nproperty float nx\n\
                    property float x\nproperty float y\nproperty float z\nelement face 0\n\
                    property list uchar int vertex_indices\nend_header\n9 1 2 3\n9 4 5 6\n";
        let c = parse_ply(text).unwrap();
        assert_eq!(c.points, vec![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
    }

    #[test]
    fn ply_writer_output_parses() {
        let c = PointCloud::new(vec![[0.25, 0.5, 1.0]]);
        let mut out = Vec::new();
        write_ply(&mut out, &c, Some(&[[255, 0, 0]])).unwrap();
        assert_eq!(parse_ply(std::str::from_utf8(&out).unwrap()).unwrap(), c);
    }

    #[test]
    fn ply_rejects_binary_and_truncation() {
        assert!(parse_ply("ply\nformat binary_little_endian 1.0\nend_header\n").is_err());
        let truncated = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\n\
                         property float z\nend_header\n0 0 0\n";
        assert!(matches!(parse_ply(truncated), Err(Error::Format { .. })));
    }
}
