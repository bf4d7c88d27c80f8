//! Wavefront OBJ: `v` and `f` records only.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{TriangleMesh, Vec3};

/// Parses vertices and faces; polygons are fan-triangulated. Face indices may
/// be negative (relative) and may carry `/vt/vn` suffixes, which are ignored.
pub fn parse_obj(text: &str) -> Result<TriangleMesh> {
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut triangles: Vec<[usize; 3]> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let mut xyz = [0.0f64; 3];
                for c in xyz.iter_mut() {
                    let t = tok
                        .next()
                        .ok_or_else(|| Error::parse(n, "vertex needs 3 coordinates"))?;
                    *c = t
                        .parse()
                        .map_err(|_| Error::parse(n, format!("bad coordinate {t:?}")))?;
                    if !c.is_finite() {
                        return Err(Error::parse(n, "non-finite coordinate"));
                    }
                }
                vertices.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
            }
            Some("f") => {
                let mut polygon = Vec::new();
                for t in tok {
                    let head = t.split('/').next().unwrap_or("");
                    let idx: i64 = head
                        .parse()
                        .map_err(|_| Error::parse(n, format!("bad face index {t:?}")))?;
                    let resolved = match idx {
                        0 => None,
                        i if i > 0 => usize::try_from(i - 1).ok(),
                        i => (vertices.len() as i64)
                            .checked_add(i)
                            .and_then(|r| usize::try_from(r).ok()),
                    };
                    match resolved {
                        Some(r) if r < vertices.len() => polygon.push(r),
                        _ => {
                            return Err(Error::parse(
                                n,
                                format!("face index {idx} out of range ({} vertices)", vertices.len()),
                            ))
                        }
                    }
                }
                if polygon.len() < 3 {
                    return Err(Error::parse(n, "face with fewer than 3 vertices"));
                }
                for k in 1..polygon.len() - 1 {
                    triangles.push([polygon[0], polygon[k], polygon[k + 1]]);
                }
            }
            _ => {}
        }
    }
    if triangles.is_empty() {
        return Err(Error::invalid("OBJ file has no faces"));
    }
    TriangleMesh::new(vertices, triangles)
}

pub fn write_obj(mesh: &TriangleMesh) -> String {
    let mut out = String::new();
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for t in &mesh.triangles {
        let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_slashes_and_relative_indices() {
        let text = "# square\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1/1/1 2/2/1 3/3/1 4//1\nf -4 -3 -1\n";
        let mesh = parse_obj(text).unwrap();
        assert_eq!(mesh.triangles, vec![[0, 1, 2], [0, 2, 3], [0, 1, 3]]);
    }

    #[test]
    fn write_then_parse() {
        let text = "v 0 0 0\nv 2 0 0\nv 0 2 0\nf 1 2 3\n";
        let mesh = parse_obj(text).unwrap();
        assert_eq!(write_obj(&mesh), text);
    }

    #[test]
    fn bad_records_report_their_line() {
        let err = parse_obj("v 0 0 0\nv 1 0 0\nf 1 2 5\n").unwrap_err();
        assert!(err.to_string().starts_with("line 3:"), "{err}");
        assert!(parse_obj("v 0 0\n").unwrap_err().to_string().starts_with("line 1:"));
        assert!(parse_obj("v 0 0 0\nf 0 1 1\n").is_err());
        assert!(parse_obj("v 0 0 0\nv 1 1 1\nv 2 2 2\nf 1 2 3\n").is_err());
        assert!(parse_obj("f -9223372036854775808 1 1\n").is_err());
    }
}
