//! ASCII PLY reader and writer.
//!
//! The reader accepts `format ascii 1.0` only. Vertex elements must carry
//! `x y z`; `nx ny nz` are picked up when all three are present. A `face`
//! element with a list property is read as polygons and fan-triangulated.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, TriangleMesh, Vec3};

/// Upper bound on speculative allocation from header counts.
const MAX_PREALLOC: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
enum Property {
    Scalar(String),
    List(String),
}

impl Property {
    fn name(&self) -> &str {
        match self {
            Property::Scalar(n) | Property::List(n) => n,
        }
    }
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

/// Contents of a PLY file: vertices (with optional normals) and faces.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PlyData {
    pub cloud: PointCloud,
    pub triangles: Vec<[usize; 3]>,
}

const SCALAR_TYPES: &[&str] = &[
    "char", "uchar", "short", "ushort", "int", "uint", "float", "double", "int8", "uint8", "int16", "uint16", "int32",
    "uint32", "float32", "float64",
];

pub fn parse_ply(text: &str) -> Result<PlyData> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

    match lines.next() {
        Some((_, "ply")) => {}
        Some((n, _)) => return Err(Error::parse(n, "missing 'ply' magic")),
        None => return Err(Error::parse(1, "empty file")),
    }

    let mut elements: Vec<Element> = Vec::new();
    let mut saw_format = false;
    loop {
        let Some((n, line)) = lines.next() else {
            return Err(Error::parse(0, "unterminated header (no end_header)"));
        };
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                let fmt = tok.next();
                let ver = tok.next();
                if fmt != Some("ascii") {
                    return Err(Error::parse(n, "only 'format ascii' is supported"));
                }
                if ver != Some("1.0") {
                    return Err(Error::parse(n, "unsupported PLY version"));
                }
                saw_format = true;
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                let name = tok.next().ok_or_else(|| Error::parse(n, "element without a name"))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| Error::parse(n, "element count is not a non-negative integer"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(n, "property before any element"))?;
                let prop = match tok.next() {
                    Some("list") => {
                        let (Some(ct), Some(it), Some(name)) = (tok.next(), tok.next(), tok.next()) else {
                            return Err(Error::parse(n, "malformed list property"));
                        };
                        if !SCALAR_TYPES.contains(&ct) || !SCALAR_TYPES.contains(&it) {
                            return Err(Error::parse(n, "unknown list property type"));
                        }
                        Property::List(name.to_string())
                    }
                    Some(ty) if SCALAR_TYPES.contains(&ty) => {
                        let name = tok.next().ok_or_else(|| Error::parse(n, "property without a name"))?;
                        Property::Scalar(name.to_string())
                    }
                    _ => return Err(Error::parse(n, "unknown property type")),
                };
                element.properties.push(prop);
            }
            Some("end_header") => break,
            Some(other) => return Err(Error::parse(n, format!("unexpected header keyword {other:?}"))),
        }
    }
    if !saw_format {
        return Err(Error::parse(0, "header has no format line"));
    }

    let mut data = PlyData::default();
    let mut have_vertices = false;
    for element in &elements {
        match element.name.as_str() {
            "vertex" => {
                if have_vertices {
                    return Err(Error::parse(0, "duplicate vertex element"));
                }
                have_vertices = true;
                data.cloud = read_vertices(element, &mut lines)?;
            }
            "face" => {
                data.triangles = read_faces(element, &mut lines, data.cloud.len())?;
            }
            _ => {
                for _ in 0..element.count {
                    lines
                        .next()
                        .ok_or_else(|| Error::parse(0, format!("truncated {} element", element.name)))?;
                }
            }
        }
    }
    if !have_vertices {
        return Err(Error::parse(0, "no vertex element"));
    }
    Ok(data)
}

fn column(element: &Element, name: &str) -> Option<usize> {
    element.properties.iter().position(|p| p.name() == name)
}

fn read_vertices<'a>(element: &Element, lines: &mut impl Iterator<Item = (usize, &'a str)>) -> Result<PointCloud> {
    if element.properties.iter().any(|p| matches!(p, Property::List(_))) {
        return Err(Error::parse(0, "list properties on vertices are not supported"));
    }
    let (Some(x), Some(y), Some(z)) = (column(element, "x"), column(element, "y"), column(element, "z")) else {
        return Err(Error::parse(0, "vertex element lacks x/y/z"));
    };
    let normal_cols = match (column(element, "nx"), column(element, "ny"), column(element, "nz")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };
    let width = element.properties.len();
    let mut points = Vec::with_capacity(element.count.min(MAX_PREALLOC));
    let mut normals = Vec::new();
    let mut values = vec![0.0f64; width];
    for _ in 0..element.count {
        let (n, line) = lines
            .next()
            .ok_or_else(|| Error::parse(0, "fewer vertex lines than declared"))?;
        let mut tok = line.split_whitespace();
        for v in values.iter_mut() {
            let t = tok
                .next()
                .ok_or_else(|| Error::parse(n, format!("expected {width} vertex values")))?;
            *v = t
                .parse::<f64>()
                .map_err(|_| Error::parse(n, format!("bad number {t:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(n, "non-finite vertex value"));
            }
        }
        if tok.next().is_some() {
            return Err(Error::parse(n, format!("expected {width} vertex values")));
        }
        points.push(Vec3::new(values[x], values[y], values[z]));
        if let Some((a, b, c)) = normal_cols {
            let nrm = Vec3::new(values[a], values[b], values[c]);
            let len = nrm.norm();
            if !(len > 0.0) {
                return Err(Error::parse(n, "zero-length normal"));
            }
            normals.push(nrm / len);
        }
    }
    Ok(PointCloud { points, normals })
}

fn read_faces<'a>(
    element: &Element,
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    n_vertices: usize,
) -> Result<Vec<[usize; 3]>> {
    let list_col = element
        .properties
        .iter()
        .position(|p| matches!(p, Property::List(name) if name == "vertex_indices" || name == "vertex_index"))
        .ok_or_else(|| Error::parse(0, "face element lacks vertex_indices"))?;
    let mut triangles = Vec::with_capacity(element.count.min(MAX_PREALLOC));
    for _ in 0..element.count {
        let (n, line) = lines
            .next()
            .ok_or_else(|| Error::parse(0, "fewer face lines than declared"))?;
        let mut tok = line.split_whitespace();
        let mut polygon: Vec<usize> = Vec::new();
        for (ci, prop) in element.properties.iter().enumerate() {
            let mut next = || tok.next().ok_or_else(|| Error::parse(n, "truncated face record"));
            match prop {
                Property::Scalar(_) => {
                    next()?;
                }
                Property::List(_) => {
                    let t = next()?;
                    let count: usize = t
                        .parse()
                        .map_err(|_| Error::parse(n, format!("bad list count {t:?}")))?;
                    for _ in 0..count {
                        let t = next()?;
                        let idx: usize = t
                            .parse()
                            .map_err(|_| Error::parse(n, format!("bad vertex index {t:?}")))?;
                        if ci == list_col {
                            if idx >= n_vertices {
                                return Err(Error::parse(
                                    n,
                                    format!("vertex index {idx} out of range ({n_vertices} vertices)"),
                                ));
                            }
                            polygon.push(idx);
                        }
                    }
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
    Ok(triangles)
}

/// Reads a point cloud, ignoring any faces.
pub fn parse_ply_cloud(text: &str) -> Result<PointCloud> {
    Ok(parse_ply(text)?.cloud)
}

pub fn parse_ply_mesh(text: &str) -> Result<TriangleMesh> {
    let data = parse_ply(text)?;
    if data.triangles.is_empty() {
        return Err(Error::invalid("PLY file has no faces"));
    }
    TriangleMesh::new(data.cloud.points, data.triangles)
}

/// Writes `x y z [nx ny nz]` vertices with round-trip exact decimal values.
pub fn write_ply_cloud(cloud: &PointCloud) -> String {
    let normals = cloud.has_normals();
    let mut out = String::with_capacity(64 * cloud.len() + 200);
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", cloud.len());
    out.push_str("property double x\nproperty double y\nproperty double z\n");
    if normals {
        out.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    }
    out.push_str("end_header\n");
    for (i, p) in cloud.points.iter().enumerate() {
        let _ = write!(out, "{} {} {}", p.x, p.y, p.z);
        if normals {
            let n = cloud.normals[i];
            let _ = write!(out, " {} {} {}", n.x, n.y, n.z);
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const CUBE_FACE: &str = "ply
format ascii 1.0
comment one quad
element vertex 4
property float x
property float y
property float z
element face 1
property list uchar int vertex_indices
end_header
0 0 0
1 0 0
1 1 0
0 1 0
4 0 1 2 3
";

    #[test]
    fn reads_quads_as_fan_triangles() {
        let mesh = parse_ply_mesh(CUBE_FACE).unwrap();
        assert_eq!(mesh.triangles, vec![[0, 1, 2], [0, 2, 3]]);
        assert!((mesh.surface_area() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cloud_round_trip_is_exact() {
        let cloud = PointCloud {
            points: vec![Vec3::new(0.1, -2.5e-7, 1.0 / 3.0), Vec3::new(1e10, 0.0, -0.0)],
            normals: vec![Vec3::z(), Vec3::new(0.6, 0.8, 0.0)],
        };
        let text = write_ply_cloud(&cloud);
        assert!(text.starts_with("ply\nformat ascii 1.0\nelement vertex 2\nproperty double x\n"));
        assert_eq!(parse_ply_cloud(&text).unwrap(), cloud);
    }

    #[test]
    fn extra_properties_are_skipped() {
        let text = "ply\nformat ascii 1.0\nelement vertex 1\nproperty uchar red\nproperty float z\nproperty float y\nproperty float x\nend_header\n255 3 2 1\n";
        let c = parse_ply_cloud(text).unwrap();
        assert_eq!(c.points, vec![Vec3::new(1.0, 2.0, 3.0)]);
        assert!(!c.has_normals());
    }

    #[test]
    fn errors_name_the_offending_line() {
        let bad = CUBE_FACE.replace("1 1 0", "1 one 0");
        let err = parse_ply(&bad).unwrap_err();
        assert!(err.to_string().starts_with("line 13:"), "{err}");

        let bad = CUBE_FACE.replace("4 0 1 2 3", "3 0 1 9");
        assert!(parse_ply(&bad).unwrap_err().to_string().contains("out of range"));

        assert!(parse_ply("ply\nformat binary_little_endian 1.0\nend_header\n").is_err());
        assert!(parse_ply("ply\nformat ascii 1.0\nelement vertex 3\nproperty double x\nproperty double y\nproperty double z\nend_header\n0 0 0\n").is_err());
        assert!(parse_ply("").is_err());
    }

    #[test]
    fn huge_declared_counts_fail_cleanly() {
        let text = "ply\nformat ascii 1.0\nelement vertex 18446744073709551615\nproperty double x\nproperty double y\nproperty double z\nend_header\n0 0 0\n";
        assert!(parse_ply(text).is_err());
    }
}
