//! Procedural test meshes, in meters, centered on their bounding box.
//! All faces wind counter-clockwise seen from outside.

use std::f64::consts::TAU;

use crate::geometry::{Point3, TriangleMesh, Vec3};

pub const NAMES: &[&str] = &["cube", "cylinder", "l_bracket", "screw", "sphere"];

pub fn by_name(name: &str) -> Option<TriangleMesh> {
    match name {
        "cube" => Some(cube()),
        "cylinder" => Some(cylinder()),
        "l_bracket" => Some(l_bracket()),
        "screw" => Some(screw()),
        "sphere" => Some(sphere()),
        _ => None,
    }
}

/// Extrudes a counter-clockwise polygon in the xy plane along +z.
fn extrude(polygon: &[(f64, f64)], depth: f64) -> TriangleMesh {
    let n = polygon.len();
    let mut vertices: Vec<Point3> = polygon.iter().map(|&(x, y)| Vec3::new(x, y, 0.0)).collect();
    vertices.extend(polygon.iter().map(|&(x, y)| Vec3::new(x, y, depth)));
    let mut triangles = Vec::new();
    for k in 0..n {
        let k1 = (k + 1) % n;
        triangles.push([k, k1, n + k1]);
        triangles.push([k, n + k1, n + k]);
    }
    // Fan caps from vertex 0; callers pass polygons star-shaped about it.
    for k in 1..n - 1 {
        triangles.push([n, n + k, n + k + 1]);
        triangles.push([0, k + 1, k]);
    }
    centered(vertices, triangles)
}

fn centered(mut vertices: Vec<Point3>, triangles: Vec<[usize; 3]>) -> TriangleMesh {
    let lo = vertices.iter().fold(Vec3::repeat(f64::INFINITY), |a, p| a.inf(p));
    let hi = vertices.iter().fold(Vec3::repeat(f64::NEG_INFINITY), |a, p| a.sup(p));
    let mid = (lo + hi) * 0.5;
    for v in &mut vertices {
        *v -= mid;
    }
    TriangleMesh::new(vertices, triangles).expect("procedural mesh is valid")
}

/// 6 cm cube.
pub fn cube() -> TriangleMesh {
    let e = 0.06;
    extrude(&[(0.0, 0.0), (e, 0.0), (e, e), (0.0, e)], e)
}

/// Radius 2.5 cm, height 8 cm.
pub fn cylinder() -> TriangleMesh {
    let r = 0.025;
    let polygon: Vec<(f64, f64)> = (0..64)
        .map(|i| {
            let a = TAU * i as f64 / 64.0;
            (r * a.cos(), r * a.sin())
        })
        .collect();
    extrude(&polygon, 0.08)
}

/// L-shaped bracket: 8 cm × 6 cm arms, 1.5 cm thick, 4 cm wide.
pub fn l_bracket() -> TriangleMesh {
    let (a, b, t) = (0.08, 0.06, 0.015);
    extrude(&[(0.0, 0.0), (a, 0.0), (a, t), (t, t), (t, b), (0.0, b)], 0.04)
}

/// UV sphere of radius 3 cm.
pub fn sphere() -> TriangleMesh {
    let r = 0.03;
    let (n_lon, n_lat) = (48usize, 24usize);
    let mut vertices = vec![Vec3::new(0.0, 0.0, -r)];
    for j in 1..n_lat {
        let phi = std::f64::consts::PI * j as f64 / n_lat as f64;
        let (z, ring) = (-r * phi.cos(), r * phi.sin());
        for i in 0..n_lon {
            let a = TAU * i as f64 / n_lon as f64;
            vertices.push(Vec3::new(ring * a.cos(), ring * a.sin(), z));
        }
    }
    vertices.push(Vec3::new(0.0, 0.0, r));
    let north = vertices.len() - 1;
    let at = |i: usize, j: usize| 1 + (j - 1) * n_lon + (i % n_lon);
    let mut triangles = Vec::new();
    for i in 0..n_lon {
        triangles.push([0, at(i + 1, 1), at(i, 1)]);
        for j in 1..n_lat - 1 {
            triangles.push([at(i, j), at(i + 1, j), at(i + 1, j + 1)]);
            triangles.push([at(i, j), at(i + 1, j + 1), at(i, j + 1)]);
        }
        triangles.push([north, at(i, n_lat - 1), at(i + 1, n_lat - 1)]);
    }
    centered(vertices, triangles)
}

/// Threaded shaft with a cylindrical head. The thread is a helical ridge, so
/// the shaft alone has only an approximate screw symmetry and the head breaks it.
pub fn screw() -> TriangleMesh {
    let (r0, amp, pitch, len) = (0.008, 0.003, 0.012, 0.07);
    let (rh, hh) = (0.015, 0.014);
    let (n_t, n_z) = (48usize, 84usize);
    let radius = |a: f64, z: f64| r0 + amp * 0.5 * (1.0 + (a - TAU * z / pitch).sin());

    let mut vertices = Vec::new();
    for j in 0..=n_z {
        let z = len * j as f64 / n_z as f64;
        for i in 0..n_t {
            let a = TAU * i as f64 / n_t as f64;
            let r = radius(a, z);
            vertices.push(Vec3::new(r * a.cos(), r * a.sin(), z));
        }
    }
    let shaft = |i: usize, j: usize| j * n_t + (i % n_t);
    let mut triangles = Vec::new();
    for j in 0..n_z {
        for i in 0..n_t {
            triangles.push([shaft(i, j), shaft(i + 1, j), shaft(i + 1, j + 1)]);
            triangles.push([shaft(i, j), shaft(i + 1, j + 1), shaft(i, j + 1)]);
        }
    }
    let bottom = vertices.len();
    vertices.push(Vec3::zeros());
    for i in 0..n_t {
        triangles.push([bottom, shaft(i + 1, 0), shaft(i, 0)]);
    }

    // Head: underside annulus, side wall, top cap.
    let ring = |z: f64| -> Vec<Point3> {
        (0..n_t)
            .map(|i| {
                let a = TAU * i as f64 / n_t as f64;
                Vec3::new(rh * a.cos(), rh * a.sin(), z)
            })
            .collect()
    };
    let lower = vertices.len();
    vertices.extend(ring(len));
    let upper = vertices.len();
    vertices.extend(ring(len + hh));
    let top = vertices.len();
    vertices.push(Vec3::new(0.0, 0.0, len + hh));
    for i in 0..n_t {
        let i1 = (i + 1) % n_t;
        let (inner, inner1) = (shaft(i, n_z), shaft(i1, n_z));
        triangles.push([inner, lower + i1, lower + i]);
        triangles.push([inner, inner1, lower + i1]);
        triangles.push([lower + i, lower + i1, upper + i1]);
        triangles.push([lower + i, upper + i1, upper + i]);
        triangles.push([top, upper + i, upper + i1]);
    }
    centered(vertices, triangles)
}
