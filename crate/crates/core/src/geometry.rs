//! Geometric primitives shared by every stage of the pipeline.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Positions (meters) and directions share one representation.
pub type Vec3 = Vector3<f64>;
pub type Point3 = Vector3<f64>;

/// Tolerance on the unit length of normals.
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// A proper rigid motion `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self::new(Matrix3::identity(), translation)
    }

    /// Rotation of `angle` radians about `axis` (normalized internally).
    pub fn from_axis_angle(axis: &Vec3, angle: f64, translation: Vec3) -> Self {
        let rotation = Rotation3::from_scaled_axis(axis.normalize() * angle);
        Self::new(*rotation.matrix(), translation)
    }

    /// Uniformly distributed rotation (Haar measure) with the given translation.
    pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R, translation: Vec3) -> Self {
        // Shoemake's subgroup algorithm.
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
        let u3: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
        let a = (1.0 - u1).sqrt();
        let b = u1.sqrt();
        let q = nalgebra::Quaternion::new(b * u3.cos(), a * u2.sin(), a * u2.cos(), b * u3.sin());
        let rotation = UnitQuaternion::from_quaternion(q).to_rotation_matrix();
        Self::new(*rotation.matrix(), translation)
    }

    #[inline]
    pub fn apply_point(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Geodesic angle (radians) between the two rotations.
    pub fn rotation_angle_to(&self, other: &RigidTransform) -> f64 {
        let delta = self.rotation.transpose() * other.rotation;
        // acos is ill-conditioned near 0; use the axis-angle norm instead.
        let skew = Vec3::new(
            delta[(2, 1)] - delta[(1, 2)],
            delta[(0, 2)] - delta[(2, 0)],
            delta[(1, 0)] - delta[(0, 1)],
        );
        let sin = 0.5 * skew.norm();
        let cos = 0.5 * (delta.trace() - 1.0);
        sin.atan2(cos)
    }

    /// `‖RᵀR − I‖∞ < tol` and `det R > 0`.
    pub fn is_valid(&self, tol: f64) -> bool {
        let err = self.rotation.transpose() * self.rotation - Matrix3::identity();
        err.iter().all(|e| e.abs() < tol)
            && self.rotation.determinant() > 0.0
            && self.translation.iter().all(|t| t.is_finite())
    }

    /// Row-major rotation as nested arrays.
    pub fn rotation_rows(&self) -> [[f64; 3]; 3] {
        let r = &self.rotation;
        [
            [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
            [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
            [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
        ]
    }

    pub fn from_rows(rows: [[f64; 3]; 3], t: [f64; 3]) -> Self {
        let rotation = Matrix3::from_fn(|i, j| rows[i][j]);
        Self::new(rotation, Vec3::new(t[0], t[1], t[2]))
    }
}

/// JSON form: `{"R": [[..],[..],[..]], "t": [x, y, z]}`.
#[derive(Serialize, Deserialize)]
struct TransformRepr {
    #[serde(rename = "R")]
    r: [[f64; 3]; 3],
    t: [f64; 3],
}

impl Serialize for RigidTransform {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        TransformRepr {
            r: self.rotation_rows(),
            t: [self.translation.x, self.translation.y, self.translation.z],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = TransformRepr::deserialize(d)?;
        let t = RigidTransform::from_rows(repr.r, repr.t);
        if !t.is_valid(1e-6) {
            return Err(serde::de::Error::custom(
                "rotation is not orthonormal with determinant +1",
            ));
        }
        Ok(t)
    }
}

/// Positions plus optional unit normals.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub normals: Vec<Vec3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        Self {
            points,
            normals: Vec::new(),
        }
    }

    pub fn with_normals(points: Vec<Point3>, normals: Vec<Vec3>) -> Result<Self> {
        let cloud = Self { points, normals };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn has_normals(&self) -> bool {
        !self.normals.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid("non-finite point coordinate"));
        }
        if self.has_normals() {
            if self.normals.len() != self.points.len() {
                return Err(Error::invalid(format!(
                    "{} normals for {} points",
                    self.normals.len(),
                    self.points.len()
                )));
            }
            if let Some(i) = self
                .normals
                .iter()
                .position(|n| (n.norm() - 1.0).abs() > UNIT_TOLERANCE)
            {
                return Err(Error::invalid(format!("normal {i} is not unit length")));
            }
        }
        Ok(())
    }

    /// Points mapped `p ↦ Rp + t`, normals `n ↦ Rn`.
    pub fn transformed(&self, t: &RigidTransform) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| t.apply_point(p)).collect(),
            normals: self.normals.iter().map(|n| t.apply_vector(n)).collect(),
        }
    }

    pub fn centroid(&self) -> Option<Point3> {
        if self.is_empty() {
            return None;
        }
        let sum = self.points.iter().fold(Vec3::zeros(), |acc, p| acc + p);
        Some(sum / self.len() as f64)
    }

    /// Subset in the order of `indices`.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: if self.has_normals() {
                indices.iter().map(|&i| self.normals[i]).collect()
            } else {
                Vec::new()
            },
        }
    }
}

/// Convenience wrapper over [`PointCloud::transformed`].
pub fn apply_transform(t: &RigidTransform, c: &PointCloud) -> PointCloud {
    c.transformed(t)
}

/// Indexed triangle soup.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = Self { vertices, triangles };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.vertices.len();
        if let Some(t) = self.triangles.iter().find(|t| t.iter().any(|&i| i >= n)) {
            return Err(Error::invalid(format!(
                "triangle {t:?} references a vertex out of range ({n} vertices)"
            )));
        }
        if self.vertices.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid("non-finite vertex coordinate"));
        }
        if !(self.surface_area() > 0.0) {
            return Err(Error::degenerate("mesh has zero surface area"));
        }
        Ok(())
    }

    pub fn corners(&self, t: usize) -> [Point3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Unnormalized normal; its length is twice the triangle area.
    pub fn face_cross(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.corners(t);
        (b - a).cross(&(c - a))
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        0.5 * self.face_cross(t).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }
}

/// Largest number of points for which the diameter is computed exactly.
pub const EXACT_DIAMETER_LIMIT: usize = 4096;

/// Maximum pairwise distance.
///
/// Exact for clouds up to [`EXACT_DIAMETER_LIMIT`] points. Larger clouds use
/// the extreme points along a dense set of directions, which bounds the
/// relative error by `1 − cos(θ)` for the covering angle θ (< 0.5% here).
pub fn diameter(c: &PointCloud) -> f64 {
    if c.len() < 2 {
        return 0.0;
    }
    if c.len() <= EXACT_DIAMETER_LIMIT {
        return max_pairwise_distance(&c.points);
    }
    let dirs = fibonacci_hemisphere(1024);
    let mut candidates: Vec<usize> = dirs
        .par_iter()
        .flat_map_iter(|d| {
            let (mut lo, mut hi) = (0usize, 0usize);
            let (mut lo_v, mut hi_v) = (f64::INFINITY, f64::NEG_INFINITY);
            for (i, p) in c.points.iter().enumerate() {
                let v = p.dot(d);
                if v < lo_v {
                    lo_v = v;
                    lo = i;
                }
                if v > hi_v {
                    hi_v = v;
                    hi = i;
                }
            }
            [lo, hi]
        })
        .collect();
    candidates.sort_unstable();
    candidates.dedup();
    let pts: Vec<Point3> = candidates.iter().map(|&i| c.points[i]).collect();
    max_pairwise_distance(&pts)
}

fn max_pairwise_distance(points: &[Point3]) -> f64 {
    let best_sq = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            points[i + 1..]
                .iter()
                .map(|q| (p - q).norm_squared())
                .fold(0.0f64, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    best_sq.sqrt()
}

/// Roughly uniform unit directions on the upper hemisphere.
pub(crate) fn fibonacci_hemisphere(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// Fibonacci lattice on the full unit sphere.
pub fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}
