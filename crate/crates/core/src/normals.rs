//! PCA normal estimation over k-nearest neighbourhoods.

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, Vec3};
use crate::index::SpatialIndex;

pub const DEFAULT_NORMAL_K: usize = 30;

/// How the sign of each estimated normal is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum Orientation {
    /// `n · (viewpoint − p) ≥ 0`. Scenes use the camera at the origin.
    TowardViewpoint(Point3),
    /// `n · (p − centroid) ≥ 0`. Used for object models.
    AwayFromCentroid,
    /// Agree in sign with a previous set of normals (same length as the cloud).
    MatchReference(Vec<Vec3>),
}

impl Default for Orientation {
    fn default() -> Self {
        Orientation::TowardViewpoint(Point3::zeros())
    }
}

#[derive(Debug, Clone)]
pub struct NormalEstimate {
    pub cloud: PointCloud,
    /// Points whose neighbourhood was fully coincident; their normal is `+z`.
    pub degenerate: Vec<usize>,
}

/// Estimates unit normals; see [`estimate_normals_flagged`].
pub fn estimate_normals(c: &PointCloud, k: usize, orientation: &Orientation) -> Result<PointCloud> {
    estimate_normals_flagged(c, k, orientation).map(|e| e.cloud)
}

/// Smallest-eigenvalue eigenvector of each point's k-neighbourhood covariance.
pub fn estimate_normals_flagged(c: &PointCloud, k: usize, orientation: &Orientation) -> Result<NormalEstimate> {
    if k < 3 {
        return Err(Error::invalid(format!("normal estimation needs k >= 3, got {k}")));
    }
    if c.len() < k {
        return Err(Error::KExceedsCloud { k, n: c.len() });
    }
    if let Orientation::MatchReference(r) = orientation {
        if r.len() != c.len() {
            return Err(Error::invalid("reference normals do not match cloud size"));
        }
    }
    let index = SpatialIndex::build(c)?;
    let centroid = c.centroid().expect("non-empty cloud");

    let results: Vec<(Vec3, bool)> = c
        .points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let nbrs = index.knn(p, k);
            let (normal, degenerate) = pca_normal(nbrs.iter().map(|n| &c.points[n.index]));
            let reference = match orientation {
                Orientation::TowardViewpoint(v) => v - p,
                Orientation::AwayFromCentroid => p - centroid,
                Orientation::MatchReference(r) => r[i],
            };
            let flip = !degenerate && normal.dot(&reference) < 0.0;
            let normal = if flip { -normal } else { normal };
            (normal, degenerate)
        })
        .collect();

    let degenerate = results
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.1.then_some(i))
        .collect();
    let normals = results.into_iter().map(|r| r.0).collect();
    Ok(NormalEstimate {
        cloud: PointCloud {
            points: c.points.clone(),
            normals,
        },
        degenerate,
    })
}

/// Returns the normal and whether the neighbourhood was degenerate.
pub(crate) fn pca_normal<'a>(points: impl Iterator<Item = &'a Point3> + Clone) -> (Vec3, bool) {
    let mut n = 0usize;
    let mut mean = Vec3::zeros();
    for p in points.clone() {
        mean += p;
        n += 1;
    }
    if n == 0 {
        return (Vec3::z(), true);
    }
    mean /= n as f64;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    let scale = 1.0 + mean.norm_squared();
    if cov.trace() <= 1e-24 * scale {
        return (Vec3::z(), true);
    }
    let eig = SymmetricEigen::new(cov);
    let imin = eig.eigenvalues.imin();
    let v: Vec3 = eig.eigenvectors.column(imin).into_owned();
    (v.normalize(), false)
}
