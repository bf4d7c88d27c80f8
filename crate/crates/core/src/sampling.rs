//! Object point clouds: even surface sampling, keypoints by farthest point
//! sampling, and Gaussian noise augmentation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{diameter, Point3, PointCloud, TriangleMesh, Vec3};
use crate::index::{dist_sq, SpatialIndex};
use crate::normals::{estimate_normals, Orientation, DEFAULT_NORMAL_K};
use crate::seeding::{derive_seed, rng};

/// Points per object model.
pub const MODEL_POINTS: usize = 2048;
pub const DEFAULT_KEYPOINTS: usize = 100;
/// Candidate oversampling factor for sample elimination.
const OVERSAMPLE: usize = 8;

/// Object surface cloud with its keypoint subset.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectModel {
    pub cloud: PointCloud,
    pub keypoint_indices: Vec<usize>,
    pub diameter: f64,
    pub seed: u64,
}

impl ObjectModel {
    /// Validates the keypoint subset and computes the diameter.
    pub fn new(cloud: PointCloud, keypoint_indices: Vec<usize>, seed: u64) -> Result<Self> {
        let d = diameter(&cloud);
        Self::with_diameter(cloud, keypoint_indices, d, seed)
    }

    pub fn with_diameter(cloud: PointCloud, keypoint_indices: Vec<usize>, diameter: f64, seed: u64) -> Result<Self> {
        cloud.validate()?;
        if cloud.is_empty() {
            return Err(Error::EmptyInput);
        }
        if !cloud.has_normals() {
            return Err(Error::invalid("object cloud needs normals"));
        }
        if keypoint_indices.is_empty() {
            return Err(Error::invalid("object model needs at least one keypoint"));
        }
        let mut seen = vec![false; cloud.len()];
        for &k in &keypoint_indices {
            if k >= cloud.len() {
                return Err(Error::invalid(format!("keypoint index {k} out of range")));
            }
            if std::mem::replace(&mut seen[k], true) {
                return Err(Error::invalid(format!("duplicate keypoint index {k}")));
            }
        }
        if !(diameter > 0.0 && diameter.is_finite()) {
            return Err(Error::degenerate("object diameter must be positive"));
        }
        Ok(Self {
            cloud,
            keypoint_indices,
            diameter,
            seed,
        })
    }

    pub fn keypoint_count(&self) -> usize {
        self.keypoint_indices.len()
    }

    pub fn keypoint(&self, j: usize) -> Point3 {
        self.cloud.points[self.keypoint_indices[j]]
    }

    pub fn keypoint_normal(&self, j: usize) -> Vec3 {
        self.cloud.normals[self.keypoint_indices[j]]
    }

    pub fn keypoints(&self) -> Vec<Point3> {
        self.keypoint_indices.iter().map(|&i| self.cloud.points[i]).collect()
    }

    /// Distance from the centroid to the farthest point.
    pub fn bounding_radius(&self) -> f64 {
        let c = self.cloud.centroid().expect("validated non-empty");
        self.cloud.points.iter().map(|p| (p - c).norm()).fold(0.0, f64::max)
    }

    pub fn sidecar(&self) -> ModelSidecar {
        ModelSidecar {
            keypoints: self.keypoint_indices.clone(),
            diameter: self.diameter,
            seed: self.seed,
        }
    }
}

/// JSON sidecar stored next to the model PLY.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSidecar {
    pub keypoints: Vec<usize>,
    pub diameter: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Standard deviation as a fraction of the object diameter.
    pub sigma_fraction: f64,
    pub seed: u64,
}

/// Area-weighted uniform surface samples with face normals.
fn uniform_surface_samples(mesh: &TriangleMesh, m: usize, seed: u64) -> (Vec<Point3>, Vec<Vec3>) {
    let mut cdf = Vec::with_capacity(mesh.triangles.len());
    let mut acc = 0.0;
    for t in 0..mesh.triangles.len() {
        acc += mesh.triangle_area(t);
        cdf.push(acc);
    }
    let total = acc;
    let mut rng = rng(seed);
    let mut points = Vec::with_capacity(m);
    let mut normals = Vec::with_capacity(m);
    for _ in 0..m {
        let u: f64 = rng.gen::<f64>() * total;
        let t = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        // Skip zero-area faces that partition_point can land on at the boundary.
        let t = (t..cdf.len()).find(|&i| mesh.triangle_area(i) > 0.0).unwrap_or(t);
        let [a, b, c] = mesh.corners(t);
        let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
        let s = r1.sqrt();
        points.push(a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2));
        normals.push(mesh.face_cross(t).normalize());
    }
    (points, normals)
}

/// Ideal hexagonal packing radius for `n` points on area `area`.
pub fn packing_radius(area: f64, n: usize) -> f64 {
    (area / (2.0 * 3f64.sqrt() * n as f64)).sqrt()
}

#[derive(PartialEq)]
struct HeapEntry {
    weight: f64,
    index: usize,
}

impl Eq for HeapEntry {}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.weight.total_cmp(&other.weight).then(self.index.cmp(&other.index))
    }
}

/// Evenly spread surface samples by weighted sample elimination.
///
/// `8n` uniform candidates are thinned to `n` by repeatedly removing the
/// candidate with the largest crowding weight `Σ (1 − d/2r)^8` over neighbours
/// within `2r`, `r` the hexagonal packing radius. Pairs closer than `r/2`
/// carry an extra penalty so they are always resolved first.
pub fn poisson_sample(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<PointCloud> {
    if n < 4 {
        return Err(Error::invalid(format!("poisson_sample needs n >= 4, got {n}")));
    }
    mesh.validate()?;
    let area = mesh.surface_area();
    let m = OVERSAMPLE * n;
    let (points, normals) = uniform_surface_samples(mesh, m, seed);

    let r_max = packing_radius(area, n);
    let reach = 2.0 * r_max;
    let enforced = 0.5 * r_max;
    let index = SpatialIndex::from_points(&points)?;
    let neighbours: Vec<Vec<(usize, f64)>> = points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            index
                .radius(p, reach)
                .into_iter()
                .filter(|nb| nb.index != i)
                .map(|nb| {
                    let d = nb.distance();
                    let mut w = (1.0 - d / reach).powi(8);
                    if d < enforced {
                        w += 2.0;
                    }
                    (nb.index, w)
                })
                .collect()
        })
        .collect();

    let mut weight: Vec<f64> = neighbours.iter().map(|v| v.iter().map(|x| x.1).sum()).collect();
    let mut alive = vec![true; m];
    let mut heap: BinaryHeap<HeapEntry> = weight
        .iter()
        .enumerate()
        .map(|(index, &weight)| HeapEntry { weight, index })
        .collect();
    let mut remaining = m;
    while remaining > n {
        let Some(top) = heap.pop() else { break };
        if !alive[top.index] || top.weight != weight[top.index] {
            continue;
        }
        alive[top.index] = false;
        remaining -= 1;
        for &(j, w) in &neighbours[top.index] {
            if alive[j] {
                weight[j] -= w;
                heap.push(HeapEntry {
                    weight: weight[j],
                    index: j,
                });
            }
        }
    }

    let keep: Vec<usize> = (0..m).filter(|&i| alive[i]).collect();
    Ok(PointCloud {
        points: keep.iter().map(|&i| points[i]).collect(),
        normals: keep.iter().map(|&i| normals[i]).collect(),
    })
}

/// Greedy farthest point sampling with the per-step coverage gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct FpsResult {
    pub indices: Vec<usize>,
    /// Distance of each pick to the previously chosen set (first is +∞).
    pub gaps: Vec<f64>,
}

pub fn farthest_point_sample(c: &PointCloud, k: usize, seed: u64) -> Result<Vec<usize>> {
    Ok(farthest_point_sample_with_gaps(c, k, seed)?.indices)
}

/// First index drawn uniformly from `seed`; each next one maximizes the
/// distance to the chosen set, ties going to the lower index.
pub fn farthest_point_sample_with_gaps(c: &PointCloud, k: usize, seed: u64) -> Result<FpsResult> {
    let n = c.len();
    if k == 0 {
        return Err(Error::invalid("farthest point sampling needs k >= 1"));
    }
    if k > n {
        return Err(Error::KExceedsCloud { k, n });
    }
    let first = rng(seed).gen_range(0..n);
    Ok(fps_from(&c.points, k, first))
}

pub(crate) fn fps_from(points: &[Point3], k: usize, first: usize) -> FpsResult {
    let mut min_d = vec![f64::INFINITY; points.len()];
    let mut indices = Vec::with_capacity(k);
    let mut gaps = Vec::with_capacity(k);
    let mut current = first;
    let mut current_gap = f64::INFINITY;
    for _ in 0..k {
        indices.push(current);
        gaps.push(current_gap);
        let p = points[current];
        let mut best = 0usize;
        let mut best_d = -1.0;
        for (i, (q, m)) in points.iter().zip(min_d.iter_mut()).enumerate() {
            let d = dist_sq(&p, q);
            if d < *m {
                *m = d;
            }
            if *m > best_d {
                best_d = *m;
                best = i;
            }
        }
        current = best;
        current_gap = best_d.max(0.0).sqrt();
    }
    FpsResult { indices, gaps }
}

/// Per-coordinate Gaussian noise with `σ = sigma_fraction · diameter`;
/// normals are re-estimated with their signs following the previous normals.
pub fn add_noise(c: &PointCloud, spec: &NoiseSpec, diameter: f64) -> Result<PointCloud> {
    if !(spec.sigma_fraction >= 0.0) {
        return Err(Error::invalid("sigma_fraction must be >= 0"));
    }
    if spec.sigma_fraction == 0.0 {
        return Ok(c.clone());
    }
    let sigma = spec.sigma_fraction * diameter;
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = rng(spec.seed);
    let points: Vec<Point3> = c
        .points
        .iter()
        .map(|p| {
            let dx = normal.sample(&mut rng);
            let dy = normal.sample(&mut rng);
            let dz = normal.sample(&mut rng);
            p + Vec3::new(dx, dy, dz)
        })
        .collect();
    let noisy = PointCloud::new(points);
    if c.len() < 3 {
        return Ok(noisy);
    }
    let orientation = if c.has_normals() {
        Orientation::MatchReference(c.normals.clone())
    } else {
        Orientation::default()
    };
    estimate_normals(&noisy, DEFAULT_NORMAL_K.min(c.len()), &orientation)
}

/// Flips every normal when most of them point toward the centroid. Fixes a
/// globally inverted winding without disturbing non-convex regions.
fn orient_outward(cloud: &mut PointCloud) {
    let Some(c) = cloud.centroid() else { return };
    let score: f64 = cloud
        .points
        .iter()
        .zip(&cloud.normals)
        .map(|(p, n)| n.dot(&(p - c)).signum())
        .sum();
    if score < 0.0 {
        for n in &mut cloud.normals {
            *n = -*n;
        }
    }
}

/// Surface sampling to [`MODEL_POINTS`], outward normals, diameter, keypoints.
pub fn build_object_model(mesh: &TriangleMesh, k_keypoints: usize, seed: u64) -> Result<ObjectModel> {
    if k_keypoints > MODEL_POINTS {
        return Err(Error::KExceedsCloud {
            k: k_keypoints,
            n: MODEL_POINTS,
        });
    }
    let mut cloud = poisson_sample(mesh, MODEL_POINTS, derive_seed(seed, &[0]))?;
    orient_outward(&mut cloud);
    let d = diameter(&cloud);
    let keypoints = farthest_point_sample(&cloud, k_keypoints, derive_seed(seed, &[1]))?;
    ObjectModel::with_diameter(cloud, keypoints, d, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    fn unit_square() -> TriangleMesh {
        TriangleMesh::new(
            vec![Vec3::zeros(), Vec3::x(), Vec3::new(1.0, 1.0, 0.0), Vec3::y()],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    fn min_pairwise(points: &[Point3]) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                best = best.min((points[i] - points[j]).norm());
            }
        }
        best
    }

    #[test]
    fn square_samples_respect_packing_bound() {
        let bound = 0.5 * (1.0 / (2.0 * 3f64.sqrt() * 100.0)).sqrt();
        assert!((bound - 0.026_8).abs() < 1e-4);
        for seed in 0..5 {
            let c = poisson_sample(&unit_square(), 100, seed).unwrap();
            assert_eq!(c.len(), 100);
            assert!(min_pairwise(&c.points) >= bound);
            assert!(c.points.iter().all(|p| p.z.abs() < 1e-12));
            assert!(c.normals.iter().all(|n| (n - Vec3::z()).norm() < 1e-12));
        }
    }

    #[test]
    fn samples_lie_on_the_surface() {
        let mesh = shapes::l_bracket();
        let c = poisson_sample(&mesh, 500, 3).unwrap();
        for p in &c.points {
            let on_some_plane = (0..mesh.triangles.len()).any(|t| {
                let n = mesh.face_cross(t).normalize();
                (p - mesh.corners(t)[0]).dot(&n).abs() < 1e-9
            });
            assert!(on_some_plane);
        }
    }

    #[test]
    fn sphere_samples_are_uniform_by_octant() {
        let c = poisson_sample(&shapes::sphere(), 2048, 11).unwrap();
        let mut counts = [0usize; 8];
        for p in &c.points {
            let o = usize::from(p.x > 0.0) | (usize::from(p.y > 0.0) << 1) | (usize::from(p.z > 0.0) << 2);
            counts[o] += 1;
        }
        for &k in &counts {
            assert!((k as f64 - 256.0).abs() <= 0.2 * 256.0, "{counts:?}");
        }
    }

    #[test]
    fn poisson_rejects_tiny_n() {
        assert!(poisson_sample(&unit_square(), 3, 0).is_err());
    }

    #[test]
    fn fps_picks_the_far_endpoint() {
        let c = PointCloud::new(vec![Vec3::new(0.5, 0.0, 0.0), Vec3::zeros(), Vec3::x()]);
        let r = fps_from(&c.points, 2, 1);
        assert_eq!(r.indices, vec![1, 2]);
    }

    #[test]
    fn fps_full_is_permutation() {
        let c = poisson_sample(&unit_square(), 50, 1).unwrap();
        let mut idx = farthest_point_sample(&c, 50, 4).unwrap();
        idx.sort_unstable();
        assert_eq!(idx, (0..50).collect::<Vec<_>>());
        assert!(matches!(
            farthest_point_sample(&c, 51, 4),
            Err(Error::KExceedsCloud { k: 51, n: 50 })
        ));
    }

    #[test]
    fn fps_gaps_are_monotone_and_cover_the_cloud() {
        let model = build_object_model(&shapes::cylinder(), 64, 8).unwrap();
        let r = farthest_point_sample_with_gaps(&model.cloud, 64, 2).unwrap();
        assert!(r.gaps.windows(2).all(|w| w[1] <= w[0]));
        let radius = *r.gaps.last().unwrap();
        for p in &model.cloud.points {
            let nearest = r
                .indices
                .iter()
                .map(|&i| (model.cloud.points[i] - p).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(nearest <= radius + 1e-12);
        }
    }

    #[test]
    fn noise_zero_is_identity_and_seeded() {
        let model = build_object_model(&shapes::cube(), 10, 1).unwrap();
        let spec = NoiseSpec {
            sigma_fraction: 0.0,
            seed: 3,
        };
        assert_eq!(add_noise(&model.cloud, &spec, model.diameter).unwrap(), model.cloud);
        let spec = NoiseSpec {
            sigma_fraction: 0.01,
            seed: 3,
        };
        let a = add_noise(&model.cloud, &spec, model.diameter).unwrap();
        let b = add_noise(&model.cloud, &spec, model.diameter).unwrap();
        assert_eq!(a, b);
        assert!(a.validate().is_ok());
    }

    #[test]
    fn noise_has_nominal_standard_deviation() {
        let model = build_object_model(&shapes::cube(), 10, 1).unwrap();
        let spec = NoiseSpec {
            sigma_fraction: 0.01,
            seed: 17,
        };
        let noisy = add_noise(&model.cloud, &spec, model.diameter).unwrap();
        let nominal = 0.01 * model.diameter;
        for axis in 0..3 {
            let d: Vec<f64> = noisy
                .points
                .iter()
                .zip(&model.cloud.points)
                .map(|(a, b)| a[axis] - b[axis])
                .collect();
            let mean = d.iter().sum::<f64>() / d.len() as f64;
            let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64;
            assert!((var.sqrt() - nominal).abs() < 0.1 * nominal);
        }
        let changed = (diameter(&noisy) - model.diameter).abs();
        assert!(changed < 5.0 * 0.01 * model.diameter);
    }

    #[test]
    fn cube_model_has_expected_size_and_is_reproducible() {
        let mesh = shapes::cube();
        let edge = 0.06;
        let model = build_object_model(&mesh, 100, 5).unwrap();
        assert_eq!(model.cloud.len(), MODEL_POINTS);
        assert!((model.diameter - 3f64.sqrt() * edge).abs() < 0.02 * 3f64.sqrt() * edge);
        let mut kp = model.keypoint_indices.clone();
        kp.sort_unstable();
        kp.dedup();
        assert_eq!(kp.len(), 100);
        let again = build_object_model(&mesh, 100, 5).unwrap();
        assert_eq!(again.keypoint_indices, model.keypoint_indices);
        // Outward normals on a convex solid.
        let c = model.cloud.centroid().unwrap();
        assert!(model
            .cloud
            .points
            .iter()
            .zip(&model.cloud.normals)
            .all(|(p, n)| n.dot(&(p - c)) > 0.0));
        assert!(matches!(
            build_object_model(&mesh, 3000, 5),
            Err(Error::KExceedsCloud { .. })
        ));
    }

    #[test]
    fn model_validation() {
        let cloud = PointCloud::with_normals(vec![Vec3::zeros(), Vec3::x()], vec![Vec3::z(), Vec3::z()]).unwrap();
        assert!(ObjectModel::new(cloud.clone(), vec![0, 0], 0).is_err());
        assert!(ObjectModel::new(cloud.clone(), vec![2], 0).is_err());
        assert!(ObjectModel::new(cloud.clone(), vec![1, 0], 0).is_ok());
        assert!(ObjectModel::new(PointCloud::new(cloud.points.clone()), vec![0], 0).is_err());
    }
}
