//! Fast Point Feature Histograms and feature-space matching, the classical
//! baseline for correspondence generation.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::correspondence::CorrespondenceSet;
use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, Vec3};
use crate::index::{mean_spacing, SpatialIndex};

pub const BINS_PER_FEATURE: usize = 11;
pub const FPFH_LEN: usize = 3 * BINS_PER_FEATURE;
/// Each feature block sums to this value.
pub const BLOCK_TOTAL: f64 = 100.0;
/// Default support radius in units of mean nearest-neighbour spacing.
pub const RADIUS_SPACING_FACTOR: f64 = 5.0;

/// 33 bins: α, φ, θ blocks of 11 bins each.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpfhDescriptor(pub [f64; FPFH_LEN]);

impl Default for FpfhDescriptor {
    fn default() -> Self {
        FpfhDescriptor([0.0; FPFH_LEN])
    }
}

impl FpfhDescriptor {
    pub fn block(&self, feature: usize) -> &[f64] {
        &self.0[feature * BINS_PER_FEATURE..(feature + 1) * BINS_PER_FEATURE]
    }

    pub fn l1(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).abs()).sum()
    }

    #[inline]
    pub fn l2_sq(&self, other: &Self) -> f64 {
        let mut s = 0.0;
        for i in 0..FPFH_LEN {
            let d = self.0[i] - other.0[i];
            s += d * d;
        }
        s
    }

    fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

#[derive(Debug, Clone)]
pub struct FeatureCloud {
    pub cloud: PointCloud,
    pub descriptors: Vec<FpfhDescriptor>,
    /// Points without any neighbour in the support radius (zero histogram).
    pub isolated: Vec<usize>,
}

impl FeatureCloud {
    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    /// One row of 33 bins per point.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.len() * FPFH_LEN * 8);
        for d in &self.descriptors {
            for (i, v) in d.0.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Darboux-frame angles `(α, φ, θ)` of an oriented point pair, or `None` when
/// the pair is coincident or its frame is undefined.
pub fn pair_features(ps: &Point3, ns: &Vec3, pt: &Point3, nt: &Vec3) -> Option<[f64; 3]> {
    let dp = pt - ps;
    let d = dp.norm();
    if d == 0.0 {
        return None;
    }
    let e = dp / d;
    // The source is the point whose normal makes the smaller angle with the line.
    let (ns, nt, e) = if ns.dot(&e).abs() >= nt.dot(&e).abs() {
        (ns, nt, e)
    } else {
        (nt, ns, -e)
    };
    let u = *ns;
    let v = u.cross(&e);
    let v_norm = v.norm();
    if v_norm == 0.0 {
        return None;
    }
    let v = v / v_norm;
    let w = u.cross(&v);
    let alpha = v.dot(nt);
    let phi = u.dot(&e);
    let theta = w.dot(nt).atan2(u.dot(nt));
    Some([alpha, phi, theta])
}

#[inline]
fn bin(value: f64, lo: f64, hi: f64) -> usize {
    let t = ((value - lo) / (hi - lo) * BINS_PER_FEATURE as f64).floor();
    (t.max(0.0) as usize).min(BINS_PER_FEATURE - 1)
}

fn spfh(cloud: &PointCloud, i: usize, neighbours: &[usize]) -> FpfhDescriptor {
    let mut hist = FpfhDescriptor::default();
    let (p, n) = (&cloud.points[i], &cloud.normals[i]);
    let feats: Vec<[f64; 3]> = neighbours
        .iter()
        .filter(|&&j| j != i)
        .filter_map(|&j| pair_features(p, n, &cloud.points[j], &cloud.normals[j]))
        .collect();
    if feats.is_empty() {
        return hist;
    }
    let inc = BLOCK_TOTAL / feats.len() as f64;
    for [alpha, phi, theta] in feats {
        hist.0[bin(alpha, -1.0, 1.0)] += inc;
        hist.0[BINS_PER_FEATURE + bin(phi, -1.0, 1.0)] += inc;
        hist.0[2 * BINS_PER_FEATURE + bin(theta, -std::f64::consts::PI, std::f64::consts::PI)] += inc;
    }
    hist
}

fn normalize_blocks(h: &mut FpfhDescriptor) {
    for b in 0..3 {
        let block = &mut h.0[b * BINS_PER_FEATURE..(b + 1) * BINS_PER_FEATURE];
        let sum: f64 = block.iter().sum();
        if sum > 0.0 {
            for v in block.iter_mut() {
                *v *= BLOCK_TOTAL / sum;
            }
        }
    }
}

/// `FPFH(p) = SPFH(p) + (1/k) Σ SPFH(q) / ‖p − q‖` over the radius
/// neighbours, then each block rescaled to sum to 100.
pub fn compute_fpfh(c: &PointCloud, radius: f64) -> Result<FeatureCloud> {
    if !(radius > 0.0) {
        return Err(Error::invalid("FPFH radius must be positive"));
    }
    if c.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !c.has_normals() {
        return Err(Error::invalid("FPFH needs normals"));
    }
    c.validate()?;
    let index = SpatialIndex::build(c)?;
    let neighbours: Vec<Vec<(usize, f64)>> = c
        .points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            index
                .radius(p, radius)
                .into_iter()
                .filter(|n| n.index != i && n.dist_sq > 0.0)
                .map(|n| (n.index, n.distance()))
                .collect()
        })
        .collect();
    let spfhs: Vec<FpfhDescriptor> = (0..c.len())
        .into_par_iter()
        .map(|i| {
            let ids: Vec<usize> = neighbours[i].iter().map(|n| n.0).collect();
            spfh(c, i, &ids)
        })
        .collect();
    let descriptors: Vec<FpfhDescriptor> = (0..c.len())
        .into_par_iter()
        .map(|i| {
            let nb = &neighbours[i];
            let mut h = spfhs[i];
            if nb.is_empty() {
                return h;
            }
            let k = nb.len() as f64;
            for &(j, d) in nb {
                let w = 1.0 / (k * d);
                for (a, b) in h.0.iter_mut().zip(spfhs[j].0.iter()) {
                    *a += w * b;
                }
            }
            normalize_blocks(&mut h);
            h
        })
        .collect();
    let isolated = descriptors
        .iter()
        .enumerate()
        .filter_map(|(i, d)| d.is_zero().then_some(i))
        .collect();
    Ok(FeatureCloud {
        cloud: c.clone(),
        descriptors,
        isolated,
    })
}

/// Support radius used for a given object cloud.
pub fn default_radius(object: &PointCloud) -> Result<f64> {
    Ok(RADIUS_SPACING_FACTOR * mean_spacing(object)?)
}

fn nearest_descriptor(query: &FpfhDescriptor, pool: &[FpfhDescriptor], skip: &[bool]) -> Option<usize> {
    let mut best = None;
    let mut best_d = f64::INFINITY;
    for (j, d) in pool.iter().enumerate() {
        if skip[j] {
            continue;
        }
        let dist = query.l2_sq(d);
        if dist < best_d {
            best_d = dist;
            best = Some(j);
        }
    }
    best
}

fn isolated_mask(fc: &FeatureCloud) -> Vec<bool> {
    let mut m = vec![false; fc.len()];
    for &i in &fc.isolated {
        m[i] = true;
    }
    m
}

/// Nearest object descriptor (L2) for each scene point; with `mutual`, only
/// pairs that are each other's nearest neighbour survive. Points with empty
/// histograms never match. Ties go to the lower index.
pub fn match_features(scene: &FeatureCloud, object: &FeatureCloud, mutual: bool) -> Result<CorrespondenceSet> {
    if scene.is_empty() || object.is_empty() {
        return Err(Error::EmptyInput);
    }
    let scene_skip = isolated_mask(scene);
    let object_skip = isolated_mask(object);
    let forward: Vec<Option<usize>> = scene
        .descriptors
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            if scene_skip[i] {
                None
            } else {
                nearest_descriptor(d, &object.descriptors, &object_skip)
            }
        })
        .collect();
    let backward: Option<Vec<Option<usize>>> = mutual.then(|| {
        object
            .descriptors
            .par_iter()
            .enumerate()
            .map(|(j, d)| {
                if object_skip[j] {
                    None
                } else {
                    nearest_descriptor(d, &scene.descriptors, &scene_skip)
                }
            })
            .collect()
    });
    let mut set = CorrespondenceSet::default();
    for (i, f) in forward.into_iter().enumerate() {
        let Some(j) = f else { continue };
        if let Some(back) = &backward {
            if back[j] != Some(i) {
                continue;
            }
        }
        set.push(i, j, 1.0);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{fibonacci_sphere, RigidTransform};
    use crate::sampling::build_object_model;
    use crate::shapes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plane(n_side: usize) -> PointCloud {
        let mut pts = Vec::new();
        for i in 0..n_side {
            for j in 0..n_side {
                pts.push(Vec3::new(i as f64 * 0.01, j as f64 * 0.01, 0.0));
            }
        }
        let normals = vec![Vec3::z(); pts.len()];
        PointCloud::with_normals(pts, normals).unwrap()
    }

    #[test]
    fn plane_concentrates_in_central_bins() {
        let c = plane(20);
        let fc = compute_fpfh(&c, 0.035).unwrap();
        // Analytic values on a plane: α = v·n = 0, φ = n·e = 0, θ = atan2(0, 1) = 0,
        // each falling into the middle bin (index 5 of 11).
        let centre = 10 * 20 + 10;
        let d = &fc.descriptors[centre];
        for b in 0..3 {
            assert!((d.block(b)[5] - 100.0).abs() < 1e-9, "{:?}", d.block(b));
        }
    }

    #[test]
    fn blocks_sum_to_one_hundred() {
        let model = build_object_model(&shapes::l_bracket(), 10, 3).unwrap();
        let r = default_radius(&model.cloud).unwrap();
        let fc = compute_fpfh(&model.cloud, r).unwrap();
        assert!(fc.isolated.is_empty());
        for d in &fc.descriptors {
            for b in 0..3 {
                assert!((d.block(b).iter().sum::<f64>() - 100.0).abs() < 1e-6);
                assert!(d.block(b).iter().all(|&v| v >= 0.0));
            }
        }
    }

    #[test]
    fn isolated_points_get_zero_histograms() {
        let mut c = plane(5);
        c.points.push(Vec3::new(10.0, 10.0, 10.0));
        c.normals.push(Vec3::z());
        let fc = compute_fpfh(&c, 0.015).unwrap();
        assert_eq!(fc.isolated, vec![25]);
        assert!(fc.descriptors[25].is_zero());
        assert!(compute_fpfh(&PointCloud::new(vec![Vec3::zeros()]), 1.0).is_err());
        assert!(compute_fpfh(&c, 0.0).is_err());
    }

    #[test]
    fn rigid_motion_leaves_descriptors_unchanged() {
        let model = build_object_model(&shapes::screw(), 10, 9).unwrap();
        let r = default_radius(&model.cloud).unwrap();
        let base = compute_fpfh(&model.cloud, r).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = RigidTransform::random_rotation(&mut rng, Vec3::new(0.3, 0.1, -0.2));
        let moved = compute_fpfh(&model.cloud.transformed(&t), r).unwrap();
        for (a, b) in base.descriptors.iter().zip(&moved.descriptors) {
            for (x, y) in a.0.iter().zip(&b.0) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn sphere_and_plane_are_distinguishable() {
        let sphere_pts = fibonacci_sphere(2000);
        let sphere = PointCloud::with_normals(sphere_pts.clone(), sphere_pts).unwrap();
        let s = compute_fpfh(&sphere, 0.3).unwrap();
        let p = compute_fpfh(&plane(30), 0.035).unwrap();
        let dist = s.descriptors[1000].l1(&p.descriptors[15 * 30 + 15]);
        assert!(dist > 5.0, "{dist}");
    }

    #[test]
    fn self_matching_is_identity() {
        let model = build_object_model(&shapes::l_bracket(), 10, 2).unwrap();
        let r = default_radius(&model.cloud).unwrap();
        let fc = compute_fpfh(&model.cloud, r).unwrap();
        let set = match_features(&fc, &fc, false).unwrap();
        for c in &set.pairs {
            let unique = fc
                .descriptors
                .iter()
                .enumerate()
                .all(|(j, d)| j == c.scene || d.l2_sq(&fc.descriptors[c.scene]) > 0.0);
            if unique {
                assert_eq!(c.scene, c.target);
            }
        }
    }

    #[test]
    fn mutual_matching_is_symmetric() {
        let a = build_object_model(&shapes::cube(), 10, 1).unwrap();
        let b = build_object_model(&shapes::cube(), 10, 2).unwrap();
        let r = default_radius(&a.cloud).unwrap();
        let fa = compute_fpfh(&a.cloud, r).unwrap();
        let fb = compute_fpfh(&b.cloud, r).unwrap();
        let ab = match_features(&fa, &fb, true).unwrap().index_pairs();
        let mut ba: Vec<(usize, usize)> = match_features(&fb, &fa, true)
            .unwrap()
            .index_pairs()
            .into_iter()
            .map(|(x, y)| (y, x))
            .collect();
        ba.sort_unstable();
        assert_eq!(ab, ba);
    }

    #[test]
    fn transformed_copy_matches_geometrically() {
        let model = build_object_model(&shapes::l_bracket(), 10, 6).unwrap();
        let r = default_radius(&model.cloud).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let gt = RigidTransform::random_rotation(&mut rng, Vec3::new(0.5, 0.0, 1.0));
        let scene = compute_fpfh(&model.cloud.transformed(&gt), r).unwrap();
        let object = compute_fpfh(&model.cloud, r).unwrap();
        let set = match_features(&scene, &object, true).unwrap();
        let good = set
            .pairs
            .iter()
            .filter(|c| {
                let p = gt.apply_point(&model.cloud.points[c.target]);
                (p - scene.cloud.points[c.scene]).norm() < 0.05 * model.diameter
            })
            .count();
        assert!(good as f64 >= 0.8 * set.len() as f64, "{good}/{}", set.len());
    }

    #[test]
    fn random_noise_scene_rarely_survives_mutual_filter() {
        let model = build_object_model(&shapes::cube(), 10, 6).unwrap();
        let r = default_radius(&model.cloud).unwrap();
        let object = compute_fpfh(&model.cloud, r).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 2048;
        let pts: Vec<Vec3> = (0..n)
            .map(|_| Vec3::new(rng.gen(), rng.gen(), rng.gen()) * model.diameter)
            .collect();
        let normals: Vec<Vec3> = (0..n)
            .map(|_| Vec3::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5).normalize())
            .collect();
        let noise = PointCloud::with_normals(pts, normals).unwrap();
        let scene = compute_fpfh(&noise, r).unwrap();
        let set = match_features(&scene, &object, true).unwrap();
        assert!((set.len() as f64) < 0.2 * n as f64, "{}", set.len());
    }

    #[test]
    fn csv_has_33_columns() {
        let fc = compute_fpfh(&plane(4), 0.02).unwrap();
        let csv = fc.to_csv();
        assert_eq!(csv.lines().count(), 16);
        assert!(csv.lines().all(|l| l.split(',').count() == 33));
    }
}
