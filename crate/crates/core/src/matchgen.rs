//! Statistical stand-in for the keypoint-matching network head.
//!
//! For every scene point the oracle emits a segmentation probability and a
//! softmax score row over the object keypoints. Rows of target-instance
//! points are built from the true geometry and then, with a calibrated
//! probability, re-centred on a wrong keypoint: the result is a confident but
//! wrong row, which is the failure mode RANSAC has to reject. Correspondences
//! are then extracted with the relative vote threshold.

use std::fmt::Write as _;

use nalgebra::{Matrix3, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correspondence::CorrespondenceSet;
use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, RigidTransform, Vec3};
use crate::index::{mean_spacing, SpatialIndex};
use crate::sampling::ObjectModel;
use crate::seeding::stream_rng;

pub const DEFAULT_VOTE_THRESHOLD: f64 = 0.7;
/// Scene points with `seg_prob` at or above this are treated as object.
pub const SEG_DECISION: f64 = 0.5;

fn default_seg() -> f64 {
    0.96
}
fn default_key() -> f64 {
    0.31
}
fn default_temperature() -> f64 {
    0.05
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSpec {
    #[serde(default = "default_seg")]
    pub seg_accuracy: f64,
    #[serde(default = "default_key")]
    pub keypoint_accuracy: f64,
    /// Softmax temperature as a fraction of the object diameter.
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default)]
    pub seed: u64,
    /// Score keypoints by distance modulo the object's detected rotational
    /// symmetries, which spreads mass along symmetry orbits.
    #[serde(default)]
    pub symmetry_aware: bool,
}

impl Default for OracleSpec {
    fn default() -> Self {
        Self {
            seg_accuracy: default_seg(),
            keypoint_accuracy: default_key(),
            temperature: default_temperature(),
            seed: 0,
            symmetry_aware: false,
        }
    }
}

impl OracleSpec {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| v > 0.0 && v <= 1.0;
        if !unit(self.seg_accuracy) || !unit(self.keypoint_accuracy) {
            return Err(Error::invalid("oracle accuracies must lie in (0, 1]"));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::invalid("oracle temperature must be positive"));
        }
        Ok(())
    }
}

/// Row-stochastic `|scene| × K` score matrix plus segmentation probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchPrediction {
    pub seg_prob: Vec<f64>,
    n_keypoints: usize,
    scores: Vec<f64>,
}

impl MatchPrediction {
    pub fn new(seg_prob: Vec<f64>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if seg_prob.len() != rows.len() {
            return Err(Error::invalid("seg_prob and score rows differ in length"));
        }
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::invalid("score rows differ in length"));
        }
        if seg_prob.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid("seg_prob outside [0, 1]"));
        }
        Ok(Self {
            seg_prob,
            n_keypoints: k,
            scores: rows.into_iter().flatten().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.seg_prob.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seg_prob.is_empty()
    }

    pub fn n_keypoints(&self) -> usize {
        self.n_keypoints
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.scores[i * self.n_keypoints..(i + 1) * self.n_keypoints]
    }

    /// Index of the highest score, lowest index on ties.
    pub fn argmax(&self, i: usize) -> usize {
        argmax(self.row(i))
    }

    /// `scene_index,seg_prob,s0,…,s{K-1}` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scene_index,seg_prob");
        for j in 0..self.n_keypoints {
            let _ = write!(out, ",s{j}");
        }
        out.push('\n');
        for i in 0..self.len() {
            let _ = write!(out, "{},{}", i, self.seg_prob[i]);
            for s in self.row(i) {
                let _ = write!(out, ",{s}");
            }
            out.push('\n');
        }
        out
    }
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &s) in row.iter().enumerate() {
        if s > row[best] {
            best = j;
        }
    }
    best
}

/// Rotations about the model centroid that map the sampled surface onto
/// itself, found among turns about the principal axes.
#[derive(Debug, Clone)]
pub struct SymmetrySet {
    pub centroid: Point3,
    pub rotations: Vec<Matrix3<f64>>,
}

impl SymmetrySet {
    pub fn trivial(model: &ObjectModel) -> Self {
        Self {
            centroid: model.cloud.centroid().expect("validated model"),
            rotations: vec![Matrix3::identity()],
        }
    }

    /// Tests 10° turns about each principal axis. A candidate is kept when
    /// every rotated point lands within 1.5 mean spacings of the original
    /// cloud and the average gap stays below 0.7 spacings.
    pub fn detect(model: &ObjectModel) -> Result<Self> {
        let cloud = &model.cloud;
        let centroid = cloud.centroid().ok_or(Error::EmptyInput)?;
        let mut cov = Matrix3::zeros();
        for p in &cloud.points {
            let d = p - centroid;
            cov += d * d.transpose();
        }
        let axes = SymmetricEigen::new(cov).eigenvectors;
        let spacing = mean_spacing(cloud)?;
        let index = SpatialIndex::build(cloud)?;
        let mut rotations = vec![Matrix3::identity()];
        for a in 0..3 {
            let axis: Vec3 = axes.column(a).into_owned();
            for step in 1..36 {
                let angle = std::f64::consts::TAU * step as f64 / 36.0;
                let r = RigidTransform::from_axis_angle(&axis, angle, Vec3::zeros()).rotation;
                let mut dists: Vec<f64> = cloud
                    .points
                    .par_iter()
                    .map(|p| index.nearest(&(r * (p - centroid) + centroid)).distance())
                    .collect();
                dists.sort_unstable_by(f64::total_cmp);
                let worst = dists[dists.len() - 1];
                let mean = dists.iter().sum::<f64>() / dists.len() as f64;
                if mean < 0.7 * spacing && worst < 1.5 * spacing {
                    rotations.push(r);
                }
            }
        }
        Ok(Self { centroid, rotations })
    }

    fn distance(&self, x: &Point3, target: &Point3) -> f64 {
        let local = x - self.centroid;
        let goal = target - self.centroid;
        self.rotations
            .iter()
            .map(|r| (r * local - goal).norm())
            .fold(f64::INFINITY, f64::min)
    }
}

fn softmax_of_distances(d: &[f64], scale: f64) -> Vec<f64> {
    let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
    let mut row: Vec<f64> = d.iter().map(|&x| (-(x - dmin) / scale).exp()).collect();
    let sum: f64 = row.iter().sum();
    for v in &mut row {
        *v /= sum;
    }
    row
}

/// Pre-computed oracle for one object model; reusable across scenes.
#[derive(Debug, Clone)]
pub struct Oracle<'a> {
    model: &'a ObjectModel,
    spec: OracleSpec,
    keypoints: Vec<Point3>,
    symmetry: SymmetrySet,
}

impl<'a> Oracle<'a> {
    pub fn new(model: &'a ObjectModel, spec: OracleSpec) -> Result<Self> {
        spec.validate()?;
        let symmetry = if spec.symmetry_aware {
            SymmetrySet::detect(model)?
        } else {
            SymmetrySet::trivial(model)
        };
        Ok(Self {
            model,
            spec,
            keypoints: model.keypoints(),
            symmetry,
        })
    }

    pub fn symmetry(&self) -> &SymmetrySet {
        &self.symmetry
    }

    /// Row centred on keypoint `c` (distances measured in the model frame).
    fn recentred_row(&self, c: usize, scale: f64) -> Vec<f64> {
        let centre = self.keypoints[c];
        let d: Vec<f64> = self.keypoints.iter().map(|k| (k - centre).norm()).collect();
        softmax_of_distances(&d, scale)
    }

    pub fn predict(
        &self,
        scene: &PointCloud,
        gt_pose: &RigidTransform,
        instance_mask: &[bool],
    ) -> Result<MatchPrediction> {
        if scene.is_empty() {
            return Err(Error::EmptyInput);
        }
        if instance_mask.len() != scene.len() {
            return Err(Error::invalid(format!(
                "mask has {} entries for {} scene points",
                instance_mask.len(),
                scene.len()
            )));
        }
        if !gt_pose.is_valid(1e-6) {
            return Err(Error::invalid("ground-truth pose is not a proper rigid transform"));
        }
        let k = self.keypoints.len();
        let scale = self.spec.temperature * self.model.diameter;
        let to_model = gt_pose.inverse();
        let corrupt_p = 1.0 - self.spec.keypoint_accuracy;
        let flip_p = 1.0 - self.spec.seg_accuracy;

        let rows: Vec<(f64, Vec<f64>)> = scene
            .points
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let mut rng = stream_rng(self.spec.seed, i as u64);
                let flip = rng.gen::<f64>() < flip_p;
                let conf: f64 = rng.gen();
                let corrupt = rng.gen::<f64>() < corrupt_p;
                let pick = rng.gen_range(0..k);
                let other = if k > 1 { rng.gen_range(0..k - 1) } else { 0 };
                let masked = instance_mask[i];

                let row = if masked {
                    let x = to_model.apply_point(p);
                    if corrupt && k > 1 {
                        let truth = nearest(&self.keypoints, &x);
                        // Uniform over the other K − 1 keypoints.
                        let wrong = if other >= truth { other + 1 } else { other };
                        self.recentred_row(wrong, scale)
                    } else {
                        let d: Vec<f64> = self.keypoints.iter().map(|kp| self.symmetry.distance(&x, kp)).collect();
                        softmax_of_distances(&d, scale)
                    }
                } else {
                    self.recentred_row(pick, scale)
                };
                let positive = masked != flip;
                let seg = if positive { 0.5 + 0.5 * conf } else { 0.5 * conf };
                (seg, row)
            })
            .collect();
        let (seg_prob, rows): (Vec<f64>, Vec<Vec<f64>>) = rows.into_iter().unzip();
        MatchPrediction::new(seg_prob, rows)
    }
}

fn nearest(keypoints: &[Point3], x: &Point3) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, k) in keypoints.iter().enumerate() {
        let d = (k - x).norm_squared();
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

/// Index of the keypoint of `model` (placed at `pose`) nearest to `p`.
pub fn true_keypoint(model: &ObjectModel, pose: &RigidTransform, p: &Point3) -> usize {
    nearest(&model.keypoints(), &pose.inverse().apply_point(p))
}

/// One-shot form of [`Oracle::predict`].
pub fn oracle_predict(
    scene: &PointCloud,
    model: &ObjectModel,
    gt_pose: &RigidTransform,
    instance_mask: &[bool],
    spec: &OracleSpec,
) -> Result<MatchPrediction> {
    Oracle::new(model, *spec)?.predict(scene, gt_pose, instance_mask)
}

/// Emits `(i, j)` for every segmentation-positive point `i` and keypoint `j`
/// with `score_j ≥ vote_threshold · max_row_score`. The row argmax is always
/// emitted; at threshold 1 it is the only pair, even when scores tie.
pub fn extract_correspondences(pred: &MatchPrediction, vote_threshold: f64) -> Result<CorrespondenceSet> {
    if !(vote_threshold > 0.0 && vote_threshold <= 1.0) {
        return Err(Error::invalid("vote threshold must lie in (0, 1]"));
    }
    let mut set = CorrespondenceSet::default();
    for i in 0..pred.len() {
        if pred.seg_prob[i] < SEG_DECISION {
            continue;
        }
        let row = pred.row(i);
        if row.is_empty() {
            continue;
        }
        let best = argmax(row);
        let cut = vote_threshold * row[best];
        for (j, &s) in row.iter().enumerate() {
            if j == best || (vote_threshold < 1.0 && s >= cut) {
                set.push(i, j, s);
            }
        }
    }
    Ok(set)
}

/// Shannon entropy (nats) of a score row.
pub fn row_entropy(row: &[f64]) -> f64 {
    row.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::build_object_model;
    use crate::shapes;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn posed_scene(model: &ObjectModel, seed: u64) -> (PointCloud, RigidTransform) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gt = RigidTransform::random_rotation(&mut rng, Vec3::new(0.1, -0.2, 0.7));
        (model.cloud.transformed(&gt), gt)
    }

    #[test]
    fn uncorrupted_limit_matches_geometry() {
        let model = build_object_model(&shapes::l_bracket(), 40, 1).unwrap();
        let (scene, gt) = posed_scene(&model, 2);
        let mask: Vec<bool> = (0..scene.len()).map(|i| i % 3 != 0).collect();
        let spec = OracleSpec {
            seg_accuracy: 1.0,
            keypoint_accuracy: 1.0,
            temperature: 1e-9,
            seed: 5,
            symmetry_aware: false,
        };
        let pred = oracle_predict(&scene, &model, &gt, &mask, &spec).unwrap();
        for (i, &inside) in mask.iter().enumerate() {
            assert_eq!(pred.seg_prob[i] >= SEG_DECISION, inside);
            if inside {
                assert_eq!(pred.argmax(i), true_keypoint(&model, &gt, &scene.points[i]));
            }
        }
    }

    #[test]
    fn rows_are_stochastic_and_deterministic() {
        let model = build_object_model(&shapes::cube(), 30, 1).unwrap();
        let (scene, gt) = posed_scene(&model, 3);
        let mask = vec![true; scene.len()];
        let spec = OracleSpec {
            seed: 9,
            ..OracleSpec::default()
        };
        let a = oracle_predict(&scene, &model, &gt, &mask, &spec).unwrap();
        let b = oracle_predict(&scene, &model, &gt, &mask, &spec).unwrap();
        assert_eq!(a, b);
        for i in 0..a.len() {
            assert!((a.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
        let spec = OracleSpec { seed: 10, ..spec };
        assert_ne!(a, oracle_predict(&scene, &model, &gt, &mask, &spec).unwrap());
    }

    #[test]
    fn input_validation() {
        let model = build_object_model(&shapes::cube(), 10, 1).unwrap();
        let scene = model.cloud.clone();
        let id = RigidTransform::identity();
        let spec = OracleSpec::default();
        assert!(oracle_predict(&scene, &model, &id, &[true], &spec).is_err());
        assert!(oracle_predict(&PointCloud::default(), &model, &id, &[], &spec).is_err());
        let bad = OracleSpec {
            keypoint_accuracy: 0.0,
            ..spec
        };
        assert!(oracle_predict(&scene, &model, &id, &vec![true; scene.len()], &bad).is_err());
    }

    #[test]
    fn symmetric_object_stripes_its_rows() {
        let spec = OracleSpec {
            seg_accuracy: 1.0,
            keypoint_accuracy: 1.0,
            temperature: 0.05,
            seed: 1,
            symmetry_aware: true,
        };
        let max_entropy = |mesh| {
            let model = build_object_model(&mesh, 100, 4).unwrap();
            let mask = vec![true; model.cloud.len()];
            let pred = oracle_predict(&model.cloud, &model, &RigidTransform::identity(), &mask, &spec).unwrap();
            (0..pred.len()).map(|i| row_entropy(pred.row(i))).fold(0.0, f64::max)
        };
        let cylinder = max_entropy(shapes::cylinder());
        let bracket = max_entropy(shapes::l_bracket());
        assert!(cylinder > bracket, "cylinder {cylinder} vs bracket {bracket}");
    }

    #[test]
    fn symmetry_detection() {
        let cyl = build_object_model(&shapes::cylinder(), 10, 4).unwrap();
        assert!(SymmetrySet::detect(&cyl).unwrap().rotations.len() >= 36);
        let bracket = build_object_model(&shapes::l_bracket(), 10, 4).unwrap();
        assert_eq!(SymmetrySet::detect(&bracket).unwrap().rotations.len(), 1);
    }

    fn pred_from(rows: Vec<Vec<f64>>, seg: Vec<f64>) -> MatchPrediction {
        MatchPrediction::new(seg, rows).unwrap()
    }

    #[test]
    fn vote_threshold_rule() {
        let p = pred_from(vec![vec![0.0, 1.0, 0.0]], vec![0.9]);
        assert_eq!(extract_correspondences(&p, 0.7).unwrap().index_pairs(), vec![(0, 1)]);

        // 0.4 ≥ 0.7 · 0.5 = 0.35, 0.1 < 0.35.
        let p = pred_from(vec![vec![0.5, 0.4, 0.1]], vec![0.9]);
        assert_eq!(
            extract_correspondences(&p, 0.7).unwrap().index_pairs(),
            vec![(0, 0), (0, 1)]
        );

        let p = pred_from(vec![vec![0.5, 0.5], vec![1.0, 0.0]], vec![0.49, 0.1]);
        assert!(extract_correspondences(&p, 0.7).unwrap().is_empty());
        assert!(extract_correspondences(&p, 0.0).is_err());
        assert!(extract_correspondences(&p, 1.5).is_err());
    }

    #[test]
    fn threshold_one_gives_single_votes_even_on_ties() {
        let p = pred_from(vec![vec![0.5, 0.5], vec![0.2, 0.8]], vec![0.9, 0.9]);
        assert_eq!(
            extract_correspondences(&p, 1.0).unwrap().index_pairs(),
            vec![(0, 0), (1, 1)]
        );
    }

    #[test]
    fn csv_layout() {
        let p = pred_from(vec![vec![0.25, 0.75]], vec![0.5]);
        assert_eq!(p.to_csv(), "scene_index,seg_prob,s0,s1\n0,0.5,0.25,0.75\n");
    }

    proptest::proptest! {
        #[test]
        fn lowering_threshold_only_adds_pairs(
            rows in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 6), 1..20),
            hi in 0.05f64..=1.0,
            frac in 0.0f64..1.0,
        ) {
            let rows: Vec<Vec<f64>> = rows
                .into_iter()
                .map(|r| {
                    let s: f64 = r.iter().sum::<f64>() + 1e-9;
                    r.into_iter().map(|v| (v + 1e-9 / 6.0) / s).collect()
                })
                .collect();
            let seg = vec![0.9; rows.len()];
            let p = MatchPrediction::new(seg, rows).unwrap();
            let lo = (hi * frac).max(1e-6);
            let strict = extract_correspondences(&p, hi).unwrap().index_pairs();
            let loose = extract_correspondences(&p, lo).unwrap().index_pairs();
            proptest::prop_assert!(strict.iter().all(|x| loose.contains(x)));
            let one = extract_correspondences(&p, 1.0).unwrap();
            proptest::prop_assert_eq!(one.len(), p.len());
        }
    }
}
