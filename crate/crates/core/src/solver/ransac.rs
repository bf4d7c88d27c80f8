use std::cmp::Ordering;

use rand::seq::index::sample;
use rayon::prelude::*;

use super::icp::{icp_refine, DEFAULT_ICP_ITERATIONS};
use super::kabsch::kabsch;
use super::{PoseEstimate, RansacConfig, MIN_TRIPLET_AREA, TRIPLET_RETRIES};
use crate::correspondence::CorrespondenceSet;
use crate::error::{Error, Result};
use crate::features::{match_features, FeatureCloud};
use crate::geometry::{diameter, Point3, PointCloud, RigidTransform, Vec3};
use crate::sampling::ObjectModel;
use crate::seeding::stream_rng;

/// Paired model-frame and scene-frame points with their normals.
/// Entry `i` is the `i`-th correspondence of the input set.
#[derive(Debug, Clone, Default)]
pub struct MatchSet {
    pub model_points: Vec<Point3>,
    pub model_normals: Vec<Vec3>,
    pub scene_points: Vec<Point3>,
    pub scene_normals: Vec<Vec3>,
}

impl MatchSet {
    /// Correspondence targets index the model's keypoints.
    pub fn from_keypoints(scene: &PointCloud, model: &ObjectModel, corr: &CorrespondenceSet) -> Result<Self> {
        require_normals(scene)?;
        corr.check_bounds(scene.len(), model.keypoint_count())?;
        Ok(Self::collect(scene, corr, |j| {
            (model.keypoint(j), model.keypoint_normal(j))
        }))
    }

    /// Correspondence targets index points of `object`.
    pub fn from_cloud_points(scene: &PointCloud, object: &PointCloud, corr: &CorrespondenceSet) -> Result<Self> {
        require_normals(scene)?;
        require_normals(object)?;
        corr.check_bounds(scene.len(), object.len())?;
        Ok(Self::collect(scene, corr, |j| (object.points[j], object.normals[j])))
    }

    fn collect(scene: &PointCloud, corr: &CorrespondenceSet, target: impl Fn(usize) -> (Point3, Vec3)) -> Self {
        let mut m = MatchSet::default();
        for c in &corr.pairs {
            let (p, n) = target(c.target);
            m.model_points.push(p);
            m.model_normals.push(n);
            m.scene_points.push(scene.points[c.scene]);
            m.scene_normals.push(scene.normals[c.scene]);
        }
        m
    }

    pub fn len(&self) -> usize {
        self.model_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.model_points.is_empty()
    }

    fn is_inlier(&self, i: usize, pose: &RigidTransform, tau_sq: f64, cos_gate: f64) -> Option<f64> {
        let d2 = (pose.apply_point(&self.model_points[i]) - self.scene_points[i]).norm_squared();
        if d2 > tau_sq {
            return None;
        }
        let n = pose.apply_vector(&self.model_normals[i]);
        (n.dot(&self.scene_normals[i]) >= cos_gate).then_some(d2)
    }

    /// Inlier count and residual RMS (infinite when there are none).
    pub fn score(&self, pose: &RigidTransform, tau: f64, cos_gate: f64) -> (usize, f64) {
        let tau_sq = tau * tau;
        let (mut count, mut sum) = (0usize, 0.0);
        for i in 0..self.len() {
            if let Some(d2) = self.is_inlier(i, pose, tau_sq, cos_gate) {
                count += 1;
                sum += d2;
            }
        }
        let rms = if count == 0 {
            f64::INFINITY
        } else {
            (sum / count as f64).sqrt()
        };
        (count, rms)
    }

    pub fn inliers(&self, pose: &RigidTransform, tau: f64, cos_gate: f64) -> Vec<usize> {
        let tau_sq = tau * tau;
        (0..self.len())
            .filter(|&i| self.is_inlier(i, pose, tau_sq, cos_gate).is_some())
            .collect()
    }

    fn refit(&self, inliers: &[usize]) -> Result<RigidTransform> {
        let src: Vec<Point3> = inliers.iter().map(|&i| self.model_points[i]).collect();
        let dst: Vec<Point3> = inliers.iter().map(|&i| self.scene_points[i]).collect();
        kabsch(&src, &dst, None)
    }
}

fn require_normals(c: &PointCloud) -> Result<()> {
    if c.has_normals() {
        Ok(())
    } else {
        Err(Error::invalid("the normal gate needs normals on both clouds"))
    }
}

fn triangle_area(a: &Point3, b: &Point3, c: &Point3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

/// Best scoring hypothesis of a triplet RANSAC run.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisResult {
    pub hypothesis: usize,
    pub pose: RigidTransform,
    pub inlier_count: usize,
    pub rms: f64,
}

/// More inliers first, then lower RMS, then lower hypothesis index.
fn rank(a: &HypothesisResult, b: &HypothesisResult) -> Ordering {
    b.inlier_count
        .cmp(&a.inlier_count)
        .then(a.rms.total_cmp(&b.rms))
        .then(a.hypothesis.cmp(&b.hypothesis))
}

fn hypothesis(m: &MatchSet, h: usize, tau: f64, cfg: &RansacConfig, min_area: f64) -> Option<HypothesisResult> {
    let mut rng = stream_rng(cfg.seed, h as u64);
    for _ in 0..=TRIPLET_RETRIES {
        let idx = sample(&mut rng, m.len(), 3);
        let (i, j, k) = (idx.index(0), idx.index(1), idx.index(2));
        let src = [m.model_points[i], m.model_points[j], m.model_points[k]];
        let dst = [m.scene_points[i], m.scene_points[j], m.scene_points[k]];
        if triangle_area(&src[0], &src[1], &src[2]) < min_area || triangle_area(&dst[0], &dst[1], &dst[2]) < min_area {
            continue;
        }
        let Ok(pose) = kabsch(&src, &dst, None) else {
            continue;
        };
        let (inlier_count, rms) = m.score(&pose, tau, cfg.cos_gate());
        return Some(HypothesisResult {
            hypothesis: h,
            pose,
            inlier_count,
            rms,
        });
    }
    None
}

/// Scores `cfg.n_hypotheses` Kabsch triplet poses in parallel at absolute
/// inlier distance `tau`. The selection does not depend on the worker count.
/// Returns `None` when every hypothesis was degenerate.
pub fn triplet_ransac(
    m: &MatchSet,
    tau: f64,
    cfg: &RansacConfig,
    object_diameter: f64,
) -> Result<Option<HypothesisResult>> {
    cfg.validate()?;
    if m.len() < 3 {
        return Err(Error::degenerate(format!(
            "RANSAC needs at least 3 correspondences, got {}",
            m.len()
        )));
    }
    let min_area = MIN_TRIPLET_AREA * object_diameter * object_diameter;
    let results: Vec<Option<HypothesisResult>> = (0..cfg.n_hypotheses)
        .into_par_iter()
        .map(|h| hypothesis(m, h, tau, cfg, min_area))
        .collect();
    Ok(results.into_iter().flatten().min_by(rank))
}

/// Diagnostics of a coarse-to-fine run.
#[derive(Debug, Clone)]
pub struct CoarseToFineReport {
    pub estimate: PoseEstimate,
    pub best_hypothesis: Option<HypothesisResult>,
    /// Absolute inlier distance of each stage, coarse first.
    pub distances: Vec<f64>,
    /// Inliers found at each stage before its refit.
    pub stage_inliers: Vec<usize>,
    /// The unrefined best hypothesis scored at the smallest distance.
    pub unrefined_final_inliers: usize,
}

pub fn ransac_coarse_to_fine(
    scene: &PointCloud,
    model: &ObjectModel,
    corr: &CorrespondenceSet,
    cfg: &RansacConfig,
) -> Result<PoseEstimate> {
    ransac_coarse_to_fine_report(scene, model, corr, cfg).map(|r| r.estimate)
}

/// Triplet RANSAC at the coarse distance, then one Kabsch refit on the
/// inliers at each distance `τ₀, τ₀/d₁, τ₀/d₂, …`. Inliers are counted per
/// correspondence, so repeated votes on one scene point each count.
pub fn ransac_coarse_to_fine_report(
    scene: &PointCloud,
    model: &ObjectModel,
    corr: &CorrespondenceSet,
    cfg: &RansacConfig,
) -> Result<CoarseToFineReport> {
    let m = MatchSet::from_keypoints(scene, model, corr)?;
    let tau0 = cfg.inlier_distance * model.diameter;
    let distances: Vec<f64> = std::iter::once(tau0)
        .chain(cfg.shrink_divisors.iter().map(|d| tau0 / d))
        .collect();
    let final_tau = *distances.last().expect("coarse distance always present");
    let cos_gate = cfg.cos_gate();

    let best = triplet_ransac(&m, tau0, cfg, model.diameter)?;
    let Some(best) = best else {
        return Ok(CoarseToFineReport {
            estimate: PoseEstimate::failed(RigidTransform::identity()),
            best_hypothesis: None,
            distances,
            stage_inliers: Vec::new(),
            unrefined_final_inliers: 0,
        });
    };
    let unrefined_final_inliers = m.score(&best.pose, final_tau, cos_gate).0;

    let mut pose = best.pose;
    let mut refined = false;
    let mut stage_inliers = Vec::with_capacity(distances.len());
    for &tau in &distances {
        let inliers = m.inliers(&pose, tau, cos_gate);
        stage_inliers.push(inliers.len());
        if inliers.len() < 3 {
            break;
        }
        match m.refit(&inliers) {
            Ok(p) => {
                pose = p;
                refined = true;
            }
            Err(_) => break,
        }
    }
    let inlier_count = m.score(&pose, final_tau, cos_gate).0;
    let estimate = if best.inlier_count == 0 {
        PoseEstimate::failed(pose)
    } else {
        PoseEstimate {
            pose,
            inlier_count,
            inlier_fraction: inlier_count as f64 / m.len() as f64,
            refined,
        }
    };
    Ok(CoarseToFineReport {
        estimate,
        best_hypothesis: Some(best),
        distances,
        stage_inliers,
        unrefined_final_inliers,
    })
}

/// Single-distance RANSAC, one least-squares refit, then ICP against the
/// object cloud.
fn classic_pipeline(
    m: &MatchSet,
    scene: &PointCloud,
    object: &PointCloud,
    object_diameter: f64,
    cfg: &RansacConfig,
) -> Result<PoseEstimate> {
    let tau = cfg.inlier_distance * object_diameter;
    let cos_gate = cfg.cos_gate();
    let Some(best) = triplet_ransac(m, tau, cfg, object_diameter)? else {
        return Ok(PoseEstimate::failed(RigidTransform::identity()));
    };
    if best.inlier_count == 0 {
        return Ok(PoseEstimate::failed(best.pose));
    }
    let inliers = m.inliers(&best.pose, tau, cos_gate);
    let coarse = if inliers.len() >= 3 {
        m.refit(&inliers).unwrap_or(best.pose)
    } else {
        best.pose
    };
    let icp = icp_refine(scene, object, &coarse, DEFAULT_ICP_ITERATIONS, tau)?;
    let inlier_count = m.score(&icp.pose, tau, cos_gate).0;
    Ok(PoseEstimate {
        pose: icp.pose,
        inlier_count,
        inlier_fraction: inlier_count as f64 / m.len() as f64,
        refined: true,
    })
}

/// Mutual FPFH matching followed by the classic pipeline.
pub fn ransac_classic(scene: &FeatureCloud, object: &FeatureCloud, cfg: &RansacConfig) -> Result<PoseEstimate> {
    let corr = match_features(scene, object, true)?;
    ransac_classic_points(&scene.cloud, &object.cloud, &corr, diameter(&object.cloud), cfg)
}

/// The classic pipeline on correspondences into the object cloud.
pub fn ransac_classic_points(
    scene: &PointCloud,
    object: &PointCloud,
    corr: &CorrespondenceSet,
    object_diameter: f64,
    cfg: &RansacConfig,
) -> Result<PoseEstimate> {
    let m = MatchSet::from_cloud_points(scene, object, corr)?;
    classic_pipeline(&m, scene, object, object_diameter, cfg)
}

/// The classic pipeline on keypoint correspondences.
pub fn ransac_classic_keypoints(
    scene: &PointCloud,
    model: &ObjectModel,
    corr: &CorrespondenceSet,
    cfg: &RansacConfig,
) -> Result<PoseEstimate> {
    let m = MatchSet::from_keypoints(scene, model, corr)?;
    classic_pipeline(&m, scene, &model.cloud, model.diameter, cfg)
}
