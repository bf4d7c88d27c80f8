use rayon::prelude::*;

use super::kabsch::kabsch;
use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, RigidTransform};
use crate::index::SpatialIndex;

pub const DEFAULT_ICP_ITERATIONS: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct IcpResult {
    pub pose: RigidTransform,
    pub iterations: usize,
    /// Truncated pairing RMS after each accepted step, starting at `init`.
    pub rms_history: Vec<f64>,
    /// The pairing set stopped changing.
    pub converged: bool,
    /// No scene point was within reach of the model at `init`.
    pub no_pairs: bool,
}

struct Pairing {
    pairs: Vec<(usize, usize)>,
    rms: f64,
}

/// Each scene point pairs with its nearest model point when closer than
/// `tau`. Unpaired points contribute `tau` to the RMS, which makes the
/// quantity non-increasing under a Kabsch step with re-pairing.
fn pair(scene: &PointCloud, model: &SpatialIndex, pose: &RigidTransform, tau: f64) -> Pairing {
    let inv = pose.inverse();
    let tau_sq = tau * tau;
    let nearest: Vec<(usize, f64)> = scene
        .points
        .par_iter()
        .map(|p| {
            let n = model.nearest(&inv.apply_point(p));
            (n.index, n.dist_sq)
        })
        .collect();
    let mut pairs = Vec::new();
    let mut sum = 0.0;
    for (i, (j, d2)) in nearest.into_iter().enumerate() {
        if d2 <= tau_sq {
            pairs.push((i, j));
            sum += d2;
        } else {
            sum += tau_sq;
        }
    }
    Pairing {
        pairs,
        rms: (sum / scene.len() as f64).sqrt(),
    }
}

/// Point-to-point ICP from `init` (model frame → scene frame).
pub fn icp_refine(
    scene: &PointCloud,
    model_cloud: &PointCloud,
    init: &RigidTransform,
    max_iter: usize,
    inlier_distance: f64,
) -> Result<IcpResult> {
    if scene.is_empty() || model_cloud.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !init.is_valid(1e-6) {
        return Err(Error::invalid("initial pose is not a rigid transform"));
    }
    if !(inlier_distance > 0.0 && inlier_distance.is_finite()) {
        return Err(Error::invalid("ICP pairing distance must be positive"));
    }
    let mut result = IcpResult {
        pose: *init,
        iterations: 0,
        rms_history: Vec::new(),
        converged: false,
        no_pairs: false,
    };
    if max_iter == 0 {
        return Ok(result);
    }
    let index = SpatialIndex::build(model_cloud)?;
    let mut current = pair(scene, &index, init, inlier_distance);
    result.rms_history.push(current.rms);
    if current.pairs.is_empty() {
        result.no_pairs = true;
        return Ok(result);
    }
    for _ in 0..max_iter {
        let src: Vec<Point3> = current.pairs.iter().map(|&(_, j)| model_cloud.points[j]).collect();
        let dst: Vec<Point3> = current.pairs.iter().map(|&(i, _)| scene.points[i]).collect();
        let Ok(pose) = kabsch(&src, &dst, None) else {
            break;
        };
        let next = pair(scene, &index, &pose, inlier_distance);
        if next.rms > current.rms {
            break;
        }
        result.pose = pose;
        result.iterations += 1;
        result.rms_history.push(next.rms);
        let unchanged = next.pairs == current.pairs;
        current = next;
        if unchanged {
            result.converged = true;
            break;
        }
    }
    Ok(result)
}
