//! Pose error metrics and recall.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{PointCloud, RigidTransform};
use crate::index::{dist_sq, SpatialIndex};

/// A pose is correct when its ADI is at most this fraction of the diameter.
pub const DEFAULT_CORRECT_FRACTION: f64 = 0.10;

/// Sequential sum so results do not depend on how work was split.
fn ordered_mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean distance between corresponding model points under the two poses.
pub fn add_metric(est: &RigidTransform, gt: &RigidTransform, model_cloud: &PointCloud) -> f64 {
    if model_cloud.is_empty() {
        return 0.0;
    }
    let d: Vec<f64> = model_cloud
        .points
        .par_iter()
        .map(|p| dist_sq(&est.apply_point(p), &gt.apply_point(p)).sqrt())
        .collect();
    ordered_mean(&d)
}

/// Mean distance from each estimated model point to the nearest
/// ground-truth model point. Symmetric poses score zero.
pub fn adi_metric(est: &RigidTransform, gt: &RigidTransform, model_cloud: &PointCloud) -> f64 {
    if model_cloud.is_empty() {
        return 0.0;
    }
    let target = model_cloud.transformed(gt);
    let index = SpatialIndex::build(&target).expect("non-empty cloud");
    let d: Vec<f64> = model_cloud
        .points
        .par_iter()
        .map(|p| index.nearest(&est.apply_point(p)).dist_sq.sqrt())
        .collect();
    ordered_mean(&d)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub object_id: String,
    pub scene_id: String,
    pub adi: f64,
    pub add: f64,
    pub correct: bool,
}

/// Scores `est` against `gt`; `correct` means `adi ≤ tau_fraction · diameter`.
pub fn evaluate(
    object_id: &str,
    scene_id: &str,
    est: &RigidTransform,
    gt: &RigidTransform,
    model_cloud: &PointCloud,
    diameter: f64,
    tau_fraction: f64,
) -> EvalResult {
    let adi = adi_metric(est, gt, model_cloud);
    let add = add_metric(est, gt, model_cloud);
    debug_assert!(adi <= add, "adi {adi} exceeds add {add}");
    EvalResult {
        object_id: object_id.to_string(),
        scene_id: scene_id.to_string(),
        adi,
        add,
        correct: adi <= tau_fraction * diameter,
    }
}

/// Fraction of correct results.
pub fn recall(results: &[EvalResult]) -> Result<f64> {
    if results.is_empty() {
        return Err(Error::EmptyInput);
    }
    let hits = results.iter().filter(|r| r.correct).count();
    Ok(hits as f64 / results.len() as f64)
}
