//! Pose solvers: Kabsch alignment, coarse-to-fine RANSAC with a normal gate,
//! and the classic RANSAC + ICP pipeline.

mod icp;
mod kabsch;
mod ransac;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;

pub use icp::{icp_refine, IcpResult, DEFAULT_ICP_ITERATIONS};
pub use kabsch::kabsch;
pub use ransac::{
    ransac_classic, ransac_classic_keypoints, ransac_classic_points, ransac_coarse_to_fine,
    ransac_coarse_to_fine_report, triplet_ransac, CoarseToFineReport, HypothesisResult, MatchSet,
};

/// Hypothesis triplets whose area is below this fraction of `diameter²`
/// are redrawn.
pub const MIN_TRIPLET_AREA: f64 = 1e-6;
/// Redraws allowed before a hypothesis is skipped.
pub const TRIPLET_RETRIES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RansacConfig {
    pub n_hypotheses: usize,
    /// Coarse inlier distance as a fraction of the object diameter.
    pub inlier_distance: f64,
    /// Largest allowed angle between a rotated model normal and the scene normal.
    pub normal_angle_max: f64,
    pub shrink_divisors: Vec<f64>,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            n_hypotheses: 1000,
            inlier_distance: 0.10,
            normal_angle_max: 30.0,
            shrink_divisors: vec![2.0, 3.0, 4.0, 5.0],
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_hypotheses == 0 {
            return Err(Error::invalid("n_hypotheses must be at least 1"));
        }
        if !(self.inlier_distance > 0.0 && self.inlier_distance.is_finite()) {
            return Err(Error::invalid("inlier_distance must be positive"));
        }
        if !(self.normal_angle_max > 0.0 && self.normal_angle_max <= 180.0) {
            return Err(Error::invalid("normal_angle_max must lie in (0, 180] degrees"));
        }
        let mut prev = 0.0;
        for &d in &self.shrink_divisors {
            if !(d > prev && d.is_finite()) {
                return Err(Error::invalid(
                    "shrink_divisors must be positive and strictly increasing",
                ));
            }
            prev = d;
        }
        Ok(())
    }

    pub(crate) fn cos_gate(&self) -> f64 {
        self.normal_angle_max.to_radians().cos()
    }
}

/// Result of a pose solver. A failed search reports `inlier_count == 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    pub pose: RigidTransform,
    pub inlier_count: usize,
    pub inlier_fraction: f64,
    pub refined: bool,
}

impl PoseEstimate {
    pub fn failed(pose: RigidTransform) -> Self {
        Self {
            pose,
            inlier_count: 0,
            inlier_fraction: 0.0,
            refined: false,
        }
    }

    pub fn is_failure(&self) -> bool {
        self.inlier_count == 0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pose estimates always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseEstimateJson {
    #[serde(rename = "R")]
    r: [[f64; 3]; 3],
    t: [f64; 3],
    inliers: usize,
    inlier_fraction: f64,
}

impl Serialize for PoseEstimate {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let t = self.pose.translation;
        PoseEstimateJson {
            r: self.pose.rotation_rows(),
            t: [t.x, t.y, t.z],
            inliers: self.inlier_count,
            inlier_fraction: self.inlier_fraction,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PoseEstimate {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = PoseEstimateJson::deserialize(d)?;
        let pose = RigidTransform::from_rows(raw.r, raw.t);
        if !pose.is_valid(1e-6) {
            return Err(serde::de::Error::custom("R is not a proper rotation"));
        }
        if !(0.0..=1.0).contains(&raw.inlier_fraction) {
            return Err(serde::de::Error::custom("inlier_fraction outside [0, 1]"));
        }
        Ok(PoseEstimate {
            pose,
            inlier_count: raw.inliers,
            inlier_fraction: raw.inlier_fraction,
            refined: false,
        })
    }
}
