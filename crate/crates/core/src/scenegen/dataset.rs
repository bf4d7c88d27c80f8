//! `scenes/<object>/<scene_id>/{cloud.ply, gt.json, mask.csv}`.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{generate_scene, BinSpec, SceneSample};
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::io::ply::{parse_ply_cloud, write_ply_cloud};
use crate::io::{parse_mask_csv, write_mask_csv};
use crate::sampling::ObjectModel;
use crate::seeding::derive_seed;

pub const MAX_INSTANCES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub target_pose: RigidTransform,
    pub all_poses: Vec<RigidTransform>,
    pub n_instances: usize,
    pub seed: u64,
}

impl GroundTruth {
    pub fn validate(&self) -> Result<()> {
        if !(1..=MAX_INSTANCES).contains(&self.n_instances) {
            return Err(Error::invalid(format!(
                "n_instances {} outside 1..=20",
                self.n_instances
            )));
        }
        if self.all_poses.len() != self.n_instances {
            return Err(Error::invalid("all_poses length differs from n_instances"));
        }
        let close = |p: &RigidTransform| {
            (p.rotation - self.target_pose.rotation).amax() < 1e-9
                && (p.translation - self.target_pose.translation).amax() < 1e-9
        };
        if !self.all_poses.iter().any(close) {
            return Err(Error::invalid("target_pose is not among all_poses"));
        }
        Ok(())
    }
}

pub fn scene_dir(root: &Path, object: &str, scene_id: &str) -> PathBuf {
    root.join("scenes").join(object).join(scene_id)
}

pub fn write_scene(dir: &Path, sample: &SceneSample) -> Result<()> {
    fs::create_dir_all(dir)?;
    let gt = GroundTruth {
        target_pose: sample.gt_pose,
        all_poses: sample.all_poses.clone(),
        n_instances: sample.n_instances,
        seed: sample.seed,
    };
    fs::write(dir.join("cloud.ply"), write_ply_cloud(&sample.cloud))?;
    fs::write(dir.join("gt.json"), serde_json::to_string_pretty(&gt)? + "\n")?;
    fs::write(dir.join("mask.csv"), write_mask_csv(&sample.instance_mask))?;
    Ok(())
}

pub fn read_scene(dir: &Path) -> Result<SceneSample> {
    let cloud = parse_ply_cloud(&fs::read_to_string(dir.join("cloud.ply"))?)?;
    let gt: GroundTruth = serde_json::from_str(&fs::read_to_string(dir.join("gt.json"))?)?;
    gt.validate()?;
    let instance_mask = parse_mask_csv(&fs::read_to_string(dir.join("mask.csv"))?)?;
    if instance_mask.len() != cloud.len() {
        return Err(Error::invalid(format!(
            "mask has {} rows but the cloud has {} points",
            instance_mask.len(),
            cloud.len()
        )));
    }
    Ok(SceneSample {
        cloud,
        instance_mask,
        gt_pose: gt.target_pose,
        all_poses: gt.all_poses,
        n_instances: gt.n_instances,
        seed: gt.seed,
    })
}

/// Scene directories of one object, sorted by scene id.
pub fn list_scenes(root: &Path, object: &str) -> Result<Vec<(String, PathBuf)>> {
    let base = root.join("scenes").join(object);
    let mut out = Vec::new();
    for entry in fs::read_dir(&base)? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            out.push((entry.file_name().to_string_lossy().into_owned(), entry.path()));
        }
    }
    out.sort();
    Ok(out)
}

/// Writes `count` scenes with instance counts cycling through 1..=20.
pub fn generate_dataset(
    root: &Path,
    object: &str,
    model: &ObjectModel,
    bin: &BinSpec,
    count: usize,
    seed: u64,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(root.join("scenes").join(object))?;
    (0..count)
        .into_par_iter()
        .map(|i| {
            let sample = generate_scene(model, bin, 1 + i % MAX_INSTANCES, derive_seed(seed, &[i as u64]))?;
            let dir = scene_dir(root, object, &format!("{i:04}"));
            write_scene(&dir, &sample)?;
            Ok(dir)
        })
        .collect()
}
