//! Object models on disk: `<name>.ply` (points and normals) next to a
//! `<name>.json` sidecar holding keypoint indices, diameter and seed.

use std::fs;
use std::path::{Path, PathBuf};

use super::ply::{parse_ply_cloud, write_ply_cloud};
use crate::error::Result;
use crate::sampling::{ModelSidecar, ObjectModel};

pub fn sidecar_path(ply: &Path) -> PathBuf {
    ply.with_extension("json")
}

pub fn sidecar_json(model: &ObjectModel) -> String {
    serde_json::to_string_pretty(&model.sidecar()).expect("sidecar always serializes") + "\n"
}

pub fn save_model(ply: &Path, model: &ObjectModel) -> Result<()> {
    if let Some(parent) = ply.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(ply, write_ply_cloud(&model.cloud))?;
    fs::write(sidecar_path(ply), sidecar_json(model))?;
    Ok(())
}

pub fn parse_sidecar(text: &str) -> Result<ModelSidecar> {
    Ok(serde_json::from_str(text)?)
}

pub fn load_model(ply: &Path) -> Result<ObjectModel> {
    let cloud = parse_ply_cloud(&fs::read_to_string(ply)?)?;
    let sidecar = parse_sidecar(&fs::read_to_string(sidecar_path(ply))?)?;
    ObjectModel::with_diameter(cloud, sidecar.keypoints, sidecar.diameter, sidecar.seed)
}
