//! Synthetic bin-picking scenes: physics-free instance placement, camera
//! visibility, seed-point cropping and ground-truth bookkeeping.

mod crop;
mod dataset;

use std::collections::HashMap;

use nalgebra::Matrix3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, RigidTransform, Vec3};
use crate::index::mean_spacing;
use crate::sampling::ObjectModel;
use crate::seeding::{derive_seed, rng};

pub use crop::{crop_and_center, SceneSample, SCENE_POINTS};
pub use dataset::{generate_dataset, list_scenes, read_scene, scene_dir, write_scene, GroundTruth, MAX_INSTANCES};

/// Angular size of one depth-buffer cell.
pub const DEFAULT_PIXEL_ANGLE: f64 = 0.2 * std::f64::consts::PI / 180.0;
/// Minimum centre distance as a fraction of the summed bounding radii.
pub const SEPARATION_FACTOR: f64 = 0.8;
pub const PLACEMENT_ROUNDS: usize = 1000;

/// Open-top box with its floor at `z = 0`, centred on the world origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinSpec {
    pub width: f64,
    pub depth: f64,
    pub height: f64,
    pub wall: f64,
    /// Camera-to-world transform; the camera looks along its local `+z`.
    pub camera: RigidTransform,
    pub pixel_angle: f64,
}

impl Default for BinSpec {
    fn default() -> Self {
        Self {
            width: 0.40,
            depth: 0.30,
            height: 0.20,
            wall: 0.01,
            camera: RigidTransform::new(
                Matrix3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0)),
                Vec3::new(0.0, 0.0, 1.0),
            ),
            pixel_angle: DEFAULT_PIXEL_ANGLE,
        }
    }
}

impl BinSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("width", self.width), ("depth", self.depth), ("height", self.height)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("bin {name} must be positive")));
            }
        }
        if !(self.wall >= 0.0 && self.wall.is_finite()) {
            return Err(Error::invalid("bin wall thickness must be non-negative"));
        }
        if !(self.pixel_angle > 0.0 && self.pixel_angle < 0.1) {
            return Err(Error::invalid("pixel_angle must lie in (0, 0.1) radians"));
        }
        if !self.camera.is_valid(1e-6) {
            return Err(Error::invalid("camera pose is not a rigid transform"));
        }
        let axis = self.camera.rotation.column(2);
        if !(axis.z < 0.0 && self.camera.translation.z > self.height) {
            return Err(Error::invalid("camera must sit above the bin and look into it"));
        }
        Ok(())
    }

    /// The floor slab and the four wall slabs as axis-aligned boxes.
    fn slabs(&self) -> [(Point3, Point3); 5] {
        let (hw, hd, w, h) = (self.width / 2.0, self.depth / 2.0, self.wall, self.height);
        [
            (
                Vec3::new(-hw - w, -hd - w, -w.max(1e-9)),
                Vec3::new(hw + w, hd + w, 0.0),
            ),
            (Vec3::new(hw, -hd - w, 0.0), Vec3::new(hw + w, hd + w, h)),
            (Vec3::new(-hw - w, -hd - w, 0.0), Vec3::new(-hw, hd + w, h)),
            (Vec3::new(-hw - w, hd, 0.0), Vec3::new(hw + w, hd + w, h)),
            (Vec3::new(-hw - w, -hd - w, 0.0), Vec3::new(hw + w, -hd, h)),
        ]
    }

    /// Euclidean distance from a world point to the bin's solid.
    pub fn distance(&self, p: &Point3) -> f64 {
        self.slabs()
            .iter()
            .map(|(lo, hi)| {
                let d = Vec3::new(
                    (lo.x - p.x).max(p.x - hi.x).max(0.0),
                    (lo.y - p.y).max(p.y - hi.y).max(0.0),
                    (lo.z - p.z).max(p.z - hi.z).max(0.0),
                );
                d.norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Grid samples of the inner floor, inner walls and rim.
    pub fn surface_points(&self, spacing: f64) -> Vec<Point3> {
        let (hw, hd, w, h) = (self.width / 2.0, self.depth / 2.0, self.wall, self.height);
        let steps = |len: f64| ((len / spacing).ceil() as usize).max(1);
        let grid = |a0: f64, a1: f64, b0: f64, b1: f64, f: &mut dyn FnMut(f64, f64)| {
            let (na, nb) = (steps(a1 - a0), steps(b1 - b0));
            for i in 0..=na {
                for j in 0..=nb {
                    f(
                        a0 + (a1 - a0) * i as f64 / na as f64,
                        b0 + (b1 - b0) * j as f64 / nb as f64,
                    );
                }
            }
        };
        let mut out = Vec::new();
        grid(-hw, hw, -hd, hd, &mut |x, y| out.push(Vec3::new(x, y, 0.0)));
        for sx in [-hw, hw] {
            grid(-hd, hd, 0.0, h, &mut |y, z| out.push(Vec3::new(sx, y, z)));
        }
        for sy in [-hd, hd] {
            grid(-hw, hw, 0.0, h, &mut |x, z| out.push(Vec3::new(x, sy, z)));
        }
        if w > 0.0 {
            grid(-hw - w, hw + w, -hd - w, hd + w, &mut |x, y| {
                if x.abs() > hw || y.abs() > hd {
                    out.push(Vec3::new(x, y, h));
                }
            });
        }
        out
    }
}

/// Visible scene in the camera frame with per-point instance labels.
#[derive(Debug, Clone)]
pub struct BinScene {
    pub cloud: PointCloud,
    /// Owning instance of each point; `None` for bin surface points.
    pub labels: Vec<Option<usize>>,
    /// Model-to-camera transform of every instance.
    pub poses: Vec<RigidTransform>,
    pub bin: BinSpec,
    /// Model point spacing, used as the sensor sampling scale.
    pub spacing: f64,
}

impl BinScene {
    pub fn n_instances(&self) -> usize {
        self.poses.len()
    }
}

/// World-frame instance poses with bounding-sphere separation. Candidates
/// that fail [`PLACEMENT_ROUNDS`] times are stacked above the others.
pub fn place_instances(
    model: &ObjectModel,
    bin: &BinSpec,
    n_instances: usize,
    seed: u64,
) -> Result<Vec<RigidTransform>> {
    let r = model.bounding_radius();
    let (hw, hd) = (bin.width / 2.0, bin.depth / 2.0);
    if 2.0 * r > bin.width || 2.0 * r > bin.depth || 2.0 * r > bin.height {
        return Err(Error::invalid(format!(
            "object (bounding radius {r:.4}) does not fit in the bin"
        )));
    }
    let centroid = model.cloud.centroid().expect("validated non-empty");
    let min_gap = SEPARATION_FACTOR * 2.0 * r;
    let mut rng = rng(seed);
    let mut centres: Vec<Point3> = Vec::with_capacity(n_instances);
    let mut poses = Vec::with_capacity(n_instances);
    for _ in 0..n_instances {
        let mut placed = None;
        for _ in 0..PLACEMENT_ROUNDS {
            let c = Vec3::new(
                rng.gen_range(-hw + r..=hw - r),
                rng.gen_range(-hd + r..=hd - r),
                rng.gen_range(r..=bin.height - r),
            );
            if centres.iter().all(|o| (o - c).norm() >= min_gap) {
                placed = Some(c);
                break;
            }
        }
        let c = placed.unwrap_or_else(|| {
            let top = centres.iter().map(|c| c.z).fold(r, f64::max);
            Vec3::new(
                rng.gen_range(-hw + r..=hw - r),
                rng.gen_range(-hd + r..=hd - r),
                top + min_gap,
            )
        });
        let rot = RigidTransform::random_rotation(&mut rng, Vec3::zeros());
        poses.push(RigidTransform::new(rot.rotation, c - rot.rotation * centroid));
        centres.push(c);
    }
    Ok(poses)
}

/// Keeps, per angular cell, the nearest point and every point within a
/// depth band of two cell widths behind it. Points behind the camera are
/// dropped. Input is in the camera frame.
pub fn visibility_mask(points: &[Point3], pixel_angle: f64) -> Vec<bool> {
    let cell = |p: &Point3| -> Option<((i64, i64), f64)> {
        if p.z <= 0.0 {
            return None;
        }
        let u = (p.x.atan2(p.z) / pixel_angle).floor() as i64;
        let v = (p.y.atan2(p.z) / pixel_angle).floor() as i64;
        Some(((u, v), p.norm()))
    };
    let cells: Vec<Option<((i64, i64), f64)>> = points.iter().map(cell).collect();
    let mut nearest: HashMap<(i64, i64), f64> = HashMap::new();
    for (key, range) in cells.iter().flatten() {
        nearest.entry(*key).and_modify(|d| *d = d.min(*range)).or_insert(*range);
    }
    cells
        .iter()
        .map(|c| match c {
            Some((key, range)) => {
                let front = nearest[key];
                *range <= front * (1.0 + 2.0 * pixel_angle)
            }
            None => false,
        })
        .collect()
}

/// Visible subset of `cloud` (in its own frame) seen from `camera`, a
/// camera-to-cloud-frame transform.
pub fn visibility_filter(cloud: &PointCloud, camera: &RigidTransform, pixel_angle: f64) -> PointCloud {
    let to_cam = camera.inverse();
    let local: Vec<Point3> = cloud.points.iter().map(|p| to_cam.apply_point(p)).collect();
    let mask = visibility_mask(&local, pixel_angle);
    let keep: Vec<usize> = (0..cloud.len()).filter(|&i| mask[i]).collect();
    cloud.select(&keep)
}

/// Tangential jitter of up to `amount`, emulating independent sensor
/// sampling of each instance.
fn jittered(model: &ObjectModel, amount: f64, rng: &mut impl Rng) -> Vec<Point3> {
    model
        .cloud
        .points
        .iter()
        .zip(&model.cloud.normals)
        .map(|(p, n)| {
            let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
            let a = n.cross(&helper).normalize();
            let b = n.cross(&a);
            let phi: f64 = rng.gen::<f64>() * std::f64::consts::TAU;
            let len = amount * rng.gen::<f64>();
            p + (a * phi.cos() + b * phi.sin()) * len
        })
        .collect()
}

/// Places `n_instances` copies of the model in the bin and keeps what the
/// camera sees, expressed in the camera frame.
pub fn sample_bin_scene(model: &ObjectModel, bin: &BinSpec, n_instances: usize, seed: u64) -> Result<BinScene> {
    bin.validate()?;
    if !(1..=MAX_INSTANCES).contains(&n_instances) {
        return Err(Error::invalid(format!(
            "n_instances must lie in 1..={MAX_INSTANCES}, got {n_instances}"
        )));
    }
    let spacing = mean_spacing(&model.cloud)?;
    let world_poses = place_instances(model, bin, n_instances, derive_seed(seed, &[0]))?;
    let mut jitter_rng = rng(derive_seed(seed, &[1]));

    let mut points = bin.surface_points(2.0 * spacing);
    let mut labels: Vec<Option<usize>> = vec![None; points.len()];
    for (i, pose) in world_poses.iter().enumerate() {
        for p in jittered(model, 0.5 * spacing, &mut jitter_rng) {
            points.push(pose.apply_point(&p));
            labels.push(Some(i));
        }
    }
    let to_cam = bin.camera.inverse();
    let local: Vec<Point3> = points.iter().map(|p| to_cam.apply_point(p)).collect();
    let mask = visibility_mask(&local, bin.pixel_angle);
    let (mut visible, mut visible_labels) = (Vec::new(), Vec::new());
    for ((p, l), keep) in local.into_iter().zip(labels).zip(mask) {
        if keep {
            visible.push(p);
            visible_labels.push(l);
        }
    }
    Ok(BinScene {
        cloud: PointCloud::new(visible),
        labels: visible_labels,
        poses: world_poses.iter().map(|p| to_cam.compose(p)).collect(),
        bin: bin.clone(),
        spacing,
    })
}

/// Bin scene followed by a crop around a random object point.
pub fn generate_scene(model: &ObjectModel, bin: &BinSpec, n_instances: usize, seed: u64) -> Result<SceneSample> {
    let scene = sample_bin_scene(model, bin, n_instances, derive_seed(seed, &[0]))?;
    let mut sample = crop_and_center(&scene, model, derive_seed(seed, &[1]))?;
    sample.seed = seed;
    Ok(sample)
}
