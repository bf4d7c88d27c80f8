use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use super::BinScene;
use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud, RigidTransform, Vec3};
use crate::index::SpatialIndex;
use crate::normals::{pca_normal, DEFAULT_NORMAL_K};
use crate::sampling::ObjectModel;
use crate::seeding::rng;

/// Fixed cardinality of every cropped scene.
pub const SCENE_POINTS: usize = 2048;
/// Points closer than this many spacings to the bin count as bin.
const BIN_MARGIN: f64 = 2.0;

/// A cropped scene centred on a sampled object point.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSample {
    /// Exactly [`SCENE_POINTS`] points with camera-facing normals.
    pub cloud: PointCloud,
    /// True for points of the instance that owns the sampled point.
    pub instance_mask: Vec<bool>,
    pub gt_pose: RigidTransform,
    pub all_poses: Vec<RigidTransform>,
    pub n_instances: usize,
    pub seed: u64,
}

impl SceneSample {
    pub fn masked_count(&self) -> usize {
        self.instance_mask.iter().filter(|m| **m).count()
    }
}

/// Removes bin points by geometry, crops a ball of radius `model.diameter`
/// around a random object point, estimates normals, resamples to
/// [`SCENE_POINTS`] and moves the sampled point to the origin.
pub fn crop_and_center(scene: &BinScene, model: &ObjectModel, seed: u64) -> Result<SceneSample> {
    let to_world = &scene.bin.camera;
    let margin = BIN_MARGIN * scene.spacing;
    let objects: Vec<usize> = (0..scene.cloud.len())
        .filter(|&i| scene.bin.distance(&to_world.apply_point(&scene.cloud.points[i])) >= margin)
        .collect();
    if objects.len() < 3 {
        return Err(Error::degenerate("no object points visible in the scene"));
    }
    let object_points: Vec<Point3> = objects.iter().map(|&i| scene.cloud.points[i]).collect();
    let index = SpatialIndex::from_points(&object_points)?;

    let mut rng = rng(seed);
    let centre_local = rng.gen_range(0..objects.len());
    let centre = object_points[centre_local];
    let owner = scene.labels[objects[centre_local]];
    let mut crop: Vec<usize> = index
        .radius(&centre, model.diameter)
        .into_iter()
        .map(|n| n.index)
        .collect();
    crop.sort_unstable();

    // The sampled point always survives resampling so it lands on the origin.
    let others: Vec<usize> = crop.iter().copied().filter(|&i| i != centre_local).collect();
    let mut chosen = vec![centre_local];
    if crop.len() >= SCENE_POINTS {
        let mut pick: Vec<usize> = sample(&mut rng, others.len(), SCENE_POINTS - 1).into_vec();
        pick.sort_unstable();
        chosen.extend(pick.into_iter().map(|j| others[j]));
    } else {
        chosen.extend(&others);
        let extra: Vec<usize> = (chosen.len()..SCENE_POINTS)
            .map(|_| crop[rng.gen_range(0..crop.len())])
            .collect();
        chosen.extend(extra);
    }

    let k = DEFAULT_NORMAL_K.min(object_points.len());
    let normals: Vec<Vec3> = chosen
        .par_iter()
        .map(|&i| {
            let p = &object_points[i];
            let nbrs = index.knn(p, k);
            let (n, _) = pca_normal(nbrs.iter().map(|nb| &object_points[nb.index]));
            // The camera sits at the origin of its own frame.
            if n.dot(&-p) < 0.0 {
                -n
            } else {
                n
            }
        })
        .collect();
    let points: Vec<Point3> = chosen.iter().map(|&i| object_points[i] - centre).collect();
    let instance_mask: Vec<bool> = chosen
        .iter()
        .map(|&i| owner.is_some() && scene.labels[objects[i]] == owner)
        .collect();

    let shift = RigidTransform::from_translation(-centre);
    let all_poses: Vec<RigidTransform> = scene.poses.iter().map(|p| shift.compose(p)).collect();
    let owner = owner.ok_or_else(|| Error::degenerate("sampled point does not belong to an object"))?;
    Ok(SceneSample {
        cloud: PointCloud::with_normals(points, normals)?,
        instance_mask,
        gt_pose: all_poses[owner],
        all_poses,
        n_instances: scene.n_instances(),
        seed,
    })
}
