//! Scene-to-object correspondences, the input to every pose solver.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `target` indexes keypoints for network-style matches and object cloud
/// points for feature matches; the solver is told which.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub scene: usize,
    pub target: usize,
    pub weight: f64,
}

/// A scene index may appear several times (one per accepted vote).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceSet {
    pub pairs: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn new(pairs: Vec<Correspondence>) -> Self {
        Self { pairs }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn push(&mut self, scene: usize, target: usize, weight: f64) {
        self.pairs.push(Correspondence { scene, target, weight });
    }

    pub fn check_bounds(&self, n_scene: usize, n_target: usize) -> Result<()> {
        match self.pairs.iter().find(|c| c.scene >= n_scene || c.target >= n_target) {
            Some(c) => Err(Error::invalid(format!(
                "correspondence ({}, {}) out of range ({n_scene} scene, {n_target} target)",
                c.scene, c.target
            ))),
            None => Ok(()),
        }
    }

    /// Sorted `(scene, target)` pairs, ignoring weights.
    pub fn index_pairs(&self) -> Vec<(usize, usize)> {
        let mut v: Vec<(usize, usize)> = self.pairs.iter().map(|c| (c.scene, c.target)).collect();
        v.sort_unstable();
        v
    }

    /// `scene_index,keypoint_index,weight` rows with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scene_index,keypoint_index,weight\n");
        for c in &self.pairs {
            let _ = writeln!(out, "{},{},{}", c.scene, c.target, c.weight);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut set = CorrespondenceSet::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with("scene_index")) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 3 {
                return Err(Error::parse(i + 1, "expected scene_index,keypoint_index,weight"));
            }
            let scene = fields[0].parse().map_err(|_| Error::parse(i + 1, "bad scene index"))?;
            let target = fields[1]
                .parse()
                .map_err(|_| Error::parse(i + 1, "bad keypoint index"))?;
            let weight: f64 = fields[2].parse().map_err(|_| Error::parse(i + 1, "bad weight"))?;
            if !weight.is_finite() {
                return Err(Error::parse(i + 1, "non-finite weight"));
            }
            set.push(scene, target, weight);
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_and_bounds() {
        let mut set = CorrespondenceSet::default();
        set.push(3, 1, 0.5);
        set.push(3, 2, 0.25);
        let text = set.to_csv();
        assert_eq!(text, "scene_index,keypoint_index,weight\n3,1,0.5\n3,2,0.25\n");
        assert_eq!(CorrespondenceSet::from_csv(&text).unwrap(), set);
        assert!(set.check_bounds(4, 3).is_ok());
        assert!(set.check_bounds(3, 3).is_err());
        assert!(CorrespondenceSet::from_csv("1,2\n").is_err());
    }
}
