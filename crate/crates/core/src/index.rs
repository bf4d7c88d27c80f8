//! Static k-d tree over a point snapshot.
//!
//! Results are ordered by `(squared distance, point index)`, so ties resolve to
//! the lower index and every query agrees with a brute-force scan.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub dist_sq: f64,
}

impl Neighbor {
    pub fn distance(&self) -> f64 {
        self.dist_sq.sqrt()
    }

    fn key_cmp(&self, other: &Self) -> Ordering {
        self.dist_sq
            .total_cmp(&other.dist_sq)
            .then(self.index.cmp(&other.index))
    }
}

impl Eq for Neighbor {}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key_cmp(other)
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Read-only acceleration structure; `Sync`, so safe to query from many workers.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    points: Vec<Point3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

#[inline]
pub(crate) fn dist_sq(a: &Point3, b: &Point3) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    let dz = a.z - b.z;
    dx * dx + dy * dy + dz * dz
}

impl SpatialIndex {
    pub fn build(cloud: &PointCloud) -> Result<Self> {
        Self::from_points(&cloud.points)
    }

    pub fn from_points(points: &[Point3]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut index = SpatialIndex {
            points: points.to_vec(),
            order: (0..points.len()).collect(),
            nodes: Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1),
        };
        index.build_node(0, points.len());
        Ok(index)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &Point3 {
        &self.points[i]
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mut lo = Point3::repeat(f64::INFINITY);
        let mut hi = Point3::repeat(f64::NEG_INFINITY);
        for &i in &self.order[start..end] {
            lo = lo.inf(&self.points[i]);
            hi = hi.sup(&self.points[i]);
        }
        let axis = (hi - lo).imax();
        if hi[axis] - lo[axis] <= 0.0 {
            // All coincident.
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end]
            .select_nth_unstable_by(mid - start, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
        let value = self.points[self.order[mid]][axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    /// The `k` nearest points, closest first.
    pub fn knn(&self, query: &Point3, k: usize) -> Vec<Neighbor> {
        if k == 0 {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Neighbor> = BinaryHeap::with_capacity(k + 1);
        self.knn_node(0, query, k, &mut heap);
        let mut out = heap.into_vec();
        out.sort_unstable();
        out
    }

    pub fn nearest(&self, query: &Point3) -> Neighbor {
        self.knn(query, 1)[0]
    }

    fn knn_node(&self, node: usize, q: &Point3, k: usize, heap: &mut BinaryHeap<Neighbor>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let cand = Neighbor {
                        index: i,
                        dist_sq: dist_sq(q, &self.points[i]),
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("non-empty heap") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn_node(near, q, k, heap);
                // Equal distance must still be explored: a lower index may tie.
                if heap.len() < k || diff * diff <= heap.peek().expect("non-empty heap").dist_sq {
                    self.knn_node(far, q, k, heap);
                }
            }
        }
    }

    /// All points with distance `≤ radius`, closest first.
    pub fn radius(&self, query: &Point3, radius: f64) -> Vec<Neighbor> {
        let mut out = Vec::new();
        if radius < 0.0 || radius.is_nan() {
            return out;
        }
        self.radius_node(0, query, radius * radius, &mut out);
        out.sort_unstable();
        out
    }

    fn radius_node(&self, node: usize, q: &Point3, r_sq: f64, out: &mut Vec<Neighbor>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let d = dist_sq(q, &self.points[i]);
                    if d <= r_sq {
                        out.push(Neighbor { index: i, dist_sq: d });
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.radius_node(near, q, r_sq, out);
                if diff * diff <= r_sq {
                    self.radius_node(far, q, r_sq, out);
                }
            }
        }
    }
}

/// Brute-force k nearest neighbours with the same ordering contract.
pub fn brute_force_knn(points: &[Point3], query: &Point3, k: usize) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> = points
        .iter()
        .enumerate()
        .map(|(index, p)| Neighbor {
            index,
            dist_sq: dist_sq(query, p),
        })
        .collect();
    all.sort_unstable();
    all.truncate(k);
    all
}

/// Mean distance from each point to its nearest other point.
pub fn mean_spacing(cloud: &PointCloud) -> Result<f64> {
    use rayon::prelude::*;
    if cloud.len() < 2 {
        return Err(Error::EmptyInput);
    }
    let index = SpatialIndex::build(cloud)?;
    // Summed sequentially: a parallel float reduction depends on the split.
    let gaps: Vec<f64> = cloud
        .points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            index
                .knn(p, 2)
                .into_iter()
                .find(|n| n.index != i)
                .map_or(0.0, |n| n.distance())
        })
        .collect();
    Ok(gaps.iter().sum::<f64>() / cloud.len() as f64)
}
