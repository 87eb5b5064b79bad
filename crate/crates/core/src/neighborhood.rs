//! Exact spatial search: a kd-tree answering closed-ball and k-nearest
//! queries, plus the global neighbourhood radius used by the metric.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use crate::cloud::{distance_sq, PointCloud};
use crate::{Error, Result};

const LEAF_SIZE: usize = 16;

#[derive(Debug, Clone)]
struct Node {
    lo: [f64; 3],
    hi: [f64; 3],
    start: usize,
    end: usize,
    /// Child node indices; `None` for leaves.
    children: Option<(usize, usize)>,
}

/// Kd-tree over a fixed set of positions. Results are exact and reported
/// by point identifier; ties in distance are ordered by identifier.
#[derive(Debug, Clone)]
pub struct SpatialIndex {
    positions: Vec<[f64; 3]>,
    ids: Vec<usize>,
    /// Permutation of `0..positions.len()`, grouped by leaf.
    order: Vec<usize>,
    nodes: Vec<Node>,
}

/// Distance-ordered neighbour entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub distance: f64,
}

#[derive(Clone, Copy, PartialEq)]
struct HeapEntry {
    dist_sq: f64,
    id: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist_sq.total_cmp(&other.dist_sq).then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn box_distance_sq(lo: &[f64; 3], hi: &[f64; 3], p: &[f64; 3]) -> f64 {
    let mut d = [0.0; 3];
    for a in 0..3 {
        d[a] = if p[a] < lo[a] {
            lo[a] - p[a]
        } else if p[a] > hi[a] {
            p[a] - hi[a]
        } else {
            0.0
        };
    }
    d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
}

impl SpatialIndex {
    /// Indexes `positions`, identifying each by its slice position.
    pub fn new(positions: Vec<[f64; 3]>) -> Self {
        let ids = (0..positions.len()).collect();
        Self::with_ids(positions, ids)
    }

    /// Indexes `positions`, reporting `ids[i]` for `positions[i]`.
    pub fn with_ids(positions: Vec<[f64; 3]>, ids: Vec<usize>) -> Self {
        assert_eq!(positions.len(), ids.len());
        let mut index = SpatialIndex {
            order: (0..positions.len()).collect(),
            positions,
            ids,
            nodes: Vec::new(),
        };
        if !index.positions.is_empty() {
            index.build(0, index.positions.len());
        }
        index
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for &i in &self.order[start..end] {
            let p = &self.positions[i];
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
        }
        let node = self.nodes.len();
        self.nodes.push(Node { lo, hi, start, end, children: None });
        if end - start > LEAF_SIZE {
            let axis = (0..3)
                .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
                .unwrap();
            let mid = start + (end - start) / 2;
            let positions = &self.positions;
            self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
                positions[a][axis].total_cmp(&positions[b][axis])
            });
            let left = self.build(start, mid);
            let right = self.build(mid, end);
            self.nodes[node].children = Some((left, right));
        }
        node
    }

    /// Identifiers of every indexed point `p` with `‖p − center‖₂ ≤ radius`,
    /// ascending.
    pub fn within(&self, center: &[f64; 3], radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if self.nodes.is_empty() || radius < 0.0 || radius.is_nan() {
            return out;
        }
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            // Rounding is monotone, so the box bound never exceeds a member's distance.
            if box_distance_sq(&node.lo, &node.hi, center).sqrt() > radius {
                continue;
            }
            match node.children {
                Some((l, r)) => {
                    stack.push(l);
                    stack.push(r);
                }
                None => {
                    for &i in &self.order[node.start..node.end] {
                        if distance_sq(&self.positions[i], center).sqrt() <= radius {
                            out.push(self.ids[i]);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// The `k` nearest points to `center`, ordered by (distance, id).
    pub fn nearest(&self, center: &[f64; 3], k: usize) -> Vec<Neighbor> {
        if k == 0 || self.nodes.is_empty() {
            return Vec::new();
        }
        let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::with_capacity(k + 1);
        let mut stack = vec![0usize];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if heap.len() == k {
                let worst = heap.peek().unwrap().dist_sq;
                if box_distance_sq(&node.lo, &node.hi, center) > worst {
                    continue;
                }
            }
            match node.children {
                Some((l, r)) => {
                    let dl = box_distance_sq(&self.nodes[l].lo, &self.nodes[l].hi, center);
                    let dr = box_distance_sq(&self.nodes[r].lo, &self.nodes[r].hi, center);
                    // nearer child popped first
                    if dl <= dr {
                        stack.push(r);
                        stack.push(l);
                    } else {
                        stack.push(l);
                        stack.push(r);
                    }
                }
                None => {
                    for &i in &self.order[node.start..node.end] {
                        let entry = HeapEntry {
                            dist_sq: distance_sq(&self.positions[i], center),
                            id: self.ids[i],
                        };
                        if heap.len() < k {
                            heap.push(entry);
                        } else if entry < *heap.peek().unwrap() {
                            heap.pop();
                            heap.push(entry);
                        }
                    }
                }
            }
        }
        heap.into_sorted_vec()
            .into_iter()
            .map(|e| Neighbor { id: e.id, distance: e.dist_sq.sqrt() })
            .collect()
    }
}

/// Builds an exact spatial index over the cloud's positions.
pub fn build_index(cloud: &PointCloud) -> SpatialIndex {
    SpatialIndex::new(cloud.positions().copied().collect())
}

/// All points within the closed ball, ascending by identifier.
pub fn ball_query(index: &SpatialIndex, center: &[f64; 3], radius: f64) -> Vec<usize> {
    index.within(center, radius)
}

/// Mean distance from each reference point to its `k`-th nearest distorted
/// point. Neighbours are ranked purely by distance, so a coincident
/// distorted point counts as the first.
pub fn estimate_radius(reference: &PointCloud, distorted: &PointCloud, k: usize) -> Result<f64> {
    estimate_radius_with_index(reference, &build_index(distorted), k)
}

pub(crate) fn estimate_radius_with_index(
    reference: &PointCloud,
    distorted: &SpatialIndex,
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::Config("k for the radius estimate must be at least 1".into()));
    }
    if distorted.len() < k {
        return Err(Error::NotEnoughPoints { k, m: distorted.len() });
    }
    let kth: Vec<f64> = reference
        .points()
        .par_iter()
        .map(|p| distorted.nearest(&p.position, k)[k - 1].distance)
        .collect();
    Ok(kth.iter().sum::<f64>() / kth.len() as f64)
}

/// Spatial indices over a reference/distorted pair and the global ball radius.
#[derive(Debug, Clone)]
pub struct NeighborhoodContext {
    pub radius: f64,
    pub reference: SpatialIndex,
    pub distorted: SpatialIndex,
}

impl NeighborhoodContext {
    pub fn new(reference: &PointCloud, distorted: &PointCloud, k: usize) -> Result<Self> {
        let dist_index = build_index(distorted);
        let radius = estimate_radius_with_index(reference, &dist_index, k)?;
        Ok(Self { radius, reference: build_index(reference), distorted: dist_index })
    }

    /// Returns `(N^X, N^Y)` for a ball centered at `center`.
    pub fn patches(&self, center: &[f64; 3]) -> (Vec<usize>, Vec<usize>) {
        (self.reference.within(center, self.radius), self.distorted.within(center, self.radius))
    }
}
