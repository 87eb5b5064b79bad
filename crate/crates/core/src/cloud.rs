//! Point cloud data model.

use crate::{Error, Result};

/// A colored 3D point. Coordinates are kept at 64-bit precision whatever
/// the source file used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub position: [f64; 3],
    pub color: [u8; 3],
}

impl Point {
    pub fn new(position: [f64; 3], color: [u8; 3]) -> Self {
        Self { position, color }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        distance(&self.position, &other.position)
    }
}

#[inline]
pub(crate) fn distance_sq(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[inline]
pub(crate) fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    distance_sq(a, b).sqrt()
}

/// An ordered, non-empty set of colored points with an optional per-point
/// saliency channel.
///
/// Clouds are immutable once built; every constructor validates the
/// invariants (finite coordinates, matching and non-negative saliency).
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    points: Vec<Point>,
    saliency: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidCloud("a cloud needs at least one point".into()));
        }
        if let Some(i) = points.iter().position(|p| p.position.iter().any(|c| !c.is_finite())) {
            return Err(Error::InvalidCloud(format!("point {i} has a non-finite coordinate")));
        }
        Ok(Self { points, saliency: None })
    }

    pub fn with_saliency(points: Vec<Point>, saliency: Vec<f64>) -> Result<Self> {
        Self::new(points)?.set_saliency(saliency)
    }

    pub(crate) fn set_saliency(mut self, saliency: Vec<f64>) -> Result<Self> {
        if saliency.len() != self.points.len() {
            return Err(Error::LengthMismatch { expected: self.points.len(), found: saliency.len() });
        }
        if let Some(i) = saliency.iter().position(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::InvalidCloud(format!(
                "saliency value {} at point {i} is not a finite non-negative number",
                saliency[i]
            )));
        }
        self.saliency = Some(saliency);
        Ok(self)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn saliency(&self) -> Option<&[f64]> {
        self.saliency.as_deref()
    }

    pub fn without_saliency(&self) -> PointCloud {
        PointCloud { points: self.points.clone(), saliency: None }
    }

    pub fn positions(&self) -> impl Iterator<Item = &[f64; 3]> + '_ {
        self.points.iter().map(|p| &p.position)
    }

    pub fn bounding_box(&self) -> BoundingBox {
        bounding_box(self)
    }
}

/// Axis-aligned bounding box in cloud units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub min_corner: [f64; 3],
    pub max_corner: [f64; 3],
}

impl BoundingBox {
    pub fn extent(&self) -> [f64; 3] {
        [
            self.max_corner[0] - self.min_corner[0],
            self.max_corner[1] - self.min_corner[1],
            self.max_corner[2] - self.min_corner[2],
        ]
    }

    pub fn max_side(&self) -> f64 {
        let e = self.extent();
        e[0].max(e[1]).max(e[2])
    }

    pub fn contains(&self, p: &[f64; 3]) -> bool {
        (0..3).all(|a| self.min_corner[a] <= p[a] && p[a] <= self.max_corner[a])
    }
}

/// Componentwise min/max over every position in the cloud.
pub fn bounding_box(cloud: &PointCloud) -> BoundingBox {
    let first = cloud.points[0].position;
    let (min_corner, max_corner) =
        cloud.positions().fold((first, first), |(mut lo, mut hi), p| {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
            (lo, hi)
        });
    BoundingBox { min_corner, max_corner }
}
