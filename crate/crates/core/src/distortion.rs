//! Seeded synthetic distortions: Gaussian geometry noise, Gaussian color
//! noise and uniform random downsampling.
//!
//! The generator is ChaCha8 seeded from the spec's `seed`, so the same
//! (cloud, spec) pair produces bit-identical output on every platform.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cloud::{Point, PointCloud};
use crate::{Error, Result};

/// Downsampling below this many points would break the radius estimate.
pub const MIN_POINTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistortionKind {
    /// `level` is σ as a fraction of the longest bounding-box side.
    GaussianGeometry,
    /// `level` is σ in 8-bit channel units.
    GaussianColor,
    /// `level` is the fraction of points kept, in (0, 1].
    Downsample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec {
    pub kind: DistortionKind,
    pub level: f64,
    pub seed: u64,
}

impl DistortionSpec {
    pub fn new(kind: DistortionKind, level: f64, seed: u64) -> Self {
        Self { kind, level, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.level.is_finite() && self.level > 0.0) {
            return Err(Error::Parameter(format!("distortion level must be positive, got {}", self.level)));
        }
        if self.kind == DistortionKind::Downsample && self.level > 1.0 {
            return Err(Error::Parameter(format!("keep fraction must lie in (0, 1], got {}", self.level)));
        }
        Ok(())
    }
}

pub fn apply(cloud: &PointCloud, spec: &DistortionSpec) -> Result<PointCloud> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let points = match spec.kind {
        DistortionKind::GaussianGeometry => {
            let sigma = spec.level * cloud.bounding_box().max_side();
            let normal = Normal::new(0.0, sigma).map_err(|e| Error::Parameter(e.to_string()))?;
            cloud
                .points()
                .iter()
                .map(|p| {
                    let mut position = p.position;
                    for c in &mut position {
                        *c += normal.sample(&mut rng);
                    }
                    Point::new(position, p.color)
                })
                .collect()
        }
        DistortionKind::GaussianColor => {
            let normal = Normal::new(0.0, spec.level).map_err(|e| Error::Parameter(e.to_string()))?;
            cloud
                .points()
                .iter()
                .map(|p| {
                    let mut color = p.color;
                    for c in &mut color {
                        *c = (*c as f64 + normal.sample(&mut rng)).round().clamp(0.0, 255.0) as u8;
                    }
                    Point::new(p.position, color)
                })
                .collect()
        }
        DistortionKind::Downsample => {
            let n = cloud.len();
            let keep = ((spec.level * n as f64).ceil() as usize).min(n);
            if keep < MIN_POINTS {
                return Err(Error::Parameter(format!(
                    "downsampling {n} points to {keep} leaves fewer than {MIN_POINTS}"
                )));
            }
            let mut chosen = sample(&mut rng, n, keep).into_vec();
            chosen.sort_unstable();
            chosen.into_iter().map(|i| cloud.points()[i]).collect()
        }
    };
    PointCloud::new(points)
}
