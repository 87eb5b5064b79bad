//! The quality score.
//!
//! For each reference point `x_i`, closed balls of the global radius `r`
//! centered at `x_i` are taken in both clouds. Three local similarities
//! compare the two patches:
//!
//! * geometry: mean and (population) variance of neighbour distances to `x_i`;
//! * color: mean absolute luminance deviation from `x_i`'s luminance;
//! * saliency: mean absolute saliency deviation from `x_i`'s saliency.
//!
//! Distorted-side statistics are always measured against the reference
//! center `x_i`. Each pair of statistics is compared with the SSIM-style
//! term `(2ab + t) / (a² + b² + t)`, the enabled terms are multiplied into
//! a local index, and the local indices are pooled either by plain mean or
//! by the reference saliency as weights.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cloud::{distance, PointCloud};
use crate::neighborhood::NeighborhoodContext;
use crate::projection::ProjectionConfig;
use crate::saliency::{build_saliency_field, DepthWeightParams, SaliencyBackend, SaliencyField};
use crate::{Error, Result};

/// Luma weights applied to 8-bit RGB, plus the offset of 16.
pub const LUMA_COEFFICIENTS: [f64; 3] = [0.257, 0.504, 0.098];
pub const LUMA_OFFSET: f64 = 16.0;

pub const DEFAULT_T1: f64 = 0.001;
pub const DEFAULT_T2: f64 = 1e-14;
pub const DEFAULT_KNN_K: usize = 10;

/// Which local similarity terms enter the local index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureSet {
    pub geometry: bool,
    pub color: bool,
    pub saliency: bool,
}

impl FeatureSet {
    pub const ALL: FeatureSet = FeatureSet { geometry: true, color: true, saliency: true };

    pub fn is_empty(&self) -> bool {
        !(self.geometry || self.color || self.saliency)
    }
}

impl Default for FeatureSet {
    fn default() -> Self {
        Self::ALL
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = [(self.geometry, "F1"), (self.color, "F2"), (self.saliency, "F3")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, n)| *n)
            .collect();
        f.write_str(&names.join("+"))
    }
}

/// Parses lists such as `F1+F2`, `f1,f3` or `F1 F2 F3`.
impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut set = FeatureSet { geometry: false, color: false, saliency: false };
        for token in s.split(|c: char| c == '+' || c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            match token.to_ascii_uppercase().as_str() {
                "F1" => set.geometry = true,
                "F2" => set.color = true,
                "F3" => set.saliency = true,
                other => return Err(Error::Config(format!("unknown feature {other:?}; expected F1, F2 or F3"))),
            }
        }
        if set.is_empty() {
            return Err(Error::Config("at least one feature must be enabled".into()));
        }
        Ok(set)
    }
}

impl Serialize for FeatureSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FeatureSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Pooling {
    /// Unweighted mean of the local indices.
    #[serde(rename = "AVE")]
    Ave,
    /// Mean weighted by the reference saliency.
    #[default]
    #[serde(rename = "SAW")]
    Saw,
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pooling::Ave => "AVE",
            Pooling::Saw => "SAW",
        })
    }
}

impl FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "AVE" => Ok(Pooling::Ave),
            "SAW" => Ok(Pooling::Saw),
            _ => Err(Error::Config(format!("unknown pooling {s:?}; expected AVE or SAW"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    /// Stabilizer for the geometry and color terms.
    pub t1: f64,
    /// Stabilizer for the saliency term.
    pub t2: f64,
    pub features: FeatureSet,
    pub pooling: Pooling,
    /// Neighbour rank used for the radius estimate.
    pub knn_k: usize,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            t1: DEFAULT_T1,
            t2: DEFAULT_T2,
            features: FeatureSet::ALL,
            pooling: Pooling::Saw,
            knn_k: DEFAULT_KNN_K,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("t1", self.t1), ("t2", self.t2)] {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {t}")));
            }
        }
        if self.features.is_empty() {
            return Err(Error::Config("at least one feature must be enabled".into()));
        }
        if self.knn_k == 0 {
            return Err(Error::Config("knn k must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn luminance(color: [u8; 3]) -> f64 {
    LUMA_COEFFICIENTS[0] * color[0] as f64
        + LUMA_COEFFICIENTS[1] * color[1] as f64
        + LUMA_COEFFICIENTS[2] * color[2] as f64
        + LUMA_OFFSET
}

/// Mean and population variance of the distances from `center` to each
/// neighbour. Empty neighbourhoods give `(0, 0)`.
pub fn geometry_stats<'a>(center: &[f64; 3], neighbors: impl IntoIterator<Item = &'a [f64; 3]>) -> (f64, f64) {
    let distances: Vec<f64> = neighbors.into_iter().map(|p| distance(p, center)).collect();
    if distances.is_empty() {
        return (0.0, 0.0);
    }
    let n = distances.len() as f64;
    let mean = distances.iter().sum::<f64>() / n;
    let var = distances.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Mean absolute deviation of the neighbour values from `center_value`;
/// 0 for an empty list.
pub fn contrast_stat(center_value: f64, neighbor_values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = neighbor_values
        .into_iter()
        .fold((0.0, 0usize), |(s, n), v| (s + (v - center_value).abs(), n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn similarity_term(a: f64, b: f64, t: f64) -> f64 {
    (2.0 * a * b + t) / (a * a + b * b + t)
}

/// Local statistics of one patch, measured against the reference center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PatchStats {
    pub count: usize,
    pub mu_geo: f64,
    pub sigma_geo: f64,
    pub mu_lum: f64,
    pub mu_sal: f64,
}

/// Per-reference-point similarity values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointScore {
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    /// Product of the enabled terms.
    pub sim: f64,
    pub reference: PatchStats,
    pub distorted: PatchStats,
}

/// Per-cloud data shared by every local computation.
pub struct CloudView<'a> {
    pub cloud: &'a PointCloud,
    pub luminance: Vec<f64>,
    pub saliency: &'a [f64],
}

impl<'a> CloudView<'a> {
    pub fn new(cloud: &'a PointCloud, saliency: &'a SaliencyField) -> Result<Self> {
        if saliency.len() != cloud.len() {
            return Err(Error::LengthMismatch { expected: cloud.len(), found: saliency.len() });
        }
        Ok(Self {
            cloud,
            luminance: cloud.points().iter().map(|p| luminance(p.color)).collect(),
            saliency: saliency.values(),
        })
    }

    fn patch_stats(&self, neighbors: &[usize], center: &[f64; 3], center_lum: f64, center_sal: f64) -> PatchStats {
        let points = self.cloud.points();
        let (mu_geo, sigma_geo) = geometry_stats(center, neighbors.iter().map(|&j| &points[j].position));
        PatchStats {
            count: neighbors.len(),
            mu_geo,
            sigma_geo,
            mu_lum: contrast_stat(center_lum, neighbors.iter().map(|&j| self.luminance[j])),
            mu_sal: contrast_stat(center_sal, neighbors.iter().map(|&j| self.saliency[j])),
        }
    }
}

/// Similarity terms for reference point `i` given its two patches.
pub fn point_features(
    i: usize,
    ref_neighbors: &[usize],
    dist_neighbors: &[usize],
    reference: &CloudView<'_>,
    distorted: &CloudView<'_>,
    config: &MetricConfig,
) -> PointScore {
    let center = &reference.cloud.points()[i].position;
    let (lum, sal) = (reference.luminance[i], reference.saliency[i]);
    let rs = reference.patch_stats(ref_neighbors, center, lum, sal);
    let ds = distorted.patch_stats(dist_neighbors, center, lum, sal);
    let f1 = similarity_term(rs.mu_geo, ds.mu_geo, config.t1) * similarity_term(rs.sigma_geo, ds.sigma_geo, config.t1);
    let f2 = similarity_term(rs.mu_lum, ds.mu_lum, config.t1);
    let f3 = similarity_term(rs.mu_sal, ds.mu_sal, config.t2);
    let mut sim = 1.0;
    if config.features.geometry {
        sim *= f1;
    }
    if config.features.color {
        sim *= f2;
    }
    if config.features.saliency {
        sim *= f3;
    }
    PointScore { f1, f2, f3, sim, reference: rs, distorted: ds }
}

/// Pools local indices into the final score. Sums run in point order.
pub fn pool(point_scores: &[PointScore], ref_saliency: &SaliencyField, pooling: Pooling) -> Result<f64> {
    if point_scores.is_empty() {
        return Err(Error::Pooling("no local scores to pool".into()));
    }
    match pooling {
        Pooling::Ave => Ok(point_scores.iter().map(|s| s.sim).sum::<f64>() / point_scores.len() as f64),
        Pooling::Saw => {
            if ref_saliency.len() != point_scores.len() {
                return Err(Error::LengthMismatch { expected: point_scores.len(), found: ref_saliency.len() });
            }
            let total: f64 = ref_saliency.values().iter().sum();
            if total <= 0.0 {
                return Err(Error::Pooling(
                    "reference saliency is zero everywhere; saliency-weighted pooling is undefined, use AVE".into(),
                ));
            }
            let weighted: f64 = point_scores.iter().zip(ref_saliency.values()).map(|(s, w)| s.sim * w).sum();
            Ok(weighted / total)
        }
    }
}

/// Saliency settings used by [`compute_pqsm`], echoed in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyEcho {
    pub projection: ProjectionConfig,
    pub backend: SaliencyBackend,
    pub sigma_s_reference: f64,
    pub sigma_s_distorted: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub saliency_ms: f64,
    pub metric_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub q: f64,
    pub radius: f64,
    pub n_reference: usize,
    pub n_distorted: usize,
    pub config: MetricConfig,
    pub saliency: Option<SaliencyEcho>,
    pub timing: Option<Timing>,
    pub point_scores: Vec<PointScore>,
}

impl ScoreReport {
    fn mean_of(&self, f: impl Fn(&PointScore) -> f64) -> f64 {
        self.point_scores.iter().map(f).sum::<f64>() / self.point_scores.len() as f64
    }

    pub fn mean_f1(&self) -> f64 {
        self.mean_of(|s| s.f1)
    }

    pub fn mean_f2(&self) -> f64 {
        self.mean_of(|s| s.f2)
    }

    pub fn mean_f3(&self) -> f64 {
        self.mean_of(|s| s.f3)
    }

    /// Key–value header followed by a whitespace-separated per-point table.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "q = {:.9}", self.q);
        let _ = writeln!(out, "radius = {}", self.radius);
        let _ = writeln!(out, "n_reference = {}", self.n_reference);
        let _ = writeln!(out, "n_distorted = {}", self.n_distorted);
        let _ = writeln!(out, "t1 = {:e}", self.config.t1);
        let _ = writeln!(out, "t2 = {:e}", self.config.t2);
        let _ = writeln!(out, "features = {}", self.config.features);
        let _ = writeln!(out, "pooling = {}", self.config.pooling);
        let _ = writeln!(out, "knn_k = {}", self.config.knn_k);
        if let Some(s) = &self.saliency {
            let _ = writeln!(out, "views = {}", s.projection.views);
            let _ = writeln!(out, "resolution = {}", s.projection.resolution);
            let _ = writeln!(out, "depth_offset = {}", s.projection.depth_offset);
            let backend = match &s.backend {
                SaliencyBackend::SpectralResidual(_) => "spectral-residual".to_string(),
                SaliencyBackend::Flat => "flat".to_string(),
                SaliencyBackend::ExternalFile { dir } => format!("file:{}", dir.display()),
            };
            let _ = writeln!(out, "saliency_backend = {backend}");
            let _ = writeln!(out, "sigma_s_reference = {}", s.sigma_s_reference);
            let _ = writeln!(out, "sigma_s_distorted = {}", s.sigma_s_distorted);
        }
        let _ = writeln!(out, "mean_f1 = {:.9}", self.mean_f1());
        let _ = writeln!(out, "mean_f2 = {:.9}", self.mean_f2());
        let _ = writeln!(out, "mean_f3 = {:.9}", self.mean_f3());
        let _ = writeln!(out, "[points]");
        let _ = writeln!(
            out,
            "i f1 f2 f3 sim n_ref n_dist mu_geo_ref mu_geo_dist sigma_geo_ref sigma_geo_dist mu_lum_ref mu_lum_dist mu_sal_ref mu_sal_dist"
        );
        for (i, s) in self.point_scores.iter().enumerate() {
            let (r, d) = (&s.reference, &s.distorted);
            let _ = writeln!(
                out,
                "{i} {:e} {:e} {:e} {:e} {} {} {:e} {:e} {:e} {:e} {:e} {:e} {:e} {:e}",
                s.f1, s.f2, s.f3, s.sim, r.count, d.count, r.mu_geo, d.mu_geo, r.sigma_geo, d.sigma_geo, r.mu_lum,
                d.mu_lum, r.mu_sal, d.mu_sal
            );
        }
        out
    }

    /// `ref,dist,r,Q,pooling,features` without a trailing newline.
    pub fn csv_record(&self, reference: &str, distorted: &str) -> String {
        format!(
            "{reference},{distorted},{},{:.9},{},{}",
            self.radius, self.q, self.config.pooling, self.config.features
        )
    }
}

/// Scores a pair given precomputed saliency fields for both clouds.
pub fn score_with_saliency(
    reference: &PointCloud,
    distorted: &PointCloud,
    ref_saliency: &SaliencyField,
    dist_saliency: &SaliencyField,
    config: &MetricConfig,
) -> Result<ScoreReport> {
    config.validate()?;
    let ref_view = CloudView::new(reference, ref_saliency)?;
    let dist_view = CloudView::new(distorted, dist_saliency)?;
    let context = NeighborhoodContext::new(reference, distorted, config.knn_k)?;

    let point_scores: Vec<PointScore> = (0..reference.len())
        .into_par_iter()
        .map(|i| {
            let (nx, ny) = context.patches(&reference.points()[i].position);
            point_features(i, &nx, &ny, &ref_view, &dist_view, config)
        })
        .collect();
    let q = pool(&point_scores, ref_saliency, config.pooling)?;

    Ok(ScoreReport {
        q,
        radius: context.radius,
        n_reference: reference.len(),
        n_distorted: distorted.len(),
        config: *config,
        saliency: None,
        timing: None,
        point_scores,
    })
}

/// Full pipeline: saliency fields for both clouds, radius estimate, local
/// similarities and pooling.
pub fn compute_pqsm(
    reference: &PointCloud,
    distorted: &PointCloud,
    projection: &ProjectionConfig,
    backend: &SaliencyBackend,
    config: &MetricConfig,
) -> Result<ScoreReport> {
    config.validate()?;
    projection.validate()?;
    let start = Instant::now();
    let ref_params = DepthWeightParams::auto(reference);
    let dist_params = DepthWeightParams::auto(distorted);
    let (ref_field, dist_field) = rayon::join(
        || build_saliency_field(reference, projection, backend, &ref_params),
        || build_saliency_field(distorted, projection, backend, &dist_params),
    );
    let (ref_field, dist_field) = (ref_field?, dist_field?);
    let saliency_done = Instant::now();

    let mut report = score_with_saliency(reference, distorted, &ref_field, &dist_field, config)?;
    let end = Instant::now();
    report.saliency = Some(SaliencyEcho {
        projection: *projection,
        backend: backend.clone(),
        sigma_s_reference: ref_params.sigma_s,
        sigma_s_distorted: dist_params.sigma_s,
    });
    report.timing = Some(Timing {
        saliency_ms: (saliency_done - start).as_secs_f64() * 1e3,
        metric_ms: (end - saliency_done).as_secs_f64() * 1e3,
    });
    Ok(report)
}
