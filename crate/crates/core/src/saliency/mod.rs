//! 3D saliency maps.
//!
//! Each projected texture goes through a 2D saliency model, is weighted by
//! a softmax over negated pixel depths (nearer pixels weigh more, weights
//! sum to one per view), and the enhanced pixel values are averaged back
//! onto the points that produced them.

mod spectral;

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::grid::Grid;
use crate::neighborhood::SpatialIndex;
use crate::pnm;
use crate::projection::{project, visible_points, ProjectedView, ProjectionConfig};
use crate::{Error, Result};

pub use spectral::SpectralResidual;

/// A 2D saliency model. Implementations return a raster with the view's
/// dimensions holding finite, non-negative values; scale does not matter
/// since [`saliency_2d`] min-max normalizes over occupied pixels.
pub trait SaliencyModel: Sync {
    fn raw_saliency(&self, view: &ProjectedView) -> Result<Grid<f64>>;
}

/// Every occupied pixel is equally salient.
#[derive(Debug, Clone, Copy, Default)]
pub struct FlatSaliency;

impl SaliencyModel for FlatSaliency {
    fn raw_saliency(&self, view: &ProjectedView) -> Result<Grid<f64>> {
        Ok(view.point_index.map(|p| if p.is_some() { 1.0 } else { 0.0 }))
    }
}

/// Precomputed per-view rasters read from `<dir>/<view-index>.pgm`.
#[derive(Debug, Clone)]
pub struct ExternalRasters {
    pub dir: PathBuf,
}

impl SaliencyModel for ExternalRasters {
    fn raw_saliency(&self, view: &ProjectedView) -> Result<Grid<f64>> {
        let path = self.dir.join(format!("{}.pgm", view.index));
        let raster = pnm::read_pgm_unit(&path)?;
        if (raster.width(), raster.height()) != (view.width(), view.height()) {
            return Err(Error::Saliency(format!(
                "{} is {}x{} but view {} is {}x{}",
                path.display(),
                raster.width(),
                raster.height(),
                view.index,
                view.width(),
                view.height()
            )));
        }
        Ok(raster)
    }
}

/// Backend selection, serializable so reports can echo it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SaliencyBackend {
    SpectralResidual(SpectralResidual),
    Flat,
    ExternalFile { dir: PathBuf },
}

impl Default for SaliencyBackend {
    fn default() -> Self {
        SaliencyBackend::SpectralResidual(SpectralResidual::default())
    }
}

impl SaliencyModel for SaliencyBackend {
    fn raw_saliency(&self, view: &ProjectedView) -> Result<Grid<f64>> {
        match self {
            SaliencyBackend::SpectralResidual(sr) => sr.raw_saliency(view),
            SaliencyBackend::Flat => FlatSaliency.raw_saliency(view),
            SaliencyBackend::ExternalFile { dir } => ExternalRasters { dir: dir.clone() }.raw_saliency(view),
        }
    }
}

/// Per-point saliency values, finite and non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyField {
    values: Vec<f64>,
}

impl SaliencyField {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Saliency(format!("saliency value {} at point {i} is invalid", values[i])));
        }
        Ok(Self { values })
    }

    /// The same value for every point.
    pub fn uniform(len: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; len])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthWeightParams {
    /// Decay length of the depth weights, in cloud units.
    pub sigma_s: f64,
}

impl DepthWeightParams {
    /// One tenth of the longest bounding-box side. A cloud whose points all
    /// coincide projects to single-pixel views where the weight is 1 for any
    /// decay length, so it gets `sigma_s = 1`.
    pub fn auto(cloud: &PointCloud) -> Self {
        let side = cloud.bounding_box().max_side();
        Self { sigma_s: if side > 0.0 { side / 10.0 } else { 1.0 } }
    }

    fn validate(&self) -> Result<()> {
        if self.sigma_s.is_finite() && self.sigma_s > 0.0 {
            Ok(())
        } else {
            Err(Error::Parameter(format!("sigma_s must be positive, got {}", self.sigma_s)))
        }
    }
}

/// Runs the model on one view and min-max normalizes the result to `[0, 1]`
/// over occupied pixels. Empty pixels are 0. If every occupied pixel has
/// the same raw value, all of them become 1.
pub fn saliency_2d<M: SaliencyModel + ?Sized>(view: &ProjectedView, model: &M) -> Result<Grid<f64>> {
    let raw = model.raw_saliency(view)?;
    if (raw.width(), raw.height()) != (view.width(), view.height()) {
        return Err(Error::Saliency("saliency raster does not match the view dimensions".into()));
    }
    if let Some(bad) = raw.as_slice().iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::Saliency(format!("backend produced invalid saliency value {bad}")));
    }
    Ok(normalize_occupied(&raw, view))
}

pub(crate) fn normalize_occupied(raw: &Grid<f64>, view: &ProjectedView) -> Grid<f64> {
    let mut out = Grid::filled(view.width(), view.height(), 0.0);
    let (lo, hi) = view
        .occupied_offsets()
        .map(|o| raw.as_slice()[o])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    for o in view.occupied_offsets() {
        out.as_mut_slice()[o] = if hi > lo { (raw.as_slice()[o] - lo) / (hi - lo) } else { 1.0 };
    }
    out
}

/// Depth weights `exp(-d_i/σ) / Σ_j exp(-d_j/σ)` over the occupied pixels
/// of one view; zero on empty pixels.
///
/// Evaluated relative to the view's minimum depth, which leaves the ratios
/// unchanged and keeps the exponentials from underflowing.
pub fn depth_weights(view: &ProjectedView, params: &DepthWeightParams) -> Result<Grid<f64>> {
    params.validate()?;
    let depth = view.depth.as_slice();
    let d_min = view.occupied_offsets().map(|o| depth[o]).fold(f64::INFINITY, f64::min);
    let mut weights = Grid::filled(view.width(), view.height(), 0.0);
    let mut total = 0.0;
    for o in view.occupied_offsets() {
        let e = (-(depth[o] - d_min) / params.sigma_s).exp();
        weights.as_mut_slice()[o] = e;
        total += e;
    }
    for o in view.occupied_offsets() {
        weights.as_mut_slice()[o] /= total;
    }
    Ok(weights)
}

/// Multiplies the 2D saliency of each occupied pixel by its depth weight.
pub fn depth_enhance(
    saliency: &Grid<f64>,
    view: &ProjectedView,
    params: &DepthWeightParams,
) -> Result<Grid<f64>> {
    if (saliency.width(), saliency.height()) != (view.width(), view.height()) {
        return Err(Error::Saliency("saliency raster does not match the view dimensions".into()));
    }
    let mut out = depth_weights(view, params)?;
    for o in view.occupied_offsets() {
        out.as_mut_slice()[o] *= saliency.as_slice()[o];
    }
    Ok(out)
}

/// Everything the saliency pipeline produced for one cloud.
#[derive(Debug, Clone)]
pub struct SaliencyMaps {
    pub views: Vec<ProjectedView>,
    /// Normalized 2D saliency per view.
    pub saliency_2d: Vec<Grid<f64>>,
    /// Depth-enhanced saliency per view.
    pub enhanced: Vec<Grid<f64>>,
    pub field: SaliencyField,
    /// Points that were occluded in every view and took their nearest
    /// visible neighbour's value.
    pub filled: usize,
}

pub fn saliency_maps<M: SaliencyModel + ?Sized>(
    cloud: &PointCloud,
    config: &ProjectionConfig,
    model: &M,
    params: &DepthWeightParams,
) -> Result<SaliencyMaps> {
    params.validate()?;
    let views = project(cloud, config)?;
    let per_view: Vec<(Grid<f64>, Grid<f64>)> = views
        .par_iter()
        .map(|view| {
            let s = saliency_2d(view, model)?;
            let e = depth_enhance(&s, view, params)?;
            Ok((s, e))
        })
        .collect::<Result<_>>()?;
    let (saliency_2d, enhanced): (Vec<_>, Vec<_>) = per_view.into_iter().unzip();

    let visibility = visible_points(&views, cloud.len());
    let mut values = vec![0.0; cloud.len()];
    let mut seen = Vec::with_capacity(cloud.len());
    for (i, pixels) in visibility.iter().enumerate() {
        if pixels.is_empty() {
            continue;
        }
        let sum: f64 = pixels.iter().map(|px| *enhanced[px.view].get(px.u, px.v)).sum();
        values[i] = sum / pixels.len() as f64;
        seen.push(i);
    }

    let filled = cloud.len() - seen.len();
    if filled > 0 {
        let points = cloud.points();
        let index = SpatialIndex::with_ids(seen.iter().map(|&i| points[i].position).collect(), seen);
        for (i, pixels) in visibility.iter().enumerate() {
            if pixels.is_empty() {
                let nearest = index.nearest(&points[i].position, 1)[0].id;
                values[i] = values[nearest];
            }
        }
    }

    Ok(SaliencyMaps { views, saliency_2d, enhanced, field: SaliencyField::new(values)?, filled })
}

/// Projects the cloud, runs the 2D model on every view, applies depth
/// weighting, and averages each point's enhanced pixels into its saliency.
pub fn build_saliency_field<M: SaliencyModel + ?Sized>(
    cloud: &PointCloud,
    config: &ProjectionConfig,
    model: &M,
    params: &DepthWeightParams,
) -> Result<SaliencyField> {
    Ok(saliency_maps(cloud, config, model, params)?.field)
}

/// Returns a copy of `cloud` carrying `field` as its saliency channel.
pub fn attach_saliency(cloud: &PointCloud, field: &SaliencyField) -> Result<PointCloud> {
    cloud.without_saliency().set_saliency(field.values().to_vec())
}
