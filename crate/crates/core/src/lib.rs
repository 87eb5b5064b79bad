//! Full-reference point cloud quality assessment driven by 3D saliency maps.
//!
//! The pipeline projects each cloud onto the six axis-aligned cube faces,
//! runs a 2D saliency model on every texture map, weights the result by
//! depth, and re-projects it onto the points. Local geometry, luminance and
//! saliency statistics are then compared over ball-query neighbourhoods and
//! pooled, weighted by the reference saliency, into a single score in (0, 1].
//!
//! ```no_run
//! use pqsm::{compute_pqsm, load_ply, MetricConfig, ProjectionConfig, SaliencyBackend};
//!
//! let reference = load_ply("reference.ply")?;
//! let distorted = load_ply("distorted.ply")?;
//! let report = compute_pqsm(
//!     &reference,
//!     &distorted,
//!     &ProjectionConfig::default(),
//!     &SaliencyBackend::default(),
//!     &MetricConfig::default(),
//! )?;
//! println!("Q = {:.6}", report.q);
//! # Ok::<(), pqsm::Error>(())
//! ```

pub mod cloud;
pub mod distortion;
mod error;
pub mod evaluation;
pub mod grid;
pub mod metric;
pub mod neighborhood;
pub mod ply;
pub mod pnm;
pub mod projection;
pub mod saliency;

pub use cloud::{BoundingBox, Point, PointCloud};
pub use error::{Error, Result};
pub use metric::{
    compute_pqsm, score_with_saliency, FeatureSet, MetricConfig, Pooling, ScoreReport,
};
pub use neighborhood::{ball_query, build_index, estimate_radius, NeighborhoodContext, SpatialIndex};
pub use ply::{load_ply, save_ply, PlyFormat};
pub use projection::{project, visible_points, ProjectedView, ProjectionConfig, ViewAxis};
pub use saliency::{
    attach_saliency, build_saliency_field, depth_enhance, saliency_2d, DepthWeightParams,
    SaliencyBackend, SaliencyField,
};
