//! Orthographic projection of a cloud onto the six axis-aligned cube faces.
//!
//! Every view shares one square pixel size, `max bbox side / resolution`,
//! so the longest box side spans `resolution` pixels. A z-buffer keeps the
//! point nearest to the view plane in each pixel (lowest point index on
//! exact ties). The depth of an occupied pixel is `depth_offset` plus the
//! winning point's distance from the cloud's extreme plane along the view
//! axis, so the closest point of every view sits at exactly `depth_offset`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cloud::PointCloud;
use crate::grid::Grid;
use crate::{Error, Result};

pub const VIEW_COUNT: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionConfig {
    /// Number of views. Only the six cube faces are supported.
    pub views: usize,
    /// Pixels along the longest bounding-box side.
    pub resolution: usize,
    /// Distance between each view plane and the nearest point, in cloud units.
    pub depth_offset: f64,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self { views: VIEW_COUNT, resolution: 512, depth_offset: 10.0 }
    }
}

impl ProjectionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.views != VIEW_COUNT {
            return Err(Error::Config(format!("only {VIEW_COUNT} views are supported, got {}", self.views)));
        }
        if self.resolution == 0 {
            return Err(Error::Config("projection resolution must be positive".into()));
        }
        if !(self.depth_offset.is_finite() && self.depth_offset > 0.0) {
            return Err(Error::Config(format!("depth offset must be positive, got {}", self.depth_offset)));
        }
        Ok(())
    }
}

/// Viewing direction. `PosZ` looks at the cloud from the +z side, so the
/// point with the largest z wins each pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ViewAxis {
    PosX,
    NegX,
    PosY,
    NegY,
    PosZ,
    NegZ,
}

impl ViewAxis {
    pub const ALL: [ViewAxis; VIEW_COUNT] =
        [ViewAxis::PosX, ViewAxis::NegX, ViewAxis::PosY, ViewAxis::NegY, ViewAxis::PosZ, ViewAxis::NegZ];

    /// Coordinate index along the viewing direction.
    pub fn depth_axis(self) -> usize {
        match self {
            ViewAxis::PosX | ViewAxis::NegX => 0,
            ViewAxis::PosY | ViewAxis::NegY => 1,
            ViewAxis::PosZ | ViewAxis::NegZ => 2,
        }
    }

    /// Coordinate indices mapped to raster columns and rows.
    pub fn image_axes(self) -> (usize, usize) {
        match self.depth_axis() {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        }
    }

    pub fn is_positive(self) -> bool {
        matches!(self, ViewAxis::PosX | ViewAxis::PosY | ViewAxis::PosZ)
    }

    pub fn name(self) -> &'static str {
        match self {
            ViewAxis::PosX => "+x",
            ViewAxis::NegX => "-x",
            ViewAxis::PosY => "+y",
            ViewAxis::NegY => "-y",
            ViewAxis::PosZ => "+z",
            ViewAxis::NegZ => "-z",
        }
    }
}

/// One projected view. The three rasters share dimensions; a pixel is
/// occupied iff `point_index` holds a point there, and the texture and depth
/// values of empty pixels are black and zero respectively.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedView {
    pub index: usize,
    pub axis: ViewAxis,
    pub texture: Grid<[u8; 3]>,
    pub depth: Grid<f64>,
    pub point_index: Grid<Option<u32>>,
    pub occupied: usize,
}

impl ProjectedView {
    pub fn width(&self) -> usize {
        self.texture.width()
    }

    pub fn height(&self) -> usize {
        self.texture.height()
    }

    pub fn is_occupied(&self, u: usize, v: usize) -> bool {
        self.point_index.get(u, v).is_some()
    }

    /// Raster offsets of occupied pixels in row-major order.
    pub fn occupied_offsets(&self) -> impl Iterator<Item = usize> + '_ {
        self.point_index.as_slice().iter().enumerate().filter_map(|(o, p)| p.map(|_| o))
    }
}

/// Projects the cloud onto the six cube faces.
pub fn project(cloud: &PointCloud, config: &ProjectionConfig) -> Result<Vec<ProjectedView>> {
    config.validate()?;
    let bbox = cloud.bounding_box();
    let max_side = bbox.max_side();
    let res = config.resolution;
    // Degenerate boxes collapse to single-pixel views.
    let pixel = if max_side > 0.0 { max_side / res as f64 } else { 0.0 };
    let extent = bbox.extent();
    let span = |axis: usize| -> usize {
        if pixel > 0.0 {
            ((extent[axis] / pixel).ceil() as usize).clamp(1, res)
        } else {
            1
        }
    };
    let cell = |coord: f64, axis: usize, len: usize| -> usize {
        if pixel > 0.0 {
            (((coord - bbox.min_corner[axis]) / pixel).floor() as usize).min(len - 1)
        } else {
            0
        }
    };

    let views = ViewAxis::ALL
        .par_iter()
        .enumerate()
        .map(|(index, &axis)| {
            let (ua, va) = axis.image_axes();
            let da = axis.depth_axis();
            let (w, h) = (span(ua), span(va));
            let mut texture = Grid::filled(w, h, [0u8; 3]);
            let mut depth = Grid::filled(w, h, 0.0f64);
            let mut point_index: Grid<Option<u32>> = Grid::filled(w, h, None);
            let mut occupied = 0;
            for (i, p) in cloud.points().iter().enumerate() {
                let pos = &p.position;
                let d = config.depth_offset
                    + if axis.is_positive() {
                        bbox.max_corner[da] - pos[da]
                    } else {
                        pos[da] - bbox.min_corner[da]
                    };
                let (u, v) = (cell(pos[ua], ua, w), cell(pos[va], va, h));
                let o = point_index.offset(u, v);
                let slot = &mut point_index.as_mut_slice()[o];
                let wins = match slot {
                    None => {
                        occupied += 1;
                        true
                    }
                    Some(_) => d < depth.as_slice()[o],
                };
                if wins {
                    *slot = Some(i as u32);
                    depth.as_mut_slice()[o] = d;
                    texture.as_mut_slice()[o] = p.color;
                }
            }
            ProjectedView { index, axis, texture, depth, point_index, occupied }
        })
        .collect();
    Ok(views)
}

/// A pixel in one of the projected views.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRef {
    pub view: usize,
    pub u: usize,
    pub v: usize,
}

/// Inverts the `point_index` rasters: for each point, every (view, pixel)
/// where it is visible. Occluded points get an empty list.
pub fn visible_points(views: &[ProjectedView], n_points: usize) -> Vec<Vec<PixelRef>> {
    let mut map = vec![Vec::new(); n_points];
    for view in views {
        for o in view.occupied_offsets() {
            let id = view.point_index.as_slice()[o].expect("occupied") as usize;
            let (u, v) = view.point_index.coords(o);
            map[id].push(PixelRef { view: view.index, u, v });
        }
    }
    map
}
