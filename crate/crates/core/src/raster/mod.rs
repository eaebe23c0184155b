//! Tile-based differentiable splatting and its brute-force reference.

mod backward;
mod binning;
mod forward;
mod pipeline;
mod reference;
pub mod sort;

use nalgebra::{Matrix2, Vector2};

use crate::math::Rgb;

pub use backward::{rasterize_backward, SplatGrads};
pub use binning::{bin_to_tiles, footprint_extent, TileBin, TileBins};
pub use forward::{
    composite_tiles, rasterize_forward, ColorSource, DepthTest, ForwardRecord, FragmentCounters,
};
pub use pipeline::{
    prepare_splats, render_backward, render_gaussians, weighted_sum, BackwardBuffers, Frame,
    LazyShColors, PreparedSplats,
};
pub use reference::{reference_render, reference_render_weighted};
pub use sort::{composite_sort_key, DepthRange};

/// Maximum per-fragment alpha; keeps `1 - α` invertible in the backward pass.
pub const ALPHA_MAX: f64 = 0.9999;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RasterConfig {
    pub tile_size: usize,
    /// Fragments with `α' < alpha_min` are skipped.
    pub alpha_min: f64,
    /// Per-pixel compositing stops once transmittance drops below this.
    pub t_stop: f64,
    pub depth_range: DepthRange,
    /// Run tiles on the rayon pool; results are identical either way.
    pub parallel: bool,
}

impl Default for RasterConfig {
    fn default() -> Self {
        Self {
            tile_size: 16,
            alpha_min: 1e-6,
            t_stop: 1e-4,
            depth_range: DepthRange::default(),
            parallel: true,
        }
    }
}

/// A Gaussian after projection, ready for binning and compositing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplatInput {
    pub mean2d: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    pub depth: f64,
    pub opacity: f64,
    /// Sort tie-break priority in `[0, 1]`, usually `s_sem`.
    pub priority: f64,
}

impl SplatInput {
    /// Inverse of `cov2d`, or `None` for a degenerate splat.
    pub fn conic(&self) -> Option<Matrix2<f64>> {
        let det = self.cov2d.determinant();
        if !(det > 0.0) || !det.is_finite() {
            return None;
        }
        self.cov2d.try_inverse()
    }
}

/// Per-pixel Gaussian falloff exponent `-½ dᵀ Q d` at pixel center `(px, py)`.
#[inline]
pub(crate) fn falloff_power(conic: &Matrix2<f64>, mean: &Vector2<f64>, px: f64, py: f64) -> (f64, Vector2<f64>) {
    let d = Vector2::new(px - mean.x, py - mean.y);
    let power = -0.5 * (conic[(0, 0)] * d.x * d.x + 2.0 * conic[(0, 1)] * d.x * d.y + conic[(1, 1)] * d.y * d.y);
    (power, d)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderTarget {
    pub color: crate::image::Image,
    pub transmittance: Vec<f64>,
    pub depth: Option<Vec<f64>>,
}

impl RenderTarget {
    pub fn width(&self) -> usize {
        self.color.width
    }

    pub fn height(&self) -> usize {
        self.color.height
    }

    pub(crate) fn empty(width: usize, height: usize, background: Rgb) -> Self {
        Self {
            color: crate::image::Image::filled(width, height, background),
            transmittance: vec![1.0; width * height],
            depth: None,
        }
    }
}
