//! Semantic-priority inference: occluder selection, a depth-only pre-pass and
//! an emulated early-depth test in front of shading.

use std::time::Instant;

use rayon::prelude::*;

use crate::camera::CameraView;
use crate::raster::sort::{key_depth, quantize_depth};
use crate::math::Rgb;
use crate::raster::{
    bin_to_tiles, composite_tiles, prepare_splats, DepthTest, LazyShColors, PreparedSplats,
    RasterConfig, RenderTarget, SplatInput,
};
use crate::scene::Gaussian;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CullDecision {
    Keep,
    Cull,
}

/// Culls a fragment at depth `d` iff it lies strictly behind `z + epsilon`.
#[inline]
pub fn early_depth_cull(d: f64, z: f64, epsilon: f64) -> CullDecision {
    if d > z + epsilon {
        CullDecision::Cull
    } else {
        CullDecision::Keep
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PriorityConfig {
    pub sem_threshold: f64,
    pub opacity_threshold: f64,
    /// Minimum per-pixel alpha for an occluder fragment to write depth.
    pub alpha_solid: f64,
    /// Depth test slack as a fraction of the stored depth.
    pub rel_epsilon: f64,
    /// Test whole tiles against their farthest occluder depth.
    pub per_tile: bool,
    pub raster: RasterConfig,
}

impl Default for PriorityConfig {
    fn default() -> Self {
        Self {
            sem_threshold: 0.5,
            opacity_threshold: 0.7,
            alpha_solid: 0.5,
            rel_epsilon: 1e-4,
            per_tile: false,
            raster: RasterConfig::default(),
        }
    }
}

/// Indices into the world list of the Gaussians used as occluders.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OccluderSet {
    pub indices: Vec<usize>,
}

impl OccluderSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub fn select_occluders(world: &[Gaussian], sem_threshold: f64, opacity_threshold: f64) -> OccluderSet {
    OccluderSet {
        indices: world
            .iter()
            .enumerate()
            .filter(|(_, g)| g.s_sem > sem_threshold && g.opacity() > opacity_threshold)
            .map(|(i, _)| i)
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DepthBuffer {
    pub width: usize,
    pub height: usize,
    /// Row-major; `+inf` where no occluder is solid.
    pub depth: Vec<f64>,
}

impl DepthBuffer {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.depth[y * self.width + x]
    }
}

/// Per pixel, the nearest depth of an occluder splat whose alpha there is at
/// least `alpha_solid`. Touches geometry only.
pub fn depth_prepass(
    prepared: &PreparedSplats,
    occluders: &OccluderSet,
    width: usize,
    height: usize,
    cfg: &PriorityConfig,
) -> DepthBuffer {
    let mut is_occluder = vec![false; prepared.source.iter().max().map_or(0, |m| m + 1)];
    for &i in &occluders.indices {
        if i < is_occluder.len() {
            is_occluder[i] = true;
        }
    }
    let subset: Vec<SplatInput> = prepared
        .splats
        .iter()
        .zip(&prepared.source)
        .filter(|(_, &i)| is_occluder[i])
        .map(|(s, _)| *s)
        .collect();
    let bins = bin_to_tiles(&subset, width, height, &cfg.raster);
    let conics: Vec<_> = subset.iter().map(SplatInput::conic).collect();
    let run = |tile: usize| -> Vec<f64> {
        let (x0, y0, x1, y1) = bins.tile_rect(tile);
        let entries = bins.tile_entries(tile);
        let keys = bins.tile_keys(tile);
        let mut out = Vec::with_capacity((x1 - x0) * (y1 - y0));
        for y in y0..y1 {
            for x in x0..x1 {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let mut z = f64::INFINITY;
                let mut z_bucket = u64::MAX;
                for (k, &e) in entries.iter().enumerate() {
                    // Depth-sorted list: nothing past the current best bucket can be nearer.
                    if key_depth(keys[k]) > z_bucket {
                        break;
                    }
                    let s = &subset[e as usize];
                    let Some(conic) = conics[e as usize] else {
                        continue;
                    };
                    let d = nalgebra::Vector2::new(px - s.mean2d.x, py - s.mean2d.y);
                    let power = -0.5 * d.dot(&(conic * d));
                    if s.opacity * power.exp() >= cfg.alpha_solid && s.depth < z {
                        z = s.depth;
                        z_bucket = quantize_depth(z, cfg.raster.depth_range);
                    }
                }
                out.push(z);
            }
        }
        out
    };
    let tiles: Vec<Vec<f64>> = if cfg.raster.parallel {
        (0..bins.tile_count()).into_par_iter().map(run).collect()
    } else {
        (0..bins.tile_count()).map(run).collect()
    };
    let mut depth = vec![f64::INFINITY; width * height];
    for (tile, vals) in tiles.into_iter().enumerate() {
        let (x0, y0, x1, y1) = bins.tile_rect(tile);
        let mut k = 0;
        for y in y0..y1 {
            for x in x0..x1 {
                depth[y * width + x] = vals[k];
                k += 1;
            }
        }
    }
    DepthBuffer { width, height, depth }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RenderStats {
    pub fragments_binned: u64,
    pub fragments_shaded: u64,
    pub fragments_culled_earlyz: u64,
    pub prepass_ms: f64,
    pub colorpass_ms: f64,
    pub occluders: usize,
    /// SH evaluations over the whole frame.
    pub sh_evaluations: u64,
    /// SH evaluations observed when the pre-pass finished; always 0.
    pub prepass_sh_evaluations: u64,
}

impl RenderStats {
    /// One `key=value` line.
    pub fn to_line(&self) -> String {
        format!(
            "fragments_binned={} fragments_shaded={} fragments_culled_earlyz={} prepass_ms={:.3} colorpass_ms={:.3} occluders={} sh_evaluations={}",
            self.fragments_binned,
            self.fragments_shaded,
            self.fragments_culled_earlyz,
            self.prepass_ms,
            self.colorpass_ms,
            self.occluders,
            self.sh_evaluations
        )
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Plain tile rasterization with lazily evaluated colors, instrumented like
/// [`render_priority`] so the two can be compared.
pub fn render_single_pass(
    world: &[Gaussian],
    cam: &CameraView,
    background: Rgb,
    raster: &RasterConfig,
) -> (RenderTarget, RenderStats) {
    let prepared = prepare_splats(world, cam, None);
    let colors = LazyShColors::new(world, &prepared);
    let start = Instant::now();
    let bins = bin_to_tiles(&prepared.splats, cam.width(), cam.height(), raster);
    let (target, _, counters) = composite_tiles(&prepared.splats, bins, &colors, background, raster, None);
    let stats = RenderStats {
        fragments_binned: counters.binned,
        fragments_shaded: counters.shaded,
        fragments_culled_earlyz: 0,
        prepass_ms: 0.0,
        colorpass_ms: ms_since(start),
        occluders: 0,
        sh_evaluations: colors.evaluations(),
        prepass_sh_evaluations: 0,
    };
    (target, stats)
}

/// Occluder selection, depth pre-pass, then the color pass behind an
/// early-depth test.
pub fn render_priority(
    world: &[Gaussian],
    cam: &CameraView,
    background: Rgb,
    cfg: &PriorityConfig,
) -> (RenderTarget, RenderStats, DepthBuffer) {
    let prepared = prepare_splats(world, cam, None);
    let colors = LazyShColors::new(world, &prepared);

    let start = Instant::now();
    let occluders = select_occluders(world, cfg.sem_threshold, cfg.opacity_threshold);
    let depth = depth_prepass(&prepared, &occluders, cam.width(), cam.height(), cfg);
    let prepass_ms = ms_since(start);
    let prepass_sh_evaluations = colors.evaluations();

    let start = Instant::now();
    let bins = bin_to_tiles(&prepared.splats, cam.width(), cam.height(), &cfg.raster);
    let test = DepthTest {
        depth: &depth.depth,
        rel_epsilon: cfg.rel_epsilon,
        per_tile: cfg.per_tile,
    };
    let (target, _, counters) = composite_tiles(&prepared.splats, bins, &colors, background, &cfg.raster, Some(test));
    let stats = RenderStats {
        fragments_binned: counters.binned,
        fragments_shaded: counters.shaded,
        fragments_culled_earlyz: counters.culled_earlyz,
        prepass_ms,
        colorpass_ms: ms_since(start),
        occluders: occluders.len(),
        sh_evaluations: colors.evaluations(),
        prepass_sh_evaluations,
    };
    (target, stats, depth)
}
