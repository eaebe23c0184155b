use nalgebra::Matrix2;
use rayon::prelude::*;

use super::binning::{bin_to_tiles, TileBins};
use super::sort::{key_depth, quantize_depth};
use super::{falloff_power, RasterConfig, RenderTarget, SplatInput, ALPHA_MAX};
use crate::image::Image;
use crate::math::Rgb;
use crate::priority::{early_depth_cull, CullDecision};

/// Supplies a splat's RGB the first time one of its fragments is shaded.
pub trait ColorSource: Sync {
    fn color(&self, splat: usize) -> Rgb;
}

impl ColorSource for [Rgb] {
    fn color(&self, splat: usize) -> Rgb {
        self[splat]
    }
}

impl ColorSource for Vec<Rgb> {
    fn color(&self, splat: usize) -> Rgb {
        self[splat]
    }
}

/// Emulated early-depth test applied to fragments before shading.
#[derive(Clone, Copy, Debug)]
pub struct DepthTest<'a> {
    /// Row-major per-pixel occluder depth, `+inf` where none.
    pub depth: &'a [f64],
    /// `epsilon = rel_epsilon * z`.
    pub rel_epsilon: f64,
    /// Conservative per-tile test against the tile's maximum depth instead of
    /// a per-pixel test.
    pub per_tile: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FragmentCounters {
    /// Σ over tiles of bin length × tile pixels.
    pub binned: u64,
    /// Fragments whose falloff was evaluated.
    pub evaluated: u64,
    /// Fragments composited into the pixel (α' ≥ α_min).
    pub shaded: u64,
    pub culled_earlyz: u64,
}

impl std::ops::AddAssign for FragmentCounters {
    fn add_assign(&mut self, o: Self) {
        self.binned += o.binned;
        self.evaluated += o.evaluated;
        self.shaded += o.shaded;
        self.culled_earlyz += o.culled_earlyz;
    }
}

/// What the backward pass needs to replay a frame.
#[derive(Clone, Debug)]
pub struct ForwardRecord {
    pub bins: TileBins,
    pub conics: Vec<Option<Matrix2<f64>>>,
    pub final_t: Vec<f64>,
    /// Per pixel: number of leading tile entries visited before stopping.
    pub n_contrib: Vec<u32>,
    pub background: Rgb,
    pub alpha_min: f64,
    /// Set when a depth test culled fragments; such frames are not differentiable.
    pub depth_tested: bool,
}

impl ForwardRecord {
    pub fn width(&self) -> usize {
        self.bins.width
    }

    pub fn height(&self) -> usize {
        self.bins.height
    }
}

#[inline]
pub(crate) fn fragment_alpha(opacity: f64, power: f64) -> f64 {
    (opacity * power.exp()).min(ALPHA_MAX)
}

struct TileOut {
    color: Vec<Rgb>,
    final_t: Vec<f64>,
    n_contrib: Vec<u32>,
    counters: FragmentCounters,
}

#[allow(clippy::too_many_arguments)]
fn composite_tile<C: ColorSource + ?Sized>(
    tile: usize,
    splats: &[SplatInput],
    conics: &[Option<Matrix2<f64>>],
    bins: &TileBins,
    colors: &C,
    background: Rgb,
    cfg: &RasterConfig,
    depth_test: Option<&DepthTest>,
) -> TileOut {
    let (x0, y0, x1, y1) = bins.tile_rect(tile);
    let entries = bins.tile_entries(tile);
    let keys = bins.tile_keys(tile);
    let npx = (x1 - x0) * (y1 - y0);
    let mut out = TileOut {
        color: Vec::with_capacity(npx),
        final_t: Vec::with_capacity(npx),
        n_contrib: Vec::with_capacity(npx),
        counters: FragmentCounters {
            binned: (entries.len() * npx) as u64,
            ..Default::default()
        },
    };

    // Per-tile conservative variant: drop the tail of the list that lies
    // behind the farthest occluder depth in the tile.
    let mut visible = entries;
    let per_pixel_depth = match depth_test {
        Some(dt) if dt.per_tile => {
            let mut zmax = 0.0f64;
            for y in y0..y1 {
                for x in x0..x1 {
                    zmax = zmax.max(dt.depth[y * bins.width + x]);
                }
            }
            let cut = entries
                .iter()
                .position(|&e| early_depth_cull(splats[e as usize].depth, zmax, dt.rel_epsilon * zmax) == CullDecision::Cull)
                .unwrap_or(entries.len());
            out.counters.culled_earlyz += ((entries.len() - cut) * npx) as u64;
            visible = &entries[..cut];
            None
        }
        other => other,
    };

    for y in y0..y1 {
        for x in x0..x1 {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let z = per_pixel_depth.map(|dt| dt.depth[y * bins.width + x]);
            let mut t = 1.0;
            let mut c = Rgb::zeros();
            let mut n = 0u32;
            for (k, &e) in visible.iter().enumerate() {
                let s = &splats[e as usize];
                if let (Some(z), Some(dt)) = (z, per_pixel_depth) {
                    let limit = z + dt.rel_epsilon * z;
                    if early_depth_cull(s.depth, z, dt.rel_epsilon * z) == CullDecision::Cull {
                        // Lists are depth-sorted: a strictly farther depth bucket
                        // means this and every later fragment fail the test.
                        if key_depth(keys[k]) > quantize_depth(limit, cfg.depth_range) {
                            out.counters.culled_earlyz += (visible.len() - k) as u64;
                            break;
                        }
                        out.counters.culled_earlyz += 1;
                        continue;
                    }
                }
                let Some(conic) = conics[e as usize] else {
                    continue;
                };
                out.counters.evaluated += 1;
                let (power, _) = falloff_power(&conic, &s.mean2d, px, py);
                let alpha = fragment_alpha(s.opacity, power);
                if alpha < cfg.alpha_min {
                    continue;
                }
                out.counters.shaded += 1;
                c += colors.color(e as usize) * (alpha * t);
                t *= 1.0 - alpha;
                n = k as u32 + 1;
                if t < cfg.t_stop {
                    break;
                }
            }
            out.color.push(c + background * t);
            out.final_t.push(t);
            out.n_contrib.push(n);
        }
    }
    out
}

/// Composites already-binned splats tile by tile, optionally behind an
/// early-depth test. Tile outputs are stitched in tile order, so the result
/// does not depend on the worker count.
#[allow(clippy::too_many_arguments)]
pub fn composite_tiles<C: ColorSource + ?Sized>(
    splats: &[SplatInput],
    bins: TileBins,
    colors: &C,
    background: Rgb,
    cfg: &RasterConfig,
    depth_test: Option<DepthTest>,
) -> (RenderTarget, ForwardRecord, FragmentCounters) {
    let (width, height) = (bins.width, bins.height);
    let conics: Vec<_> = splats.iter().map(SplatInput::conic).collect();
    let run = |tile: usize| {
        composite_tile(tile, splats, &conics, &bins, colors, background, cfg, depth_test.as_ref())
    };
    let tiles: Vec<TileOut> = if cfg.parallel {
        (0..bins.tile_count()).into_par_iter().map(run).collect()
    } else {
        (0..bins.tile_count()).map(run).collect()
    };

    let mut target = RenderTarget::empty(width, height, background);
    target.color = Image::new(width, height);
    let mut final_t = vec![1.0; width * height];
    let mut n_contrib = vec![0u32; width * height];
    let mut counters = FragmentCounters::default();
    for (tile, out) in tiles.into_iter().enumerate() {
        let (x0, y0, x1, y1) = bins.tile_rect(tile);
        let mut i = 0;
        for y in y0..y1 {
            for x in x0..x1 {
                let c = out.color[i];
                target.color.set(x, y, c.map(|v| v.clamp(0.0, 1.0)));
                final_t[y * width + x] = out.final_t[i];
                n_contrib[y * width + x] = out.n_contrib[i];
                i += 1;
            }
        }
        counters += out.counters;
    }
    target.transmittance = final_t.clone();
    let record = ForwardRecord {
        bins,
        conics,
        final_t,
        n_contrib,
        background,
        alpha_min: cfg.alpha_min,
        depth_tested: depth_test.is_some(),
    };
    (target, record, counters)
}

/// Standard single-pass tile rasterization with resolved per-splat colors.
pub fn rasterize_forward(
    splats: &[SplatInput],
    colors: &[Rgb],
    width: usize,
    height: usize,
    background: Rgb,
    cfg: &RasterConfig,
) -> (RenderTarget, ForwardRecord) {
    let bins = bin_to_tiles(splats, width, height, cfg);
    let (target, record, _) = composite_tiles(splats, bins, colors, background, cfg, None);
    (target, record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector2;

    fn disk(x: f64, y: f64, sigma: f64, depth: f64, opacity: f64) -> SplatInput {
        SplatInput {
            mean2d: Vector2::new(x, y),
            cov2d: Matrix2::identity() * sigma * sigma,
            depth,
            opacity,
            priority: 0.0,
        }
    }

    #[test]
    fn empty_scene_is_background() {
        let bg = Rgb::new(0.1, 0.2, 0.3);
        let (t, _) = rasterize_forward(&[], &[], 20, 10, bg, &RasterConfig::default());
        assert_eq!(t.color, Image::filled(20, 10, bg));
        assert!(t.transmittance.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn opaque_splat_shows_its_color() {
        let s = disk(8.5, 8.5, 3.0, 2.0, 0.9999);
        let c = Rgb::new(0.2, 0.7, 0.4);
        let (t, _) = rasterize_forward(&[s], &[c], 16, 16, Rgb::zeros(), &RasterConfig::default());
        assert!((t.color.get(8, 8) - c).norm() < 1e-3);
    }

    #[test]
    fn two_layer_compositing() {
        // Front α'=0.5 red over back α'≈1 blue on black: (0.5, 0, 0.5).
        let front = disk(4.5, 4.5, 1e3, 1.0, 0.5);
        let back = disk(4.5, 4.5, 1e3, 2.0, 1.0);
        let colors = [Rgb::new(0.0, 0.0, 1.0), Rgb::new(1.0, 0.0, 0.0)];
        let (t, _) = rasterize_forward(&[back, front], &colors, 9, 9, Rgb::zeros(), &RasterConfig::default());
        let p = t.color.get(4, 4);
        assert!((p - Rgb::new(0.5, 0.0, 0.5)).norm() < 1e-4, "{p:?}");
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let splats: Vec<_> = (0..60)
            .map(|i| disk((i * 17 % 64) as f64, (i * 29 % 48) as f64, 2.0 + (i % 4) as f64, 1.0 + (i % 7) as f64 * 0.3, 0.3 + 0.01 * i as f64))
            .collect();
        let colors: Vec<_> = (0..60).map(|i| Rgb::new((i % 3) as f64 / 2.0, (i % 5) as f64 / 4.0, 0.5)).collect();
        let par = RasterConfig::default();
        let seq = RasterConfig { parallel: false, ..par };
        let (a, _) = rasterize_forward(&splats, &colors, 64, 48, Rgb::zeros(), &par);
        let (b, _) = rasterize_forward(&splats, &colors, 64, 48, Rgb::zeros(), &seq);
        assert_eq!(a, b);
    }
}
