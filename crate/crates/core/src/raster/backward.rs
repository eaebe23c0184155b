//! Reverse-mode pass through front-to-back compositing.
//!
//! Each pixel is replayed back to front from its final transmittance. With
//! `acc` the normalized color of everything behind fragment `i` (background
//! included), `∂C/∂α_i = T_i (c_i - acc)` and `∂C/∂c_i = α_i T_i`.

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;

use super::forward::{fragment_alpha, ColorSource, ForwardRecord};
use super::{falloff_power, SplatInput, ALPHA_MAX};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::Rgb;

/// Image-space gradients of one splat.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SplatGrads {
    pub mean2d: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    pub opacity: f64,
    pub color: Rgb,
    /// Σ over pixels of ‖∂C_pixel / ∂(α'c)‖², i.e. 3 T_i² per fragment.
    pub s_grad: f64,
}

#[derive(Clone, Copy, Default)]
struct EntryGrads {
    mean2d: Vector2<f64>,
    conic: Matrix2<f64>,
    opacity: f64,
    color: Rgb,
    s_grad: f64,
}

pub fn rasterize_backward<C: ColorSource + ?Sized>(
    splats: &[SplatInput],
    colors: &C,
    record: &ForwardRecord,
    d_image: &Image,
    parallel: bool,
) -> Result<Vec<SplatGrads>> {
    if d_image.width != record.width() || d_image.height != record.height() {
        return Err(Error::Dimensions(format!(
            "gradient image {}x{} vs frame {}x{}",
            d_image.width,
            d_image.height,
            record.width(),
            record.height()
        )));
    }
    if record.conics.len() != splats.len() {
        return Err(Error::Dimensions("forward record belongs to another splat set".into()));
    }
    if record.depth_tested {
        return Err(Error::Config("cannot differentiate a depth-tested frame".into()));
    }

    let bins = &record.bins;
    let run = |tile: usize| -> Vec<EntryGrads> {
        let entries = bins.tile_entries(tile);
        let mut local = vec![EntryGrads::default(); entries.len()];
        let (x0, y0, x1, y1) = bins.tile_rect(tile);
        for y in y0..y1 {
            for x in x0..x1 {
                let p = y * bins.width + x;
                let g = d_image.get(x, y);
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let mut t = record.final_t[p];
                let mut acc = record.background;
                for k in (0..record.n_contrib[p] as usize).rev() {
                    let e = entries[k] as usize;
                    let Some(conic) = record.conics[e] else {
                        continue;
                    };
                    let s = &splats[e];
                    let (power, d) = falloff_power(&conic, &s.mean2d, px, py);
                    let alpha = fragment_alpha(s.opacity, power);
                    if alpha < record.alpha_min {
                        continue;
                    }
                    let c = colors.color(e);
                    let t_i = t / (1.0 - alpha);
                    let eg = &mut local[k];
                    eg.color += g * (alpha * t_i);
                    eg.s_grad += 3.0 * t_i * t_i;
                    let d_alpha = g.dot(&(c - acc)) * t_i;
                    acc = c * alpha + acc * (1.0 - alpha);
                    t = t_i;

                    let gauss = power.exp();
                    if s.opacity * gauss >= ALPHA_MAX {
                        continue;
                    }
                    eg.opacity += d_alpha * gauss;
                    let d_power = d_alpha * s.opacity * gauss;
                    // power = -½ dᵀ Q d with d = pixel - mean.
                    eg.mean2d += conic * d * d_power;
                    eg.conic += d * d.transpose() * (-0.5 * d_power);
                }
            }
        }
        local
    };
    let per_tile: Vec<Vec<EntryGrads>> = if parallel {
        (0..bins.tile_count()).into_par_iter().map(run).collect()
    } else {
        (0..bins.tile_count()).map(run).collect()
    };

    // Fixed-order reduction: tiles ascending, entries in list order.
    let mut out = vec![SplatGrads::default(); splats.len()];
    let mut d_conic = vec![Matrix2::zeros(); splats.len()];
    for (tile, local) in per_tile.into_iter().enumerate() {
        for (&e, eg) in bins.tile_entries(tile).iter().zip(local) {
            let o = &mut out[e as usize];
            o.mean2d += eg.mean2d;
            o.opacity += eg.opacity;
            o.color += eg.color;
            o.s_grad += eg.s_grad;
            d_conic[e as usize] += eg.conic;
        }
    }
    for (o, (dq, q)) in out.iter_mut().zip(d_conic.iter().zip(&record.conics)) {
        if let Some(q) = q {
            // Q = Σ⁻¹  ⇒  dL/dΣ = -Q dL/dQ Q (Q symmetric).
            o.cov2d = -(q * dq * q);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{rasterize_forward, RasterConfig};

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
    fn zero_upstream_gives_zero_gradients() {
        let splats = vec![disk(5.0, 6.0, 2.0, 1.0, 0.6), disk(7.0, 4.0, 3.0, 2.0, 0.8)];
        let colors = vec![Rgb::new(1.0, 0.2, 0.0), Rgb::new(0.1, 0.5, 0.9)];
        let cfg = RasterConfig::default();
        let (_, rec) = rasterize_forward(&splats, &colors, 12, 12, Rgb::zeros(), &cfg);
        let grads = rasterize_backward(&splats, &colors, &rec, &Image::new(12, 12), true).unwrap();
        for g in grads {
            assert_eq!(g.mean2d, Vector2::zeros());
            assert_eq!(g.cov2d, Matrix2::zeros());
            assert_eq!(g.opacity, 0.0);
            assert_eq!(g.color, Rgb::zeros());
        }
    }

    #[test]
    fn two_layer_alpha_gradient_matches_hand_derivation() {
        // C = a1 c1 + (1 - a1) a2 c2 + (1 - a1)(1 - a2) bg with flat splats (G = 1).
        // ∂C/∂a1 = c1 - a2 c2 - (1 - a2) bg, ∂C/∂a2 = (1 - a1)(c2 - bg).
        let (a1, a2) = (0.5, 0.7);
        let c1 = Rgb::new(1.0, 0.0, 0.0);
        let c2 = Rgb::new(0.0, 0.0, 1.0);
        let bg = Rgb::new(0.2, 0.2, 0.2);
        let splats = vec![disk(0.5, 0.5, 1e4, 1.0, a1), disk(0.5, 0.5, 1e4, 2.0, a2)];
        let colors = vec![c1, c2];
        let cfg = RasterConfig::default();
        let (_, rec) = rasterize_forward(&splats, &colors, 1, 1, bg, &cfg);
        for ch in 0..3 {
            let mut d = Image::new(1, 1);
            d.data[ch] = 1.0;
            let g = rasterize_backward(&splats, &colors, &rec, &d, false).unwrap();
            let want1 = c1[ch] - a2 * c2[ch] - (1.0 - a2) * bg[ch];
            let want2 = (1.0 - a1) * (c2[ch] - bg[ch]);
            // G = exp(-½ d²/σ²) with d = 0 at the only pixel center.
            assert!((g[0].opacity - want1).abs() < 1e-12, "ch {ch}");
            assert!((g[1].opacity - want2).abs() < 1e-12, "ch {ch}");
            assert!((g[0].color[ch] - a1).abs() < 1e-12);
            assert!((g[1].color[ch] - (1.0 - a1) * a2).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_mismatched_frames() {
        let splats = vec![disk(5.0, 6.0, 2.0, 1.0, 0.6)];
        let colors = vec![Rgb::zeros()];
        let (_, rec) = rasterize_forward(&splats, &colors, 12, 12, Rgb::zeros(), &RasterConfig::default());
        assert!(rasterize_backward(&splats, &colors, &rec, &Image::new(11, 12), true).is_err());
        assert!(rasterize_backward(&[], &Vec::<Rgb>::new(), &rec, &Image::new(12, 12), true).is_err());
    }
}
