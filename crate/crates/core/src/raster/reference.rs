//! Brute-force per-pixel renderer used as the correctness oracle for the tile
//! rasterizer: every Gaussian, one global depth sort, no tiles, no alpha
//! cutoff, no early termination.

use rayon::prelude::*;

use super::forward::fragment_alpha;
use super::{falloff_power, RenderTarget};
use crate::camera::{project_gaussian, CameraView};
use crate::image::Image;
use crate::math::Rgb;
use crate::scene::Gaussian;
use crate::sh::eval_block;

pub fn reference_render(world: &[Gaussian], cam: &CameraView, background: Rgb) -> RenderTarget {
    reference_render_weighted(world, cam, background, &vec![false; world.len()]).0
}

/// Like [`reference_render`], additionally returning per pixel the summed
/// compositing weight `α_i T_i` of the Gaussians with `flagged[i]` set.
pub fn reference_render_weighted(
    world: &[Gaussian],
    cam: &CameraView,
    background: Rgb,
    flagged: &[bool],
) -> (RenderTarget, Vec<f64>) {
    let (w, h) = (cam.width(), cam.height());
    let center = cam.center();
    let mut items: Vec<_> = world
        .iter()
        .enumerate()
        .filter_map(|(i, g)| {
            let p = project_gaussian(g, cam)?;
            let conic = p.cov2d.try_inverse()?;
            let dir = (g.mean - center).normalize();
            Some((i, p, conic, eval_block(&g.sh, &dir).color, g.opacity()))
        })
        .collect();
    items.sort_by(|a, b| a.1.depth.total_cmp(&b.1.depth));

    let rows: Vec<(Vec<Rgb>, Vec<f64>, Vec<f64>)> = (0..h)
        .into_par_iter()
        .map(|y| {
            let mut row = (Vec::with_capacity(w), Vec::with_capacity(w), Vec::with_capacity(w));
            for x in 0..w {
                let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
                let mut t = 1.0;
                let mut c = Rgb::zeros();
                let mut wsum = 0.0;
                for (i, p, conic, rgb, opacity) in &items {
                    let (power, _) = falloff_power(conic, &p.mean2d, px, py);
                    let alpha = fragment_alpha(*opacity, power);
                    c += rgb * (alpha * t);
                    if flagged[*i] {
                        wsum += alpha * t;
                    }
                    t *= 1.0 - alpha;
                }
                row.0.push((c + background * t).map(|v| v.clamp(0.0, 1.0)));
                row.1.push(t);
                row.2.push(wsum);
            }
            row
        })
        .collect();

    let mut color = Image::new(w, h);
    let mut transmittance = Vec::with_capacity(w * h);
    let mut weight = Vec::with_capacity(w * h);
    for (y, (c, t, wt)) in rows.into_iter().enumerate() {
        for (x, v) in c.into_iter().enumerate() {
            color.set(x, y, v);
        }
        transmittance.extend(t);
        weight.extend(wt);
    }
    (
        RenderTarget {
            color,
            transmittance,
            depth: None,
        },
        weight,
    )
}
