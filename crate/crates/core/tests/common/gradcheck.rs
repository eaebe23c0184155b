//! Central finite differences against `render_backward` on a weighted-sum
//! loss `L = Σ W ⊙ image`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use splatprio::camera::CameraView;
use splatprio::image::Image;
use splatprio::math::{logit, Rgb, Vec3};
use splatprio::raster::{render_backward, render_gaussians, weighted_sum, RasterConfig};
use splatprio::scene::{Gaussian, GaussianId, Splat};

use super::{camera, random_quat, random_sh};

pub const EPS: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Param {
    Mean,
    Scale,
    Rotation,
    Opacity,
    Sh,
}

pub const ALL_PARAMS: [Param; 5] = [Param::Mean, Param::Scale, Param::Rotation, Param::Opacity, Param::Sh];

pub struct Config {
    pub world: Vec<Gaussian>,
    pub cam: CameraView,
    pub weights: Image,
    pub background: Rgb,
}

/// No fragment skipping and no early termination, so the loss is smooth.
pub fn smooth_raster() -> RasterConfig {
    RasterConfig {
        alpha_min: 1e-12,
        t_stop: 0.0,
        ..RasterConfig::default()
    }
}

/// `n` overlapping Gaussians near the image center.
pub fn config(seed: u64, n: usize) -> Config {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h, f) = (20usize, 18usize, 20.0f64);
    let world = (0..n as u64)
        .map(|i| {
            let z: f64 = rng.random_range(2.0..5.0);
            let px = rng.random_range(0.3..0.7) * w as f64;
            let py = rng.random_range(0.3..0.7) * h as f64;
            let mut ls = || (rng.random_range(1.5..4.0) * z / f).ln();
            let log_scale = Vec3::new(ls(), ls(), ls());
            let coeffs = [1, 4, 9][rng.random_range(0..3)];
            Splat {
                id: GaussianId(i),
                mean: Vec3::new((px - w as f64 / 2.0) * z / f, (py - h as f64 / 2.0) * z / f, z),
                log_scale,
                rotation: random_quat(&mut rng),
                opacity_logit: logit(rng.random_range(0.15..0.85)),
                sh: random_sh(&mut rng, coeffs),
                s_sem: 0.0,
                critical: false,
            }
        })
        .collect();
    let mut weights = Image::new(w, h);
    for v in &mut weights.data {
        *v = rng.random_range(-1.0..1.0);
    }
    Config {
        world,
        cam: camera(w, h, f),
        weights,
        background: Rgb::new(0.1, 0.2, 0.05),
    }
}

fn loss(c: &Config, world: &[Gaussian]) -> f64 {
    let (target, _) = render_gaussians(world, &c.cam, c.background, &smooth_raster(), None);
    weighted_sum(&target.color, &c.weights)
}

/// Mutable access to scalar `k` of a parameter class.
fn slot(g: &mut Gaussian, p: Param, k: usize) -> &mut f64 {
    match p {
        Param::Mean => &mut g.mean[k],
        Param::Scale => &mut g.log_scale[k],
        Param::Rotation => &mut g.rotation.coords[k],
        Param::Opacity => &mut g.opacity_logit,
        Param::Sh => &mut g.sh[k / 3][k % 3],
    }
}

fn len(g: &Gaussian, p: Param) -> usize {
    match p {
        Param::Mean | Param::Scale => 3,
        Param::Rotation => 4,
        Param::Opacity => 1,
        Param::Sh => 3 * g.sh.len(),
    }
}

/// `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)` for one parameter
/// class over every Gaussian of the configuration.
pub fn relative_error(c: &Config, p: Param) -> (f64, f64) {
    let raster = smooth_raster();
    let (_, frame) = render_gaussians(&c.world, &c.cam, c.background, &raster, None);
    let grads = render_backward(&c.world, &c.cam, &frame, &c.weights, None, &raster).expect("backward");
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for i in 0..c.world.len() {
        for k in 0..len(&c.world[i], p) {
            analytic.push(match p {
                Param::Mean => grads.mean[i][k],
                Param::Scale => grads.log_scale[i][k],
                Param::Rotation => grads.rotation[i].coords[k],
                Param::Opacity => grads.opacity_logit[i],
                Param::Sh => grads.sh[i][k / 3][k % 3],
            });
            let mut world = c.world.clone();
            let x = *slot(&mut world[i], p, k);
            *slot(&mut world[i], p, k) = x + EPS;
            let up = loss(c, &world);
            *slot(&mut world[i], p, k) = x - EPS;
            let down = loss(c, &world);
            numeric.push((up - down) / (2.0 * EPS));
        }
    }
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
    let scale = norm(&analytic).max(norm(&numeric));
    let rel = if scale == 0.0 { 0.0 } else { norm(&diff) / scale };
    (rel, scale)
}
