#![allow(dead_code)]

use nalgebra::Quaternion;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use splatprio::camera::{CameraView, Intrinsics, RigidTransform};
use splatprio::math::{logit, Rgb, Vec3};
use splatprio::scene::{Gaussian, GaussianId, Splat};

pub fn camera(width: usize, height: usize, focal: f64) -> CameraView {
    CameraView::new(0, Intrinsics::simple(focal, width, height), RigidTransform::identity(), 0.0)
}

pub fn random_quat(rng: &mut ChaCha8Rng) -> Quaternion<f64> {
    let q = Quaternion::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    if q.norm() < 0.1 {
        Quaternion::identity()
    } else {
        q.normalize()
    }
}

/// SH block of `coeffs` entries with a DC term in a comfortable color range
/// and small higher bands, so the clamp at zero stays inactive.
pub fn random_sh(rng: &mut ChaCha8Rng, coeffs: usize) -> Vec<Rgb> {
    let mut sh = vec![Rgb::new(rng.random_range(0.3..1.5), rng.random_range(0.3..1.5), rng.random_range(0.3..1.5))];
    for _ in 1..coeffs {
        sh.push(Rgb::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)));
    }
    sh
}

/// Anisotropic Gaussian in front of an identity camera with focal `f` and
/// a `w`×`h` image; `sigma_px` bounds the projected size in pixels.
pub fn random_gaussian(rng: &mut ChaCha8Rng, id: u64, w: usize, h: usize, f: f64, sigma_px: (f64, f64), opacity: (f64, f64)) -> Gaussian {
    let z = rng.random_range(1.5..8.0);
    let px = rng.random_range(-0.2..1.2) * w as f64;
    let py = rng.random_range(-0.2..1.2) * h as f64;
    let mean = Vec3::new((px - w as f64 / 2.0) * z / f, (py - h as f64 / 2.0) * z / f, z);
    let scale = |rng: &mut ChaCha8Rng| (rng.random_range(sigma_px.0..sigma_px.1) * z / f).ln();
    let coeffs = [1, 4, 9][rng.random_range(0..3)];
    Splat {
        id: GaussianId(id),
        mean,
        log_scale: Vec3::new(scale(rng), scale(rng), scale(rng)),
        rotation: random_quat(rng),
        opacity_logit: logit(rng.random_range(opacity.0..opacity.1)),
        sh: random_sh(rng, coeffs),
        s_sem: rng.random_range(0.0..1.0),
        critical: rng.random_bool(0.3),
    }
}

pub fn random_world(rng: &mut ChaCha8Rng, n: usize, w: usize, h: usize, f: f64) -> Vec<Gaussian> {
    (0..n as u64)
        .map(|i| random_gaussian(rng, i, w, h, f, (0.6, 6.0), (0.05, 0.97)))
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub mod gradcheck;
