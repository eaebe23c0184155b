//! World Gaussians → projected splats → image, and the chain rule back from
//! image-space gradients to every 3D parameter.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::OnceLock;

use nalgebra::Quaternion;

use super::backward::rasterize_backward;
use super::forward::{rasterize_forward, ColorSource, ForwardRecord};
use super::{RasterConfig, RenderTarget, SplatInput};
use crate::camera::{project_backward, project_gaussian, CameraView};
use crate::error::Result;
use crate::image::Image;
use crate::math::{Rgb, Vec3};
use crate::scene::{covariance_backward, Gaussian};
use crate::sh::{eval_block, eval_block_backward, ShEval};

/// Splats of the Gaussians that survived near-plane culling.
#[derive(Clone, Debug)]
pub struct PreparedSplats {
    pub splats: Vec<SplatInput>,
    /// Index into the world list for each splat.
    pub source: Vec<usize>,
    /// Unit direction from the camera center to each splat's mean.
    pub view_dirs: Vec<Vec3>,
}

/// Effective opacity `min(1, scale * sigmoid(logit))`.
fn effective_opacity(g: &Gaussian, scale: f64) -> f64 {
    (scale * g.opacity()).min(1.0)
}

pub fn prepare_splats(world: &[Gaussian], cam: &CameraView, opacity_scale: Option<&[f64]>) -> PreparedSplats {
    let center = cam.center();
    let mut out = PreparedSplats {
        splats: Vec::with_capacity(world.len()),
        source: Vec::with_capacity(world.len()),
        view_dirs: Vec::with_capacity(world.len()),
    };
    for (i, g) in world.iter().enumerate() {
        let Some(p) = project_gaussian(g, cam) else {
            continue;
        };
        let scale = opacity_scale.map_or(1.0, |s| s[i]);
        out.splats.push(SplatInput {
            mean2d: p.mean2d,
            cov2d: p.cov2d,
            depth: p.depth,
            opacity: effective_opacity(g, scale),
            priority: g.s_sem,
        });
        out.source.push(i);
        out.view_dirs.push((g.mean - center).normalize());
    }
    out
}

/// Evaluates SH colors on first use and counts the evaluations.
pub struct LazyShColors<'a> {
    world: &'a [Gaussian],
    prepared: &'a PreparedSplats,
    cache: Vec<OnceLock<Rgb>>,
    evals: AtomicU64,
}

impl<'a> LazyShColors<'a> {
    pub fn new(world: &'a [Gaussian], prepared: &'a PreparedSplats) -> Self {
        Self {
            world,
            prepared,
            cache: (0..prepared.splats.len()).map(|_| OnceLock::new()).collect(),
            evals: AtomicU64::new(0),
        }
    }

    /// Number of SH evaluations performed so far.
    pub fn evaluations(&self) -> u64 {
        self.evals.load(Ordering::Relaxed)
    }
}

impl ColorSource for LazyShColors<'_> {
    fn color(&self, splat: usize) -> Rgb {
        *self.cache[splat].get_or_init(|| {
            self.evals.fetch_add(1, Ordering::Relaxed);
            let g = &self.world[self.prepared.source[splat]];
            eval_block(&g.sh, &self.prepared.view_dirs[splat]).color
        })
    }
}

/// Everything needed to differentiate one rendered frame.
#[derive(Clone, Debug)]
pub struct Frame {
    pub prepared: PreparedSplats,
    pub evals: Vec<ShEval>,
    pub colors: Vec<Rgb>,
    pub record: ForwardRecord,
}

/// Single-pass render of world-frame Gaussians with eager color evaluation.
pub fn render_gaussians(
    world: &[Gaussian],
    cam: &CameraView,
    background: Rgb,
    cfg: &RasterConfig,
    opacity_scale: Option<&[f64]>,
) -> (RenderTarget, Frame) {
    let prepared = prepare_splats(world, cam, opacity_scale);
    let evals: Vec<ShEval> = prepared
        .source
        .iter()
        .zip(&prepared.view_dirs)
        .map(|(&i, d)| eval_block(&world[i].sh, d))
        .collect();
    let colors: Vec<Rgb> = evals.iter().map(|e| e.color).collect();
    let (target, record) = rasterize_forward(&prepared.splats, &colors, cam.width(), cam.height(), background, cfg);
    (
        target,
        Frame {
            prepared,
            evals,
            colors,
            record,
        },
    )
}

/// Per-Gaussian parameter gradients of one frame, indexed like the world list.
#[derive(Clone, Debug, PartialEq)]
pub struct BackwardBuffers {
    pub mean: Vec<Vec3>,
    pub log_scale: Vec<Vec3>,
    pub rotation: Vec<Quaternion<f64>>,
    pub opacity_logit: Vec<f64>,
    pub sh: Vec<Vec<Rgb>>,
    /// Raw squared-gradient contribution for the importance score.
    pub s_grad: Vec<f64>,
    /// ‖dL/dmean2d‖ in pixels, for densification statistics.
    pub mean2d_norm: Vec<f64>,
    /// Whether the Gaussian projected in front of the camera.
    pub visible: Vec<bool>,
}

impl BackwardBuffers {
    pub fn zeros(world: &[Gaussian]) -> Self {
        let n = world.len();
        Self {
            mean: vec![Vec3::zeros(); n],
            log_scale: vec![Vec3::zeros(); n],
            rotation: vec![Quaternion::new(0.0, 0.0, 0.0, 0.0); n],
            opacity_logit: vec![0.0; n],
            sh: world.iter().map(|g| vec![Rgb::zeros(); g.sh.len()]).collect(),
            s_grad: vec![0.0; n],
            mean2d_norm: vec![0.0; n],
            visible: vec![false; n],
        }
    }
}

/// Chains `dL/dimage` through compositing, SH, projection and the covariance
/// factorization to every parameter of the world Gaussians.
pub fn render_backward(
    world: &[Gaussian],
    cam: &CameraView,
    frame: &Frame,
    d_image: &Image,
    opacity_scale: Option<&[f64]>,
    cfg: &RasterConfig,
) -> Result<BackwardBuffers> {
    let prep = &frame.prepared;
    let grads = rasterize_backward(&prep.splats, &frame.colors, &frame.record, d_image, cfg.parallel)?;
    let mut out = BackwardBuffers::zeros(world);
    let center = cam.center();
    for (k, g2) in grads.iter().enumerate() {
        let i = prep.source[k];
        let g = &world[i];
        out.visible[i] = true;
        out.s_grad[i] = g2.s_grad;
        out.mean2d_norm[i] = g2.mean2d.norm();

        let scale = opacity_scale.map_or(1.0, |s| s[i]);
        let sig = g.opacity();
        if scale * sig < 1.0 {
            out.opacity_logit[i] = g2.opacity * scale * sig * (1.0 - sig);
        }

        let cov = g.covariance();
        let (d_mean, d_cov) = project_backward(&g.mean, &cov, cam, &g2.mean2d, &g2.cov2d);
        let (d_ls, d_rot) = covariance_backward(&g.log_scale, &g.rotation, &d_cov);

        let d_dir = eval_block_backward(&g.sh, &prep.view_dirs[k], &frame.evals[k], &g2.color, &mut out.sh[i]);
        // dir = v / |v| with v = mean - center.
        let v = g.mean - center;
        let dir = v / v.norm();
        let d_v = (d_dir - dir * dir.dot(&d_dir)) / v.norm();

        out.mean[i] = d_mean + d_v;
        out.log_scale[i] = d_ls;
        out.rotation[i] = d_rot;
    }
    Ok(out)
}

/// Sum of a per-channel weighted image, the scalar used by gradient checks.
pub fn weighted_sum(img: &Image, weights: &Image) -> f64 {
    img.data.iter().zip(&weights.data).map(|(a, b)| a * b).sum()
}
