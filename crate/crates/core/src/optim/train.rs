use std::collections::HashMap;

use nalgebra::{Matrix3, Quaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::{AdamParams, Moments};
use super::config::{ScheduleEvent, TrainConfig};
use super::densify::{densify_step, DensifyEvent};
use super::dropout::{apply_dropout, DropoutDraw};
use super::importance::{normalize_grad_scores, ImportanceState};
use super::loss::photometric_loss;
use super::prune::{prune_step, PruneEvent};
use crate::camera::CameraView;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::{normalize_quat, quat_mul_backward, rotation_matrix, rotation_matrix_backward, Rgb, Vec3};
use crate::metrics::psnr;
use crate::raster::{render_backward, render_gaussians, BackwardBuffers, RasterConfig};
use crate::scene::{compose_world_with, GaussianId, PoseLookup, SceneModel, Source, Splat};

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterRecord {
    pub iteration: u64,
    pub view_id: u32,
    pub loss: f64,
    pub psnr: f64,
    pub gaussian_count: usize,
    pub dropped_count: usize,
}

impl IterRecord {
    pub fn to_line(&self) -> String {
        format!(
            "iter={} view={} loss={:.8} psnr={:.4} gaussian_count={} dropped_count={}",
            self.iteration, self.view_id, self.loss, self.psnr, self.gaussian_count, self.dropped_count
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub scene: SceneModel,
    pub log: Vec<IterRecord>,
    pub prune_events: Vec<PruneEvent>,
    pub densify_events: Vec<DensifyEvent>,
}

impl TrainOutcome {
    /// Iteration records and schedule events as text lines, in the order
    /// they happened.
    pub fn log_lines(&self) -> Vec<String> {
        let mut lines = vec!["# splatprio train log v1".to_string()];
        let mut prunes = self.prune_events.iter().peekable();
        let mut densifies = self.densify_events.iter().peekable();
        for rec in &self.log {
            lines.push(rec.to_line());
            while let Some(p) = prunes.next_if(|p| p.iteration == rec.iteration) {
                lines.push(p.to_line());
            }
            while let Some(d) = densifies.next_if(|d| d.iteration == rec.iteration) {
                lines.push(d.to_line());
            }
        }
        lines
    }
}

/// Renders the full scene (no dropout) from one view.
pub fn render_view(scene: &SceneModel, view: &CameraView) -> Image {
    let world = compose_world_with(scene, view.timestamp, PoseLookup::Nearest).gaussians;
    render_gaussians(&world, view, scene.background, &RasterConfig::default(), None)
        .0
        .color
}

/// Raw contribution scores summed over `views`, aligned with
/// [`SceneModel::ids`]. The score does not depend on the loss, so no ground
/// truth is needed.
pub fn contribution_scores(scene: &SceneModel, views: &[CameraView]) -> Result<Vec<f64>> {
    let raster = RasterConfig::default();
    let mut total = vec![0.0; scene.gaussian_count()];
    for v in views {
        let world = compose_world_with(scene, v.timestamp, PoseLookup::Nearest).gaussians;
        let (_, frame) = render_gaussians(&world, v, scene.background, &raster, None);
        let zero = Image::new(v.width(), v.height());
        let grads = render_backward(&world, v, &frame, &zero, None, &raster)?;
        for (t, g) in total.iter_mut().zip(&grads.s_grad) {
            *t += g;
        }
    }
    Ok(total)
}

/// Mean PSNR over the views that carry ground truth.
pub fn mean_psnr(scene: &SceneModel, views: &[CameraView]) -> Result<f64> {
    let mut sum = 0.0;
    let mut n = 0;
    for v in views {
        if let Some(gt) = &v.gt_image {
            sum += psnr(&render_view(scene, v), gt)?;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::NoViews);
    }
    Ok(sum / n as f64)
}

#[derive(Clone, Debug, Default)]
struct GaussianMoments {
    mean: Moments,
    log_scale: Moments,
    rotation: Moments,
    opacity: Moments,
    sh: Moments,
}

#[derive(Clone, Debug, Default)]
struct PoseMoments {
    translation: Moments,
    rotation: Moments,
}

/// Gradients for one Gaussian in its own (possibly object-local) frame.
struct LocalGrads {
    mean: Vec3,
    log_scale: Vec3,
    rotation: Quaternion<f64>,
    opacity_logit: f64,
    sh: Vec<Rgb>,
}

fn quat_array(q: &Quaternion<f64>) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

fn flatten(v: &[Rgb]) -> Vec<f64> {
    v.iter().flat_map(|c| [c.x, c.y, c.z]).collect()
}

struct Lrs {
    position: f64,
    sh: f64,
    opacity: f64,
    scale: f64,
    rotation: f64,
}

fn step_common<A>(g: &mut Splat<A>, d: &LocalGrads, m: &mut GaussianMoments, lr: &Lrs, hp: &AdamParams) {
    let mut p = [g.mean.x, g.mean.y, g.mean.z];
    m.mean.step(&mut p, &[d.mean.x, d.mean.y, d.mean.z], lr.position, hp);
    g.mean = Vec3::from(p);

    let mut p = [g.log_scale.x, g.log_scale.y, g.log_scale.z];
    m.log_scale.step(&mut p, &[d.log_scale.x, d.log_scale.y, d.log_scale.z], lr.scale, hp);
    g.log_scale = Vec3::from(p);

    let mut p = quat_array(&g.rotation);
    m.rotation.step(&mut p, &quat_array(&d.rotation), lr.rotation, hp);
    g.rotation = normalize_quat(Quaternion::new(p[0], p[1], p[2], p[3]));

    let mut p = [g.opacity_logit];
    m.opacity.step(&mut p, &[d.opacity_logit], lr.opacity, hp);
    g.opacity_logit = p[0];
}

fn write_back(dst: &mut [Rgb], flat: &[f64]) {
    for (k, c) in dst.iter_mut().enumerate() {
        *c = Rgb::new(flat[3 * k], flat[3 * k + 1], flat[3 * k + 2]);
    }
}

/// Photometric optimization with importance-driven pruning, semantic dropout
/// and densification. Deterministic for a fixed `cfg.seed`.
pub fn train(mut scene: SceneModel, views: &[CameraView], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    scene.validate()?;
    let views: Vec<&CameraView> = views.iter().filter(|v| v.gt_image.is_some()).collect();
    if views.is_empty() {
        return Err(Error::NoViews);
    }
    let raster = RasterConfig::default();
    let hp = AdamParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = ImportanceState::new(&scene, cfg.alpha);
    let mut moments: HashMap<GaussianId, GaussianMoments> = HashMap::new();
    let mut pose_moments: Vec<Vec<PoseMoments>> = scene
        .dynamic_objects
        .iter()
        .map(|o| vec![PoseMoments::default(); o.poses.len()])
        .collect();
    // Summed screen-space gradient norm and visible-iteration count per id.
    let mut growth: HashMap<GaussianId, (f64, u32)> = HashMap::new();
    let schedule: HashMap<u64, ScheduleEvent> = cfg.schedule().into_iter().collect();

    let mut out = TrainOutcome {
        scene: SceneModel::default(),
        log: Vec::with_capacity(cfg.iterations as usize),
        prune_events: Vec::new(),
        densify_events: Vec::new(),
    };

    for t in 1..=cfg.iterations {
        let view = views[rng.random_range(0..views.len())];
        let gt = view.gt_image.as_ref().expect("filtered above");
        let composed = compose_world_with(&scene, view.timestamp, PoseLookup::Nearest);
        let world = &composed.gaussians;

        let draw = if cfg.dropout && cfg.gamma > 0.0 {
            apply_dropout(&state.s_sem, t, cfg.iterations, cfg.effective_beta(), cfg.gamma, &mut rng)?
        } else {
            DropoutDraw::none(world.len())
        };
        for (c, kept) in state.drop_count.iter_mut().zip(&draw.kept) {
            *c += !kept as u32;
        }

        let (target, frame) = render_gaussians(world, view, scene.background, &raster, Some(&draw.opacity_scale));
        let (loss, d_image) = photometric_loss(&target.color, gt, cfg.lambda_dssim)?;
        if !loss.total.is_finite() {
            return Err(Error::Diverged {
                iteration: t as usize,
                message: format!(
                    "loss {} (l1 {}, ssim {}) with {} gaussians on view {}",
                    loss.total,
                    loss.l1,
                    loss.ssim,
                    world.len(),
                    view.id
                ),
            });
        }
        let grads = render_backward(world, view, &frame, &d_image, Some(&draw.opacity_scale), &raster)?;
        state.accumulate(&grads.s_grad);
        let screen = 0.5 * view.width().max(view.height()) as f64;
        for (i, g) in world.iter().enumerate() {
            if grads.visible[i] && draw.kept[i] {
                let e = growth.entry(g.id).or_insert((0.0, 0));
                e.0 += grads.mean2d_norm[i] * screen;
                e.1 += 1;
            }
        }

        let lr = Lrs {
            position: cfg.position_lr(t),
            sh: cfg.lr.sh,
            opacity: cfg.lr.opacity,
            scale: cfg.lr.scale,
            rotation: cfg.lr.rotation,
        };
        apply_updates(&mut scene, &composed.sources, composed.time, world, &grads, &draw, &mut moments, &mut pose_moments, &lr, cfg.lr.pose, &hp);

        out.log.push(IterRecord {
            iteration: t,
            view_id: view.id,
            loss: loss.total,
            psnr: psnr(&target.color, gt)?,
            gaussian_count: scene.gaussian_count(),
            dropped_count: draw.dropped,
        });

        if let Some(event) = schedule.get(&t) {
            normalize_grad_scores(&mut state);
            let rate = match *event {
                ScheduleEvent::Densify { rate } | ScheduleEvent::Finetune { rate } => rate,
            };
            if cfg.pruning && !scene.is_empty() {
                let ev = prune_step(&mut scene, &mut state, rate, t)?;
                for id in &ev.removed {
                    moments.remove(id);
                    growth.remove(id);
                }
                out.prune_events.push(ev);
            }
            if matches!(event, ScheduleEvent::Densify { .. }) && t < cfg.iterations {
                let avg: Vec<f64> = scene
                    .ids()
                    .iter()
                    .map(|id| growth.get(id).map_or(0.0, |&(s, n)| if n > 0 { s / n as f64 } else { 0.0 }))
                    .collect();
                let ev = densify_step(&mut scene, &avg, &cfg.densify, t, &mut rng);
                state.realign(&scene);
                growth.clear();
                out.densify_events.push(ev);
            }
        }
    }
    out.scene = scene;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn apply_updates(
    scene: &mut SceneModel,
    sources: &[Source],
    time: f64,
    world: &[crate::scene::Gaussian],
    grads: &BackwardBuffers,
    draw: &DropoutDraw,
    moments: &mut HashMap<GaussianId, GaussianMoments>,
    pose_moments: &mut [Vec<PoseMoments>],
    lr: &Lrs,
    pose_lr: f64,
    hp: &AdamParams,
) {
    // Pose gradients accumulated per object: (pose index, dT, dR, dq_pose).
    let mut pose_grads: Vec<Option<(usize, Vec3, Matrix3<f64>, Quaternion<f64>)>> =
        vec![None; scene.dynamic_objects.len()];
    for (i, source) in sources.iter().enumerate() {
        if !grads.visible[i] || !draw.kept[i] {
            continue;
        }
        let id = world[i].id;
        let m = moments.entry(id).or_default();
        match *source {
            Source::Static(j) => {
                let d = LocalGrads {
                    mean: grads.mean[i],
                    log_scale: grads.log_scale[i],
                    rotation: grads.rotation[i],
                    opacity_logit: grads.opacity_logit[i],
                    sh: grads.sh[i].clone(),
                };
                let g = &mut scene.static_gaussians[j];
                step_common(g, &d, m, lr, hp);
                let mut p = flatten(&g.sh);
                m.sh.step(&mut p, &flatten(&d.sh), lr.sh, hp);
                write_back(&mut g.sh, &p);
            }
            Source::Dynamic { object, gaussian, pose } => {
                let obj = &mut scene.dynamic_objects[object];
                let pose_rot = obj.poses[pose.lo].rotation;
                let r = rotation_matrix(&pose_rot);
                let q_pose = normalize_quat(pose_rot);
                let g = &mut obj.gaussians[gaussian];
                let (dq_pose, dq_local) = quat_mul_backward(&q_pose, &g.rotation, &grads.rotation[i]);

                let entry = pose_grads[object].get_or_insert((pose.lo, Vec3::zeros(), Matrix3::zeros(), Quaternion::new(0.0, 0.0, 0.0, 0.0)));
                entry.1 += grads.mean[i];
                entry.2 += grads.mean[i] * g.mean.transpose();
                entry.3 += dq_pose;

                let d = LocalGrads {
                    mean: r.transpose() * grads.mean[i],
                    log_scale: grads.log_scale[i],
                    rotation: dq_local,
                    opacity_logit: grads.opacity_logit[i],
                    sh: grads.sh[i].clone(),
                };
                step_common(g, &d, m, lr, hp);
                // SH of an object Gaussian is base + Σ Fourier terms at the view time.
                let weights = g.sh.fourier_weights(time);
                let mut all: Vec<Rgb> = g.sh.base.clone();
                let mut d_all: Vec<Rgb> = d.sh.clone();
                for (mi, (cw, sw)) in weights.iter().enumerate() {
                    all.extend_from_slice(&g.sh.cos[mi]);
                    all.extend_from_slice(&g.sh.sin[mi]);
                    d_all.extend(d.sh.iter().map(|c| c * *cw));
                    d_all.extend(d.sh.iter().map(|c| c * *sw));
                }
                let mut p = flatten(&all);
                m.sh.step(&mut p, &flatten(&d_all), lr.sh, hp);
                let k = g.sh.base.len();
                write_back(&mut g.sh.base, &p[..3 * k]);
                for mi in 0..weights.len() {
                    let off = 3 * k * (1 + 2 * mi);
                    write_back(&mut g.sh.cos[mi], &p[off..off + 3 * k]);
                    write_back(&mut g.sh.sin[mi], &p[off + 3 * k..off + 6 * k]);
                }
            }
        }
    }
    for (object, pg) in pose_grads.into_iter().enumerate() {
        let Some((pi, d_t, d_r, dq_unit)) = pg else {
            continue;
        };
        let pose = &mut scene.dynamic_objects[object].poses[pi];
        let pm = &mut pose_moments[object][pi];
        let mut p = [pose.translation.x, pose.translation.y, pose.translation.z];
        pm.translation.step(&mut p, &[d_t.x, d_t.y, d_t.z], pose_lr, hp);
        pose.translation = Vec3::from(p);

        let q = pose.rotation;
        let n = q.norm();
        let u = q / n;
        let through_norm = Quaternion::from((dq_unit.coords - u.coords * u.coords.dot(&dq_unit.coords)) / n);
        let dq = rotation_matrix_backward(&q, &d_r) + through_norm;
        let mut p = quat_array(&q);
        pm.rotation.step(&mut p, &quat_array(&dq), pose_lr, hp);
        pose.rotation = normalize_quat(Quaternion::new(p[0], p[1], p[2], p[3]));
    }
}
