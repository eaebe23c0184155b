use rand::Rng;
use rand_distr::StandardNormal;

use super::config::DensifyConfig;
use crate::math::{rotation_matrix, Vec3};
use crate::scene::{GaussianId, SceneModel, Splat};

/// Scale divisor applied to both halves of a split.
pub const SPLIT_FACTOR: f64 = 1.6;
/// Clone offset as a fraction of the parent's per-axis scale.
const CLONE_JITTER: f64 = 0.05;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DensifyEvent {
    pub iteration: u64,
    pub cloned: usize,
    pub split: usize,
    pub count_before: usize,
    pub count_after: usize,
}

impl DensifyEvent {
    pub fn to_line(&self) -> String {
        format!(
            "event=densify iter={} cloned={} split={} count_before={} count_after={}",
            self.iteration, self.cloned, self.split, self.count_before, self.count_after
        )
    }
}

fn normal3<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal))
}

enum Growth {
    Clone,
    Split,
}

fn grow<A: Clone, R: Rng + ?Sized>(g: &mut Splat<A>, kind: &Growth, id: u64, rng: &mut R) -> Splat<A> {
    let r = rotation_matrix(&g.rotation);
    let mut child = g.clone();
    child.id = GaussianId(id);
    match kind {
        Growth::Clone => {
            child.mean += r * g.scale().component_mul(&normal3(rng)) * CLONE_JITTER;
        }
        Growth::Split => {
            let offset = r * g.scale().component_mul(&normal3(rng));
            let shrink = Vec3::repeat(SPLIT_FACTOR.ln());
            child.mean = g.mean - offset;
            child.log_scale = g.log_scale - shrink;
            g.mean += offset;
            g.log_scale -= shrink;
        }
    }
    child
}

/// Clones small and splits large Gaussians whose mean screen-space gradient
/// exceeds the threshold. `avg_grad` is aligned with [`SceneModel::ids`];
/// children are appended after their siblings and get fresh ids.
pub fn densify_step<R: Rng + ?Sized>(
    scene: &mut SceneModel,
    avg_grad: &[f64],
    cfg: &DensifyConfig,
    iteration: u64,
    rng: &mut R,
) -> DensifyEvent {
    let count_before = scene.gaussian_count();
    assert_eq!(avg_grad.len(), count_before, "gradient statistics misaligned");
    let mut ev = DensifyEvent {
        iteration,
        count_before,
        ..Default::default()
    };
    let mut next_id = scene.next_id();
    let mut budget = cfg.max_gaussians.saturating_sub(count_before);
    let mut k = 0;

    let mut decide = |scale_max: f64, grad: f64, ev: &mut DensifyEvent| -> Option<Growth> {
        if grad <= cfg.grad_threshold || budget == 0 {
            return None;
        }
        budget -= 1;
        if scale_max <= cfg.split_scale {
            ev.cloned += 1;
            Some(Growth::Clone)
        } else {
            ev.split += 1;
            Some(Growth::Split)
        }
    };

    let mut born = Vec::new();
    for g in &mut scene.static_gaussians {
        if let Some(kind) = decide(g.scale().max(), avg_grad[k], &mut ev) {
            born.push(grow(g, &kind, next_id, rng));
            next_id += 1;
        }
        k += 1;
    }
    scene.static_gaussians.append(&mut born);
    for object in &mut scene.dynamic_objects {
        let mut born = Vec::new();
        for g in &mut object.gaussians {
            if let Some(kind) = decide(g.scale().max(), avg_grad[k], &mut ev) {
                born.push(grow(g, &kind, next_id, rng));
                next_id += 1;
            }
            k += 1;
        }
        object.gaussians.append(&mut born);
    }
    ev.count_after = scene.gaussian_count();
    ev
}
