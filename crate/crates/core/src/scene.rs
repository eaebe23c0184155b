//! Compositional Gaussian scene: a static world-frame set plus dynamic objects
//! whose Gaussians live in a local frame and follow per-timestamp poses.

use std::collections::HashSet;

use nalgebra::{Matrix3, Quaternion};

use crate::error::{Error, Result};
use crate::math::{
    identity_quat, normalize_quat, rotation_matrix, rotation_matrix_backward, sigmoid, slerp, Rgb,
    Vec3,
};
use crate::sh::TimeVaryingSh;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GaussianId(pub u64);

/// One anisotropic 3D Gaussian. `A` is the appearance model: a plain SH block
/// for static and composed Gaussians, [`TimeVaryingSh`] inside dynamic objects.
#[derive(Clone, Debug, PartialEq)]
pub struct Splat<A> {
    pub id: GaussianId,
    pub mean: Vec3,
    /// Per-axis log standard deviation.
    pub log_scale: Vec3,
    /// (w, x, y, z); kept at unit norm by the optimizer.
    pub rotation: Quaternion<f64>,
    pub opacity_logit: f64,
    pub sh: A,
    pub s_sem: f64,
    pub critical: bool,
}

pub type Gaussian = Splat<Vec<Rgb>>;
pub type ObjectGaussian = Splat<TimeVaryingSh>;

impl<A> Splat<A> {
    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn scale(&self) -> Vec3 {
        self.log_scale.map(f64::exp)
    }

    pub fn covariance(&self) -> Matrix3<f64> {
        covariance_from_params(&self.log_scale, &self.rotation)
    }

    pub fn with_sh<B>(&self, sh: B) -> Splat<B> {
        Splat {
            id: self.id,
            mean: self.mean,
            log_scale: self.log_scale,
            rotation: self.rotation,
            opacity_logit: self.opacity_logit,
            sh,
            s_sem: self.s_sem,
            critical: self.critical,
        }
    }
}

impl Gaussian {
    /// Isotropic Gaussian with a constant (degree 0) color.
    pub fn isotropic(id: u64, mean: Vec3, sigma: f64, opacity: f64, color: Rgb) -> Self {
        Self {
            id: GaussianId(id),
            mean,
            log_scale: Vec3::repeat(sigma.ln()),
            rotation: identity_quat(),
            opacity_logit: crate::math::logit(opacity),
            sh: vec![rgb_to_dc(color)],
            s_sem: 0.0,
            critical: false,
        }
    }
}

/// DC coefficient that evaluates to `color` under the +0.5 offset convention.
pub fn rgb_to_dc(color: Rgb) -> Rgb {
    (color - Rgb::repeat(0.5)) / crate::sh::SH_C0
}

/// `Σ = R S Sᵀ Rᵀ` with `S = diag(exp(log_scale))`.
pub fn covariance_from_params(log_scale: &Vec3, rotation: &Quaternion<f64>) -> Matrix3<f64> {
    let r = rotation_matrix(rotation);
    let d = Matrix3::from_diagonal(&log_scale.map(|s| (2.0 * s).exp()));
    let cov = r * d * r.transpose();
    // Exact symmetry regardless of rounding in the triple product.
    (cov + cov.transpose()) * 0.5
}

/// Backward of [`covariance_from_params`]; returns `(dL/dlog_scale, dL/dq)`.
pub fn covariance_backward(
    log_scale: &Vec3,
    rotation: &Quaternion<f64>,
    d_cov: &Matrix3<f64>,
) -> (Vec3, Quaternion<f64>) {
    let g = (d_cov + d_cov.transpose()) * 0.5;
    let r = rotation_matrix(rotation);
    let var = log_scale.map(|s| (2.0 * s).exp());
    let d = Matrix3::from_diagonal(&var);
    let rt_g_r = r.transpose() * g * r;
    let d_log_scale = Vec3::new(
        2.0 * var.x * rt_g_r[(0, 0)],
        2.0 * var.y * rt_g_r[(1, 1)],
        2.0 * var.z * rt_g_r[(2, 2)],
    );
    let d_r = g * r * d * 2.0;
    (d_log_scale, rotation_matrix_backward(rotation, &d_r))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectPose {
    pub timestamp: f64,
    pub rotation: Quaternion<f64>,
    pub translation: Vec3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicObject {
    pub object_id: u32,
    pub gaussians: Vec<ObjectGaussian>,
    /// Strictly ascending in timestamp.
    pub poses: Vec<ObjectPose>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneModel {
    pub static_gaussians: Vec<Gaussian>,
    pub dynamic_objects: Vec<DynamicObject>,
    pub background: Rgb,
}

impl Default for SceneModel {
    fn default() -> Self {
        Self {
            static_gaussians: Vec::new(),
            dynamic_objects: Vec::new(),
            background: Rgb::zeros(),
        }
    }
}

impl SceneModel {
    pub fn from_static(gaussians: Vec<Gaussian>, background: Rgb) -> Self {
        Self {
            static_gaussians: gaussians,
            dynamic_objects: Vec::new(),
            background,
        }
    }

    pub fn gaussian_count(&self) -> usize {
        self.static_gaussians.len()
            + self
                .dynamic_objects
                .iter()
                .map(|o| o.gaussians.len())
                .sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussian_count() == 0
    }

    /// Every Gaussian id, static first, then objects in order.
    pub fn ids(&self) -> Vec<GaussianId> {
        self.static_gaussians
            .iter()
            .map(|g| g.id)
            .chain(
                self.dynamic_objects
                    .iter()
                    .flat_map(|o| o.gaussians.iter().map(|g| g.id)),
            )
            .collect()
    }

    pub fn next_id(&self) -> u64 {
        self.ids().iter().map(|id| id.0 + 1).max().unwrap_or(0)
    }

    /// `(s_sem, critical)` per Gaussian in [`SceneModel::ids`] order.
    pub fn semantic_flags(&self) -> Vec<(f64, bool)> {
        self.static_gaussians
            .iter()
            .map(|g| (g.s_sem, g.critical))
            .chain(
                self.dynamic_objects
                    .iter()
                    .flat_map(|o| o.gaussians.iter().map(|g| (g.s_sem, g.critical))),
            )
            .collect()
    }

    /// Sets `(s_sem, critical)` in [`SceneModel::ids`] order.
    pub fn set_semantic_flags(&mut self, flags: &[(f64, bool)]) {
        assert_eq!(flags.len(), self.gaussian_count());
        let mut it = flags.iter();
        for g in &mut self.static_gaussians {
            let &(s, c) = it.next().unwrap();
            g.s_sem = s;
            g.critical = c;
        }
        for o in &mut self.dynamic_objects {
            for g in &mut o.gaussians {
                let &(s, c) = it.next().unwrap();
                g.s_sem = s;
                g.critical = c;
            }
        }
    }

    /// Keeps only Gaussians for which `keep(id)` is true.
    pub fn retain(&mut self, mut keep: impl FnMut(GaussianId) -> bool) {
        self.static_gaussians.retain(|g| keep(g.id));
        for o in &mut self.dynamic_objects {
            o.gaussians.retain(|g| keep(g.id));
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for id in self.ids() {
            if !seen.insert(id) {
                return Err(Error::Config(format!("duplicate gaussian id {}", id.0)));
            }
        }
        for o in &self.dynamic_objects {
            if o.poses.is_empty() {
                return Err(Error::Config(format!("object {} has no poses", o.object_id)));
            }
            for w in o.poses.windows(2) {
                if w[1].timestamp <= w[0].timestamp {
                    return Err(Error::Config(format!(
                        "object {} poses not strictly ascending",
                        o.object_id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// How a dynamic object's pose is looked up at an arbitrary time.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PoseLookup {
    #[default]
    Nearest,
    /// Linear translation + quaternion slerp between bracketing poses.
    Interpolate,
}

/// Which stored poses produced a resolved pose, and with what weight:
/// `(1 - t) * poses[lo] + t * poses[hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseBlend {
    pub lo: usize,
    pub hi: usize,
    pub t: f64,
}

pub fn resolve_pose(poses: &[ObjectPose], time: f64, lookup: PoseLookup) -> (ObjectPose, PoseBlend) {
    assert!(!poses.is_empty(), "dynamic object without poses");
    let idx = poses.partition_point(|p| p.timestamp <= time);
    let single = |i: usize| {
        (
            poses[i].clone(),
            PoseBlend {
                lo: i,
                hi: i,
                t: 0.0,
            },
        )
    };
    if idx == 0 {
        return single(0);
    }
    if idx == poses.len() {
        return single(poses.len() - 1);
    }
    let (lo, hi) = (idx - 1, idx);
    let span = poses[hi].timestamp - poses[lo].timestamp;
    let t = (time - poses[lo].timestamp) / span;
    match lookup {
        // Ties at the midpoint go to the earlier pose.
        PoseLookup::Nearest => single(if t <= 0.5 { lo } else { hi }),
        PoseLookup::Interpolate => {
            let pose = ObjectPose {
                timestamp: time,
                rotation: slerp(&poses[lo].rotation, &poses[hi].rotation, t),
                translation: poses[lo].translation * (1.0 - t) + poses[hi].translation * t,
            };
            (pose, PoseBlend { lo, hi, t })
        }
    }
}

/// Where a composed world Gaussian came from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Source {
    Static(usize),
    Dynamic {
        object: usize,
        gaussian: usize,
        pose: PoseBlend,
    },
}

#[derive(Clone, Debug)]
pub struct ComposedScene {
    pub gaussians: Vec<Gaussian>,
    pub sources: Vec<Source>,
    pub time: f64,
}

/// Flattens the scene into world-frame Gaussians at `time`.
pub fn compose_world(scene: &SceneModel, time: f64) -> Vec<Gaussian> {
    compose_world_with(scene, time, PoseLookup::Nearest).gaussians
}

pub fn compose_world_with(scene: &SceneModel, time: f64, lookup: PoseLookup) -> ComposedScene {
    let mut gaussians = scene.static_gaussians.clone();
    let mut sources: Vec<Source> = (0..gaussians.len()).map(Source::Static).collect();
    for (oi, object) in scene.dynamic_objects.iter().enumerate() {
        let (pose, blend) = resolve_pose(&object.poses, time, lookup);
        let r = rotation_matrix(&pose.rotation);
        let q_pose = normalize_quat(pose.rotation);
        for (gi, g) in object.gaussians.iter().enumerate() {
            let mut w = g.with_sh(g.sh.at(time));
            w.mean = r * g.mean + pose.translation;
            w.rotation = q_pose * g.rotation;
            gaussians.push(w);
            sources.push(Source::Dynamic {
                object: oi,
                gaussian: gi,
                pose: blend,
            });
        }
    }
    ComposedScene {
        gaussians,
        sources,
        time,
    }
}
