//! Deterministic synthetic scenes with ground-truth criticality, masks and
//! reference-rendered images.
//!
//! World axes follow the camera convention: x right, y down, z forward.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{CameraView, Intrinsics, RigidTransform};
use crate::error::{Error, Result};
use crate::image::LabelMask;
use crate::math::{axis_angle_quat, identity_quat, logit, Rgb, Vec3};
use crate::raster::reference_render_weighted;
use crate::scene::{
    compose_world, rgb_to_dc, DynamicObject, Gaussian, GaussianId, ObjectGaussian, ObjectPose, SceneModel,
};
use crate::semantic::{labels, SemanticClassTable, SemanticMask};
use crate::sh::TimeVaryingSh;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// Opaque critical wall in front of many non-critical splats.
    Wall,
    /// Critical vehicle box and a walking pedestrian in front of a textured
    /// building and road.
    StreetToy,
    /// `count` random splats, a fifth of them critical.
    Random,
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wall" => Ok(Self::Wall),
            "street-toy" => Ok(Self::StreetToy),
            "random" => Ok(Self::Random),
            other => Err(Error::UnknownLayout(other.to_string())),
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Wall => "wall",
            Self::StreetToy => "street-toy",
            Self::Random => "random",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub layout: Layout,
    pub seed: u64,
    /// Image size; per-layout default when `None`.
    pub size: Option<(usize, usize)>,
    pub views: Option<usize>,
    /// Number of splats for [`Layout::Random`].
    pub count: usize,
    /// Render ground-truth images and masks with the reference renderer.
    pub ground_truth: bool,
}

impl SynthSpec {
    pub fn new(layout: Layout, seed: u64) -> Self {
        Self {
            layout,
            seed,
            size: None,
            views: None,
            count: 100,
            ground_truth: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthScene {
    /// Ground-truth scene; `s_sem` is 1 for critical splats, 0 otherwise.
    pub scene: SceneModel,
    /// Views with `gt_image` and `semantic_mask` filled when requested.
    pub views: Vec<CameraView>,
    pub masks: Vec<SemanticMask>,
    pub table: SemanticClassTable,
    /// Class label of every Gaussian in [`SceneModel::ids`] order.
    pub classes: Vec<u16>,
}

pub fn synth_scene(spec: &SynthSpec) -> Result<SynthScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (scene, classes, views) = match spec.layout {
        Layout::Wall => wall(spec, &mut rng),
        Layout::StreetToy => street_toy(spec, &mut rng),
        Layout::Random => random(spec, &mut rng),
    };
    let table = SemanticClassTable::default();
    let mut out = SynthScene {
        scene,
        views,
        masks: Vec::new(),
        table,
        classes,
    };
    if spec.ground_truth {
        render_ground_truth(&mut out);
    }
    Ok(out)
}

/// Fills `gt_image` and the masks: a pixel takes a critical class when the
/// summed compositing weight of that class's splats exceeds 0.5.
fn render_ground_truth(s: &mut SynthScene) {
    let critical_classes: Vec<u16> = {
        let mut c: Vec<u16> = s.classes.iter().copied().filter(|&l| s.table.classes.get(&l).is_some_and(|e| e.critical)).collect();
        c.sort();
        c.dedup();
        c
    };
    for view in &mut s.views {
        let world = compose_world(&s.scene, view.timestamp);
        let mut mask = LabelMask::new(view.width(), view.height(), labels::BUILDING);
        let mut image = None;
        if critical_classes.is_empty() {
            let flagged = vec![false; world.len()];
            image = Some(reference_render_weighted(&world, view, s.scene.background, &flagged).0.color);
        }
        for &class in &critical_classes {
            let flagged: Vec<bool> = s.classes.iter().map(|&c| c == class).collect();
            let (target, weight) = reference_render_weighted(&world, view, s.scene.background, &flagged);
            for (p, w) in weight.iter().enumerate() {
                if *w > 0.5 {
                    mask.labels[p] = class;
                }
            }
            image.get_or_insert(target.color);
        }
        view.gt_image = image;
        s.masks.push(SemanticMask {
            view_id: view.id,
            mask: mask.clone(),
        });
        view.semantic_mask = Some(mask);
    }
}

fn splat(id: &mut u64, mean: Vec3, sigma: Vec3, opacity: f64, color: Rgb, critical: bool) -> Gaussian {
    let g = Gaussian {
        id: GaussianId(*id),
        mean,
        log_scale: sigma.map(f64::ln),
        rotation: identity_quat(),
        opacity_logit: logit(opacity),
        sh: vec![rgb_to_dc(color)],
        s_sem: if critical { 1.0 } else { 0.0 },
        critical,
    };
    *id += 1;
    g
}

fn wall(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> (SceneModel, Vec<u16>, Vec<CameraView>) {
    let (w, h) = spec.size.unwrap_or((512, 512));
    let focal = w.max(h) as f64;
    let depth = 2.0;
    let sigma = 0.02;
    let spacing = 1.5 * sigma;
    // Extend past the frustum so border pixels are covered too.
    let half_x = depth * w as f64 / (2.0 * focal) + 4.0 * sigma;
    let half_y = depth * h as f64 / (2.0 * focal) + 4.0 * sigma;
    let mut id = 0;
    let mut gs = Vec::new();
    let mut classes = Vec::new();
    let nx = (2.0 * half_x / spacing).ceil() as usize + 1;
    let ny = (2.0 * half_y / spacing).ceil() as usize + 1;
    for iy in 0..ny {
        for ix in 0..nx {
            let x = -half_x + ix as f64 * spacing;
            let y = -half_y + iy as f64 * spacing;
            let shade = 0.55 + 0.1 * rng.random::<f64>();
            let color = Rgb::new(shade, shade * 0.9, shade * 0.8);
            gs.push(splat(&mut id, Vec3::new(x, y, depth), Vec3::repeat(sigma), 0.95, color, true));
            classes.push(labels::VEHICLE);
        }
    }
    let back = 5.0;
    let back_sigma = 40.0 * back / focal;
    let bx = back * w as f64 / (2.0 * focal);
    let by = back * h as f64 / (2.0 * focal);
    for _ in 0..500 {
        let mean = Vec3::new(
            rng.random_range(-bx..bx),
            rng.random_range(-by..by),
            back + rng.random_range(-0.25..0.25),
        );
        let color = Rgb::new(rng.random(), rng.random(), rng.random());
        let opacity = rng.random_range(0.5..0.9);
        gs.push(splat(&mut id, mean, Vec3::repeat(back_sigma), opacity, color, false));
        classes.push(labels::BUILDING);
    }
    let view = CameraView::new(0, Intrinsics::simple(focal, w, h), RigidTransform::identity(), 0.0);
    (SceneModel::from_static(gs, Rgb::new(0.05, 0.05, 0.08)), classes, vec![view])
}

/// Camera on a short horizontal arc, all looking at the scene center.
fn arc_views(n: usize, w: usize, h: usize, focal: f64, target: Vec3, dt: f64) -> Vec<CameraView> {
    (0..n)
        .map(|k| {
            let s = if n > 1 { k as f64 / (n - 1) as f64 - 0.5 } else { 0.0 };
            let eye = Vec3::new(1.2 * s, -0.15, 0.0);
            let pose = RigidTransform::look_at(eye, target, Vec3::new(0.0, -1.0, 0.0));
            CameraView::new(k as u32, Intrinsics::simple(focal, w, h), pose, k as f64 * dt)
        })
        .collect()
}

fn street_toy(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> (SceneModel, Vec<u16>, Vec<CameraView>) {
    let (w, h) = spec.size.unwrap_or((64, 64));
    let n_views = spec.views.unwrap_or(6);
    let focal = 0.9 * w.max(h) as f64;
    let mut id = 0;
    let mut gs = Vec::new();
    let mut classes = Vec::new();

    // Building facade at z = 7 with a window pattern.
    let (fs, fsp) = (0.14, 0.17);
    let mut y: f64 = -3.0;
    while y <= 1.2 {
        let mut x: f64 = -3.6;
        while x <= 3.6 {
            let window = ((x * 1.6).rem_euclid(1.0) < 0.45) && ((y * 1.3).rem_euclid(1.0) < 0.5);
            let base = if window { Rgb::new(0.25, 0.35, 0.5) } else { Rgb::new(0.75, 0.6, 0.45) };
            let jitter = 0.05 * (rng.random::<f64>() - 0.5);
            let mean = Vec3::new(x, y, 7.0 + 0.05 * rng.random::<f64>());
            gs.push(splat(&mut id, mean, Vec3::new(fs, fs, 0.02), 0.9, base.add_scalar(jitter), false));
            classes.push(labels::BUILDING);
            x += fsp;
        }
        y += fsp;
    }
    // Road plane at y = 1.2 from z = 1.5 to 7 with lane stripes.
    let mut z: f64 = 1.5;
    while z <= 7.0 {
        let mut x: f64 = -3.0;
        while x <= 3.0 {
            let stripe = x.abs() < 0.08 && (z * 1.5).rem_euclid(1.0) < 0.5;
            let base = if stripe { Rgb::new(0.9, 0.9, 0.85) } else { Rgb::repeat(0.3 + 0.05 * rng.random::<f64>()) };
            gs.push(splat(&mut id, Vec3::new(x, 1.2, z), Vec3::new(0.12, 0.02, 0.12), 0.9, base, false));
            classes.push(labels::ROAD);
            x += 0.16;
        }
        z += 0.16;
    }
    // Vehicle: box surfaces facing the cameras.
    let (cx, cy, cz) = (-0.7, 0.85, 4.0);
    let (hx, hy, hz): (f64, f64, f64) = (0.55, 0.3, 0.45);
    let step = 0.09;
    let mut add_car = |gs: &mut Vec<Gaussian>, classes: &mut Vec<u16>, mean: Vec3, color: Rgb| {
        gs.push(splat(&mut id, mean, Vec3::repeat(0.055), 0.95, color, true));
        classes.push(labels::VEHICLE);
    };
    let mut u = -hx;
    while u <= hx + 1e-9 {
        let mut v = -hy;
        while v <= hy + 1e-9 {
            let glass = v < -0.05 && u.abs() < hx - 0.12;
            let color = if glass { Rgb::new(0.1, 0.15, 0.2) } else { Rgb::new(0.85, 0.1, 0.1) };
            add_car(&mut gs, &mut classes, Vec3::new(cx + u, cy + v, cz - hz), color);
            v += step;
        }
        u += step;
    }
    let mut d = -hz + step;
    while d <= hz + 1e-9 {
        let mut v = -hy;
        while v <= hy + 1e-9 {
            add_car(&mut gs, &mut classes, Vec3::new(cx + hx, cy + v, cz + d), Rgb::new(0.7, 0.08, 0.08));
            v += step;
        }
        let mut u = -hx;
        while u <= hx + 1e-9 {
            add_car(&mut gs, &mut classes, Vec3::new(cx + u, cy - hy, cz + d), Rgb::new(0.6, 0.05, 0.05));
            u += step;
        }
        d += step;
    }

    // Pedestrian walking across in front of the facade.
    let mut person = Vec::new();
    let mut part = |y0: f64, y1: f64, half_w: f64, color: Rgb| {
        let mut y = y0;
        while y <= y1 + 1e-9 {
            let mut x = -half_w;
            while x <= half_w + 1e-9 {
                let g = splat(&mut id, Vec3::new(x, y, 0.0), Vec3::repeat(0.045), 0.95, color, true);
                person.push(g.with_sh(TimeVaryingSh::with_order(g.sh.clone(), 1, 2.0)));
                x += 0.07;
            }
            y += 0.07;
        }
    };
    part(-0.85, -0.72, 0.035, Rgb::new(0.9, 0.7, 0.55));
    part(-0.62, -0.2, 0.1, Rgb::new(0.15, 0.35, 0.85));
    part(-0.15, 0.3, 0.07, Rgb::new(0.15, 0.15, 0.2));
    let person: Vec<ObjectGaussian> = person;
    let dt = 0.2;
    let poses: Vec<ObjectPose> = (0..n_views.max(1))
        .map(|k| ObjectPose {
            timestamp: k as f64 * dt,
            rotation: axis_angle_quat(Vec3::y(), 0.1 * k as f64),
            translation: Vec3::new(0.9 - 0.12 * k as f64, 0.9, 3.2),
        })
        .collect();
    let person_classes = vec![labels::PEDESTRIAN; person.len()];

    let mut scene = SceneModel::from_static(gs, Rgb::new(0.55, 0.7, 0.9));
    scene.dynamic_objects.push(DynamicObject {
        object_id: 1,
        gaussians: person,
        poses,
    });
    classes.extend(person_classes);
    let views = arc_views(n_views, w, h, focal, Vec3::new(0.0, 0.4, 4.5), dt);
    (scene, classes, views)
}

fn random(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> (SceneModel, Vec<u16>, Vec<CameraView>) {
    let (w, h) = spec.size.unwrap_or((64, 64));
    let focal = w.max(h) as f64;
    let mut id = 0;
    let mut gs = Vec::with_capacity(spec.count);
    let mut classes = Vec::with_capacity(spec.count);
    for _ in 0..spec.count {
        let z = rng.random_range(2.0..8.0);
        let mean = Vec3::new(rng.random_range(-0.5..0.5) * z, rng.random_range(-0.5..0.5) * z, z);
        let sigma = Vec3::new(rng.random_range(0.03..0.3), rng.random_range(0.03..0.3), rng.random_range(0.03..0.3));
        let critical = rng.random::<f64>() < 0.2;
        let mut g = splat(&mut id, mean, sigma, rng.random_range(0.2..0.95), Rgb::new(rng.random(), rng.random(), rng.random()), critical);
        g.rotation = axis_angle_quat(
            Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
            rng.random_range(0.0..3.0),
        );
        gs.push(g);
        classes.push(if critical { labels::VEHICLE } else { labels::VEGETATION });
    }
    let views = arc_views(spec.views.unwrap_or(2), w, h, focal, Vec3::new(0.0, 0.0, 5.0), 0.1);
    (SceneModel::from_static(gs, Rgb::new(0.1, 0.1, 0.1)), classes, views)
}

/// Training start for a synthetic scene: same Gaussians with jittered
/// geometry, washed-out colors, lower opacity and no semantic scores.
pub fn perturbed_init(scene: &SceneModel, seed: u64, strength: f64) -> SceneModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1217);
    let mut out = scene.clone();
    let mut jitter = |mean: &mut Vec3, log_scale: &mut Vec3, logit_o: &mut f64, dc: &mut Rgb, s_sem: &mut f64, critical: &mut bool| {
        let sigma = log_scale.map(f64::exp).max();
        *mean += Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * sigma * strength;
        *log_scale += Vec3::repeat(0.3 * strength * rng.random_range(-1.0..1.0));
        *logit_o -= strength;
        *dc *= 1.0 - 0.6 * strength;
        *s_sem = 0.0;
        *critical = false;
    };
    for g in &mut out.static_gaussians {
        jitter(&mut g.mean, &mut g.log_scale, &mut g.opacity_logit, &mut g.sh[0], &mut g.s_sem, &mut g.critical);
    }
    for o in &mut out.dynamic_objects {
        for g in &mut o.gaussians {
            jitter(&mut g.mean, &mut g.log_scale, &mut g.opacity_logit, &mut g.sh.base[0], &mut g.s_sem, &mut g.critical);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_layout_is_an_error() {
        assert!("tunnel".parse::<Layout>().is_err());
        assert_eq!("street-toy".parse::<Layout>().unwrap(), Layout::StreetToy);
    }

    #[test]
    fn same_seed_same_scene() {
        let spec = SynthSpec {
            ground_truth: false,
            ..SynthSpec::new(Layout::Wall, 7)
        };
        let a = synth_scene(&spec).unwrap();
        let b = synth_scene(&spec).unwrap();
        assert_eq!(a.scene, b.scene);
    }

    #[test]
    fn empty_random_scene_renders_background() {
        let spec = SynthSpec {
            count: 0,
            ..SynthSpec::new(Layout::Random, 3)
        };
        let s = synth_scene(&spec).unwrap();
        assert!(s.scene.is_empty());
        let gt = s.views[0].gt_image.as_ref().unwrap();
        assert!(gt.data.chunks(3).all(|c| Rgb::from_column_slice(c) == s.scene.background));
    }

    #[test]
    fn classes_align_with_ids() {
        let spec = SynthSpec {
            ground_truth: false,
            ..SynthSpec::new(Layout::StreetToy, 1)
        };
        let s = synth_scene(&spec).unwrap();
        assert_eq!(s.classes.len(), s.scene.gaussian_count());
        for ((s_sem, critical), class) in s.scene.semantic_flags().iter().zip(&s.classes) {
            assert_eq!(*critical, s.table.classes[class].critical);
            assert_eq!(*s_sem, if *critical { 1.0 } else { 0.0 });
        }
    }
}
