//! Pinhole cameras and EWA projection of 3D Gaussians to image-space ellipses.
//!
//! Pixel `(i, j)` covers `[i, i+1) x [j, j+1)` and is sampled at its center
//! `(i + 0.5, j + 0.5)`.

use nalgebra::{Matrix2, Matrix2x3, Matrix3, Quaternion, Vector2};

use crate::error::{Error, Result};
use crate::image::{Image, LabelMask};
use crate::math::{rotation_matrix, Vec3};
use crate::scene::Gaussian;

/// Near-plane distance in meters; Gaussians at or in front of it are culled.
pub const Z_NEAR: f64 = 0.01;
/// Anti-aliasing floor added to the projected covariance diagonal, in px².
pub const AA_FLOOR: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Intrinsics {
    /// Centered principal point.
    pub fn simple(focal: f64, width: usize, height: usize) -> Self {
        Self {
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || self.width == 0 || self.height == 0 {
            return Err(Error::Config(format!("invalid intrinsics {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform {
    pub rotation: Quaternion<f64>,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: crate::math::identity_quat(),
            translation: Vec3::zeros(),
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        rotation_matrix(&self.rotation)
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.matrix() * p + self.translation
    }

    /// World-to-camera transform of a camera at `eye` looking at `target`,
    /// with camera +y pointing roughly along `-up` (image rows grow downward).
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Self {
        let forward = (target - eye).normalize();
        let right = forward.cross(&up).normalize();
        let down = forward.cross(&right);
        // Rows of the world-to-camera rotation are the camera axes in world frame.
        let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let rot = nalgebra::Rotation3::from_matrix_unchecked(r);
        let q = nalgebra::UnitQuaternion::from_rotation_matrix(&rot).into_inner();
        Self {
            rotation: q,
            translation: -(r * eye),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraView {
    pub id: u32,
    pub intrinsics: Intrinsics,
    pub world_to_camera: RigidTransform,
    pub timestamp: f64,
    pub gt_image: Option<Image>,
    pub semantic_mask: Option<LabelMask>,
}

impl CameraView {
    pub fn new(id: u32, intrinsics: Intrinsics, world_to_camera: RigidTransform, timestamp: f64) -> Self {
        Self {
            id,
            intrinsics,
            world_to_camera,
            timestamp,
            gt_image: None,
            semantic_mask: None,
        }
    }

    pub fn width(&self) -> usize {
        self.intrinsics.width
    }

    pub fn height(&self) -> usize {
        self.intrinsics.height
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        -(self.world_to_camera.matrix().transpose() * self.world_to_camera.translation)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projected {
    pub mean2d: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    pub depth: f64,
}

fn projection_jacobian(k: &Intrinsics, p: &Vec3) -> Matrix2x3<f64> {
    let iz = 1.0 / p.z;
    Matrix2x3::new(
        k.fx * iz,
        0.0,
        -k.fx * p.x * iz * iz,
        0.0,
        k.fy * iz,
        -k.fy * p.y * iz * iz,
    )
}

/// Projects a world-frame Gaussian; `None` when it lies at or behind the near plane.
pub fn project_gaussian(g: &Gaussian, cam: &CameraView) -> Option<Projected> {
    project_mean_cov(&g.mean, &g.covariance(), cam)
}

pub fn project_mean_cov(mean: &Vec3, cov3d: &Matrix3<f64>, cam: &CameraView) -> Option<Projected> {
    let w = cam.world_to_camera.matrix();
    let p = w * mean + cam.world_to_camera.translation;
    if p.z <= Z_NEAR {
        return None;
    }
    let k = &cam.intrinsics;
    let mean2d = Vector2::new(k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy);
    let t = projection_jacobian(k, &p) * w;
    let cov2d = t * cov3d * t.transpose() + Matrix2::identity() * AA_FLOOR;
    Some(Projected {
        mean2d,
        cov2d: (cov2d + cov2d.transpose()) * 0.5,
        depth: p.z,
    })
}

/// Backward of [`project_mean_cov`]: maps `dL/dmean2d` and `dL/dcov2d` onto
/// the world-frame mean and 3D covariance.
pub fn project_backward(
    mean: &Vec3,
    cov3d: &Matrix3<f64>,
    cam: &CameraView,
    d_mean2d: &Vector2<f64>,
    d_cov2d: &Matrix2<f64>,
) -> (Vec3, Matrix3<f64>) {
    let k = &cam.intrinsics;
    let w = cam.world_to_camera.matrix();
    let p = w * mean + cam.world_to_camera.translation;
    let j = projection_jacobian(k, &p);
    let g2 = (d_cov2d + d_cov2d.transpose()) * 0.5;

    // cov2d = J M Jᵀ with M = W Σ Wᵀ.
    let m = w * cov3d * w.transpose();
    let d_m = j.transpose() * g2 * j;
    let d_cov3d = w.transpose() * d_m * w;
    let d_j = g2 * j * m * 2.0;

    let iz = 1.0 / p.z;
    let iz2 = iz * iz;
    let iz3 = iz2 * iz;
    let mut d_p = Vec3::new(
        d_mean2d.x * k.fx * iz,
        d_mean2d.y * k.fy * iz,
        -d_mean2d.x * k.fx * p.x * iz2 - d_mean2d.y * k.fy * p.y * iz2,
    );
    // J entries that depend on p.
    d_p.x += d_j[(0, 2)] * (-k.fx * iz2);
    d_p.y += d_j[(1, 2)] * (-k.fy * iz2);
    d_p.z += d_j[(0, 0)] * (-k.fx * iz2)
        + d_j[(1, 1)] * (-k.fy * iz2)
        + d_j[(0, 2)] * (2.0 * k.fx * p.x * iz3)
        + d_j[(1, 2)] * (2.0 * k.fy * p.y * iz3);

    (w.transpose() * d_p, d_cov3d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{axis_angle_quat, identity_quat, Rgb};

    fn cam(width: usize, fx: f64) -> CameraView {
        CameraView::new(
            0,
            Intrinsics {
                fx,
                fy: fx,
                cx: 50.0,
                cy: 50.0,
                width,
                height: width,
            },
            RigidTransform::identity(),
            0.0,
        )
    }

    #[test]
    fn on_axis_projects_to_principal_point() {
        let g = Gaussian::isotropic(0, Vec3::new(0.0, 0.0, 2.0), 0.1, 0.5, Rgb::zeros());
        let p = project_gaussian(&g, &cam(100, 100.0)).unwrap();
        assert_eq!(p.mean2d, Vector2::new(50.0, 50.0));
        assert_eq!(p.depth, 2.0);
    }

    #[test]
    fn isotropic_cov_scales_with_focal_over_depth() {
        // Analytic Jacobian on the optical axis is diag(f/z, f/z), so cov2d = (f s / z)^2 I + aa.
        for (s, z, f) in [(0.1, 2.0, 100.0), (0.05, 4.0, 300.0), (0.3, 1.5, 80.0)] {
            let g = Gaussian::isotropic(0, Vec3::new(0.0, 0.0, z), s, 0.5, Rgb::zeros());
            let p = project_gaussian(&g, &cam(100, f)).unwrap();
            let want = (f * s / z).powi(2) + AA_FLOOR;
            assert!((p.cov2d[(0, 0)] - want).abs() < 1e-9 * want);
            assert!((p.cov2d[(1, 1)] - want).abs() < 1e-9 * want);
            assert!(p.cov2d[(0, 1)].abs() < 1e-12);
        }
    }

    #[test]
    fn near_plane_culls() {
        let g = Gaussian::isotropic(0, Vec3::new(0.0, 0.0, Z_NEAR / 2.0), 0.1, 0.5, Rgb::zeros());
        assert!(project_gaussian(&g, &cam(100, 100.0)).is_none());
        let g = Gaussian::isotropic(0, Vec3::new(0.0, 0.0, -1.0), 0.1, 0.5, Rgb::zeros());
        assert!(project_gaussian(&g, &cam(100, 100.0)).is_none());
    }

    #[test]
    fn depth_monotone_and_roll_invariant() {
        let mut g = Gaussian::isotropic(0, Vec3::new(0.2, -0.1, 1.0), 0.1, 0.5, Rgb::zeros());
        g.log_scale = Vec3::new(-2.0, -1.5, -2.5);
        g.rotation = axis_angle_quat(Vec3::new(1.0, 2.0, 0.5), 0.7);
        let c = cam(100, 120.0);
        let mut last = 0.0;
        for z in [0.5, 1.0, 2.0, 4.0, 8.0] {
            g.mean.z = z;
            let d = project_gaussian(&g, &c).unwrap().depth;
            assert!(d > last);
            last = d;
        }
        // Rolling the camera about its optical axis keeps depth and rotates cov2d.
        let base = project_gaussian(&g, &c).unwrap();
        let angle = 0.6;
        let mut rolled = c.clone();
        rolled.world_to_camera.rotation = axis_angle_quat(Vec3::z(), angle) * identity_quat();
        let r = project_gaussian(&g, &rolled).unwrap();
        assert!((r.depth - base.depth).abs() < 1e-12);
        let rot2 = nalgebra::Rotation2::new(angle).into_inner();
        let expected = rot2 * (base.cov2d - Matrix2::identity() * AA_FLOOR) * rot2.transpose()
            + Matrix2::identity() * AA_FLOOR;
        assert!((r.cov2d - expected).abs().max() < 1e-9);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut g = Gaussian::isotropic(0, Vec3::new(0.3, -0.2, 2.5), 0.2, 0.5, Rgb::zeros());
        g.log_scale = Vec3::new(-1.2, -1.9, -1.5);
        g.rotation = axis_angle_quat(Vec3::new(0.3, 1.0, -0.4), 1.1);
        let mut c = cam(100, 90.0);
        c.world_to_camera.rotation = axis_angle_quat(Vec3::new(0.1, 1.0, 0.2), 0.3);
        c.world_to_camera.translation = Vec3::new(0.1, 0.05, 0.4);
        let wm = Vector2::new(0.7, -1.3);
        let wc = Matrix2::new(0.4, -0.2, 0.3, 0.9);
        let f = |mean: &Vec3, cov: &Matrix3<f64>| {
            let p = project_mean_cov(mean, cov, &c).unwrap();
            p.mean2d.dot(&wm) + p.cov2d.component_mul(&wc).sum()
        };
        let cov = g.covariance();
        let (dm, dc) = project_backward(&g.mean, &cov, &c, &wm, &wc);
        let eps = 1e-6;
        for k in 0..3 {
            let (mut p, mut m) = (g.mean, g.mean);
            p[k] += eps;
            m[k] -= eps;
            let fd = (f(&p, &cov) - f(&m, &cov)) / (2.0 * eps);
            assert!((fd - dm[k]).abs() < 1e-5 * fd.abs().max(1.0), "mean {k}: {fd} vs {}", dm[k]);
        }
        // Covariance perturbations kept symmetric; compare against the symmetric part.
        for (r, s) in [(0, 0), (0, 1), (1, 2), (2, 2)] {
            let mut e = Matrix3::zeros();
            e[(r, s)] += eps;
            e[(s, r)] += eps;
            let fd = (f(&g.mean, &(cov + e)) - f(&g.mean, &(cov - e))) / (2.0 * eps);
            let an = if r == s { 2.0 * dc[(r, s)] } else { dc[(r, s)] + dc[(s, r)] };
            assert!((fd - an).abs() < 1e-5 * fd.abs().max(1.0), "cov {r}{s}");
        }
    }

    #[test]
    fn look_at_puts_target_on_axis() {
        let eye = Vec3::new(1.0, 2.0, -3.0);
        let target = Vec3::new(0.0, 0.5, 4.0);
        let t = RigidTransform::look_at(eye, target, Vec3::new(0.0, -1.0, 0.0));
        let p = t.apply(&target);
        assert!(p.x.abs() < 1e-12 && p.y.abs() < 1e-12 && p.z > 0.0);
        let mut c = cam(100, 100.0);
        c.world_to_camera = t;
        assert!((c.center() - eye).norm() < 1e-12);
    }
}
