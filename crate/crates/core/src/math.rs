//! Small numeric helpers shared by the forward and backward paths.
//!
//! Quaternions are `nalgebra::Quaternion<f64>` in (w, x, y, z) order; every
//! rotation is built from the normalized quaternion, and the gradient helpers
//! differentiate through that normalization so raw quaternion parameters can be
//! optimized directly.

use nalgebra::{Matrix3, Quaternion, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Rgb = Vector3<f64>;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn identity_quat() -> Quaternion<f64> {
    Quaternion::new(1.0, 0.0, 0.0, 0.0)
}

/// Unit quaternion for a rotation of `angle` radians about `axis`.
pub fn axis_angle_quat(axis: Vec3, angle: f64) -> Quaternion<f64> {
    let a = axis.normalize() * (0.5 * angle).sin();
    Quaternion::new((0.5 * angle).cos(), a.x, a.y, a.z)
}

pub fn normalize_quat(q: Quaternion<f64>) -> Quaternion<f64> {
    let n = q.norm();
    if n > 0.0 {
        q / n
    } else {
        identity_quat()
    }
}

/// Rotation matrix of a unit quaternion given as raw components.
fn rotation_from_unit(w: f64, x: f64, y: f64, z: f64) -> Matrix3<f64> {
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Rotation matrix of `q / |q|`.
pub fn rotation_matrix(q: &Quaternion<f64>) -> Matrix3<f64> {
    let u = normalize_quat(*q);
    rotation_from_unit(u.w, u.i, u.j, u.k)
}

/// Backpropagates `dL/dR` through `R = rotation_matrix(q)` to the raw
/// (unnormalized) quaternion.
pub fn rotation_matrix_backward(q: &Quaternion<f64>, d_r: &Matrix3<f64>) -> Quaternion<f64> {
    let n = q.norm();
    let u = *q / n;
    let (w, x, y, z) = (u.w, u.i, u.j, u.k);
    let g = |r: usize, c: usize| d_r[(r, c)];

    // Gradient w.r.t. the unit quaternion components.
    let dw = 2.0
        * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    let dx = 2.0
        * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2)
            + z * g(2, 0)
            + w * g(2, 1)
            - 2.0 * x * g(2, 2));
    let dy = 2.0
        * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2)
            - w * g(2, 0)
            + z * g(2, 1)
            - 2.0 * y * g(2, 2));
    let dz = 2.0
        * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1)
            + y * g(1, 2)
            + x * g(2, 0)
            + y * g(2, 1));
    let du = Quaternion::new(dw, dx, dy, dz);

    // Through u = q / |q|: dq = (du - u (u . du)) / |q|.
    let dot = u.coords.dot(&du.coords);
    Quaternion::from((du.coords - u.coords * dot) / n)
}

/// Gradients of `p ⊗ q` (Hamilton product) w.r.t. both factors.
pub fn quat_mul_backward(
    p: &Quaternion<f64>,
    q: &Quaternion<f64>,
    d_out: &Quaternion<f64>,
) -> (Quaternion<f64>, Quaternion<f64>) {
    // out = p ⊗ q is bilinear; dL/dp = d_out ⊗ conj(q), dL/dq = conj(p) ⊗ d_out.
    (d_out * q.conjugate(), p.conjugate() * d_out)
}

/// Spherical linear interpolation between unit quaternions, taking the short arc.
pub fn slerp(a: &Quaternion<f64>, b: &Quaternion<f64>, t: f64) -> Quaternion<f64> {
    let a = normalize_quat(*a);
    let mut b = normalize_quat(*b);
    let mut dot = a.coords.dot(&b.coords);
    if dot < 0.0 {
        b = -b;
        dot = -dot;
    }
    if dot > 0.9995 {
        return normalize_quat(a + (b - a) * t);
    }
    let theta = dot.clamp(-1.0, 1.0).acos();
    let s = theta.sin();
    normalize_quat(a * (((1.0 - t) * theta).sin() / s) + b * ((t * theta).sin() / s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loss(q: &Quaternion<f64>, w: &Matrix3<f64>) -> f64 {
        rotation_matrix(q).component_mul(w).sum()
    }

    #[test]
    fn rotation_backward_matches_finite_differences() {
        let q = Quaternion::new(0.8, -0.3, 0.5, 0.2);
        let w = Matrix3::new(0.3, -1.0, 0.2, 0.7, 0.1, -0.4, 0.9, 0.5, -0.6);
        let analytic = rotation_matrix_backward(&q, &w);
        let eps = 1e-6;
        for k in 0..4 {
            let mut qp = q;
            let mut qm = q;
            qp.coords[k] += eps;
            qm.coords[k] -= eps;
            let fd = (loss(&qp, &w) - loss(&qm, &w)) / (2.0 * eps);
            assert!((fd - analytic.coords[k]).abs() < 1e-7, "component {k}");
        }
    }

    #[test]
    fn quat_mul_backward_matches_finite_differences() {
        let p = Quaternion::new(0.3, 0.1, -0.7, 0.2);
        let q = Quaternion::new(-0.5, 0.4, 0.2, 0.9);
        let d = Quaternion::new(0.25, -1.0, 0.5, 0.75);
        let f = |p: &Quaternion<f64>, q: &Quaternion<f64>| (p * q).coords.dot(&d.coords);
        let (dp, dq) = quat_mul_backward(&p, &q, &d);
        let eps = 1e-6;
        for k in 0..4 {
            let (mut pp, mut pm) = (p, p);
            pp.coords[k] += eps;
            pm.coords[k] -= eps;
            assert!(((f(&pp, &q) - f(&pm, &q)) / (2.0 * eps) - dp.coords[k]).abs() < 1e-8);
            let (mut qp, mut qm) = (q, q);
            qp.coords[k] += eps;
            qm.coords[k] -= eps;
            assert!(((f(&p, &qp) - f(&p, &qm)) / (2.0 * eps) - dq.coords[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn rotation_matches_nalgebra() {
        let q = normalize_quat(Quaternion::new(0.4, 0.1, -0.6, 0.3));
        let expected = nalgebra::UnitQuaternion::from_quaternion(q).to_rotation_matrix();
        assert!((rotation_matrix(&q) - expected.matrix()).abs().max() < 1e-12);
    }

    #[test]
    fn slerp_endpoints() {
        let a = axis_angle_quat(Vec3::z(), 0.2);
        let b = axis_angle_quat(Vec3::z(), 1.4);
        assert!((slerp(&a, &b, 0.0).coords - a.coords).norm() < 1e-12);
        assert!((slerp(&a, &b, 1.0).coords - b.coords).norm() < 1e-12);
        let mid = slerp(&a, &b, 0.5);
        assert!((mid.coords - axis_angle_quat(Vec3::z(), 0.8).coords).norm() < 1e-12);
    }
}
