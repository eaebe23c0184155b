//! Real spherical harmonics up to degree 2 for view-dependent color, plus the
//! Fourier-in-time variant used by dynamic objects.
//!
//! Basis ordering and signs follow the usual splatting layout:
//! `Y00, Y1-1, Y10, Y11, Y2-2, Y2-1, Y20, Y21, Y22`, with the odd-degree terms
//! carrying a negative sign on x and y.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::math::{Rgb, Vec3};

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
const SH_C1: f64 = 0.488_602_511_902_919_9;
const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];

pub const MAX_SH_DEGREE: usize = 2;

/// Number of coefficients for a given degree.
pub const fn coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Inverse of [`coeff_count`]; `None` for lengths that are not a supported square.
pub fn degree_for_len(len: usize) -> Option<usize> {
    (0..=MAX_SH_DEGREE).find(|&d| coeff_count(d) == len)
}

pub fn sh_basis(dir: &Vec3, degree: usize) -> [f64; 9] {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let mut b = [0.0; 9];
    b[0] = SH_C0;
    if degree >= 1 {
        b[1] = -SH_C1 * y;
        b[2] = SH_C1 * z;
        b[3] = -SH_C1 * x;
    }
    if degree >= 2 {
        b[4] = SH_C2[0] * x * y;
        b[5] = SH_C2[1] * y * z;
        b[6] = SH_C2[2] * (2.0 * z * z - x * x - y * y);
        b[7] = SH_C2[3] * x * z;
        b[8] = SH_C2[4] * (x * x - y * y);
    }
    b
}

/// Jacobian of [`sh_basis`] with respect to the (unnormalized-in-use) direction.
fn sh_basis_grad(dir: &Vec3, degree: usize) -> [Vec3; 9] {
    let (x, y, z) = (dir.x, dir.y, dir.z);
    let mut g = [Vec3::zeros(); 9];
    if degree >= 1 {
        g[1] = Vec3::new(0.0, -SH_C1, 0.0);
        g[2] = Vec3::new(0.0, 0.0, SH_C1);
        g[3] = Vec3::new(-SH_C1, 0.0, 0.0);
    }
    if degree >= 2 {
        g[4] = SH_C2[0] * Vec3::new(y, x, 0.0);
        g[5] = SH_C2[1] * Vec3::new(0.0, z, y);
        g[6] = SH_C2[2] * Vec3::new(-2.0 * x, -2.0 * y, 4.0 * z);
        g[7] = SH_C2[3] * Vec3::new(z, 0.0, x);
        g[8] = SH_C2[4] * Vec3::new(2.0 * x, -2.0 * y, 0.0);
    }
    g
}

fn check_block(coeffs: &[Rgb], degree: usize) -> Result<()> {
    if degree > MAX_SH_DEGREE {
        return Err(Error::UnsupportedShDegree(degree));
    }
    if coeffs.len() != coeff_count(degree) {
        return Err(Error::ShLength {
            expected: coeff_count(degree),
            got: coeffs.len(),
        });
    }
    Ok(())
}

/// `clamp(0.5 + Σ c_lm Y_lm(dir), 0, 1)` per channel.
pub fn evaluate_sh(coeffs: &[Rgb], view_dir: &Vec3, degree: usize) -> Result<Rgb> {
    check_block(coeffs, degree)?;
    Ok(eval_block(coeffs, view_dir).color)
}

/// Result of an SH evaluation that remembers which channels hit the clamp,
/// so the backward pass can zero their gradients.
#[derive(Clone, Copy, Debug)]
pub struct ShEval {
    pub color: Rgb,
    pub clamped: [bool; 3],
}

/// Evaluates a block whose length already encodes its degree.
pub fn eval_block(coeffs: &[Rgb], view_dir: &Vec3) -> ShEval {
    let degree = degree_for_len(coeffs.len()).expect("SH block length must be 1, 4 or 9");
    let basis = sh_basis(view_dir, degree);
    let mut raw = Rgb::repeat(0.5);
    for (c, b) in coeffs.iter().zip(basis.iter()) {
        raw += c * *b;
    }
    let mut clamped = [false; 3];
    let mut color = raw;
    for k in 0..3 {
        if !(0.0..=1.0).contains(&raw[k]) {
            clamped[k] = true;
            color[k] = raw[k].clamp(0.0, 1.0);
        }
    }
    ShEval { color, clamped }
}

/// Backward of [`eval_block`]: accumulates `dL/dcoeffs` into `d_coeffs` and
/// returns `dL/d(view_dir)`.
pub fn eval_block_backward(
    coeffs: &[Rgb],
    view_dir: &Vec3,
    eval: &ShEval,
    d_color: &Rgb,
    d_coeffs: &mut [Rgb],
) -> Vec3 {
    let degree = degree_for_len(coeffs.len()).expect("SH block length must be 1, 4 or 9");
    let mut d_raw = *d_color;
    for k in 0..3 {
        if eval.clamped[k] {
            d_raw[k] = 0.0;
        }
    }
    let basis = sh_basis(view_dir, degree);
    for (dc, b) in d_coeffs.iter_mut().zip(basis.iter()) {
        *dc += d_raw * *b;
    }
    let basis_grad = sh_basis_grad(view_dir, degree);
    let mut d_dir = Vec3::zeros();
    for (c, g) in coeffs.iter().zip(basis_grad.iter()) {
        d_dir += g * c.dot(&d_raw);
    }
    d_dir
}

/// Time-varying SH: each coefficient is a truncated Fourier series in time.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeVaryingSh {
    pub base: Vec<Rgb>,
    pub cos: Vec<Vec<Rgb>>,
    pub sin: Vec<Vec<Rgb>>,
    /// Normalization span `T` in seconds.
    pub period: f64,
}

impl TimeVaryingSh {
    /// Constant appearance (order 0).
    pub fn constant(base: Vec<Rgb>, period: f64) -> Self {
        Self {
            base,
            cos: Vec::new(),
            sin: Vec::new(),
            period,
        }
    }

    /// Zero-initialized Fourier terms of the given order around `base`.
    pub fn with_order(base: Vec<Rgb>, order: usize, period: f64) -> Self {
        let zero = vec![Rgb::zeros(); base.len()];
        Self {
            cos: vec![zero.clone(); order],
            sin: vec![zero; order],
            base,
            period,
        }
    }

    pub fn order(&self) -> usize {
        self.cos.len()
    }

    /// `(cos(2πmt/T), sin(2πmt/T))` for m = 1..=order.
    pub fn fourier_weights(&self, time: f64) -> Vec<(f64, f64)> {
        (1..=self.order())
            .map(|m| {
                let phase = 2.0 * PI * m as f64 * time / self.period;
                (phase.cos(), phase.sin())
            })
            .collect()
    }

    /// Effective SH block at `time`.
    pub fn at(&self, time: f64) -> Vec<Rgb> {
        let mut block = self.base.clone();
        for (m, (cw, sw)) in self.fourier_weights(time).into_iter().enumerate() {
            for (k, b) in block.iter_mut().enumerate() {
                *b += self.cos[m][k] * cw + self.sin[m][k] * sw;
            }
        }
        block
    }
}

pub fn evaluate_time_varying_sh(tsh: &TimeVaryingSh, time: f64, view_dir: &Vec3) -> Result<Rgb> {
    let degree = degree_for_len(tsh.base.len()).ok_or(Error::ShLength {
        expected: coeff_count(MAX_SH_DEGREE),
        got: tsh.base.len(),
    })?;
    evaluate_sh(&tsh.at(time), view_dir, degree)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dir(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z).normalize()
    }

    #[test]
    fn zero_coeffs_give_mid_gray() {
        let c = evaluate_sh(&vec![Rgb::zeros(); 9], &dir(0.3, -0.2, 0.9), 2).unwrap();
        assert_eq!(c, Rgb::repeat(0.5));
    }

    #[test]
    fn dc_term_uses_y00() {
        // Y00 = 1 / (2 sqrt(pi)) = 0.2820948...
        assert!((SH_C0 - 0.5 / PI.sqrt()).abs() < 1e-15);
        let c = evaluate_sh(&[Rgb::new(1.0, 0.0, 0.0)], &dir(0.0, 1.0, 0.0), 0).unwrap();
        assert!((c.x - 0.782_094_8).abs() < 1e-7);
        assert_eq!((c.y, c.z), (0.5, 0.5));
    }

    #[test]
    fn degree_one_is_odd() {
        let mut coeffs = vec![Rgb::zeros(); 4];
        coeffs[1] = Rgb::new(0.1, 0.2, -0.1);
        coeffs[2] = Rgb::new(-0.2, 0.05, 0.1);
        coeffs[3] = Rgb::new(0.15, -0.1, 0.2);
        let d = dir(0.4, -0.5, 0.7);
        let plus = evaluate_sh(&coeffs, &d, 1).unwrap() - Rgb::repeat(0.5);
        let minus = evaluate_sh(&coeffs, &(-d), 1).unwrap() - Rgb::repeat(0.5);
        assert!((plus + minus).norm() < 1e-15);
    }

    #[test]
    fn degree_three_rejected() {
        assert!(matches!(
            evaluate_sh(&vec![Rgb::zeros(); 16], &Vec3::z(), 3),
            Err(Error::UnsupportedShDegree(3))
        ));
        assert!(matches!(
            evaluate_sh(&vec![Rgb::zeros(); 3], &Vec3::z(), 1),
            Err(Error::ShLength { .. })
        ));
    }

    #[test]
    fn degree_two_basis_is_orthonormal() {
        // Monte Carlo-free check: Fibonacci sphere quadrature of Y_i Y_j.
        let n = 20_000;
        let mut gram = [[0.0f64; 9]; 9];
        let golden = PI * (3.0 - 5f64.sqrt());
        for i in 0..n {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).sqrt();
            let th = golden * i as f64;
            let b = sh_basis(&Vec3::new(r * th.cos(), r * th.sin(), z), 2);
            for a in 0..9 {
                for c in 0..9 {
                    gram[a][c] += b[a] * b[c] * 4.0 * PI / n as f64;
                }
            }
        }
        for a in 0..9 {
            for c in 0..9 {
                let want = if a == c { 1.0 } else { 0.0 };
                assert!((gram[a][c] - want).abs() < 1e-3, "({a},{c}) = {}", gram[a][c]);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let coeffs: Vec<Rgb> = (0..9)
            .map(|k| Rgb::new(0.1 * k as f64 - 0.3, 0.05 * k as f64, -0.02 * k as f64))
            .collect();
        let d = dir(0.3, 0.5, 0.8);
        let w = Rgb::new(0.7, -0.4, 1.1);
        let f = |c: &[Rgb], v: &Vec3| eval_block(c, v).color.dot(&w);
        let eval = eval_block(&coeffs, &d);
        let mut d_coeffs = vec![Rgb::zeros(); 9];
        let d_dir = eval_block_backward(&coeffs, &d, &eval, &w, &mut d_coeffs);
        let eps = 1e-6;
        for k in 0..9 {
            for ch in 0..3 {
                let mut cp = coeffs.clone();
                let mut cm = coeffs.clone();
                cp[k][ch] += eps;
                cm[k][ch] -= eps;
                let fd = (f(&cp, &d) - f(&cm, &d)) / (2.0 * eps);
                assert!((fd - d_coeffs[k][ch]).abs() < 1e-8);
            }
        }
        for ax in 0..3 {
            let mut dp = d;
            let mut dm = d;
            dp[ax] += eps;
            dm[ax] -= eps;
            let fd = (f(&coeffs, &dp) - f(&coeffs, &dm)) / (2.0 * eps);
            assert!((fd - d_dir[ax]).abs() < 1e-8);
        }
    }

    #[test]
    fn order_zero_is_time_independent() {
        let base = vec![Rgb::new(0.3, -0.1, 0.2); 4];
        let tsh = TimeVaryingSh::constant(base.clone(), 2.0);
        for t in [0.0, 0.3, 1.7, 5.0] {
            let d = dir(0.2, 0.1, 1.0);
            assert_eq!(
                evaluate_time_varying_sh(&tsh, t, &d).unwrap(),
                evaluate_sh(&base, &d, 1).unwrap()
            );
        }
    }

    #[test]
    fn time_zero_sums_cosine_terms_and_is_periodic() {
        let mut tsh = TimeVaryingSh::with_order(vec![Rgb::new(0.1, 0.0, 0.0)], 2, 3.0);
        tsh.cos[0][0] = Rgb::new(0.2, 0.1, 0.0);
        tsh.cos[1][0] = Rgb::new(0.05, 0.0, 0.3);
        tsh.sin[0][0] = Rgb::new(0.4, 0.4, 0.4);
        let d = Vec3::z();
        let at0 = evaluate_time_varying_sh(&tsh, 0.0, &d).unwrap();
        let direct = evaluate_sh(&[Rgb::new(0.35, 0.1, 0.3)], &d, 0).unwrap();
        assert!((at0 - direct).norm() < 1e-15);
        for t in [0.4, 1.1, 2.9] {
            let a = evaluate_time_varying_sh(&tsh, t, &d).unwrap();
            let b = evaluate_time_varying_sh(&tsh, t + 3.0, &d).unwrap();
            assert!((a - b).norm() < 1e-12);
        }
    }
}
