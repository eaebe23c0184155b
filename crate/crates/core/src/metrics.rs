//! Image quality metrics on linear `[0, 1]` RGB images.

use std::fmt;

use crate::error::{Error, Result};
use crate::image::Image;

/// Reported for identical images instead of `+inf`.
pub const PSNR_CAP_DB: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP_DB
    } else {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    }
}

pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    a.same_dims(b)?;
    let n = a.data.len();
    if n == 0 {
        return Err(Error::Dimensions("empty image".into()));
    }
    let mse = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n as f64;
    Ok(psnr_from_mse(mse))
}

/// PSNR over the pixels with `mask[p]` set; `None` when no pixel is selected.
pub fn psnr_masked(a: &Image, b: &Image, mask: &[bool]) -> Result<Option<f64>> {
    a.same_dims(b)?;
    if mask.len() != a.pixel_count() {
        return Err(Error::Dimensions(format!(
            "mask has {} pixels, image has {}",
            mask.len(),
            a.pixel_count()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        for c in 0..3 {
            let d = a.data[3 * p + c] - b.data[3 * p + c];
            sum += d * d;
        }
        count += 3;
    }
    Ok((count > 0).then(|| psnr_from_mse(sum / count as f64)))
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - r;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable "valid" filtering of a single-channel plane.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * src[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: scatters window values back to the plane.
fn filter_valid_adjoint(g: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; ow * h];
    for y in 0..oh {
        for x in 0..ow {
            for i in 0..SSIM_WINDOW {
                rows[(y + i) * ow + x] += k[i] * g[y * ow + x];
            }
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..ow {
            for i in 0..SSIM_WINDOW {
                out[y * w + x + i] += k[i] * rows[y * ow + x];
            }
        }
    }
    out
}

fn channel(img: &Image, c: usize) -> Vec<f64> {
    img.data.iter().skip(c).step_by(3).copied().collect()
}

/// Mean SSIM over all valid windows and channels, plus `∂SSIM/∂a` if asked.
fn ssim_impl(a: &Image, b: &Image, want_grad: bool) -> Result<(f64, Option<Image>)> {
    a.same_dims(b)?;
    let (w, h) = (a.width, a.height);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::Dimensions(format!(
            "{w}x{h} image is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let k = gaussian_kernel();
    let nwin = (w - SSIM_WINDOW + 1) * (h - SSIM_WINDOW + 1);
    let norm = 1.0 / (3 * nwin) as f64;
    let mut total = 0.0;
    let mut grad = want_grad.then(|| Image::new(w, h));
    for c in 0..3 {
        let x = channel(a, c);
        let y = channel(b, c);
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let mx = filter_valid(&x, w, h, &k);
        let my = filter_valid(&y, w, h, &k);
        let exx = filter_valid(&xx, w, h, &k);
        let eyy = filter_valid(&yy, w, h, &k);
        let exy = filter_valid(&xy, w, h, &k);
        let mut g_mu = vec![0.0; nwin];
        let mut g_xx = vec![0.0; nwin];
        let mut g_xy = vec![0.0; nwin];
        for i in 0..nwin {
            let (mux, muy) = (mx[i], my[i]);
            let a1 = 2.0 * mux * muy + SSIM_C1;
            let a2 = 2.0 * (exy[i] - mux * muy) + SSIM_C2;
            let b1 = mux * mux + muy * muy + SSIM_C1;
            let b2 = (exx[i] - mux * mux) + (eyy[i] - muy * muy) + SSIM_C2;
            let d = b1 * b2;
            let s = a1 * a2 / d;
            total += s;
            if want_grad {
                let dn = 2.0 * muy * a2 - 2.0 * muy * a1;
                let dd = 2.0 * mux * b2 - 2.0 * mux * b1;
                g_mu[i] = norm * (dn - s * dd) / d;
                g_xy[i] = norm * 2.0 * a1 / d;
                g_xx[i] = -norm * s * b1 / d;
            }
        }
        if let Some(gimg) = grad.as_mut() {
            let p_mu = filter_valid_adjoint(&g_mu, w, h, &k);
            let p_xx = filter_valid_adjoint(&g_xx, w, h, &k);
            let p_xy = filter_valid_adjoint(&g_xy, w, h, &k);
            for p in 0..w * h {
                gimg.data[3 * p + c] = p_mu[p] + 2.0 * x[p] * p_xx[p] + y[p] * p_xy[p];
            }
        }
    }
    Ok((total * norm, grad))
}

pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    Ok(ssim_impl(a, b, false)?.0)
}

/// SSIM and its gradient with respect to `a`.
pub fn ssim_with_grad(a: &Image, b: &Image) -> Result<(f64, Image)> {
    let (s, g) = ssim_impl(a, b, true)?;
    Ok((s, g.expect("gradient requested")))
}

/// Quality summary of one rendered frame or a set of frames.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub psnr_global: f64,
    pub psnr_critical: Option<f64>,
    pub psnr_noncritical: Option<f64>,
    pub ssim: Option<f64>,
    pub gaussian_count: Option<usize>,
    pub fps_equivalent: Option<f64>,
    pub train_time_s: Option<f64>,
    pub pixels_global: usize,
    pub pixels_critical: usize,
    pub pixels_noncritical: usize,
}

impl MetricsReport {
    /// PSNR on the whole image and split by a critical-pixel mask.
    pub fn compare(rendered: &Image, reference: &Image, critical: Option<&[bool]>) -> Result<Self> {
        let mut r = Self {
            psnr_global: psnr(rendered, reference)?,
            ssim: ssim(rendered, reference).ok(),
            pixels_global: rendered.pixel_count(),
            ..Default::default()
        };
        if let Some(mask) = critical {
            let inverse: Vec<bool> = mask.iter().map(|m| !m).collect();
            r.psnr_critical = psnr_masked(rendered, reference, mask)?;
            r.psnr_noncritical = psnr_masked(rendered, reference, &inverse)?;
            r.pixels_critical = mask.iter().filter(|&&m| m).count();
            r.pixels_noncritical = r.pixels_global - r.pixels_critical;
        }
        Ok(r)
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn opt<T: fmt::Display>(v: &Option<T>) -> String {
            v.as_ref().map_or_else(|| "absent".to_string(), |v| v.to_string())
        }
        write!(
            f,
            "psnr_global={:.4} psnr_critical={} psnr_noncritical={} ssim={} gaussian_count={} fps_equivalent={} train_time_s={} pixels_global={} pixels_critical={} pixels_noncritical={}",
            self.psnr_global,
            opt(&self.psnr_critical.map(|v| format!("{v:.4}"))),
            opt(&self.psnr_noncritical.map(|v| format!("{v:.4}"))),
            opt(&self.ssim.map(|v| format!("{v:.6}"))),
            opt(&self.gaussian_count),
            opt(&self.fps_equivalent.map(|v| format!("{v:.2}"))),
            opt(&self.train_time_s.map(|v| format!("{v:.2}"))),
            self.pixels_global,
            self.pixels_critical,
            self.pixels_noncritical
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut img = Image::new(w, h);
        img.data.iter_mut().for_each(|v| *v = rng.random::<f64>());
        img
    }

    #[test]
    fn psnr_examples() {
        let a = noise(8, 8, 1);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);
        let zero = Image::new(8, 8);
        let one = Image::filled(8, 8, crate::math::Rgb::repeat(1.0));
        assert!(psnr(&zero, &one).unwrap().abs() < 1e-12);
        let tenth = Image::filled(8, 8, crate::math::Rgb::repeat(0.1));
        assert!((psnr(&zero, &tenth).unwrap() - 20.0).abs() < 1e-9);
        assert!(psnr(&zero, &Image::new(8, 7)).is_err());
    }

    #[test]
    fn masked_psnr_reports_absent_regions() {
        let a = noise(4, 4, 2);
        assert_eq!(psnr_masked(&a, &a, &[false; 16]).unwrap(), None);
        assert!(psnr_masked(&a, &a, &[true; 3]).is_err());
    }

    #[test]
    fn ssim_examples() {
        let a = noise(64, 64, 3);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let mut neg = a.clone();
        neg.data.iter_mut().for_each(|v| *v = 1.0 - *v);
        assert!(ssim(&a, &neg).unwrap() < 0.0);
        assert!(ssim(&a, &noise(64, 64, 4)).unwrap().abs() < 0.1);
        assert!(ssim(&Image::new(10, 20), &Image::new(10, 20)).is_err());
    }

    #[test]
    fn ssim_gradient_matches_finite_differences() {
        let a = noise(14, 13, 5);
        let b = noise(14, 13, 6);
        let (_, g) = ssim_with_grad(&a, &b).unwrap();
        let eps = 1e-6;
        for &i in &[0usize, 7, 40, 100, 201, 3 * 14 * 13 - 1] {
            let mut p = a.clone();
            let mut m = a.clone();
            p.data[i] += eps;
            m.data[i] -= eps;
            let fd = (ssim(&p, &b).unwrap() - ssim(&m, &b).unwrap()) / (2.0 * eps);
            assert!((fd - g.data[i]).abs() < 1e-7, "{i}: fd {fd} vs {}", g.data[i]);
        }
    }

    #[test]
    fn report_pixel_counts_partition() {
        let a = noise(12, 12, 7);
        let b = noise(12, 12, 8);
        let mask: Vec<bool> = (0..144).map(|i| i % 3 == 0).collect();
        let r = MetricsReport::compare(&a, &b, Some(&mask)).unwrap();
        assert_eq!(r.pixels_critical + r.pixels_noncritical, r.pixels_global);
        assert!(r.psnr_critical.is_some() && r.psnr_noncritical.is_some());
    }
}
