use crate::error::Result;
use crate::image::Image;
use crate::metrics::ssim_with_grad;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub l1: f64,
    pub ssim: f64,
}

/// `(1 − λ)·L1 + λ·(1 − SSIM)` and its gradient with respect to `rendered`.
/// SSIM is skipped (treated as 1) for images smaller than its window.
pub fn photometric_loss(rendered: &Image, target: &Image, lambda: f64) -> Result<(LossValue, Image)> {
    rendered.same_dims(target)?;
    let n = rendered.data.len().max(1) as f64;
    let mut grad = Image::new(rendered.width, rendered.height);
    let mut l1 = 0.0;
    for ((g, r), t) in grad.data.iter_mut().zip(&rendered.data).zip(&target.data) {
        let d = r - t;
        l1 += d.abs();
        *g = (1.0 - lambda) * if d > 0.0 { 1.0 } else if d < 0.0 { -1.0 } else { 0.0 } / n;
    }
    l1 /= n;
    let mut s = 1.0;
    if lambda > 0.0 {
        if let Ok((value, ds)) = ssim_with_grad(rendered, target) {
            s = value;
            for (g, d) in grad.data.iter_mut().zip(&ds.data) {
                *g -= lambda * d;
            }
        }
    }
    Ok((
        LossValue {
            total: (1.0 - lambda) * l1 + lambda * (1.0 - s),
            l1,
            ssim: s,
        },
        grad,
    ))
}
