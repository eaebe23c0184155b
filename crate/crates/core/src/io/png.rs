//! 8-bit sRGB PNG images and 8/16-bit single-channel label masks.

use std::path::Path;

use image::{ImageBuffer, Luma, Rgb as PixelRgb};

use crate::error::{Error, Result};
use crate::image::{Image, LabelMask};
use crate::math::Rgb;

fn image_error(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

pub fn linear_to_srgb(v: f64) -> f64 {
    if v <= 0.0031308 {
        v * 12.92
    } else {
        1.055 * v.powf(1.0 / 2.4) - 0.055
    }
}

/// Loads any PNG as linear RGB; alpha is dropped.
pub fn load_image(path: &Path) -> Result<Image> {
    let rgb = image::open(path).map_err(|e| image_error(path, e))?.to_rgb32f();
    let (w, h) = rgb.dimensions();
    let mut out = Image::new(w as usize, h as usize);
    for (x, y, p) in rgb.enumerate_pixels() {
        let [r, g, b] = p.0.map(|c| srgb_to_linear(c as f64));
        out.set(x as usize, y as usize, Rgb::new(r, g, b));
    }
    Ok(out)
}

/// Writes linear RGB as 8-bit sRGB, clamping to [0, 1].
pub fn save_image(img: &Image, path: &Path) -> Result<()> {
    let buf = ImageBuffer::from_fn(img.width as u32, img.height as u32, |x, y| {
        let c = img.get(x as usize, y as usize);
        PixelRgb(c.map(|v| (linear_to_srgb(v.clamp(0.0, 1.0)) * 255.0).round() as u8).into())
    });
    buf.save(path).map_err(|e| image_error(path, e))
}

/// Loads an 8- or 16-bit single-channel PNG as labels.
pub fn load_mask(path: &Path) -> Result<LabelMask> {
    let img = image::open(path).map_err(|e| image_error(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let labels: Vec<u16> = match img {
        image::DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(u16::from).collect(),
        image::DynamicImage::ImageLuma16(b) => b.into_raw(),
        other => {
            return Err(image_error(path, format!("mask must be single-channel, found {:?}", other.color())));
        }
    };
    Ok(LabelMask {
        width: w,
        height: h,
        labels,
    })
}

/// Writes 8-bit when every label fits, 16-bit otherwise.
pub fn save_mask(mask: &LabelMask, path: &Path) -> Result<()> {
    let (w, h) = (mask.width as u32, mask.height as u32);
    let result = if mask.labels.iter().all(|&l| l <= u8::MAX as u16) {
        let raw = mask.labels.iter().map(|&l| l as u8).collect();
        ImageBuffer::<Luma<u8>, Vec<u8>>::from_raw(w, h, raw).expect("mask size").save(path)
    } else {
        ImageBuffer::<Luma<u16>, Vec<u16>>::from_raw(w, h, mask.labels.clone())
            .expect("mask size")
            .save(path)
    };
    result.map_err(|e| image_error(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transfer_functions_invert() {
        for i in 0..=100 {
            let v = i as f64 / 100.0;
            assert!((srgb_to_linear(linear_to_srgb(v)) - v).abs() < 1e-12);
        }
    }

    #[test]
    fn masks_round_trip_at_both_depths() {
        let dir = tempfile::tempdir().unwrap();
        for top in [7u16, 700] {
            let mut m = LabelMask::new(5, 3, 0);
            m.set(4, 2, top);
            m.set(1, 1, 3);
            let p = dir.path().join(format!("m{top}.png"));
            save_mask(&m, &p).unwrap();
            assert_eq!(load_mask(&p).unwrap(), m);
        }
    }

    #[test]
    fn image_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let mut img = Image::new(4, 4);
        img.set(1, 2, Rgb::new(0.2, 0.5, 0.9));
        let p = dir.path().join("a.png");
        save_image(&img, &p).unwrap();
        let back = load_image(&p).unwrap();
        let c = back.get(1, 2);
        for (a, b) in c.iter().zip([0.2, 0.5, 0.9]) {
            let step = srgb_to_linear(linear_to_srgb(b) + 0.5 / 255.0) - b;
            assert!((a - b).abs() <= step + 1e-9, "{a} vs {b}");
        }
    }
}
