use crate::error::{Error, Result};
use crate::math::Rgb;

/// Linear-float RGB image, row-major, channels interleaved.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        let mut img = Self::new(width, height);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(color.as_slice());
        }
        img
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Rgb {
        let i = 3 * (y * self.width + x);
        Rgb::new(self.data[i], self.data[i + 1], self.data[i + 2])
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: Rgb) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(c.as_slice());
    }

    pub fn same_dims(&self, other: &Image) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::Dimensions(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    /// Per-pixel mean over the three channels.
    pub fn luminance(&self) -> Vec<f64> {
        self.data
            .chunks_exact(3)
            .map(|p| (p[0] + p[1] + p[2]) / 3.0)
            .collect()
    }
}

/// Single-channel integer raster, e.g. a semantic label mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMask {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u16>,
}

impl LabelMask {
    pub fn new(width: usize, height: usize, fill: u16) -> Self {
        Self {
            width,
            height,
            labels: vec![fill; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, label: u16) {
        self.labels[y * self.width + x] = label;
    }
}
