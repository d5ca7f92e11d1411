use alloc::vec::Vec;

use crate::error::{Error, Result};

/// 8-bit RGB raster, row-major, interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    rgb: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, rgb: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::dim("image dims must be >= 1"));
        }
        if rgb.len() != width * height * 3 {
            return Err(Error::dim(alloc::format!(
                "expected {} bytes for {width}x{height} RGB, got {}",
                width * height * 3,
                rgb.len()
            )));
        }
        Ok(Self { width, height, rgb })
    }

    pub fn filled(width: usize, height: usize, px: [u8; 3]) -> Result<Self> {
        Self::from_fn(width, height, |_, _| px)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Result<Self> {
        let mut rgb = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                rgb.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, rgb)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.rgb
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, px: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.rgb[i..i + 3].copy_from_slice(&px);
    }

    /// Corner-aligned bilinear resample, rounded back to 8 bits.
    pub fn resized(&self, new_w: usize, new_h: usize) -> Result<Image> {
        if new_w == 0 || new_h == 0 {
            return Err(Error::dim("target image dims must be >= 1"));
        }
        if (new_w, new_h) == (self.width, self.height) {
            return Ok(self.clone());
        }
        let axis = |n_out: usize, n_in: usize| -> Vec<(usize, usize, f32)> {
            (0..n_out)
                .map(|i| {
                    let s = if n_out == 1 {
                        (n_in - 1) as f32 / 2.0
                    } else {
                        (i * (n_in - 1)) as f32 / (n_out - 1) as f32
                    };
                    let a = (libm::floorf(s) as usize).min(n_in - 1);
                    (a, (a + 1).min(n_in - 1), s - a as f32)
                })
                .collect()
        };
        let xs = axis(new_w, self.width);
        let ys = axis(new_h, self.height);
        let mut rgb = Vec::with_capacity(new_w * new_h * 3);
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let (p00, p01) = (self.pixel(x0, y0), self.pixel(x1, y0));
                let (p10, p11) = (self.pixel(x0, y1), self.pixel(x1, y1));
                for c in 0..3 {
                    let top = p00[c] as f32 * (1.0 - fx) + p01[c] as f32 * fx;
                    let bot = p10[c] as f32 * (1.0 - fx) + p11[c] as f32 * fx;
                    rgb.push(libm::roundf(top * (1.0 - fy) + bot * fy).clamp(0.0, 255.0) as u8);
                }
            }
        }
        Image::new(new_w, new_h, rgb)
    }
}
