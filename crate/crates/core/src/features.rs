//! Training-free feature extractor shared by query and reference images.
//!
//! Nine channels per `stride × stride` cell: mean R, G, B; mean `|∂x|` and
//! `|∂y|` of the grayscale image (central differences); and gradient
//! magnitude soft-binned into four orientations (0°, 45°, 90°, 135°). Each
//! channel is then standardised over the whole map.

use core::f32::consts::PI;
use core::sync::atomic::{AtomicU64, Ordering};

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::SquareBox;
use crate::image::Image;
use crate::tensor::{resize_bilinear, MacCounter, Tensor};

pub const FEATURE_CHANNELS: usize = 9;

const STD_EPS: f64 = 1e-6;

// Per-pixel MACs: grayscale 3, two central differences 2, squared magnitude 2,
// orientation soft-binning 2, cell accumulation 9.
const MACS_PER_PIXEL: u64 = 18;
// Per cell and channel: cell average 1, mean/variance 2, standardisation 1.
const MACS_PER_CELL_CHANNEL: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct FeatureConfig {
    /// Pixels per feature cell along each axis.
    pub stride: usize,
    /// Side of the canonical reference kernel, in cells.
    pub kernel_size: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { stride: 8, kernel_size: 5 }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.kernel_size == 0 {
            return Err(Error::param("stride and kernel_size must be >= 1"));
        }
        Ok(())
    }

    /// Stable 64-bit FNV-1a fingerprint of the extractor definition.
    pub fn config_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        eat(b"handcrafted-9ch-v1");
        eat(&(self.stride as u64).to_le_bytes());
        eat(&(self.kernel_size as u64).to_le_bytes());
        h
    }
}

/// Features of one image: a `C×⌈H/stride⌉×⌈W/stride⌉` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub tensor: Tensor,
    pub stride: usize,
    /// `(width, height)` of the source image in pixels.
    pub image_size: (usize, usize),
}

/// Anything that turns images into feature maps. Query and references must go
/// through the same instance.
pub trait FeatureExtractor {
    fn config(&self) -> &FeatureConfig;
    fn extract(&self, img: &Image) -> Result<FeatureMap>;
}

/// The hand-crafted extractor with invocation and MAC counters.
#[derive(Debug, Default)]
pub struct HandcraftedExtractor {
    config: FeatureConfig,
    passes: AtomicU64,
    macs: AtomicU64,
}

impl HandcraftedExtractor {
    pub fn new(config: FeatureConfig) -> Self {
        Self { config, passes: AtomicU64::new(0), macs: AtomicU64::new(0) }
    }

    /// Number of `extract` calls so far.
    pub fn passes(&self) -> u64 {
        self.passes.load(Ordering::Relaxed)
    }

    pub fn macs(&self) -> u64 {
        self.macs.load(Ordering::Relaxed)
    }

    pub fn reset_counters(&self) {
        self.passes.store(0, Ordering::Relaxed);
        self.macs.store(0, Ordering::Relaxed);
    }
}

impl FeatureExtractor for HandcraftedExtractor {
    fn config(&self) -> &FeatureConfig {
        &self.config
    }

    fn extract(&self, img: &Image) -> Result<FeatureMap> {
        let mut counter = MacCounter::new();
        let fm = extract_features_counted(img, &self.config, &mut counter)?;
        self.passes.fetch_add(1, Ordering::Relaxed);
        self.macs.fetch_add(counter.macs(), Ordering::Relaxed);
        Ok(fm)
    }
}

pub fn extract_features(img: &Image, cfg: &FeatureConfig) -> Result<FeatureMap> {
    extract_features_counted(img, cfg, &mut MacCounter::new())
}

/// Closed-form MAC count of one extraction pass over a `width × height` image.
pub fn backbone_macs(width: usize, height: usize, cfg: &FeatureConfig) -> u64 {
    let cells = (width.div_ceil(cfg.stride) * height.div_ceil(cfg.stride)) as u64;
    MACS_PER_PIXEL * (width * height) as u64 + MACS_PER_CELL_CHANNEL * FEATURE_CHANNELS as u64 * cells
}

pub fn extract_features_counted(img: &Image, cfg: &FeatureConfig, counter: &mut MacCounter) -> Result<FeatureMap> {
    cfg.validate()?;
    let (w, h, s) = (img.width(), img.height(), cfg.stride);
    if w < s || h < s {
        return Err(Error::dim(alloc::format!("image {w}x{h} is smaller than stride {s}")));
    }
    let (wf, hf) = (w.div_ceil(s), h.div_ceil(s));
    let npx = (w * h) as u64;

    let gray: Vec<f32> = img
        .as_bytes()
        .chunks_exact(3)
        .map(|p| (0.299 * p[0] as f32 + 0.587 * p[1] as f32 + 0.114 * p[2] as f32) / 255.0)
        .collect();
    counter.add(3 * npx);

    // channel-major cell sums
    let mut sums = vec![0.0f64; FEATURE_CHANNELS * hf * wf];
    let plane = hf * wf;
    let bin_width = PI / 4.0;
    for y in 0..h {
        let (ym, yp) = (y.saturating_sub(1), (y + 1).min(h - 1));
        let cy = y / s;
        for x in 0..w {
            let (xm, xp) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let gx = 0.5 * (gray[y * w + xp] - gray[y * w + xm]);
            let gy = 0.5 * (gray[yp * w + x] - gray[ym * w + x]);
            let mag = libm::sqrtf(gx * gx + gy * gy);
            let cell = cy * wf + x / s;

            let px = img.pixel(x, y);
            sums[cell] += px[0] as f64 / 255.0;
            sums[plane + cell] += px[1] as f64 / 255.0;
            sums[2 * plane + cell] += px[2] as f64 / 255.0;
            sums[3 * plane + cell] += gx.abs() as f64;
            sums[4 * plane + cell] += gy.abs() as f64;
            if mag > 0.0 {
                let mut theta = libm::atan2f(gy, gx);
                if theta < 0.0 {
                    theta += PI;
                }
                let pos = (theta / bin_width).min(4.0 - 1e-6);
                let lo = pos as usize % 4;
                let frac = pos - lo as f32;
                sums[(5 + lo) * plane + cell] += (mag * (1.0 - frac)) as f64;
                sums[(5 + (lo + 1) % 4) * plane + cell] += (mag * frac) as f64;
            }
        }
    }
    counter.add((MACS_PER_PIXEL - 3) * npx);

    let mut data = vec![0.0f32; FEATURE_CHANNELS * plane];
    for ch in 0..FEATURE_CHANNELS {
        let src = &sums[ch * plane..(ch + 1) * plane];
        let mut avg = Vec::with_capacity(plane);
        for cyi in 0..hf {
            let ch_h = ((cyi + 1) * s).min(h) - cyi * s;
            for cxi in 0..wf {
                let ch_w = ((cxi + 1) * s).min(w) - cxi * s;
                avg.push(src[cyi * wf + cxi] / (ch_h * ch_w) as f64);
            }
        }
        standardize_into(&avg, &mut data[ch * plane..(ch + 1) * plane]);
    }
    counter.add(MACS_PER_CELL_CHANNEL * (FEATURE_CHANNELS * plane) as u64);

    Ok(FeatureMap {
        tensor: Tensor::new(vec![FEATURE_CHANNELS, hf, wf], data)?,
        stride: s,
        image_size: (w, h),
    })
}

/// Zero mean, unit population variance; near-constant inputs map to zeros.
fn standardize_into(src: &[f64], dst: &mut [f32]) {
    let n = src.len() as f64;
    let mean = src.iter().sum::<f64>() / n;
    let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = libm::sqrt(var);
    if std <= STD_EPS {
        dst.fill(0.0);
        return;
    }
    for (d, v) in dst.iter_mut().zip(src) {
        *d = ((v - mean) / std) as f32;
    }
}

/// Feature cells covered by a pixel box: the box divided by the stride and
/// rounded outward. Returns `(row0, col0, rows, cols)`.
pub fn box_to_cells(fm: &FeatureMap, bbox: &SquareBox) -> Result<(usize, usize, usize, usize)> {
    let (w, h) = fm.image_size;
    let (x0, y0, x1, y1) = bbox.extents();
    let inside = x0 >= 0.0 && y0 >= 0.0 && x1 <= w as f64 && y1 <= h as f64 && bbox.size > 0.0;
    if !inside {
        return Err(Error::Range(alloc::format!(
            "box {:?} size {} does not lie inside the {w}x{h} image",
            bbox.center,
            bbox.size
        )));
    }
    let s = fm.stride as f64;
    let (hf, wf) = (fm.tensor.height(), fm.tensor.width());
    let c0 = (libm::floor(x0 / s) as usize).min(wf - 1);
    let r0 = (libm::floor(y0 / s) as usize).min(hf - 1);
    let c1 = (libm::ceil(x1 / s) as usize).clamp(c0 + 1, wf);
    let r1 = (libm::ceil(y1 / s) as usize).clamp(r0 + 1, hf);
    Ok((r0, c0, r1 - r0, c1 - c0))
}

/// Feature sub-tensor under `bbox`, resized to `kernel_size × kernel_size`.
pub fn crop_reference_kernel(fm: &FeatureMap, bbox: &SquareBox, kernel_size: usize) -> Result<Tensor> {
    if kernel_size == 0 {
        return Err(Error::param("kernel_size must be >= 1"));
    }
    let (r0, c0, rows, cols) = box_to_cells(fm, bbox)?;
    let crop = fm.tensor.crop(r0, c0, rows, cols)?;
    resize_bilinear(&crop, kernel_size, kernel_size)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> FeatureConfig {
        FeatureConfig::default()
    }

    #[test]
    fn uniform_image_gives_zero_features() {
        let img = Image::filled(40, 32, [128, 128, 128]).unwrap();
        let fm = extract_features(&img, &cfg()).unwrap();
        assert_eq!(fm.tensor.dims(), &[9, 4, 5]);
        assert!(fm.tensor.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic() {
        let img = Image::from_fn(50, 37, |x, y| [(x * 5) as u8, (y * 7) as u8, ((x * y) % 256) as u8]).unwrap();
        let a = extract_features(&img, &cfg()).unwrap();
        let b = extract_features(&img, &cfg()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.tensor.dims(), &[9, 5, 7]);
    }

    #[test]
    fn too_small_image() {
        let img = Image::filled(7, 20, [0, 0, 0]).unwrap();
        assert!(matches!(extract_features(&img, &cfg()), Err(Error::Dimension(_))));
    }

    #[test]
    fn step_edge_peaks_on_the_edge_cells() {
        // edge between pixel columns 35 and 36, i.e. inside feature column 4
        let img = Image::from_fn(64, 32, |x, _| if x < 36 { [20, 20, 20] } else { [220, 220, 220] }).unwrap();
        let fm = extract_features(&img, &cfg()).unwrap();

        // finite-difference oracle on raw grayscale, pooled to cells
        let g = |x: usize| if x < 36 { 20.0f64 } else { 220.0 } / 255.0;
        let mut col_energy = [0.0f64; 8];
        for x in 0..64usize {
            let d = 0.5 * (g((x + 1).min(63)) - g(x.saturating_sub(1)));
            col_energy[x / 8] += d.abs();
        }
        let oracle_col = (0..8).max_by(|&a, &b| col_energy[a].partial_cmp(&col_energy[b]).unwrap()).unwrap();
        assert_eq!(oracle_col, 4);

        let gx = fm.tensor.channel_map(3).unwrap();
        for row in 0..4 {
            let best = (0..8).max_by(|&a, &b| gx.at(0, row, a).partial_cmp(&gx.at(0, row, b)).unwrap()).unwrap();
            assert_eq!(best, oracle_col);
        }
        // no vertical structure
        assert!(fm.tensor.channel(4).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn standardized_channels() {
        let img = Image::from_fn(64, 48, |x, y| {
            let v = ((x as f32 * 0.3).sin() * 100.0 + 120.0) as u8;
            [v, (y * 4) as u8, ((x + y) * 2) as u8]
        })
        .unwrap();
        let fm = extract_features(&img, &cfg()).unwrap();
        for ch in 0..FEATURE_CHANNELS {
            let v = fm.tensor.channel(ch);
            let n = v.len() as f64;
            let mean = v.iter().map(|&a| a as f64).sum::<f64>() / n;
            let var = v.iter().map(|&a| (a as f64 - mean).powi(2)).sum::<f64>() / n;
            if var == 0.0 {
                continue;
            }
            assert!(mean.abs() <= 1e-5, "channel {ch} mean {mean}");
            assert!((libm::sqrt(var) - 1.0).abs() <= 1e-3, "channel {ch} var {var}");
        }
    }

    #[test]
    fn translation_covariance_at_stride() {
        // object well inside a flat frame, so shifting by one stride only swaps
        // flat cells at the border and the per-channel statistics are unchanged
        let scene = |dx: usize| {
            Image::from_fn(96, 96, move |x, y| {
                let (ox, oy) = (x as i64 - (36 + dx) as i64, y as i64 - 40);
                if (0..20).contains(&ox) && (0..16).contains(&oy) {
                    [(60 + ox * 7) as u8, (200 - oy * 9) as u8, ((ox * oy) % 90) as u8 + 40]
                } else {
                    [90, 90, 90]
                }
            })
            .unwrap()
        };
        let a = extract_features(&scene(0), &cfg()).unwrap();
        let b = extract_features(&scene(8), &cfg()).unwrap();
        let (c, h, w) = a.tensor.chw();
        let mut worst = 0.0f32;
        for ch in 0..c {
            for y in 1..h - 1 {
                for x in 1..w - 2 {
                    worst = worst.max((a.tensor.at(ch, y, x) - b.tensor.at(ch, y, x + 1)).abs());
                }
            }
        }
        assert!(worst <= 1e-4, "max deviation {worst}");
    }

    #[test]
    fn crop_identity_and_single_cell() {
        let img = Image::from_fn(64, 64, |x, y| [(x * 3) as u8, (y * 2) as u8, 77]).unwrap();
        let fm = extract_features(&img, &cfg()).unwrap();
        let whole = crop_reference_kernel(&fm, &SquareBox::new([32.0, 32.0], 64.0), 8).unwrap();
        assert_eq!(whole, fm.tensor);

        let one = SquareBox::new([12.0, 20.0], 8.0);
        assert_eq!(box_to_cells(&fm, &one).unwrap(), (2, 1, 1, 1));
        let k = crop_reference_kernel(&fm, &one, 1).unwrap();
        assert_eq!(k.dims(), &[9, 1, 1]);
        assert_eq!(k.at(4, 0, 0), fm.tensor.at(4, 2, 1));
    }

    #[test]
    fn crop_out_of_bounds() {
        let img = Image::filled(32, 32, [1, 2, 3]).unwrap();
        let fm = extract_features(&img, &cfg()).unwrap();
        let r = crop_reference_kernel(&fm, &SquareBox::new([30.0, 16.0], 8.0), 5);
        assert!(matches!(r, Err(Error::Range(_))));
    }

    #[test]
    fn counters_track_passes_and_macs() {
        let ex = HandcraftedExtractor::new(cfg());
        let img = Image::filled(30, 17, [5, 5, 5]).unwrap();
        ex.extract(&img).unwrap();
        ex.extract(&img).unwrap();
        assert_eq!(ex.passes(), 2);
        assert_eq!(ex.macs(), 2 * backbone_macs(30, 17, &cfg()));
    }
}
