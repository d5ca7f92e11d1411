//! Multi-scale correlation by distributing the reference kernel.
//!
//! A canonical `C×H_r×W_r` reference kernel is re-materialised at several
//! spatial sizes: interpolated candidates at `H_r + Δo`, each optionally shrunk
//! by average pooling (`⌈(H_r+Δo)/t⌉`) or expanded by dilation
//! (`(H_r+Δo)·t − t + 1`). Every distributed kernel is correlated against the
//! same query feature map, so the query goes through the extractor once.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, FeatureMap};
use crate::image::Image;
use crate::tensor::{
    correlate_plane, cross_correlate_counted, dilate_kernel, pyramid_pool, resize_bilinear, stack_maps, MacCounter,
    Padding, Tensor,
};

/// How each distributed kernel is scored against the query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum CorrelationNorm {
    /// Plain same-padded correlation with the kernel scaled to unit norm.
    UnitKernel,
    /// Zero-mean normalised cross-correlation per channel over the kernel's
    /// taps, averaged over channels and scaled by the fraction of taps inside
    /// the query. Maps of even-sided kernels are shifted half a cell so every
    /// channel is centred on the kernel centre.
    #[default]
    Zncc,
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct KernelDistributionConfig {
    pub offsets: Vec<i32>,
    pub pool_rates: Vec<usize>,
    pub dilation_rates: Vec<usize>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub normalization: CorrelationNorm,
}

impl Default for KernelDistributionConfig {
    fn default() -> Self {
        Self {
            offsets: alloc::vec![-2, -1, 0, 1, 2],
            pool_rates: alloc::vec![2],
            dilation_rates: alloc::vec![2],
            normalization: CorrelationNorm::default(),
        }
    }
}

impl KernelDistributionConfig {
    /// A single kernel: the reference itself.
    pub fn identity() -> Self {
        Self { offsets: alloc::vec![0], pool_rates: Vec::new(), dilation_rates: Vec::new(), ..Self::default() }
    }

    pub fn with_normalization(mut self, normalization: CorrelationNorm) -> Self {
        self.normalization = normalization;
        self
    }

    /// Checks the config against a reference kernel of side `h_r × w_r`.
    pub fn validate(&self, h_r: usize, w_r: usize) -> Result<()> {
        let min = *self.offsets.iter().min().ok_or_else(|| Error::param("offsets must not be empty"))?;
        let smallest = h_r.min(w_r) as i64 + min as i64;
        if smallest < 2 {
            return Err(Error::param(alloc::format!(
                "kernel side {} with offset {min} leaves a candidate of side {smallest} (< 2)",
                h_r.min(w_r)
            )));
        }
        if self.pool_rates.iter().chain(&self.dilation_rates).any(|&r| r < 1) {
            return Err(Error::param("pool and dilation rates must be >= 1"));
        }
        Ok(())
    }

    /// Channel count before exact-duplicate removal.
    pub fn channel_count(&self) -> usize {
        let pooled = self.pool_rates.iter().filter(|&&t| t > 1).count();
        let dilated = self.dilation_rates.iter().filter(|&&t| t > 1).count();
        self.offsets.len() * (1 + pooled + dilated)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Provenance {
    OffsetOnly { offset: i32 },
    Pooled { offset: i32, rate: usize },
    Dilated { offset: i32, rate: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistributedKernel {
    pub tensor: Tensor,
    /// Query-to-reference object size ratio this kernel is tuned to.
    pub scale_factor: f64,
    pub provenance: Provenance,
}

/// `N_c` same-sized correlation maps of one reference against one query.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationStack {
    pub tensor: Tensor,
    pub scale_factors: Vec<f64>,
}

impl CorrelationStack {
    pub fn len(&self) -> usize {
        self.scale_factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scale_factors.is_empty()
    }

    pub fn map(&self, i: usize) -> Result<Tensor> {
        self.tensor.channel_map(i)
    }
}

/// Expands `ref_kernel` into its distributed kernels, sorted by scale factor
/// (stable, so equal scales keep generation order).
pub fn distribute_kernel(ref_kernel: &Tensor, cfg: &KernelDistributionConfig) -> Result<Vec<DistributedKernel>> {
    let (_, h_r, w_r) = ref_kernel.chw();
    cfg.validate(h_r, w_r)?;
    let base = h_r as f64;
    let mut out: Vec<DistributedKernel> = Vec::with_capacity(cfg.channel_count());
    for &offset in &cfg.offsets {
        let hc = h_r as i64 + offset as i64;
        let wc = w_r as i64 + offset as i64;
        if hc < 1 || wc < 1 {
            return Err(Error::param(alloc::format!("offset {offset} gives an empty candidate")));
        }
        let candidate = resize_bilinear(ref_kernel, hc as usize, wc as usize)?;
        let hc = hc as f64;
        for &rate in cfg.pool_rates.iter().filter(|&&t| t > 1) {
            out.push(DistributedKernel {
                tensor: pyramid_pool(&candidate, rate)?,
                scale_factor: hc / base / rate as f64,
                provenance: Provenance::Pooled { offset, rate },
            });
        }
        for &rate in cfg.dilation_rates.iter().filter(|&&t| t > 1) {
            let t = rate as f64;
            out.push(DistributedKernel {
                tensor: dilate_kernel(&candidate, rate)?,
                scale_factor: (hc * t - t + 1.0) / base,
                provenance: Provenance::Dilated { offset, rate },
            });
        }
        out.push(DistributedKernel {
            tensor: candidate,
            scale_factor: hc / base,
            provenance: Provenance::OffsetOnly { offset },
        });
    }

    let mut unique: Vec<DistributedKernel> = Vec::with_capacity(out.len());
    for k in out {
        if !unique.iter().any(|u| u.tensor == k.tensor) {
            unique.push(k);
        }
    }
    // ties keep generation order, which puts the plain candidate last among equals
    unique.sort_by(|a, b| a.scale_factor.total_cmp(&b.scale_factor));
    Ok(unique)
}

/// Unit Frobenius norm; an all-zero kernel stays zero.
pub(crate) fn unit_kernel(k: &Tensor) -> Tensor {
    let n = k.l2_norm();
    if n > 0.0 {
        k.map(|v| (v as f64 / n) as f32)
    } else {
        k.clone()
    }
}

/// Spacing between the taps of a distributed kernel.
fn tap_spacing(p: &Provenance) -> usize {
    match p {
        Provenance::Dilated { rate, .. } => *rate,
        _ => 1,
    }
}

/// Per channel: zero mean over the taps, then unit norm. Cells between
/// dilated taps stay zero.
fn zero_mean_unit_channels(k: &Tensor, spacing: usize) -> Tensor {
    let (c, h, w) = k.chw();
    let mut out = k.clone();
    let on_tap = |i: usize| (i / w) % spacing == 0 && (i % w) % spacing == 0;
    let taps = (0..h * w).filter(|&i| on_tap(i)).count() as f64;
    for ch in 0..c {
        let plane = &mut out.data_mut()[ch * h * w..(ch + 1) * h * w];
        let mean = (0..h * w).filter(|&i| on_tap(i)).map(|i| plane[i] as f64).sum::<f64>() / taps;
        let mut norm = 0.0f64;
        for (i, v) in plane.iter_mut().enumerate() {
            if on_tap(i) {
                *v = (*v as f64 - mean) as f32;
                norm += (*v as f64) * (*v as f64);
            }
        }
        let norm = libm::sqrt(norm);
        for v in plane.iter_mut() {
            *v = if norm > 0.0 { (*v as f64 / norm) as f32 } else { 0.0 };
        }
    }
    out
}

/// Guards the ZNCC denominator and damps near-flat query windows, relative
/// to the RMS of the query channel so the score ignores the query's scale.
const ZNCC_EPS: f64 = 1e-3;

/// Window sums of `plane` over an `nh × nw` grid of taps `spacing` apart,
/// anchored like same-padded correlation, with zero padding.
fn tap_sums(
    plane: &[f64],
    (h, w): (usize, usize),
    (nh, nw): (usize, usize),
    spacing: usize,
    (pt, pl): (usize, usize),
) -> Vec<f64> {
    let mut rows = vec![0.0f64; h * w];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for j in 0..nw {
                let qx = x as isize + (j * spacing) as isize - pl as isize;
                if qx >= 0 && (qx as usize) < w {
                    s += plane[y * w + qx as usize];
                }
            }
            rows[y * w + x] = s;
        }
    }
    let mut out = vec![0.0f64; h * w];
    for y in 0..h {
        for i in 0..nh {
            let qy = y as isize + (i * spacing) as isize - pt as isize;
            if qy < 0 || qy as usize >= h {
                continue;
            }
            let src = &rows[qy as usize * w..(qy as usize + 1) * w];
            for (o, &v) in out[y * w..(y + 1) * w].iter_mut().zip(src) {
                *o += v;
            }
        }
    }
    out
}

/// Number of in-bounds taps along one axis for every output position.
fn taps_inside(len: usize, n: usize, spacing: usize, pad: usize) -> Vec<usize> {
    (0..len)
        .map(|p| {
            (0..n)
                .filter(|&i| {
                    let q = p as isize + (i * spacing) as isize - pad as isize;
                    q >= 0 && (q as usize) < len
                })
                .count()
        })
        .collect()
}

/// Averages each cell with its predecessor along every axis whose kernel side
/// is even, moving the response from the half-cell offset that same padding
/// gives even kernels back onto the kernel centre.
fn centre_even(map: Vec<f64>, h: usize, w: usize, even_h: bool, even_w: bool) -> Vec<f64> {
    let mut m = map;
    if even_w {
        for y in 0..h {
            for x in (1..w).rev() {
                m[y * w + x] = 0.5 * (m[y * w + x] + m[y * w + x - 1]);
            }
        }
    }
    if even_h {
        for y in (1..h).rev() {
            for x in 0..w {
                m[y * w + x] = 0.5 * (m[y * w + x] + m[(y - 1) * w + x]);
            }
        }
    }
    m
}

/// Distributed kernels of one reference, prepared for scoring against many
/// queries.
#[derive(Debug, Clone)]
pub struct KernelBank {
    kernels: Vec<Tensor>,
    scale_factors: Vec<f64>,
    provenance: Vec<Provenance>,
    channels: usize,
    normalization: CorrelationNorm,
}

impl KernelBank {
    pub fn new(ref_kernel: &Tensor, cfg: &KernelDistributionConfig) -> Result<Self> {
        let dist = distribute_kernel(ref_kernel, cfg)?;
        let prepare = |d: &DistributedKernel| match cfg.normalization {
            CorrelationNorm::UnitKernel => unit_kernel(&d.tensor),
            CorrelationNorm::Zncc => zero_mean_unit_channels(&d.tensor, tap_spacing(&d.provenance)),
        };
        Ok(Self {
            scale_factors: dist.iter().map(|d| d.scale_factor).collect(),
            provenance: dist.iter().map(|d| d.provenance).collect(),
            kernels: dist.iter().map(prepare).collect(),
            channels: ref_kernel.channels(),
            normalization: cfg.normalization,
        })
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn scale_factors(&self) -> &[f64] {
        &self.scale_factors
    }

    pub fn provenance(&self) -> &[Provenance] {
        &self.provenance
    }

    /// Kernels as correlated: unit-norm, or zero-mean unit-norm per channel.
    pub fn kernels(&self) -> &[Tensor] {
        &self.kernels
    }

    pub fn normalization(&self) -> CorrelationNorm {
        self.normalization
    }

    pub fn correlate(&self, query: &FeatureMap) -> Result<CorrelationStack> {
        self.correlate_counted(&query.tensor, &mut MacCounter::new())
    }

    /// The counter receives the MACs of the kernel-query products only; the
    /// window statistics of [`CorrelationNorm::Zncc`] are not counted.
    pub fn correlate_counted(&self, query: &Tensor, counter: &mut MacCounter) -> Result<CorrelationStack> {
        self.correlate_shared(query, &mut QueryWindows::new(query), counter)
    }

    /// [`Self::correlate_counted`] reusing window statistics computed for
    /// earlier banks. `windows` must have been built from `query`.
    pub fn correlate_shared(
        &self,
        query: &Tensor,
        windows: &mut QueryWindows,
        counter: &mut MacCounter,
    ) -> Result<CorrelationStack> {
        if windows.dims != query.chw() {
            return Err(Error::dim("window statistics belong to a different query"));
        }
        if query.channels() != self.channels {
            return Err(Error::dim(alloc::format!(
                "query has {} channels, kernels have {}",
                query.channels(),
                self.channels
            )));
        }
        let maps = match self.normalization {
            CorrelationNorm::UnitKernel => self
                .kernels
                .iter()
                .map(|k| cross_correlate_counted(query, k, Padding::Same, counter))
                .collect::<Result<Vec<_>>>()?,
            CorrelationNorm::Zncc => self
                .kernels
                .iter()
                .zip(&self.provenance)
                .map(|(k, p)| zncc_map(windows, query, k, tap_spacing(p), counter))
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(CorrelationStack { tensor: stack_maps(&maps)?, scale_factors: self.scale_factors.clone() })
    }
}

/// Window statistics of one query for [`CorrelationNorm::Zncc`].
///
/// They depend only on the query and the tap layout of a kernel, so one
/// instance can serve every bank correlated against the same query.
#[derive(Debug, Clone)]
pub struct QueryWindows {
    dims: (usize, usize, usize),
    values: Vec<Vec<f64>>,
    squares: Vec<Vec<f64>>,
    eps: Vec<f64>,
    /// Keyed by `(kernel height, kernel width, tap spacing)`.
    entries: Vec<((usize, usize, usize), WindowStats)>,
}

#[derive(Debug, Clone)]
struct WindowStats {
    /// `1 / (σ·√n + ε)` per channel and cell, channel-major.
    inv_spread: Vec<f64>,
    /// In-bounds tap fraction divided by the channel count, per cell.
    weight: Vec<f64>,
}

impl QueryWindows {
    pub fn new(query: &Tensor) -> Self {
        let values: Vec<Vec<f64>> =
            (0..query.channels()).map(|c| query.channel(c).iter().map(|&v| v as f64).collect()).collect();
        let squares: Vec<Vec<f64>> = values.iter().map(|p| p.iter().map(|v| v * v).collect()).collect();
        let eps = squares
            .iter()
            .map(|sq| {
                let rms = libm::sqrt(sq.iter().sum::<f64>() / sq.len() as f64);
                if rms > 0.0 {
                    ZNCC_EPS * rms
                } else {
                    1.0
                }
            })
            .collect();
        Self { dims: query.chw(), values, squares, eps, entries: Vec::new() }
    }

    fn stats(&mut self, hk: usize, wk: usize, spacing: usize) -> &WindowStats {
        let key = (hk, wk, spacing);
        if let Some(i) = self.entries.iter().position(|(k, _)| *k == key) {
            return &self.entries[i].1;
        }
        let (c, h, w) = self.dims;
        let pad = ((hk - 1) / 2, (wk - 1) / 2);
        let taps = ((hk - 1) / spacing + 1, (wk - 1) / spacing + 1);
        let n = (taps.0 * taps.1) as f64;
        let mut inv_spread = Vec::with_capacity(c * h * w);
        for ch in 0..c {
            let s1 = tap_sums(&self.values[ch], (h, w), taps, spacing, pad);
            let s2 = tap_sums(&self.squares[ch], (h, w), taps, spacing, pad);
            let eps = self.eps[ch];
            inv_spread.extend(s1.iter().zip(&s2).map(|(a, b)| 1.0 / (libm::sqrt((b - a * a / n).max(0.0)) + eps)));
        }
        let rows_in = taps_inside(h, taps.0, spacing, pad.0);
        let cols_in = taps_inside(w, taps.1, spacing, pad.1);
        let weight =
            (0..h * w).map(|i| (rows_in[i / w] * cols_in[i % w]) as f64 / n / c as f64).collect();
        self.entries.push((key, WindowStats { inv_spread, weight }));
        &self.entries[self.entries.len() - 1].1
    }
}

fn zncc_map(windows: &mut QueryWindows, query: &Tensor, kernel: &Tensor, spacing: usize, counter: &mut MacCounter) -> Result<Tensor> {
    let (c, h, w) = query.chw();
    let (_, hk, wk) = kernel.chw();
    let pad = ((hk - 1) / 2, (wk - 1) / 2);
    let stats = windows.stats(hk, wk, spacing);

    let mut score = vec![0.0f64; h * w];
    // f32 is plenty for one channel's sum of at most a few hundred taps
    let mut num = vec![0.0f32; h * w];
    for ch in 0..c {
        num.fill(0.0);
        correlate_plane(query.channel(ch), (h, w), kernel.channel(ch), (hk, wk), pad, (h, w), &mut num);
        let inv = &stats.inv_spread[ch * h * w..(ch + 1) * h * w];
        for ((s, &v), &d) in score.iter_mut().zip(&num).zip(inv) {
            *s += v as f64 * d;
        }
    }
    counter.add((h * w * c * hk * wk) as u64);
    for (s, &wt) in score.iter_mut().zip(&stats.weight) {
        *s *= wt;
    }
    let score = centre_even(score, h, w, hk % 2 == 0, wk % 2 == 0);
    Tensor::new(alloc::vec![1, h, w], score.into_iter().map(|v| v as f32).collect())
}

/// One same-padded correlation per distributed kernel, stacked in scale order.
pub fn correlate_multiscale(
    query: &FeatureMap,
    ref_kernel: &Tensor,
    cfg: &KernelDistributionConfig,
) -> Result<CorrelationStack> {
    KernelBank::new(ref_kernel, cfg)?.correlate(query)
}

/// Baseline: resize the query image once per scale and run the extractor on
/// each copy, correlating against the single canonical kernel.
///
/// A scale `s` is an object-size ratio, so the image is resized by `1/s`.
/// Each map is resampled back to the unscaled feature grid.
pub fn correlate_by_query_resizing(
    query_img: &Image,
    ref_kernel: &Tensor,
    scales: &[f64],
    extractor: &dyn FeatureExtractor,
) -> Result<CorrelationStack> {
    correlate_by_query_resizing_counted(query_img, ref_kernel, scales, extractor, &mut MacCounter::new())
}

pub fn correlate_by_query_resizing_counted(
    query_img: &Image,
    ref_kernel: &Tensor,
    scales: &[f64],
    extractor: &dyn FeatureExtractor,
    counter: &mut MacCounter,
) -> Result<CorrelationStack> {
    if scales.is_empty() {
        return Err(Error::param("at least one scale is required"));
    }
    let stride = extractor.config().stride;
    let (bw, bh) = (query_img.width().div_ceil(stride), query_img.height().div_ceil(stride));
    let kernel = unit_kernel(ref_kernel);
    let mut maps = Vec::with_capacity(scales.len());
    for &s in scales {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::param(alloc::format!("scale must be positive, got {s}")));
        }
        let (w, h) = resized_dims(query_img.width(), query_img.height(), s);
        if w < stride || h < stride {
            return Err(Error::dim(alloc::format!("scale {s} shrinks the query to {w}x{h}, below stride {stride}")));
        }
        let img = query_img.resized(w, h)?;
        let fm = extractor.extract(&img)?;
        let corr = cross_correlate_counted(&fm.tensor, &kernel, Padding::Same, counter)?;
        maps.push(resize_bilinear(&corr, bh, bw)?);
    }
    Ok(CorrelationStack { tensor: stack_maps(&maps)?, scale_factors: scales.to_vec() })
}

/// Image size after resizing for object-size ratio `s` (factor `1/s`).
pub fn resized_dims(width: usize, height: usize, s: f64) -> (usize, usize) {
    let w = libm::round(width as f64 / s).max(1.0) as usize;
    let h = libm::round(height as f64 / s).max(1.0) as usize;
    (w, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{extract_features, FeatureConfig, HandcraftedExtractor};
    use crate::tensor::cross_correlate;
    use alloc::vec;

    fn ramp_kernel(c: usize, n: usize) -> Tensor {
        Tensor::from_fn(c, n, n, |ch, y, x| ((ch * 7 + y * 3 + x * 5) % 11) as f32 - 4.0).unwrap()
    }

    #[test]
    fn identity_configuration() {
        let k = ramp_kernel(2, 5);
        let d = distribute_kernel(&k, &KernelDistributionConfig::identity()).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].tensor, k);
        assert_eq!(d[0].scale_factor, 1.0);
        let with_unit_rates = KernelDistributionConfig { offsets: vec![0], pool_rates: vec![1], dilation_rates: vec![1], ..Default::default() };
        assert_eq!(distribute_kernel(&k, &with_unit_rates).unwrap().len(), 1);
    }

    #[test]
    fn pooled_and_dilated_sides() {
        let k = ramp_kernel(1, 5);
        let pooled = KernelDistributionConfig { offsets: vec![1], pool_rates: vec![2], dilation_rates: vec![], ..Default::default() };
        let d = distribute_kernel(&k, &pooled).unwrap();
        let p = d.iter().find(|d| matches!(d.provenance, Provenance::Pooled { .. })).unwrap();
        assert_eq!(p.tensor.dims(), &[1, 3, 3]);
        assert!((p.scale_factor - 0.6).abs() < 1e-12);

        let dilated = KernelDistributionConfig { offsets: vec![1], pool_rates: vec![], dilation_rates: vec![2], ..Default::default() };
        let d = distribute_kernel(&k, &dilated).unwrap();
        let p = d.iter().find(|d| matches!(d.provenance, Provenance::Dilated { .. })).unwrap();
        assert_eq!(p.tensor.dims(), &[1, 11, 11]);
        assert!((p.scale_factor - 11.0 / 5.0).abs() < 1e-12);
    }

    #[test]
    fn default_config_counts_and_is_bidirectional() {
        let cfg = KernelDistributionConfig::default();
        let d = distribute_kernel(&ramp_kernel(3, 5), &cfg).unwrap();
        assert_eq!(cfg.channel_count(), 15);
        assert_eq!(d.len(), 15);
        assert!(d.windows(2).all(|w| w[0].scale_factor <= w[1].scale_factor));
        assert!(d.iter().any(|k| k.scale_factor < 1.0));
        assert!(d.iter().any(|k| k.scale_factor > 1.0));
        for k in &d {
            let (_, h, _) = k.tensor.chw();
            match k.provenance {
                Provenance::OffsetOnly { offset } => assert_eq!(h as i32, 5 + offset),
                Provenance::Pooled { offset, rate } => assert_eq!(h, ((5 + offset) as usize).div_ceil(rate)),
                Provenance::Dilated { offset, rate } => assert_eq!(h, (5 + offset) as usize * rate - rate + 1),
            }
        }
    }

    #[test]
    fn exact_duplicates_are_dropped() {
        let cfg = KernelDistributionConfig { offsets: vec![0, 0], pool_rates: vec![2, 2], dilation_rates: vec![], ..Default::default() };
        assert_eq!(distribute_kernel(&ramp_kernel(1, 5), &cfg).unwrap().len(), 2);
    }

    #[test]
    fn invalid_configs() {
        let k = ramp_kernel(1, 5);
        let too_small = KernelDistributionConfig { offsets: vec![-4], ..Default::default() };
        assert!(matches!(distribute_kernel(&k, &too_small), Err(Error::Parameter(_))));
        let zero_rate = KernelDistributionConfig { pool_rates: vec![0], ..Default::default() };
        assert!(distribute_kernel(&k, &zero_rate).is_err());
        let empty = KernelDistributionConfig { offsets: vec![], ..Default::default() };
        assert!(distribute_kernel(&k, &empty).is_err());
    }

    #[test]
    fn identity_stack_is_plain_correlation_with_unit_kernel() {
        let q = FeatureMap {
            tensor: Tensor::from_fn(2, 9, 11, |c, y, x| ((c + y * x) % 5) as f32 - 2.0).unwrap(),
            stride: 8,
            image_size: (88, 72),
        };
        let k = ramp_kernel(2, 3);
        let cfg = KernelDistributionConfig::identity().with_normalization(CorrelationNorm::UnitKernel);
        let stack = correlate_multiscale(&q, &k, &cfg).unwrap();
        let direct = cross_correlate(&q.tensor, &unit_kernel(&k), Padding::Same).unwrap();
        assert_eq!(stack.len(), 1);
        assert_eq!(stack.tensor.data(), direct.data());
    }

    #[test]
    fn channel_mismatch() {
        let q = FeatureMap { tensor: Tensor::zeros(&[3, 8, 8]).unwrap(), stride: 8, image_size: (64, 64) };
        assert!(matches!(
            correlate_multiscale(&q, &ramp_kernel(2, 5), &KernelDistributionConfig::default()),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn resizing_baseline_counts_passes() {
        let img = Image::from_fn(64, 64, |x, y| [(x * 4) as u8, (y * 4) as u8, ((x ^ y) * 3) as u8]).unwrap();
        let ex = HandcraftedExtractor::new(FeatureConfig::default());
        let fm = extract_features(&img, &FeatureConfig::default()).unwrap();
        let k = crate::features::crop_reference_kernel(&fm, &crate::geometry::SquareBox::new([32.0, 32.0], 24.0), 3).unwrap();
        let stack = correlate_by_query_resizing(&img, &k, &[0.8, 1.0, 1.25], &ex).unwrap();
        assert_eq!(ex.passes(), 3);
        assert_eq!(stack.tensor.dims(), &[3, 8, 8]);
        let tiny = correlate_by_query_resizing(&img, &k, &[20.0], &ex);
        assert!(matches!(tiny, Err(Error::Dimension(_))));
    }

    /// Direct per-window ZNCC: gather the taps (zero outside the query),
    /// centre both sides, divide by the window spread.
    fn zncc_oracle(q: &Tensor, k: &Tensor, spacing: usize, y: usize, x: usize) -> f64 {
        let (c, h, w) = q.chw();
        let (_, hk, wk) = k.chw();
        let (pt, pl) = ((hk - 1) / 2, (wk - 1) / 2);
        let taps: Vec<(usize, usize)> =
            (0..hk).step_by(spacing).flat_map(|i| (0..wk).step_by(spacing).map(move |j| (i, j))).collect();
        let n = taps.len() as f64;
        let mut inside = 0usize;
        let mut total = 0.0;
        for ch in 0..c {
            let mut qs = Vec::new();
            let mut ks = Vec::new();
            for &(i, j) in &taps {
                let (qy, qx) = (y as isize + i as isize - pt as isize, x as isize + j as isize - pl as isize);
                let ok = qy >= 0 && qx >= 0 && (qy as usize) < h && (qx as usize) < w;
                if ch == 0 && ok {
                    inside += 1;
                }
                qs.push(if ok { q.at(ch, qy as usize, qx as usize) as f64 } else { 0.0 });
                ks.push(k.at(ch, i, j) as f64);
            }
            let (qm, km) = (qs.iter().sum::<f64>() / n, ks.iter().sum::<f64>() / n);
            let num: f64 = qs.iter().zip(&ks).map(|(a, b)| (a - qm) * (b - km)).sum();
            let kn = ks.iter().map(|b| (b - km) * (b - km)).sum::<f64>().sqrt();
            let qn = qs.iter().map(|a| (a - qm) * (a - qm)).sum::<f64>().sqrt();
            let rms = (q.channel(ch).iter().map(|&v| v as f64 * v as f64).sum::<f64>() / (h * w) as f64).sqrt();
            total += if kn > 0.0 { num / kn / (qn + ZNCC_EPS * rms) } else { 0.0 };
        }
        total / c as f64 * inside as f64 / n
    }

    fn bumpy_query(c: usize, h: usize, w: usize) -> Tensor {
        Tensor::from_fn(c, h, w, |ch, y, x| (((ch * 7 + y * 3 + x * x) % 11) as f32) * 0.3 - 1.0 + y as f32 * 0.05).unwrap()
    }

    #[test]
    fn zncc_matches_direct_window_computation() {
        let q = bumpy_query(2, 9, 10);
        let k = Tensor::from_fn(2, 3, 3, |c, y, x| ((c + 2 * y + x * x) % 4) as f32 - 1.5).unwrap();
        let bank = KernelBank::new(&k, &KernelDistributionConfig::identity()).unwrap();
        let map = bank.correlate_counted(&q, &mut MacCounter::new()).unwrap().tensor;
        for y in 0..9 {
            for x in 0..10 {
                let want = zncc_oracle(&q, &k, 1, y, x);
                assert!((map.at(0, y, x) as f64 - want).abs() < 1e-4, "({y},{x}) {} vs {want}", map.at(0, y, x));
            }
        }
    }

    #[test]
    fn zncc_dilated_uses_only_the_taps() {
        let q = bumpy_query(1, 12, 12);
        let k = ramp_kernel(1, 3);
        let dilated = dilate_kernel(&k, 2).unwrap();
        let cfg = KernelDistributionConfig { offsets: vec![0], pool_rates: vec![], dilation_rates: vec![2], ..Default::default() };
        // channel 0 is the 3x3 itself, channel 1 its 5x5 dilation
        let bank = KernelBank::new(&k, &cfg).unwrap();
        assert_eq!(bank.kernels()[1].dims(), dilated.dims());
        let map = bank.correlate_counted(&q, &mut MacCounter::new()).unwrap().tensor;
        for y in 0..12 {
            for x in 0..12 {
                let want = zncc_oracle(&q, &dilated, 2, y, x);
                assert!((map.at(1, y, x) as f64 - want).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn zncc_ignores_gain_and_offset_per_channel() {
        let q = bumpy_query(2, 10, 10);
        let k = Tensor::from_fn(2, 3, 3, |c, y, x| ((c * 3 + y + 2 * x) % 5) as f32).unwrap();
        let bank = KernelBank::new(&k, &KernelDistributionConfig::identity()).unwrap();
        let shifted = Tensor::from_fn(2, 10, 10, |c, y, x| q.at(c, y, x) * (2.0 + c as f32) + 5.0 * c as f32).unwrap();
        let a = bank.correlate_counted(&q, &mut MacCounter::new()).unwrap().tensor;
        let b = bank.correlate_counted(&shifted, &mut MacCounter::new()).unwrap().tensor;
        for y in 1..9 {
            for x in 1..9 {
                assert!((a.at(0, y, x) - b.at(0, y, x)).abs() < 2e-3);
            }
        }
        // a power-of-two rescale of the whole query changes nothing at all
        let doubled = q.scaled(4.0);
        let c = bank.correlate_counted(&doubled, &mut MacCounter::new()).unwrap().tensor;
        assert_eq!(a.data(), c.data());
    }

    #[test]
    fn zncc_self_match_peaks_at_the_kernel_centre() {
        // odd and even kernel sides both peak where the pattern sits
        for side in [3usize, 4] {
            let k = Tensor::from_fn(1, side, side, |_, y, x| ((y * 5 + x * 3) % 7) as f32).unwrap();
            let mut q = Tensor::zeros(&[1, 14, 14]).unwrap();
            for y in 0..side {
                for x in 0..side {
                    q.data_mut()[(5 + y) * 14 + 4 + x] = k.at(0, y, x);
                }
            }
            let cfg = KernelDistributionConfig::identity();
            let map = KernelBank::new(&k, &cfg).unwrap().correlate_counted(&q, &mut MacCounter::new()).unwrap().tensor;
            let best = map.argmax();
            let centre = (5.0 + (side as f64 - 1.0) / 2.0, 4.0 + (side as f64 - 1.0) / 2.0);
            assert!(((best / 14) as f64 - centre.0).abs() <= 0.5 && ((best % 14) as f64 - centre.1).abs() <= 0.5);
            if side % 2 == 1 {
                assert!((map.data()[best] - 1.0).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn zncc_counts_only_the_products() {
        let q = bumpy_query(3, 10, 10);
        let k = ramp_kernel(3, 5);
        let bank = KernelBank::new(&k, &KernelDistributionConfig::default()).unwrap();
        let mut counter = MacCounter::new();
        bank.correlate_counted(&q, &mut counter).unwrap();
        let expected: u64 = bank.kernels().iter().map(|kk| (10 * 10 * 3 * kk.height() * kk.width()) as u64).sum();
        assert_eq!(counter.macs(), expected);
    }
}
