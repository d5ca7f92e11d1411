//! Dense row-major `f32` tensors and the handful of operations the
//! correlation pipeline is built from.
//!
//! Tensors are rank 2 (`H×W`) or rank 3 (`C×H×W`); a rank-2 tensor is treated
//! as a single channel everywhere a channel count is needed. Reductions
//! accumulate in `f64`.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Counts multiply-accumulate operations performed by instrumented kernels.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct MacCounter {
    macs: u64,
}

impl MacCounter {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, n: u64) {
        self.macs += n;
    }

    pub fn macs(&self) -> u64 {
        self.macs
    }
}

/// Padding policy for [`cross_correlate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Padding {
    /// No padding; output shrinks by `kernel - 1` along each axis.
    Valid,
    /// Zero padding of `(k-1)/2` before and `k/2` after, output keeps the query size.
    Same,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if dims.len() != 2 && dims.len() != 3 {
            return Err(Error::dim(alloc::format!("rank must be 2 or 3, got {}", dims.len())));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::dim(alloc::format!("all dims must be >= 1, got {dims:?}")));
        }
        let len: usize = dims.iter().product();
        if len != data.len() {
            return Err(Error::dim(alloc::format!(
                "data length {} does not match dims {dims:?} (expected {len})",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        let len = dims.iter().product();
        Self::new(dims.to_vec(), vec![0.0; len])
    }

    /// Builds a `C×H×W` tensor from a function of `(c, y, x)`.
    pub fn from_fn(c: usize, h: usize, w: usize, mut f: impl FnMut(usize, usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(c * h * w);
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    data.push(f(ci, y, x));
                }
            }
        }
        Self::new(vec![c, h, w], data)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(C, H, W)`, with `C = 1` for rank-2 tensors.
    pub fn chw(&self) -> (usize, usize, usize) {
        match self.dims.as_slice() {
            [h, w] => (1, *h, *w),
            [c, h, w] => (*c, *h, *w),
            _ => unreachable!("rank is validated at construction"),
        }
    }

    pub fn channels(&self) -> usize {
        self.chw().0
    }

    pub fn height(&self) -> usize {
        self.chw().1
    }

    pub fn width(&self) -> usize {
        self.chw().2
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        let (_, h, w) = self.chw();
        self.data[(c * h + y) * w + x]
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        let (_, h, w) = self.chw();
        &self.data[c * h * w..(c + 1) * h * w]
    }

    /// Channel `c` as a standalone `H×W` tensor.
    pub fn channel_map(&self, c: usize) -> Result<Tensor> {
        let (n, h, w) = self.chw();
        if c >= n {
            return Err(Error::Range(alloc::format!("channel {c} out of {n}")));
        }
        Tensor::new(vec![h, w], self.channel(c).to_vec())
    }

    /// Same data viewed as `H×W`; only valid for single-channel tensors.
    pub fn to_map(&self) -> Result<Tensor> {
        let (c, h, w) = self.chw();
        if c != 1 {
            return Err(Error::dim(alloc::format!("expected one channel, got {c}")));
        }
        Tensor::new(vec![h, w], self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Tensor {
        Tensor { dims: self.dims.clone(), data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn scaled(&self, a: f32) -> Tensor {
        self.map(|v| v * a)
    }

    pub fn l2_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|&v| (v as f64) * (v as f64)).sum())
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn min(&self) -> f32 {
        self.data.iter().copied().fold(f32::INFINITY, f32::min)
    }

    /// Flat index of the maximum; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Sub-tensor `[y0, y0+h) × [x0, x0+w)` across all channels.
    pub fn crop(&self, y0: usize, x0: usize, h: usize, w: usize) -> Result<Tensor> {
        let (c, th, tw) = self.chw();
        if h == 0 || w == 0 || y0 + h > th || x0 + w > tw {
            return Err(Error::Range(alloc::format!(
                "crop [{y0}+{h}, {x0}+{w}] outside {th}x{tw}"
            )));
        }
        Tensor::from_fn(c, h, w, |ci, y, x| self.at(ci, y0 + y, x0 + x))
    }
}

/// Sliding dot product of `kernel` over `query`, summed over channels.
///
/// The kernel is never flipped. Output is `1×H_o×W_o`.
pub fn cross_correlate(query: &Tensor, kernel: &Tensor, padding: Padding) -> Result<Tensor> {
    cross_correlate_counted(query, kernel, padding, &mut MacCounter::new())
}

/// [`cross_correlate`] that reports one MAC per (output cell, kernel tap) pair,
/// including taps that land on zero padding.
pub fn cross_correlate_counted(
    query: &Tensor,
    kernel: &Tensor,
    padding: Padding,
    counter: &mut MacCounter,
) -> Result<Tensor> {
    let (c, hq, wq) = query.chw();
    let (ck, hk, wk) = kernel.chw();
    if c != ck {
        return Err(Error::dim(alloc::format!("channel mismatch: query {c}, kernel {ck}")));
    }
    let (pt, pl, ho, wo) = match padding {
        Padding::Valid => {
            if hk > hq || wk > wq {
                return Err(Error::dim(alloc::format!(
                    "kernel {hk}x{wk} larger than query {hq}x{wq}"
                )));
            }
            (0, 0, hq - hk + 1, wq - wk + 1)
        }
        Padding::Same => ((hk - 1) / 2, (wk - 1) / 2, hq, wq),
    };

    let mut acc = vec![0.0f64; ho * wo];
    for ch in 0..c {
        correlate_plane(query.channel(ch), (hq, wq), kernel.channel(ch), (hk, wk), (pt, pl), (ho, wo), &mut acc);
    }
    counter.add((ho * wo * c * hk * wk) as u64);
    Tensor::new(vec![1, ho, wo], acc.into_iter().map(|v| v as f32).collect())
}

/// Adds the correlation of one query plane with one kernel plane into `out`
/// (`ho × wo`). Output cell `(y, x)` reads query cell `(y + ky − pt, x + kx − pl)`;
/// reads outside the query are zero.
pub(crate) fn correlate_plane<T: Copy + core::ops::AddAssign + core::ops::Mul<Output = T> + From<f32>>(
    q: &[f32],
    (hq, wq): (usize, usize),
    k: &[f32],
    (hk, wk): (usize, usize),
    (pt, pl): (usize, usize),
    (ho, wo): (usize, usize),
    out: &mut [T],
) {
    for ky in 0..hk {
        for kx in 0..wk {
            let kv = k[ky * wk + kx];
            if kv == 0.0 {
                continue;
            }
            let w = T::from(kv);
            let shift = kx as isize - pl as isize;
            let x0 = (-shift).max(0) as usize;
            let x1 = ((wq as isize - shift).min(wo as isize)).max(0) as usize;
            if x0 >= x1 {
                continue;
            }
            for y in 0..ho {
                let qy = y as isize + ky as isize - pt as isize;
                if qy < 0 || qy >= hq as isize {
                    continue;
                }
                let row = &q[qy as usize * wq..(qy as usize + 1) * wq];
                let dst = &mut out[y * wo..(y + 1) * wo];
                let src = &row[(x0 as isize + shift) as usize..(x1 as isize + shift) as usize];
                for (o, &v) in dst[x0..x1].iter_mut().zip(src) {
                    *o += w * T::from(v);
                }
            }
        }
    }
}

#[inline]
fn corner_aligned(i: usize, out: usize, inp: usize) -> f64 {
    if out == 1 {
        (inp - 1) as f64 / 2.0
    } else {
        (i * (inp - 1)) as f64 / (out - 1) as f64
    }
}

/// Bilinear resize with corner-aligned sampling, applied channel by channel.
pub fn resize_bilinear(t: &Tensor, new_h: usize, new_w: usize) -> Result<Tensor> {
    if new_h == 0 || new_w == 0 {
        return Err(Error::dim(alloc::format!("target dims must be >= 1, got {new_h}x{new_w}")));
    }
    let (c, h, w) = t.chw();
    if (new_h, new_w) == (h, w) {
        return Ok(t.clone());
    }
    let ys: Vec<(usize, usize, f64)> = (0..new_h)
        .map(|i| {
            let s = corner_aligned(i, new_h, h);
            let y0 = libm::floor(s) as usize;
            let y1 = (y0 + 1).min(h - 1);
            (y0, y1, s - y0 as f64)
        })
        .collect();
    let xs: Vec<(usize, usize, f64)> = (0..new_w)
        .map(|i| {
            let s = corner_aligned(i, new_w, w);
            let x0 = libm::floor(s) as usize;
            let x1 = (x0 + 1).min(w - 1);
            (x0, x1, s - x0 as f64)
        })
        .collect();

    let mut data = Vec::with_capacity(c * new_h * new_w);
    for ch in 0..c {
        let src = t.channel(ch);
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let a = src[y0 * w + x0] as f64;
                let b = src[y0 * w + x1] as f64;
                let cc = src[y1 * w + x0] as f64;
                let d = src[y1 * w + x1] as f64;
                let top = a * (1.0 - fx) + b * fx;
                let bot = cc * (1.0 - fx) + d * fx;
                data.push((top * (1.0 - fy) + bot * fy) as f32);
            }
        }
    }
    let dims = if t.dims().len() == 2 { vec![new_h, new_w] } else { vec![c, new_h, new_w] };
    Tensor::new(dims, data)
}

/// Average pooling with cell size `rate`; the last cell along an axis may be
/// ragged and is averaged over its actual extent.
pub fn pyramid_pool(kernel: &Tensor, rate: usize) -> Result<Tensor> {
    if rate < 1 {
        return Err(Error::param("pool rate must be >= 1"));
    }
    if rate == 1 {
        return Ok(kernel.clone());
    }
    let (c, h, w) = kernel.chw();
    let (oh, ow) = (h.div_ceil(rate), w.div_ceil(rate));
    Tensor::from_fn(c, oh, ow, |ch, oy, ox| {
        let (y0, y1) = (oy * rate, ((oy + 1) * rate).min(h));
        let (x0, x1) = (ox * rate, ((ox + 1) * rate).min(w));
        let mut s = 0.0f64;
        for y in y0..y1 {
            for x in x0..x1 {
                s += kernel.at(ch, y, x) as f64;
            }
        }
        (s / ((y1 - y0) * (x1 - x0)) as f64) as f32
    })
}

/// Spreads kernel taps `rate` cells apart, zero-filling the gaps.
pub fn dilate_kernel(kernel: &Tensor, rate: usize) -> Result<Tensor> {
    if rate < 1 {
        return Err(Error::param("dilation rate must be >= 1"));
    }
    if rate == 1 {
        return Ok(kernel.clone());
    }
    let (c, h, w) = kernel.chw();
    let (oh, ow) = (h * rate - rate + 1, w * rate - rate + 1);
    Tensor::from_fn(c, oh, ow, |ch, y, x| {
        if y % rate == 0 && x % rate == 0 {
            kernel.at(ch, y / rate, x / rate)
        } else {
            0.0
        }
    })
}

/// Concatenates single-channel maps along a new leading channel axis.
pub fn stack_maps(maps: &[Tensor]) -> Result<Tensor> {
    let first = maps.first().ok_or_else(|| Error::dim("cannot stack an empty list"))?;
    let (_, h, w) = first.chw();
    let mut data = Vec::with_capacity(maps.len() * h * w);
    for (i, m) in maps.iter().enumerate() {
        let (c, mh, mw) = m.chw();
        if c != 1 || mh != h || mw != w {
            return Err(Error::dim(alloc::format!(
                "map {i} has shape {c}x{mh}x{mw}, expected 1x{h}x{w}"
            )));
        }
        data.extend_from_slice(m.data());
    }
    Tensor::new(vec![maps.len(), h, w], data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn t3(c: usize, h: usize, w: usize, data: Vec<f32>) -> Tensor {
        Tensor::new(vec![c, h, w], data).unwrap()
    }

    /// Direct scalar evaluation, kept independent of the row-saxpy loop order.
    fn oracle_same(q: &Tensor, k: &Tensor) -> Vec<f64> {
        let (c, hq, wq) = q.chw();
        let (_, hk, wk) = k.chw();
        let (pt, pl) = ((hk as isize - 1) / 2, (wk as isize - 1) / 2);
        let mut out = vec![0.0; hq * wq];
        for y in 0..hq as isize {
            for x in 0..wq as isize {
                let mut s = 0.0f64;
                for ch in 0..c {
                    for i in 0..hk as isize {
                        for j in 0..wk as isize {
                            let (qy, qx) = (y + i - pt, x + j - pl);
                            if qy >= 0 && qx >= 0 && qy < hq as isize && qx < wq as isize {
                                s += q.at(ch, qy as usize, qx as usize) as f64
                                    * k.at(ch, i as usize, j as usize) as f64;
                            }
                        }
                    }
                }
                out[(y * wq as isize + x) as usize] = s;
            }
        }
        out
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::new(vec![0, 2], vec![]).is_err());
        assert!(Tensor::new(vec![4], vec![0.0; 4]).is_err());
    }

    #[test]
    fn identity_kernel_returns_query() {
        let q = t3(1, 3, 3, (0..9).map(|v| v as f32 * 0.5 - 1.0).collect());
        let k = t3(1, 1, 1, vec![1.0]);
        let out = cross_correlate(&q, &k, Padding::Valid).unwrap();
        assert_eq!(out.dims(), &[1, 3, 3]);
        assert_eq!(out.data(), q.data());
    }

    #[test]
    fn constant_valid_correlation() {
        let q = t3(1, 3, 3, vec![1.0; 9]);
        let k = t3(1, 2, 2, vec![1.0; 4]);
        let out = cross_correlate(&q, &k, Padding::Valid).unwrap();
        assert_eq!(out.dims(), &[1, 2, 2]);
        assert!(out.data().iter().all(|&v| v == 4.0));
    }

    #[test]
    fn single_impulse_same_padding_matches_oracle() {
        let mut qd = vec![0.0; 16];
        qd[5] = 1.0;
        let q = t3(1, 4, 4, qd);
        let k = t3(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let out = cross_correlate(&q, &k, Padding::Same).unwrap();
        let expect = oracle_same(&q, &k);
        for (a, b) in out.data().iter().zip(&expect) {
            assert!((*a as f64 - b).abs() < 1e-6);
        }
        // pad before is 0 for a 2x2 kernel, so the impulse at (1,1) meets tap (i,j)
        // from output (1-i, 1-j); tap (0,0)=1 lands at (1,1), tap (1,1)=4 at (0,0).
        assert_eq!(out.at(0, 0, 0), 4.0);
        assert_eq!(out.at(0, 1, 1), 1.0);
        assert_eq!(out.max(), 4.0);
        assert_eq!(out.argmax(), 0);
    }

    #[test]
    fn channel_mismatch_and_oversized_kernel() {
        let q = t3(2, 3, 3, vec![0.0; 18]);
        let k = t3(1, 2, 2, vec![0.0; 4]);
        assert!(matches!(cross_correlate(&q, &k, Padding::Same), Err(Error::Dimension(_))));
        let q = t3(1, 3, 3, vec![0.0; 9]);
        let k = t3(1, 4, 2, vec![0.0; 8]);
        assert!(matches!(cross_correlate(&q, &k, Padding::Valid), Err(Error::Dimension(_))));
    }

    #[test]
    fn counter_matches_formula() {
        let q = t3(3, 10, 10, vec![0.5; 300]);
        let k = t3(3, 5, 5, vec![0.1; 75]);
        let mut n = MacCounter::new();
        cross_correlate_counted(&q, &k, Padding::Same, &mut n).unwrap();
        assert_eq!(n.macs(), 7500);
    }

    #[test]
    fn resize_cases() {
        let t = t3(1, 1, 2, vec![0.0, 2.0]);
        assert_eq!(resize_bilinear(&t, 1, 3).unwrap().data(), &[0.0, 1.0, 2.0]);

        // corners map onto corners, edges are midpoints, centre is the mean of all four
        let t = t3(1, 2, 2, vec![0.0, 1.0, 2.0, 3.0]);
        let r = resize_bilinear(&t, 3, 3).unwrap();
        assert_eq!(r.data(), &[0.0, 0.5, 1.0, 1.0, 1.5, 2.0, 2.0, 2.5, 3.0]);

        assert!(resize_bilinear(&t, 0, 3).is_err());
        let rank2 = Tensor::new(vec![2, 2], vec![1.0; 4]).unwrap();
        assert_eq!(resize_bilinear(&rank2, 5, 4).unwrap().dims(), &[5, 4]);
    }

    #[test]
    fn pool_and_dilate_examples() {
        let k6 = t3(1, 6, 6, vec![1.0; 36]);
        assert_eq!(pyramid_pool(&k6, 2).unwrap().dims(), &[1, 3, 3]);
        assert_eq!(dilate_kernel(&k6, 2).unwrap().dims(), &[1, 11, 11]);
        assert_eq!(pyramid_pool(&k6, 1).unwrap(), k6);
        assert_eq!(dilate_kernel(&k6, 1).unwrap(), k6);

        let ones = t3(1, 4, 4, vec![1.0; 16]);
        let p = pyramid_pool(&ones, 2).unwrap();
        assert_eq!(p.dims(), &[1, 2, 2]);
        assert!(p.data().iter().all(|&v| v == 1.0));

        let k = t3(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let d = dilate_kernel(&k, 2).unwrap();
        assert_eq!(d.data(), &[1.0, 0.0, 2.0, 0.0, 0.0, 0.0, 3.0, 0.0, 4.0]);

        assert!(matches!(pyramid_pool(&k, 0), Err(Error::Parameter(_))));
        assert!(matches!(dilate_kernel(&k, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn ragged_pool_cell_is_averaged_over_its_extent() {
        let k = t3(1, 1, 3, vec![1.0, 3.0, 7.0]);
        let p = pyramid_pool(&k, 2).unwrap();
        assert_eq!(p.data(), &[2.0, 7.0]);
    }

    #[test]
    fn exhaustive_pool_and_dilate_dims() {
        for h in 1..=32usize {
            for t in 1..=4usize {
                let k = Tensor::zeros(&[2, h, h + 1]).unwrap();
                let p = pyramid_pool(&k, t).unwrap();
                assert_eq!(p.dims(), &[2, h.div_ceil(t), (h + 1).div_ceil(t)]);
                let d = dilate_kernel(&k, t).unwrap();
                assert_eq!(d.dims(), &[2, h * t - t + 1, (h + 1) * t - t + 1]);
            }
        }
    }

    #[test]
    fn stack_examples() {
        let a = t3(1, 2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let b = t3(1, 2, 2, vec![5.0, 6.0, 7.0, 8.0]);
        let s = stack_maps(&[a.clone()]).unwrap();
        assert_eq!(s.dims(), &[1, 2, 2]);
        assert_eq!(s.data(), a.data());
        let s = stack_maps(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(s.dims(), &[2, 2, 2]);
        assert_eq!(s.channel(0), a.data());
        assert_eq!(s.channel(1), b.data());
        let c = t3(1, 3, 2, vec![0.0; 6]);
        assert!(stack_maps(&[a, c]).is_err());
        assert!(stack_maps(&[]).is_err());
    }

    #[test]
    fn crop_bounds() {
        let t = Tensor::from_fn(2, 4, 5, |c, y, x| (c * 100 + y * 10 + x) as f32).unwrap();
        let cr = t.crop(1, 2, 2, 3).unwrap();
        assert_eq!(cr.dims(), &[2, 2, 3]);
        assert_eq!(cr.at(1, 1, 2), 124.0);
        assert!(t.crop(3, 0, 2, 1).is_err());
    }
}
