//! Decoupled location estimation.
//!
//! The object centre comes from a reliability-weighted fusion of the
//! correlation maps; the object size comes from the raw multi-scale stack,
//! where per-scale information is still intact. Evidence is shared between
//! references whose poses are close in rotation space.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::geometry::{geodesic_distance, Rotation3};
use crate::multiscale::{CorrelationStack, KernelBank, KernelDistributionConfig, QueryWindows};
use crate::tensor::{MacCounter, Tensor};

/// Guard on the standard deviation in [`normalize_map`].
pub const SIGMA_EPS: f64 = 1e-8;
/// Default softmax temperature of the size read-out.
pub const DEFAULT_SIZE_TEMPERATURE: f64 = 0.04;
/// Default neighbourhood size for cross-reference consistency.
pub const DEFAULT_K: usize = 3;

/// `(c − μ) / max(σ, ε)` with population statistics over the whole map.
pub fn normalize_map(c: &Tensor) -> Tensor {
    let n = c.len() as f64;
    let mean = c.data().iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = c.data().iter().map(|&v| (v as f64 - mean) * (v as f64 - mean)).sum::<f64>() / n;
    let sigma = libm::sqrt(var).max(SIGMA_EPS);
    c.map(|v| ((v as f64 - mean) / sigma) as f32)
}

/// Mean gap between the map maximum and each cell. For a zero-mean map this
/// equals the maximum itself.
pub fn map_weight(c_norm: &Tensor) -> f64 {
    let max = c_norm.max() as f64;
    c_norm.data().iter().map(|&v| max - v as f64).sum::<f64>() / c_norm.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedMap {
    /// `H×W` fused map.
    pub map: Tensor,
    /// Softmax weights, one per input channel.
    pub weights: Vec<f64>,
}

/// Softmax-weighted sum of the normalised maps of `stack`.
pub fn fuse_maps(stack: &CorrelationStack) -> Result<FusedMap> {
    let (n, h, w) = stack.tensor.chw();
    if n == 0 || stack.scale_factors.len() != n {
        return Err(Error::dim("stack must have at least one map and one scale factor per map"));
    }
    let normalized: Vec<Tensor> = (0..n).map(|i| stack.map(i).map(|m| normalize_map(&m))).collect::<Result<_>>()?;
    let raw: Vec<f64> = normalized.iter().map(map_weight).collect();
    let weights = softmax(&raw, 1.0);

    let mut acc = vec![0.0f64; h * w];
    for (m, &wt) in normalized.iter().zip(&weights) {
        for (a, &v) in acc.iter_mut().zip(m.data()) {
            *a += wt * v as f64;
        }
    }
    Ok(FusedMap { map: Tensor::new(vec![h, w], acc.into_iter().map(|v| v as f32).collect())?, weights })
}

/// `exp(x_i / τ) / Σ exp(x_j / τ)`, shifted by the maximum for stability.
pub fn softmax(xs: &[f64], temperature: f64) -> Vec<f64> {
    let top = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|&x| libm::exp((x - top) / temperature)).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterEstimate {
    /// `(u, v)` in pixels.
    pub center: [f64; 2],
    /// Fused map maximum.
    pub confidence: f64,
    /// `(row, col)` of the argmax cell.
    pub cell: (usize, usize),
}

/// Argmax of the map refined by the centroid of its 3×3 neighbourhood.
///
/// Neighbourhood weights are values minus the window minimum. The window is
/// re-centred on the rounded centroid until it stops moving (at most three
/// times), so a flat-topped peak resolves to its middle.
pub fn estimate_center(map: &Tensor, stride: usize) -> CenterEstimate {
    let (_, h, w) = map.chw();
    let best = map.argmax();
    let cell = (best / w, best % w);
    let mut at = cell;
    let mut centroid = (cell.0 as f64, cell.1 as f64);
    for _ in 0..3 {
        centroid = window_centroid(map, at, h, w);
        let next = (
            (libm::floor(centroid.0 + 0.5) as usize).min(h - 1),
            (libm::floor(centroid.1 + 0.5) as usize).min(w - 1),
        );
        if next == at {
            break;
        }
        at = next;
    }
    let s = stride as f64;
    CenterEstimate {
        center: [(centroid.1 + 0.5) * s, (centroid.0 + 0.5) * s],
        confidence: map.data()[best] as f64,
        cell,
    }
}

fn window_centroid(map: &Tensor, at: (usize, usize), h: usize, w: usize) -> (f64, f64) {
    let rows = at.0.saturating_sub(1)..(at.0 + 2).min(h);
    let cols = at.1.saturating_sub(1)..(at.1 + 2).min(w);
    let mut lo = f64::INFINITY;
    for r in rows.clone() {
        for c in cols.clone() {
            lo = lo.min(map.at(0, r, c) as f64);
        }
    }
    let (mut sw, mut sr, mut sc) = (0.0, 0.0, 0.0);
    for r in rows {
        for c in cols.clone() {
            let wt = map.at(0, r, c) as f64 - lo;
            sw += wt;
            sr += wt * r as f64;
            sc += wt * c as f64;
        }
    }
    if sw > 0.0 {
        (sr / sw, sc / sw)
    } else {
        (at.0 as f64, at.1 as f64)
    }
}

/// Size estimate `s_r · Σ softmax(max_i / τ) · scale_factor_i` over channels.
pub fn estimate_size(stack: &CorrelationStack, s_r: f64, temperature: f64) -> Result<f64> {
    let n = stack.len();
    if n == 0 || stack.tensor.channels() != n {
        return Err(Error::dim("stack must have one scale factor per channel"));
    }
    if !(temperature > 0.0) {
        return Err(Error::param("temperature must be positive"));
    }
    let peaks: Vec<f64> = (0..n)
        .map(|i| stack.tensor.channel(i).iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64)
        .collect();
    let weights = softmax(&peaks, temperature);
    Ok(s_r * weights.iter().zip(&stack.scale_factors).map(|(w, s)| w * s).sum::<f64>())
}

/// Like [`estimate_size`], but each channel's score is its bilinear sample
/// at `center` (pixels) instead of its global maximum. Responses of wrong
/// scales elsewhere in the image then cannot outvote the object.
pub fn estimate_size_at(
    stack: &CorrelationStack,
    center: [f64; 2],
    stride: usize,
    s_r: f64,
    temperature: f64,
) -> Result<f64> {
    let n = stack.len();
    if n == 0 || stack.tensor.channels() != n {
        return Err(Error::dim("stack must have one scale factor per channel"));
    }
    if !(temperature > 0.0) {
        return Err(Error::param("temperature must be positive"));
    }
    if stride == 0 {
        return Err(Error::param("stride must be positive"));
    }
    let (_, h, w) = stack.tensor.chw();
    let s = stride as f64;
    let fy = (center[1] / s - 0.5).clamp(0.0, (h - 1) as f64);
    let fx = (center[0] / s - 0.5).clamp(0.0, (w - 1) as f64);
    let (y0, x0) = (libm::floor(fy) as usize, libm::floor(fx) as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (ty, tx) = (fy - y0 as f64, fx - x0 as f64);
    let scores: Vec<f64> = (0..n)
        .map(|i| {
            let v = |y: usize, x: usize| stack.tensor.at(i, y, x) as f64;
            (1.0 - ty) * ((1.0 - tx) * v(y0, x0) + tx * v(y0, x1)) + ty * ((1.0 - tx) * v(y1, x0) + tx * v(y1, x1))
        })
        .collect();
    let weights = softmax(&scores, temperature);
    Ok(s_r * weights.iter().zip(&stack.scale_factors).map(|(w, s)| w * s).sum::<f64>())
}

/// For each rotation, the `k` other indices with the smallest geodesic
/// distance; ties go to the lower index.
pub fn knn_references(rotations: &[Rotation3], k: usize) -> Result<Vec<Vec<usize>>> {
    let n = rotations.len();
    if k >= n.max(1) {
        return Err(Error::param(alloc::format!("k={k} must be smaller than the reference count {n}")));
    }
    Ok((0..n)
        .map(|i| {
            let mut others: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (geodesic_distance(&rotations[i], &rotations[j]), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect())
}

/// Reference kernels of one object with their poses.
#[derive(Debug, Clone)]
pub struct ReferenceSet {
    pub kernels: Vec<Tensor>,
    pub rotations: Vec<Rotation3>,
    /// Common object size in the references, in pixels.
    pub s_r: f64,
}

impl ReferenceSet {
    pub fn validate(&self) -> Result<()> {
        let first = self.kernels.first().ok_or_else(|| Error::param("reference set is empty"))?;
        if self.kernels.len() != self.rotations.len() {
            return Err(Error::dim("one rotation per reference kernel is required"));
        }
        if self.kernels.iter().any(|k| k.dims() != first.dims()) {
            return Err(Error::dim("all reference kernels must share dims"));
        }
        for r in &self.rotations {
            Rotation3::new(*r.matrix())?;
        }
        if !(self.s_r > 0.0) {
            return Err(Error::param("reference object size must be positive"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LocationPrior {
    /// `(u, v)` in pixels.
    pub center: [f64; 2],
    /// Side of the square object box in pixels.
    pub size: f64,
    pub confidence: f64,
    pub best_reference: usize,
}

/// Full localisation output, including the map the centre was read from.
#[derive(Debug, Clone)]
pub struct Localization {
    pub prior: LocationPrior,
    /// Neighbourhood-averaged fused map of the best reference.
    pub heatmap: Tensor,
    pub center_cell: (usize, usize),
}

/// Prepared localiser for one reference set: kernels are distributed once and
/// neighbourhoods computed once.
#[derive(Debug, Clone)]
pub struct Localizer {
    banks: Vec<KernelBank>,
    neighbors: Vec<Vec<usize>>,
    s_r: f64,
    temperature: f64,
}

impl Localizer {
    pub fn new(refs: &ReferenceSet, cfg: &KernelDistributionConfig, k: usize, temperature: f64) -> Result<Self> {
        refs.validate()?;
        if !(temperature > 0.0) {
            return Err(Error::param("temperature must be positive"));
        }
        Ok(Self {
            banks: refs.kernels.iter().map(|kr| KernelBank::new(kr, cfg)).collect::<Result<_>>()?,
            neighbors: knn_references(&refs.rotations, k)?,
            s_r: refs.s_r,
            temperature,
        })
    }

    pub fn neighbors(&self) -> &[Vec<usize>] {
        &self.neighbors
    }

    pub fn banks(&self) -> &[KernelBank] {
        &self.banks
    }

    /// Correlation stacks of every reference against `query`.
    pub fn correlate_all(&self, query: &FeatureMap) -> Result<Vec<CorrelationStack>> {
        let mut windows = QueryWindows::new(&query.tensor);
        let mut counter = MacCounter::new();
        self.banks.iter().map(|b| b.correlate_shared(&query.tensor, &mut windows, &mut counter)).collect()
    }

    pub fn locate(&self, query: &FeatureMap) -> Result<Localization> {
        let stacks = self.correlate_all(query)?;
        self.locate_from_stacks(query, &stacks)
    }

    /// Aggregation and estimation given precomputed stacks (one per reference,
    /// in reference order).
    pub fn locate_from_stacks(&self, query: &FeatureMap, stacks: &[CorrelationStack]) -> Result<Localization> {
        if stacks.len() != self.banks.len() {
            return Err(Error::dim("one correlation stack per reference is required"));
        }
        let fused: Vec<Tensor> = stacks.iter().map(|s| fuse_maps(s).map(|f| f.map)).collect::<Result<_>>()?;

        // Mutual neighbours average the same maps and tie exactly; the
        // reference's own peak breaks such ties independently of its index.
        let mut best: Option<(usize, (f32, f32), Tensor)> = None;
        for (i, nbrs) in self.neighbors.iter().enumerate() {
            let agg = average_maps(core::iter::once(&fused[i]).chain(nbrs.iter().map(|&j| &fused[j])))?;
            let key = (agg.max(), fused[i].max());
            if best.as_ref().is_none_or(|(_, k, _)| key > *k) {
                best = Some((i, key, agg));
            }
        }
        let (idx, _, heatmap) = best.ok_or_else(|| Error::param("reference set is empty"))?;

        let c = estimate_center(&heatmap, query.stride);
        let (w, h) = query.image_size;
        let center = [c.center[0].clamp(0.0, w as f64), c.center[1].clamp(0.0, h as f64)];
        let size = estimate_size_at(&stacks[idx], center, query.stride, self.s_r, self.temperature)?;
        Ok(Localization {
            prior: LocationPrior {
                center,
                size,
                confidence: c.confidence,
                best_reference: idx,
            },
            heatmap,
            center_cell: c.cell,
        })
    }
}

fn average_maps<'a>(maps: impl Iterator<Item = &'a Tensor>) -> Result<Tensor> {
    let mut acc: Option<Vec<f64>> = None;
    let mut dims = Vec::new();
    let mut n = 0usize;
    for m in maps {
        let a = acc.get_or_insert_with(|| {
            dims = m.dims().to_vec();
            vec![0.0; m.len()]
        });
        if m.dims() != dims.as_slice() {
            return Err(Error::dim("maps to average must share dims"));
        }
        for (s, &v) in a.iter_mut().zip(m.data()) {
            *s += v as f64;
        }
        n += 1;
    }
    let a = acc.ok_or_else(|| Error::dim("nothing to average"))?;
    Tensor::new(dims, a.into_iter().map(|v| (v / n as f64) as f32).collect())
}

/// One-shot localisation with the default size temperature.
pub fn localize(
    query: &FeatureMap,
    refs: &ReferenceSet,
    cfg: &KernelDistributionConfig,
    k: usize,
) -> Result<LocationPrior> {
    Ok(Localizer::new(refs, cfg, k, DEFAULT_SIZE_TEMPERATURE)?.locate(query)?.prior)
}
