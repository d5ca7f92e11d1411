//! Exact MAC accounting for the two multi-scale strategies.
//!
//! Kernel distribution runs the extractor once and correlates larger
//! kernels; query resizing runs the extractor once per scale and correlates
//! the canonical kernel against each resized feature map.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::features::{backbone_macs, FeatureConfig, FeatureExtractor, FeatureMap, HandcraftedExtractor};
use crate::image::Image;
use crate::multiscale::{
    correlate_by_query_resizing_counted, CorrelationNorm, CorrelationStack, KernelBank, KernelDistributionConfig,
};
use crate::tensor::{MacCounter, Padding, Tensor};

/// `H_o · W_o · C · H_k · W_k`, with dims given as `(C, H, W)`.
pub fn count_macs_correlation(query: (usize, usize, usize), kernel: (usize, usize, usize), padding: Padding) -> u64 {
    let (c, hq, wq) = query;
    let (_, hk, wk) = kernel;
    let (ho, wo) = match padding {
        Padding::Same => (hq, wq),
        Padding::Valid => (hq.saturating_sub(hk) + 1, wq.saturating_sub(wk) + 1),
    };
    (ho * wo * c * hk * wk) as u64
}

/// MACs of one pass of the hand-crafted extractor over a `width × height` image.
pub fn count_macs_backbone(width: usize, height: usize, cfg: &FeatureConfig) -> u64 {
    backbone_macs(width, height, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Strategy {
    KernelDistribution,
    QueryResizing,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::KernelDistribution => "kernel_distribution",
            Strategy::QueryResizing => "query_resizing",
        }
    }
}

/// Kernel configuration producing exactly `n_scales` kernels: offsets
/// `0, 1, …, n_scales − 1` with no pooling or dilation. Plain unit-kernel
/// correlation, so both strategies do the same work per output cell.
pub fn ladder_config(n_scales: usize) -> Result<KernelDistributionConfig> {
    if n_scales == 0 {
        return Err(Error::param("n_scales must be >= 1"));
    }
    Ok(KernelDistributionConfig {
        offsets: (0..n_scales as i32).collect(),
        pool_rates: Vec::new(),
        dilation_rates: Vec::new(),
        normalization: CorrelationNorm::UnitKernel,
    })
}

/// Scale factors of [`ladder_config`] for a canonical kernel side, used as
/// the resize ladder of the baseline so both strategies search the same scales.
pub fn ladder_scales(n_scales: usize, kernel_size: usize) -> Result<Vec<f64>> {
    ladder_config(n_scales)?;
    Ok((0..n_scales).map(|i| (kernel_size + i) as f64 / kernel_size as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct StrategyCost {
    pub backbone_macs: u64,
    pub correlation_macs: u64,
    pub backbone_passes: u64,
}

impl StrategyCost {
    pub fn total_macs(&self) -> u64 {
        self.backbone_macs + self.correlation_macs
    }
}

/// Runs one strategy on one (query, reference kernel) pair and reports its
/// instrumented cost.
pub fn run_strategy(
    strategy: Strategy,
    n_scales: usize,
    query: &Image,
    ref_kernel: &Tensor,
    extractor: &HandcraftedExtractor,
) -> Result<(CorrelationStack, StrategyCost)> {
    let (p0, m0) = (extractor.passes(), extractor.macs());
    let mut corr = MacCounter::new();
    let stack = match strategy {
        Strategy::KernelDistribution => {
            let bank = KernelBank::new(ref_kernel, &ladder_config(n_scales)?)?;
            let fm: FeatureMap = extractor.extract(query)?;
            bank.correlate_counted(&fm.tensor, &mut corr)?
        }
        Strategy::QueryResizing => {
            let scales = ladder_scales(n_scales, ref_kernel.height())?;
            correlate_by_query_resizing_counted(query, ref_kernel, &scales, extractor, &mut corr)?
        }
    };
    let cost = StrategyCost {
        backbone_macs: extractor.macs() - m0,
        correlation_macs: corr.macs(),
        backbone_passes: extractor.passes() - p0,
    };
    Ok((stack, cost))
}

/// Closed-form cost of [`run_strategy`], without running anything.
pub fn predicted_cost(
    strategy: Strategy,
    n_scales: usize,
    image: (usize, usize),
    kernel: (usize, usize, usize),
    cfg: &FeatureConfig,
) -> Result<StrategyCost> {
    let (w, h) = image;
    let (c, kh, _) = kernel;
    let scales = ladder_scales(n_scales, kh)?;
    let feat = |w: usize, h: usize| (c, h.div_ceil(cfg.stride), w.div_ceil(cfg.stride));
    Ok(match strategy {
        Strategy::KernelDistribution => StrategyCost {
            backbone_macs: count_macs_backbone(w, h, cfg),
            correlation_macs: scales
                .iter()
                .enumerate()
                .map(|(i, _)| count_macs_correlation(feat(w, h), (c, kh + i, kernel.2 + i), Padding::Same))
                .sum(),
            backbone_passes: 1,
        },
        Strategy::QueryResizing => {
            let dims: Vec<(usize, usize)> =
                scales.iter().map(|&s| crate::multiscale::resized_dims(w, h, s)).collect();
            StrategyCost {
                backbone_macs: dims.iter().map(|&(rw, rh)| count_macs_backbone(rw, rh, cfg)).sum(),
                correlation_macs: dims
                    .iter()
                    .map(|&(rw, rh)| count_macs_correlation(feat(rw, rh), kernel, Padding::Same))
                    .sum(),
                backbone_passes: n_scales as u64,
            }
        }
    })
}
