//! MAC accounting and wall-clock comparison of kernel distribution against
//! query resizing.

use std::path::Path;
use std::time::Instant;

use locprior_core::bench::benchmark_scenes;
use locprior_core::cost::{run_strategy, Strategy, StrategyCost};
use locprior_core::synth::{generate_reference_set, generate_scene};
use locprior_core::{crop_reference_kernel, FeatureConfig, FeatureExtractor, HandcraftedExtractor, Image, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};

pub const REPORT_NOTE: &str = "MACs are counted for the hand-crafted 9-channel extractor and same-padded \
correlation; only the relative trend between strategies is meaningful, not absolute values of a learned backbone.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MacReport {
    pub strategy: Strategy,
    pub n_scales: usize,
    pub backbone_macs: u64,
    pub correlation_macs: u64,
    pub total_macs: u64,
    /// Median over the timed repeats.
    pub wall_ns: u64,
    pub backbone_passes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureInfo {
    pub image: [usize; 2],
    /// `[C, H, W]` of the canonical reference kernel.
    pub kernel: [usize; 3],
    pub features: FeatureConfig,
    pub repeats: usize,
    pub warmup: usize,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    pub note: String,
    pub config: FixtureInfo,
    pub reports: Vec<MacReport>,
}

/// One query and one canonical reference kernel of the configured dataset:
/// the first scene of object 0 and that object's first reference view.
pub fn default_fixture(cfg: &RunConfig, extractor: &HandcraftedExtractor) -> Result<(Image, Tensor)> {
    let mut bench = cfg.benchmark();
    bench.n_objects = 1;
    bench.n_queries = 1;
    let spec = benchmark_scenes(&bench, 1.0)?.remove(0);
    let (query, _) = generate_scene(&spec)?;
    let views = generate_reference_set(0, 1, cfg.dataset.s_r)?;
    let fm = extractor.extract(&views.images[0])?;
    let kernel = crop_reference_kernel(&fm, &views.boxes[0], cfg.features.kernel_size)?;
    Ok((query, kernel))
}

/// Median wall time of `f` over `repeats` runs after `warmup` untimed runs.
pub fn median_wall_ns(repeats: usize, warmup: usize, mut f: impl FnMut() -> Result<()>) -> Result<u64> {
    if repeats == 0 {
        return Err(Error::validation("repeats must be >= 1"));
    }
    for _ in 0..warmup {
        f()?;
    }
    let mut times = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let t = Instant::now();
        f()?;
        times.push(t.elapsed().as_nanos().max(1) as u64);
    }
    times.sort_unstable();
    Ok(times[times.len() / 2])
}

/// Both strategies for every scale count `1..=max_scales`, in that order,
/// kernel distribution first. Runs on the calling thread.
pub fn compare_strategies(
    query: &Image,
    kernel: &Tensor,
    features: &FeatureConfig,
    max_scales: usize,
    repeats: usize,
    warmup: usize,
) -> Result<PerfReport> {
    let extractor = HandcraftedExtractor::new(*features);
    let mut reports = Vec::with_capacity(2 * max_scales);
    for n in 1..=max_scales {
        for strategy in [Strategy::KernelDistribution, Strategy::QueryResizing] {
            let (_, cost): (_, StrategyCost) = run_strategy(strategy, n, query, kernel, &extractor)?;
            let wall_ns = median_wall_ns(repeats, warmup, || {
                run_strategy(strategy, n, query, kernel, &extractor)?;
                Ok(())
            })?;
            reports.push(MacReport {
                strategy,
                n_scales: n,
                backbone_macs: cost.backbone_macs,
                correlation_macs: cost.correlation_macs,
                total_macs: cost.total_macs(),
                wall_ns,
                backbone_passes: cost.backbone_passes,
            });
        }
    }
    Ok(PerfReport {
        note: REPORT_NOTE.to_string(),
        config: FixtureInfo {
            image: [query.width(), query.height()],
            kernel: [kernel.channels(), kernel.height(), kernel.width()],
            features: *features,
            repeats,
            warmup,
            threads: 1,
        },
        reports,
    })
}

/// `n_scales,strategy,total_macs,wall_ns` plus the remaining counters.
pub fn write_csv(path: &Path, report: &PerfReport) -> Result<()> {
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        other => Error::format(path, format!("{other:?}")),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["n_scales", "strategy", "total_macs", "wall_ns", "backbone_macs", "correlation_macs", "backbone_passes"])
        .map_err(io)?;
    for r in &report.reports {
        w.write_record([
            r.n_scales.to_string(),
            r.strategy.name().to_string(),
            r.total_macs.to_string(),
            r.wall_ns.to_string(),
            r.backbone_macs.to_string(),
            r.correlation_macs.to_string(),
            r.backbone_passes.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even_counts() {
        let mut calls = 0;
        let m = median_wall_ns(3, 2, || {
            calls += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(calls, 5);
        assert!(m > 0);
        assert!(median_wall_ns(0, 0, || Ok(())).is_err());
    }
}
