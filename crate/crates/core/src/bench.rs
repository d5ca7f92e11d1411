//! End-to-end synthetic benchmark: references → localiser → scenes → mAP.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::estimator::{Localizer, ReferenceSet, DEFAULT_K, DEFAULT_SIZE_TEMPERATURE};
use crate::features::{crop_reference_kernel, FeatureConfig, FeatureExtractor};
use crate::metrics::{map_50_95, EvalRecord, MapReport};
use crate::multiscale::KernelDistributionConfig;
use crate::synth::{generate_reference_set, generate_scene, sample_scene, ReferenceViews, SceneSampling, SceneSpec};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct BenchmarkConfig {
    pub seed: u64,
    pub n_objects: u32,
    pub n_queries: usize,
    pub n_refs: usize,
    /// Reference object size, pixels.
    pub s_r: f64,
    pub k: usize,
    pub size_temperature: f64,
    pub features: FeatureConfig,
    pub kernels: KernelDistributionConfig,
    pub sampling: SceneSampling,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_objects: 5,
            n_queries: 100,
            n_refs: 32,
            s_r: 40.0,
            k: DEFAULT_K,
            size_temperature: DEFAULT_SIZE_TEMPERATURE,
            features: FeatureConfig::default(),
            kernels: KernelDistributionConfig::default(),
            sampling: SceneSampling::default(),
        }
    }
}

/// Extracts every view with `extractor` and crops the known object box.
pub fn reference_set_from_views(views: &ReferenceViews, extractor: &dyn FeatureExtractor) -> Result<ReferenceSet> {
    let kernel_size = extractor.config().kernel_size;
    let kernels = views
        .images
        .iter()
        .zip(&views.boxes)
        .map(|(img, b)| crop_reference_kernel(&extractor.extract(img)?, b, kernel_size))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReferenceSet { kernels, rotations: views.rotations.clone(), s_r: views.s_r })
}

pub fn build_localizer(object_id: u32, cfg: &BenchmarkConfig, extractor: &dyn FeatureExtractor) -> Result<Localizer> {
    let views = generate_reference_set(object_id, cfg.n_refs, cfg.s_r)?;
    let refs = reference_set_from_views(&views, extractor)?;
    Localizer::new(&refs, &cfg.kernels, cfg.k, cfg.size_temperature)
}

/// Scenes of the benchmark in manifest order (object-major).
pub fn benchmark_scenes(cfg: &BenchmarkConfig, scale_ratio: f64) -> Result<Vec<SceneSpec>> {
    let mut out = Vec::with_capacity(cfg.n_objects as usize * cfg.n_queries);
    for obj in 0..cfg.n_objects {
        for i in 0..cfg.n_queries {
            out.push(sample_scene(cfg.seed, obj, i as u64, &cfg.sampling, scale_ratio)?);
        }
    }
    Ok(out)
}

pub fn evaluate_scene(localizer: &Localizer, spec: &SceneSpec, extractor: &dyn FeatureExtractor) -> Result<EvalRecord> {
    let (img, truth) = generate_scene(spec)?;
    let fm = extractor.extract(&img)?;
    let loc = localizer.locate(&fm)?;
    Ok(EvalRecord::new(loc.prior, truth))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BenchmarkSummary {
    pub n: usize,
    pub map: MapReport,
    /// Mean Euclidean centre error, pixels.
    pub center_mae_px: f64,
    /// Mean `|ŝ − s*| / s*`.
    pub size_rel_mae: f64,
}

pub fn summarize(records: &[EvalRecord]) -> Result<BenchmarkSummary> {
    let map = map_50_95(records)?;
    let n = records.len() as f64;
    let center_mae_px = records
        .iter()
        .map(|r| {
            let (du, dv) = (r.predicted.center[0] - r.truth.center[0], r.predicted.center[1] - r.truth.center[1]);
            libm::sqrt(du * du + dv * dv)
        })
        .sum::<f64>()
        / n;
    let size_rel_mae = records.iter().map(|r| (r.predicted.size - r.truth.size).abs() / r.truth.size).sum::<f64>() / n;
    Ok(BenchmarkSummary { n: records.len(), map, center_mae_px, size_rel_mae })
}

/// Sequential benchmark run at one scale ratio.
pub fn run_benchmark(
    cfg: &BenchmarkConfig,
    scale_ratio: f64,
    extractor: &dyn FeatureExtractor,
) -> Result<(Vec<EvalRecord>, BenchmarkSummary)> {
    if extractor.config() != &cfg.features {
        return Err(Error::param("extractor config differs from the benchmark feature config"));
    }
    let scenes = benchmark_scenes(cfg, scale_ratio)?;
    let mut records = Vec::with_capacity(scenes.len());
    for obj in 0..cfg.n_objects {
        let localizer = build_localizer(obj, cfg, extractor)?;
        for spec in scenes.iter().filter(|s| s.object_id == obj) {
            records.push(evaluate_scene(&localizer, spec, extractor)?);
        }
    }
    let summary = summarize(&records)?;
    Ok((records, summary))
}

/// mAP@[.5:.95] per scale ratio `p`, sizes redrawn from `[s/p, s·p]`.
pub fn scale_ratio_sweep(
    cfg: &BenchmarkConfig,
    p_values: &[f64],
    extractor: &dyn FeatureExtractor,
) -> Result<Vec<(f64, f64)>> {
    p_values
        .iter()
        .map(|&p| {
            if !(p >= 1.0) {
                return Err(Error::param(alloc::format!("scale ratio {p} must be >= 1")));
            }
            Ok((p, run_benchmark(cfg, p, extractor)?.1.map.map_50_95))
        })
        .collect()
}
