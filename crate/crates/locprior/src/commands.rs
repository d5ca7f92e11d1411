//! The four subcommands as library functions; `main` only parses flags and
//! maps errors to exit codes.

use std::fs;
use std::path::Path;

use locprior_core::bench::summarize;
use locprior_core::geometry::SquareBox;
use locprior_core::{
    recover_translation, EvalRecord, FeatureExtractor, HandcraftedExtractor, Localization, LocationPrior, Localizer,
};

use crate::config::RunConfig;
use crate::dataset::{generate, load_manifest, load_reference_set, object_dir_name};
use crate::error::{Error, Result};
use crate::formats::{read_json, write_json, EvalOutput, LocalizeOutput, Manifest, SceneTruth};
use crate::perf::{compare_strategies, default_fixture, write_csv, PerfReport};
use crate::pnm::{read_ppm, write_pgm_heatmap};

pub const METRICS_FILE: &str = "metrics.json";
pub const RECORDS_FILE: &str = "records.json";
pub const BENCH_JSON: &str = "bench.json";
pub const BENCH_CSV: &str = "bench.csv";

pub fn cmd_gen(cfg: &RunConfig) -> Result<Manifest> {
    generate(cfg)
}

fn localizer_for(cfg: &RunConfig, object_id: u32, extractor: &HandcraftedExtractor) -> Result<Localizer> {
    let dir = cfg.paths.references.join(object_dir_name(object_id));
    let (refs, _) = load_reference_set(&dir, extractor)?;
    if cfg.k >= refs.len() {
        return Err(Error::validation(format!("k={} needs more than {} references", cfg.k, refs.len())));
    }
    Ok(Localizer::new(&refs, &cfg.kernels, cfg.k, cfg.size_temperature)?)
}

/// Localises `query` against the references of `object_id`; optionally
/// dumps the fused heatmap as PGM.
pub fn cmd_localize(cfg: &RunConfig, query: &Path, object_id: u32, heatmap: Option<&Path>) -> Result<(LocalizeOutput, Localization)> {
    cfg.validate()?;
    let extractor = HandcraftedExtractor::new(cfg.features);
    let localizer = localizer_for(cfg, object_id, &extractor)?;
    let img = read_ppm(query)?;
    let loc = localizer.locate(&extractor.extract(&img)?)?;
    if let Some(p) = heatmap {
        write_pgm_heatmap(p, &loc.heatmap)?;
    }
    let translation = recover_translation(loc.prior.center, loc.prior.size, &cfg.intrinsics)?;
    Ok((LocalizeOutput { prior: loc.prior, translation }, loc))
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NamedRecord {
    pub image: String,
    #[serde(flatten)]
    pub record: EvalRecord,
}

/// Localises every query of the manifest in `cfg.paths.queries` (or takes the
/// predictions from `oracle`, one per query in manifest order), then writes
/// `records.json` and `metrics.json` to the output directory.
pub fn cmd_eval(cfg: &RunConfig, oracle: Option<&Path>) -> Result<(EvalOutput, Vec<NamedRecord>)> {
    cfg.validate()?;
    let manifest = load_manifest(&cfg.paths.references, &cfg.paths.queries)?;
    if manifest.queries.is_empty() {
        return Err(Error::validation("the manifest lists no queries"));
    }
    let truths = manifest
        .queries
        .iter()
        .map(|q| read_json::<SceneTruth>(&cfg.paths.queries.join(&q.truth)))
        .collect::<Result<Vec<_>>>()?;

    let predictions: Vec<LocationPrior> = match oracle {
        Some(p) => {
            let preds: Vec<LocationPrior> = read_json(p)?;
            if preds.len() != manifest.queries.len() {
                return Err(Error::validation(format!(
                    "{} predictions for {} queries",
                    preds.len(),
                    manifest.queries.len()
                )));
            }
            preds
        }
        None => localize_manifest(cfg, &manifest)?,
    };

    let records: Vec<NamedRecord> = manifest
        .queries
        .iter()
        .zip(&truths)
        .zip(predictions)
        .map(|((q, t), p)| NamedRecord { image: q.image.clone(), record: EvalRecord::new(p, SquareBox::new(t.center, t.size)) })
        .collect();
    let plain: Vec<EvalRecord> = records.iter().map(|r| r.record).collect();
    let s = summarize(&plain)?;
    let out = EvalOutput::new(&s.map, s.center_mae_px, s.size_rel_mae, s.n);

    let dir = &cfg.paths.output;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join(RECORDS_FILE), &records)?;
    write_json(&dir.join(METRICS_FILE), &out)?;
    Ok((out, records))
}

fn localize_manifest(cfg: &RunConfig, manifest: &Manifest) -> Result<Vec<LocationPrior>> {
    let extractor = HandcraftedExtractor::new(cfg.features);
    let mut out = Vec::with_capacity(manifest.queries.len());
    for obj in &manifest.objects {
        let localizer = localizer_for(cfg, obj.object_id, &extractor)?;
        let mine: Vec<(usize, &_)> =
            manifest.queries.iter().enumerate().filter(|(_, q)| q.spec.object_id == obj.object_id).collect();
        let run = |&(i, q): &(usize, &crate::formats::QueryEntry)| -> Result<(usize, LocationPrior)> {
            let img = read_ppm(&cfg.paths.queries.join(&q.image))?;
            Ok((i, localizer.locate(&extractor.extract(&img)?)?.prior))
        };
        #[cfg(feature = "parallel")]
        let done = {
            use rayon::prelude::*;
            mine.par_iter().map(run).collect::<Result<Vec<_>>>()?
        };
        #[cfg(not(feature = "parallel"))]
        let done = mine.iter().map(run).collect::<Result<Vec<_>>>()?;
        out.extend(done);
    }
    if out.len() != manifest.queries.len() {
        return Err(Error::validation("some queries reference objects missing from the manifest"));
    }
    // manifest order regardless of scheduling
    out.sort_by_key(|(i, _)| *i);
    Ok(out.into_iter().map(|(_, p)| p).collect())
}

/// Strategy comparison on the default fixture; writes `bench.json` and
/// `bench.csv` to the output directory.
pub fn cmd_bench(cfg: &RunConfig) -> Result<PerfReport> {
    cfg.validate()?;
    let extractor = HandcraftedExtractor::new(cfg.features);
    let (query, kernel) = default_fixture(cfg, &extractor)?;
    let report =
        compare_strategies(&query, &kernel, &cfg.features, cfg.perf.max_scales, cfg.perf.repeats, cfg.perf.warmup)?;
    let dir = &cfg.paths.output;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join(BENCH_JSON), &report)?;
    write_csv(&dir.join(BENCH_CSV), &report)?;
    Ok(report)
}
