//! The JSON run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use locprior_core::bench::BenchmarkConfig;
use locprior_core::estimator::{DEFAULT_K, DEFAULT_SIZE_TEMPERATURE};
use locprior_core::synth::SceneSampling;
use locprior_core::{CameraIntrinsics, FeatureConfig, KernelDistributionConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{read_json, to_json_string};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// One sub-directory of reference views per object.
    pub references: PathBuf,
    /// Query images, their ground truth and the manifest.
    pub queries: PathBuf,
    /// Reports written by `eval` and `bench`.
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            references: PathBuf::from("dataset/references"),
            queries: PathBuf::from("dataset/queries"),
            output: PathBuf::from("out"),
        }
    }
}

impl Paths {
    /// The standard layout below one dataset root.
    pub fn under(root: &Path, output: PathBuf) -> Self {
        Self { references: root.join("references"), queries: root.join("queries"), output }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_objects: u32,
    pub n_queries: usize,
    pub n_refs: usize,
    /// Object size in the reference views, pixels.
    pub s_r: f64,
    pub sampling: SceneSampling,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        let b = BenchmarkConfig::default();
        Self { n_objects: b.n_objects, n_queries: b.n_queries, n_refs: b.n_refs, s_r: b.s_r, sampling: b.sampling }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerfConfig {
    /// Scale counts `1..=max_scales` are compared.
    pub max_scales: usize,
    pub repeats: usize,
    pub warmup: usize,
}

impl Default for PerfConfig {
    fn default() -> Self {
        Self { max_scales: 5, repeats: 9, warmup: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    pub features: FeatureConfig,
    pub kernels: KernelDistributionConfig,
    /// Geodesic neighbours per reference.
    pub k: usize,
    pub size_temperature: f64,
    pub intrinsics: CameraIntrinsics,
    pub dataset: DatasetConfig,
    pub perf: PerfConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            paths: Paths::default(),
            features: FeatureConfig::default(),
            kernels: KernelDistributionConfig::default(),
            k: DEFAULT_K,
            size_temperature: DEFAULT_SIZE_TEMPERATURE,
            // a 256 px synthetic frame seen by a 500 px focal length camera
            intrinsics: CameraIntrinsics { fx: 500.0, fy: 500.0, cx: 128.0, cy: 128.0, f_virtual: 500.0, s_3d: 0.1 },
            dataset: DatasetConfig::default(),
            perf: PerfConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: RunConfig = read_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        to_json_string(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        self.intrinsics.validate()?;
        if !(self.size_temperature > 0.0) {
            return Err(Error::validation("size_temperature must be positive"));
        }
        if self.k >= self.dataset.n_refs {
            return Err(Error::validation(format!("k={} must be below n_refs={}", self.k, self.dataset.n_refs)));
        }
        if self.dataset.n_refs == 0 || self.dataset.n_objects == 0 {
            return Err(Error::validation("n_refs and n_objects must be >= 1"));
        }
        if self.perf.max_scales == 0 || self.perf.repeats == 0 {
            return Err(Error::validation("perf.max_scales and perf.repeats must be >= 1"));
        }
        Ok(())
    }

    pub fn benchmark(&self) -> BenchmarkConfig {
        BenchmarkConfig {
            seed: self.seed,
            n_objects: self.dataset.n_objects,
            n_queries: self.dataset.n_queries,
            n_refs: self.dataset.n_refs,
            s_r: self.dataset.s_r,
            k: self.k,
            size_temperature: self.size_temperature,
            features: self.features,
            kernels: self.kernels.clone(),
            sampling: self.dataset.sampling.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let text = cfg.to_json();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 7, "kernels": {"offsets": [0], "pool_rates": [], "dilation_rates": []}}"#).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.kernels.offsets, vec![0]);
        assert_eq!(cfg.k, DEFAULT_K);
        assert!(serde_json::from_str::<RunConfig>(r#"{"sede": 7}"#).is_err());
    }

    #[test]
    fn k_must_fit_the_reference_count() {
        let mut cfg = RunConfig::default();
        cfg.k = cfg.dataset.n_refs;
        assert!(matches!(cfg.validate(), Err(Error::Validation(_))));
    }
}
