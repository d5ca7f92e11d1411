//! JSON records written next to images and tensors, plus the feature-map
//! and correlation-stack file pairs (LPT1 tensor + JSON sidecar).

use std::fs;
use std::path::{Path, PathBuf};

use locprior_core::geometry::Rotation3;
use locprior_core::synth::SceneSpec;
use locprior_core::{CorrelationStack, FeatureConfig, FeatureMap, LocationPrior, MapReport, Translation3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lpt;

/// Pretty JSON with a trailing newline; field order follows the type, so the
/// output is byte-stable.
pub fn to_json_string<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data always serializes");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, to_json_string(value)).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSidecar {
    pub stride: usize,
    pub channels: usize,
    pub config_hash: u64,
    /// `[width, height]` of the source image.
    pub image_size: [usize; 2],
}

/// Sidecar path of a tensor file: same stem, `.json`.
pub fn sidecar_path(tensor_path: &Path) -> PathBuf {
    tensor_path.with_extension("json")
}

pub fn write_feature_map(path: &Path, fm: &FeatureMap, cfg: &FeatureConfig) -> Result<()> {
    lpt::write(path, &fm.tensor)?;
    let side = FeatureSidecar {
        stride: fm.stride,
        channels: fm.tensor.channels(),
        config_hash: cfg.config_hash(),
        image_size: [fm.image_size.0, fm.image_size.1],
    };
    write_json(&sidecar_path(path), &side)
}

/// Loads a feature map and checks it was produced by an extractor with
/// `cfg`, so query and references never mix extractors.
pub fn read_feature_map(path: &Path, cfg: &FeatureConfig) -> Result<FeatureMap> {
    let tensor = lpt::read(path)?;
    let side: FeatureSidecar = read_json(&sidecar_path(path))?;
    if side.config_hash != cfg.config_hash() {
        return Err(Error::validation(format!(
            "{} was extracted with config hash {:#x}, expected {:#x}",
            path.display(),
            side.config_hash,
            cfg.config_hash()
        )));
    }
    if side.channels != tensor.channels() || side.stride != cfg.stride {
        return Err(Error::format(path, "sidecar disagrees with the tensor"));
    }
    Ok(FeatureMap { tensor, stride: side.stride, image_size: (side.image_size[0], side.image_size[1]) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackSidecar {
    pub scale_factors: Vec<f64>,
}

pub fn write_stack(path: &Path, stack: &CorrelationStack) -> Result<()> {
    lpt::write(path, &stack.tensor)?;
    write_json(&sidecar_path(path), &StackSidecar { scale_factors: stack.scale_factors.clone() })
}

pub fn read_stack(path: &Path) -> Result<CorrelationStack> {
    let tensor = lpt::read(path)?;
    let side: StackSidecar = read_json(&sidecar_path(path))?;
    if tensor.channels() != side.scale_factors.len() {
        return Err(Error::format(path, "one scale factor per channel is required"));
    }
    Ok(CorrelationStack { tensor, scale_factors: side.scale_factors })
}

/// Ground truth written next to each query image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneTruth {
    pub center: [f64; 2],
    pub size: f64,
    pub rotation_deg: f64,
}

impl From<&SceneSpec> for SceneTruth {
    fn from(s: &SceneSpec) -> Self {
        Self { center: s.center, size: s.size, rotation_deg: s.rotation_deg }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceView {
    /// File name inside the object's reference directory.
    pub image: String,
    pub rotation_deg: f64,
    pub rotation: Rotation3,
    pub center: [f64; 2],
    pub size: f64,
}

/// `references.json` of one object's reference directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceIndex {
    pub object_id: u32,
    pub s_r: f64,
    pub views: Vec<ReferenceView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectEntry {
    pub object_id: u32,
    /// Directory below the references root.
    pub directory: String,
    /// Reference images, relative to the references root.
    pub images: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryEntry {
    /// Relative to the queries directory.
    pub image: String,
    pub truth: String,
    pub spec: SceneSpec,
}

/// `manifest.json` in the queries directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub seed: u64,
    pub objects: Vec<ObjectEntry>,
    pub queries: Vec<QueryEntry>,
}

impl Manifest {
    pub const FILE_NAME: &'static str = "manifest.json";

    /// Reference plus query images.
    pub fn image_count(&self) -> usize {
        self.objects.iter().map(|o| o.images.len()).sum::<usize>() + self.queries.len()
    }
}

/// Output of `localize`: the prior's fields plus the lifted translation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizeOutput {
    #[serde(flatten)]
    pub prior: LocationPrior,
    pub translation: Translation3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalOutput {
    pub per_threshold_ap: Vec<f64>,
    pub map_50_95: f64,
    pub center_mae_px: f64,
    pub size_rel_mae: f64,
    pub n: usize,
}

impl EvalOutput {
    pub fn new(map: &MapReport, center_mae_px: f64, size_rel_mae: f64, n: usize) -> Self {
        Self { per_threshold_ap: map.per_threshold_ap.clone(), map_50_95: map.map_50_95, center_mae_px, size_rel_mae, n }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use locprior_core::Tensor;

    #[test]
    fn location_prior_schema() {
        let out = LocalizeOutput {
            prior: LocationPrior { center: [10.5, 20.0], size: 33.0, confidence: 1.5, best_reference: 4 },
            translation: Translation3 { x: 0.1, y: -0.2, z: 1.0 },
        };
        let v: serde_json::Value = serde_json::from_str(&to_json_string(&out)).unwrap();
        let keys: Vec<&str> = v.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        assert_eq!(keys.len(), 5);
        for k in ["center", "size", "confidence", "best_reference", "translation"] {
            assert!(keys.contains(&k), "{k}");
        }
        assert_eq!(v["center"], serde_json::json!([10.5, 20.0]));
        assert_eq!(v["translation"], serde_json::json!([0.1, -0.2, 1.0]));
    }

    #[test]
    fn feature_and_stack_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = FeatureConfig::default();
        let fm = FeatureMap {
            tensor: Tensor::from_fn(9, 4, 5, |c, y, x| (c + y * x) as f32).unwrap(),
            stride: 8,
            image_size: (40, 32),
        };
        let p = dir.path().join("q.lpt");
        write_feature_map(&p, &fm, &cfg).unwrap();
        assert_eq!(read_feature_map(&p, &cfg).unwrap(), fm);
        let side: serde_json::Value = read_json(&sidecar_path(&p)).unwrap();
        assert_eq!(side["channels"], 9);
        assert_eq!(side["stride"], 8);
        let other = FeatureConfig { stride: 4, ..cfg };
        assert!(matches!(read_feature_map(&p, &other), Err(Error::Validation(_))));

        let stack = CorrelationStack { tensor: Tensor::zeros(&[2, 3, 3]).unwrap(), scale_factors: vec![0.5, 1.0] };
        let sp = dir.path().join("s.lpt");
        write_stack(&sp, &stack).unwrap();
        let back = read_stack(&sp).unwrap();
        assert_eq!(back.tensor, stack.tensor);
        assert_eq!(back.scale_factors, stack.scale_factors);
    }
}
