#![no_std]
#![forbid(unsafe_code)]

//! Localisation of previously unseen objects by multi-scale template matching.
//!
//! Given reference views of an object with known boxes and poses, the
//! pipeline predicts a location prior (2D centre and box size) in a query
//! image and lifts it to a 3D translation with the pinhole model:
//!
//! - [`tensor`]: dense tensors, cross-correlation, resize, pooling, dilation
//! - [`features`]: the shared extractor applied to query and references
//! - [`multiscale`]: distributed reference kernels and the correlation stack
//! - [`estimator`]: map fusion, centre and size estimation, pose neighbourhoods
//! - [`geometry`]: rotation distance, pinhole size and translation
//! - [`synth`], [`metrics`], [`bench`]: synthetic scenes and mAP evaluation
//! - [`cost`]: MAC accounting of kernel distribution vs. query resizing
//!
//! The crate is `no_std` and only needs `alloc`. File formats, timing and
//! the command line live in the companion `locprior` crate.

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod bench;
pub mod cost;
pub mod error;
pub mod estimator;
pub mod features;
pub mod geometry;
pub mod image;
pub mod metrics;
pub mod multiscale;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use estimator::{
    estimate_center, estimate_size, estimate_size_at, fuse_maps, knn_references, localize, map_weight, normalize_map, FusedMap,
    LocationPrior, Localization, Localizer, ReferenceSet,
};
pub use features::{crop_reference_kernel, extract_features, FeatureConfig, FeatureExtractor, FeatureMap, HandcraftedExtractor};
pub use geometry::{geodesic_distance, ground_truth_size, recover_translation, CameraIntrinsics, Rotation3, SquareBox, Translation3};
pub use image::Image;
pub use metrics::{box_iou, map_50_95, EvalRecord, MapReport};
pub use multiscale::{
    correlate_by_query_resizing, correlate_multiscale, distribute_kernel, CorrelationStack, DistributedKernel,
    CorrelationNorm, KernelBank, KernelDistributionConfig, Provenance, QueryWindows,
};
pub use synth::{generate_reference_set, generate_scene, SceneSpec};
pub use tensor::{cross_correlate, dilate_kernel, pyramid_pool, resize_bilinear, stack_maps, MacCounter, Padding, Tensor};
