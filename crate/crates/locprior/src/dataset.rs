//! Dataset generation and loading.
//!
//! Layout: `references/obj_XXX/{ref_YYY.ppm, references.json}` and
//! `queries/{obj_XXX_qYYYY.ppm, obj_XXX_qYYYY.json, manifest.json}`. Every
//! path stored on disk is relative, so two runs with the same seed produce
//! byte-identical trees wherever they are written.

use std::fs;
use std::path::{Path, PathBuf};

use locprior_core::bench::benchmark_scenes;
use locprior_core::geometry::SquareBox;
use locprior_core::synth::{generate_reference_set, generate_scene, SceneSpec};
use locprior_core::{crop_reference_kernel, FeatureExtractor, ReferenceSet};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::formats::{read_json, write_json, Manifest, ObjectEntry, QueryEntry, ReferenceIndex, ReferenceView, SceneTruth};
use crate::pnm::{read_ppm, write_ppm};

pub const REFERENCE_INDEX: &str = "references.json";

pub fn object_dir_name(object_id: u32) -> String {
    format!("obj_{object_id:03}")
}

fn query_stem(spec: &SceneSpec, index: usize) -> String {
    format!("obj_{:03}_q{index:04}", spec.object_id)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Writes references and queries for every object in `cfg.dataset`.
pub fn generate(cfg: &RunConfig) -> Result<Manifest> {
    cfg.validate()?;
    let (ref_root, query_root) = (&cfg.paths.references, &cfg.paths.queries);
    create_dir(ref_root)?;
    create_dir(query_root)?;

    let mut objects = Vec::new();
    for obj in 0..cfg.dataset.n_objects {
        let views = generate_reference_set(obj, cfg.dataset.n_refs, cfg.dataset.s_r)?;
        let dir_name = object_dir_name(obj);
        let dir = ref_root.join(&dir_name);
        create_dir(&dir)?;
        let mut index = ReferenceIndex { object_id: obj, s_r: views.s_r, views: Vec::new() };
        for (i, img) in views.images.iter().enumerate() {
            let name = format!("ref_{i:03}.ppm");
            write_ppm(&dir.join(&name), img)?;
            index.views.push(ReferenceView {
                image: name,
                rotation_deg: views.angles_deg[i],
                rotation: views.rotations[i],
                center: views.boxes[i].center,
                size: views.boxes[i].size,
            });
        }
        write_json(&dir.join(REFERENCE_INDEX), &index)?;
        objects.push(ObjectEntry {
            object_id: obj,
            images: index.views.iter().map(|v| format!("{dir_name}/{}", v.image)).collect(),
            directory: dir_name,
        });
    }

    let scenes = benchmark_scenes(&cfg.benchmark(), 1.0)?;
    let per_object = cfg.dataset.n_queries;
    let write_one = |(i, spec): (usize, &SceneSpec)| -> Result<QueryEntry> {
        let stem = query_stem(spec, i % per_object.max(1));
        let (img, _) = generate_scene(spec)?;
        let (image, truth) = (format!("{stem}.ppm"), format!("{stem}.json"));
        write_ppm(&query_root.join(&image), &img)?;
        write_json(&query_root.join(&truth), &SceneTruth::from(spec))?;
        Ok(QueryEntry { image, truth, spec: spec.clone() })
    };
    #[cfg(feature = "parallel")]
    let queries = {
        use rayon::prelude::*;
        scenes.par_iter().enumerate().map(write_one).collect::<Result<Vec<_>>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let queries = scenes.iter().enumerate().map(write_one).collect::<Result<Vec<_>>>()?;

    let manifest = Manifest { seed: cfg.seed, objects, queries };
    write_json(&query_root.join(Manifest::FILE_NAME), &manifest)?;
    Ok(manifest)
}

/// Reads the manifest and checks that every file it names exists.
pub fn load_manifest(references: &Path, queries: &Path) -> Result<Manifest> {
    let manifest: Manifest = read_json(&queries.join(Manifest::FILE_NAME))?;
    let mut missing: Vec<PathBuf> = Vec::new();
    for o in &manifest.objects {
        missing.extend(o.images.iter().map(|p| references.join(p)).filter(|p| !p.is_file()));
        let index = references.join(&o.directory).join(REFERENCE_INDEX);
        if !index.is_file() {
            missing.push(index);
        }
    }
    for q in &manifest.queries {
        missing.extend([queries.join(&q.image), queries.join(&q.truth)].into_iter().filter(|p| !p.is_file()));
    }
    if !missing.is_empty() {
        let list: Vec<String> = missing.iter().map(|p| p.display().to_string()).collect();
        return Err(Error::Io {
            path: queries.join(Manifest::FILE_NAME),
            source: std::io::Error::new(
                std::io::ErrorKind::NotFound,
                format!("manifest names {} missing file(s): {}", list.len(), list.join(", ")),
            ),
        });
    }
    Ok(manifest)
}

/// Reference kernels of one object directory, extracted with `extractor`.
pub fn load_reference_set(dir: &Path, extractor: &dyn FeatureExtractor) -> Result<(ReferenceSet, ReferenceIndex)> {
    let index: ReferenceIndex = read_json(&dir.join(REFERENCE_INDEX))?;
    if index.views.is_empty() {
        return Err(Error::validation(format!("{} lists no reference views", dir.display())));
    }
    let kernel_size = extractor.config().kernel_size;
    let kernels = index
        .views
        .iter()
        .map(|v| {
            let img = read_ppm(&dir.join(&v.image))?;
            let fm = extractor.extract(&img)?;
            Ok(crop_reference_kernel(&fm, &SquareBox::new(v.center, v.size), kernel_size)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let refs = ReferenceSet { kernels, rotations: index.views.iter().map(|v| v.rotation).collect(), s_r: index.s_r };
    refs.validate()?;
    Ok((refs, index))
}
