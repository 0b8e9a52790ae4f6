//! Paired-dataset construction and the evaluation harness.
//!
//! A scene is a directory holding `clean.png`, `sky_mask.png` and
//! `lights.png`. [`build_dataset`] renders `n` polluted variants per scene,
//! splits scenes (groups) 9:1 into train and validation, and writes
//!
//! ```text
//! <out>/<split>/<scene>/clean.png
//! <out>/<split>/<scene>/variant_<k>.png
//! <out>/manifest.json
//! ```
//!
//! The manifest depends only on the inputs, the master seed and the config;
//! worker count and directory enumeration order do not affect it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::imagecore::io::{read_image, read_mask, sha256_hex, write_atomic, write_png, BitDepth};
use crate::lightmap::{extract_lights_threshold, LightSourceMap, Provenance};
use crate::metrics::{format_db, psnr, ssim, MetricReport, PairFailure, PairMetric};
use crate::rng::{derive_seed, seeded};
use crate::synth::{make_variant, OutputFile, SceneAssets, SynthesisConfig, SynthesisRecord};
use crate::{Error, Image, Result, TOOLKIT_VERSION};

pub const CLEAN_FILE: &str = "clean.png";
pub const SKY_MASK_FILE: &str = "sky_mask.png";
pub const LIGHTS_FILE: &str = "lights.png";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const DEFAULT_VARIANTS: usize = 5;

/// Where a scene's visible-light map comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightsSource {
    /// `lights.png` in the scene directory.
    File,
    /// Luminance threshold over the clean image.
    Threshold(f64),
}

#[derive(Debug, Clone)]
pub struct LoadedScene {
    pub assets: SceneAssets,
    pub depth: BitDepth,
}

/// Loads a scene directory. Missing files and size mismatches name the
/// offending file.
pub fn load_scene(dir: &Path, lights: LightsSource) -> Result<LoadedScene> {
    let require = |name: &str| -> Result<PathBuf> {
        let path = dir.join(name);
        if path.is_file() {
            Ok(path)
        } else {
            Err(Error::MissingAsset(path))
        }
    };
    let clean_path = require(CLEAN_FILE)?;
    let mask_path = require(SKY_MASK_FILE)?;
    let (clean, depth) = read_image(&clean_path)?;
    let mask = read_mask(&mask_path)?;
    if !mask.matches(&clean) {
        return Err(Error::DimensionMismatch(format!(
            "sky mask is {}x{}, clean image is {}x{}",
            mask.width(),
            mask.height(),
            clean.width(),
            clean.height()
        ))
        .at_path(mask_path));
    }
    let lights = match lights {
        LightsSource::File => {
            let path = require(LIGHTS_FILE)?;
            let (image, _) = read_image(&path)?;
            if !image.same_dims(&clean) {
                return Err(Error::DimensionMismatch(format!(
                    "light map is {}x{}, clean image is {}x{}",
                    image.width(),
                    image.height(),
                    clean.width(),
                    clean.height()
                ))
                .at_path(path));
            }
            LightSourceMap::new(image, Provenance::ExternalFile)?
        }
        LightsSource::Threshold(tau) => extract_lights_threshold(&clean, tau)?,
    };
    Ok(LoadedScene {
        assets: SceneAssets::new(clean, mask, lights)?,
        depth,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

/// Number of validation groups: `floor(n / 10)`, at least one once there
/// are two groups.
pub fn val_group_count(groups: usize) -> usize {
    if groups < 2 {
        0
    } else {
        (groups / 10).max(1)
    }
}

/// Assigns each group a split: sort the ids, shuffle with a permutation
/// seeded from `master_seed`, and send the last [`val_group_count`] to val.
pub fn split_groups(ids: &[String], master_seed: u64) -> BTreeMap<String, Split> {
    let mut sorted: Vec<&String> = ids.iter().collect();
    sorted.sort();
    sorted.dedup();
    let mut rng = seeded(derive_seed(master_seed, "group-split", 0));
    sorted.shuffle(&mut rng);
    let n_val = val_group_count(sorted.len());
    let cut = sorted.len() - n_val;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), if i >= cut { Split::Val } else { Split::Train }))
        .collect()
}

#[derive(Debug, Clone)]
pub struct DatasetOptions {
    pub master_seed: u64,
    pub variants: usize,
    /// Worker threads; `None` uses the rayon default.
    pub workers: Option<usize>,
    pub config: SynthesisConfig,
    pub lights: LightsSource,
    /// Also write the three unscaled layers per variant.
    pub emit_layers: bool,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        Self {
            master_seed: 0,
            variants: DEFAULT_VARIANTS,
            workers: None,
            config: SynthesisConfig::default(),
            lights: LightsSource::File,
            emit_layers: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneEntry {
    pub id: String,
    pub split: Split,
    pub asset_digest: String,
    pub clean: OutputFile,
    pub records: Vec<SynthesisRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedScene {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub toolkit_version: String,
    pub master_seed: u64,
    pub variants_per_scene: usize,
    pub config: SynthesisConfig,
    pub scenes: Vec<SceneEntry>,
    pub skipped: Vec<SkippedScene>,
}

impl DatasetManifest {
    pub fn pair_count(&self) -> usize {
        self.scenes.iter().map(|s| s.records.len()).sum()
    }

    pub fn group_count(&self, split: Split) -> usize {
        self.scenes.iter().filter(|s| s.split == split).count()
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    /// SHA-256 of the serialized manifest.
    pub fn digest(&self) -> Result<String> {
        Ok(sha256_hex(&self.to_json()?))
    }

    /// Every referenced file, as `(relative path, expected digest)`.
    pub fn files(&self) -> impl Iterator<Item = &OutputFile> {
        self.scenes
            .iter()
            .flat_map(|s| std::iter::once(&s.clean).chain(s.records.iter().flat_map(|r| &r.outputs)))
    }

    /// Checks that every referenced file under `out` matches its digest.
    pub fn verify(&self, out: &Path) -> Result<()> {
        for file in self.files() {
            let path = out.join(&file.path);
            let bytes = std::fs::read(&path).map_err(|e| Error::from(e).at_path(&path))?;
            if sha256_hex(&bytes) != file.sha256 {
                return Err(Error::Domain(format!("digest mismatch for {}", path.display())));
            }
        }
        Ok(())
    }
}

/// Scene directories under `root`, sorted by name.
pub fn discover_scenes(root: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut scenes = Vec::new();
    for entry in std::fs::read_dir(root).map_err(|e| Error::from(e).at_path(root))? {
        let entry = entry?;
        if entry.file_type()?.is_dir() {
            scenes.push((entry.file_name().to_string_lossy().into_owned(), entry.path()));
        }
    }
    scenes.sort();
    Ok(scenes)
}

fn rel(parts: &[&str]) -> String {
    parts.join("/")
}

fn write_output(out: &Path, role: &str, rel_path: String, image: &Image, depth: BitDepth) -> Result<OutputFile> {
    let sha256 = write_png(&out.join(&rel_path), image, depth)?;
    Ok(OutputFile {
        role: role.to_owned(),
        path: rel_path,
        sha256,
    })
}

/// Builds the dataset under `out` and writes `manifest.json`.
pub fn build_dataset(root: &Path, out: &Path, options: &DatasetOptions) -> Result<DatasetManifest> {
    if options.variants == 0 {
        return Err(Error::invalid("variants", "need at least one variant per scene"));
    }
    options.config.validate()?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = options.workers {
        pool = pool.num_threads(n.max(1));
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Domain(format!("cannot start worker pool: {e}")))?;

    let discovered = discover_scenes(root)?;
    let loaded: Vec<(String, Result<LoadedScene>)> = pool.install(|| {
        discovered
            .par_iter()
            .map(|(id, dir)| (id.clone(), load_scene(dir, options.lights)))
            .collect()
    });

    let mut scenes = Vec::new();
    let mut skipped = Vec::new();
    for (id, result) in loaded {
        match result {
            Ok(scene) => scenes.push((id, scene)),
            Err(e) => {
                log::warn!("skipping scene {id}: {e}");
                skipped.push(SkippedScene {
                    id,
                    reason: e.to_string(),
                });
            }
        }
    }

    let ids: Vec<String> = scenes.iter().map(|(id, _)| id.clone()).collect();
    let splits = split_groups(&ids, options.master_seed);

    let jobs: Vec<(usize, usize)> = (0..scenes.len())
        .flat_map(|s| (0..options.variants).map(move |k| (s, k)))
        .collect();
    let records: Vec<SynthesisRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|&(s, k)| -> Result<SynthesisRecord> {
                let (id, scene) = &scenes[s];
                let dir = splits[id].dir_name();
                let variant = make_variant(&scene.assets, id, options.master_seed, k, &options.config)?;
                let mut record = variant.record;
                let name = format!("variant_{k}");
                record.outputs.push(write_output(
                    out,
                    "polluted",
                    rel(&[dir, id, &format!("{name}.png")]),
                    &variant.synthesis.image,
                    scene.depth,
                )?);
                if options.emit_layers {
                    let layers = &variant.synthesis.layers;
                    for (role, layer) in [
                        ("p_sky", &layers.sky),
                        ("p_alsf", &layers.alsf),
                        ("p_apsf", &layers.apsf),
                    ] {
                        record.outputs.push(write_output(
                            out,
                            role,
                            rel(&[dir, id, &format!("{name}_{role}.png")]),
                            layer,
                            BitDepth::Sixteen,
                        )?);
                    }
                }
                log::info!("{id} variant {k} done");
                Ok(record)
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut records = records.into_iter();
    let mut entries = Vec::with_capacity(scenes.len());
    for (id, scene) in &scenes {
        let split = splits[id];
        let clean = write_output(
            out,
            "clean",
            rel(&[split.dir_name(), id, CLEAN_FILE]),
            scene.assets.clean(),
            scene.depth,
        )?;
        entries.push(SceneEntry {
            id: id.clone(),
            split,
            asset_digest: scene.assets.digest(),
            clean,
            records: records.by_ref().take(options.variants).collect(),
        });
    }

    let manifest = DatasetManifest {
        toolkit_version: TOOLKIT_VERSION.to_owned(),
        master_seed: options.master_seed,
        variants_per_scene: options.variants,
        config: options.config.clone(),
        scenes: entries,
        skipped,
    };
    write_atomic(&out.join(MANIFEST_FILE), &manifest.to_json()?)?;
    Ok(manifest)
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let path = Path::new(p);
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn is_header(a: &str, b: &str) -> bool {
    let known = ["path_a", "path_b", "restored", "reference", "a", "b"];
    known.contains(&a.trim().to_ascii_lowercase().as_str()) && known.contains(&b.trim().to_ascii_lowercase().as_str())
}

fn score_pair(a: &Path, b: &Path) -> Result<(f64, f64)> {
    let (ia, _) = read_image(a)?;
    let (ib, _) = read_image(b)?;
    Ok((psnr(&ia, &ib)?, ssim(&ia, &ib)?))
}

/// Scores every `(restored, reference)` row of a CSV file. Relative paths
/// resolve against the CSV's directory; failing rows are recorded and
/// skipped.
pub fn evaluate_pairs(pairs_csv: &Path) -> Result<MetricReport> {
    let base = pairs_csv.parent().unwrap_or(Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(pairs_csv)
        .map_err(|e| Error::from(e).at_path(pairs_csv))?;

    let mut rows = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row?;
        if row.iter().all(str::is_empty) {
            continue;
        }
        let a = row.get(0).unwrap_or_default().to_owned();
        let b = row.get(1).unwrap_or_default().to_owned();
        if i == 0 && is_header(&a, &b) {
            continue;
        }
        rows.push((i + 1, a, b));
    }

    let scored: Vec<_> = rows
        .par_iter()
        .map(|(row, a, b)| {
            let result = if b.is_empty() {
                Err(Error::invalid("pairs", "row needs two paths"))
            } else {
                score_pair(&resolve(base, a), &resolve(base, b))
            };
            (*row, a.clone(), b.clone(), result)
        })
        .collect();

    let mut report = MetricReport::default();
    for (row, path_a, path_b, result) in scored {
        match result {
            Ok((psnr_db, ssim)) => report.pairs.push(PairMetric {
                path_a,
                path_b,
                psnr_db,
                ssim,
            }),
            Err(e) => report.failures.push(PairFailure {
                row,
                path_a,
                path_b,
                error: e.to_string(),
            }),
        }
    }
    Ok(report)
}

/// Writes `metrics.csv` and `summary.json` into `out`.
pub fn write_report(report: &MetricReport, out: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["path_a", "path_b", "psnr_db", "ssim"])?;
    for p in &report.pairs {
        writer.write_record([
            p.path_a.clone(),
            p.path_b.clone(),
            format_db(p.psnr_db),
            format!("{}", p.ssim),
        ])?;
    }
    let csv_bytes = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(&out.join("metrics.csv"), &csv_bytes)?;

    #[derive(Serialize)]
    struct Summary<'a> {
        #[serde(flatten)]
        summary: crate::metrics::MetricSummary,
        failures: &'a [PairFailure],
    }
    let summary = Summary {
        summary: report.summary(),
        failures: &report.failures,
    };
    let mut json = serde_json::to_vec_pretty(&summary)?;
    json.push(b'\n');
    write_atomic(&out.join("summary.json"), &json)?;
    Ok(())
}
