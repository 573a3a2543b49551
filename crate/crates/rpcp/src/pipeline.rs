//! End-to-end augmentation runs: seed splitting, per-image work units,
//! deterministic manifest assembly.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset_io::{self, AugConfig, PairDescriptor};
use crate::error::{Error, Result};
use crate::exec;
use crate::metrics_stats;
use crate::paste_engine;
use crate::patch_bank::{self, Connectivity, PatchBank};
use crate::random_projection;

/// Derive an independent per-image RNG stream from the master seed, the pair
/// id and its index. Hashing keeps streams schedule-independent; the index
/// salt rules out collisions between equal ids.
pub fn derive_stream(seed: u64, id: &str, index: usize) -> (ChaCha8Rng, u64) {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(id.as_bytes());
    hasher.update((index as u64).to_le_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    let stream_id = u64::from_le_bytes(digest[..8].try_into().unwrap());
    (ChaCha8Rng::from_seed(key), stream_id)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventRecord {
    pub patch_ref: usize,
    pub s: f64,
    pub theta: f64,
    pub x: u32,
    pub y: u32,
    pub success: bool,
    pub attempts: u32,
    pub mask_area: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub rng_stream: u64,
    pub events: Vec<EventRecord>,
    pub out_image: PathBuf,
    pub out_mask: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub tool_version: String,
    pub config: AugConfig,
    pub images_processed: usize,
    pub pastes_succeeded: u64,
    pub pastes_failed: u64,
    pub bank_patches: usize,
    pub distribution_before: Vec<u64>,
    pub distribution_after: Vec<u64>,
}

#[derive(Debug)]
pub struct RunManifest {
    pub records: Vec<ImageRecord>,
    pub summary: RunSummary,
}

/// Augment every pair in the dataset and write outputs, a JSON Lines manifest
/// (one record per image) and a summary.json under `out_dir`.
pub fn run_augment(
    config: &AugConfig,
    image_dir: &Path,
    mask_dir: &Path,
    out_dir: &Path,
    jobs: usize,
) -> Result<RunManifest> {
    config.validate()?;
    let pairs = dataset_io::scan_dataset(image_dir, mask_dir)?;
    if pairs.is_empty() {
        return Err(Error::Io {
            path: image_dir.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no image pairs found"),
        });
    }
    let bank = patch_bank::build_bank(
        &pairs,
        &config.class_scheme,
        config.min_patch_area,
        Connectivity::Eight,
    )?;
    if bank.is_empty() {
        eprintln!("warning: no source-class patches found; outputs will be unmodified copies");
    }

    let out_images = out_dir.join("images");
    let out_masks = out_dir.join("masks");
    for dir in [&out_images, &out_masks] {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.clone(),
            source: e,
        })?;
    }

    let work: Vec<(usize, PairDescriptor)> = pairs.into_iter().enumerate().collect();
    let results = exec::map_items(work, jobs, |(index, pair)| {
        augment_one(config, &bank, &pair, index, &out_images, &out_masks)
    });

    let mut records = Vec::with_capacity(results.len());
    let mut before = vec![0u64; config.class_scheme.class_count];
    let mut after = vec![0u64; config.class_scheme.class_count];
    for result in results {
        let (record, b, a) = result?;
        for c in 0..before.len() {
            before[c] += b[c];
            after[c] += a[c];
        }
        records.push(record);
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));

    let pastes_succeeded = records
        .iter()
        .flat_map(|r| &r.events)
        .filter(|e| e.success)
        .count() as u64;
    let pastes_failed = records
        .iter()
        .flat_map(|r| &r.events)
        .filter(|e| !e.success)
        .count() as u64;
    let summary = RunSummary {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        images_processed: records.len(),
        pastes_succeeded,
        pastes_failed,
        bank_patches: bank.len(),
        distribution_before: before,
        distribution_after: after,
    };

    let manifest_path = out_dir.join("manifest.jsonl");
    let mut lines = String::new();
    for record in &records {
        lines.push_str(&serde_json::to_string(record).expect("record serializes"));
        lines.push('\n');
    }
    std::fs::write(&manifest_path, lines).map_err(|e| Error::Io {
        path: manifest_path,
        source: e,
    })?;
    let summary_path = out_dir.join("summary.json");
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(&summary_path, json).map_err(|e| Error::Io {
        path: summary_path,
        source: e,
    })?;

    Ok(RunManifest { records, summary })
}

fn augment_one(
    config: &AugConfig,
    bank: &PatchBank,
    pair: &PairDescriptor,
    index: usize,
    out_images: &Path,
    out_masks: &Path,
) -> Result<(ImageRecord, Vec<u64>, Vec<u64>)> {
    let (image, label) = dataset_io::load_pair(pair, &config.class_scheme)?;
    let before = label.histogram(config.class_scheme.class_count);

    let (mut rng, stream_id) = derive_stream(config.seed, &pair.id, index);
    let (mut image, label, events) = paste_engine::paste_k(&mut rng, &image, &label, bank, config);
    for event in &events {
        if let Some(mask) = &event.full_mask {
            image = random_projection::refine(&image, mask, &config.rp, &mut rng);
        }
    }

    let after = label.histogram(config.class_scheme.class_count);
    let out_id = format!("{}_aug", pair.id);
    dataset_io::write_pair(&image, &label, out_images, out_masks, &out_id)?;
    // Record paths relative to the output root so manifests from identical
    // runs compare byte-equal regardless of where the output lives.
    let out_image = PathBuf::from("images").join(format!("{out_id}.png"));
    let out_mask = PathBuf::from("masks").join(format!("{out_id}.png"));

    let record = ImageRecord {
        id: pair.id.clone(),
        rng_stream: stream_id,
        events: events
            .iter()
            .map(|e| EventRecord {
                patch_ref: e.params.patch_ref,
                s: e.params.s,
                theta: e.params.theta,
                x: e.params.x,
                y: e.params.y,
                success: e.success,
                attempts: e.attempts,
                mask_area: e.mask_area,
            })
            .collect(),
        out_image,
        out_mask,
    };
    Ok((record, before, after))
}

/// Compute the class distribution over every mask in a dataset.
pub fn run_stats(
    image_dir: &Path,
    mask_dir: &Path,
    config: &AugConfig,
) -> Result<(Vec<PairDescriptor>, metrics_stats::DistributionReport)> {
    let pairs = dataset_io::scan_dataset(image_dir, mask_dir)?;
    if pairs.is_empty() {
        return Err(Error::Io {
            path: mask_dir.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no image pairs found"),
        });
    }
    let mut labels = Vec::with_capacity(pairs.len());
    for pair in &pairs {
        let (_, label) = dataset_io::load_pair(pair, &config.class_scheme)?;
        labels.push(label);
    }
    let report = metrics_stats::pixel_distribution(labels.iter(), &config.class_scheme);
    Ok((pairs, report))
}

/// Evaluate predicted masks against ground-truth masks paired by stem.
pub fn run_eval(
    pred_dir: &Path,
    gt_dir: &Path,
    config: &AugConfig,
) -> Result<metrics_stats::MetricReport> {
    let pairs = dataset_io::scan_dataset(pred_dir, gt_dir)?;
    if pairs.is_empty() {
        return Err(Error::Io {
            path: pred_dir.to_path_buf(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "no mask pairs found"),
        });
    }
    let scheme = &config.class_scheme;
    let mut total = metrics_stats::ConfusionCounts::zeros(scheme.class_count);
    for pair in &pairs {
        let pred = load_mask(&pair.image_path, scheme)?;
        let gt = load_mask(&pair.mask_path, scheme)?;
        if pred.width != gt.width || pred.height != gt.height {
            return Err(Error::DimensionMismatch {
                id: pair.id.clone(),
                image_w: pred.width,
                image_h: pred.height,
                mask_w: gt.width,
                mask_h: gt.height,
            });
        }
        total.merge(&metrics_stats::confusion(&pred, &gt, scheme)?);
    }
    metrics_stats::MetricReport::from_counts(&total, scheme)
}

fn load_mask(path: &Path, scheme: &crate::dataset_io::ClassScheme) -> Result<crate::dataset_io::LabelMap> {
    let mask = image::open(path)
        .map_err(|e| Error::Decode {
            path: path.to_path_buf(),
            source: e,
        })?
        .to_luma8();
    let data = mask.as_raw().clone();
    if let Some((index, &value)) = data
        .iter()
        .enumerate()
        .find(|(_, v)| (**v as usize) >= scheme.class_count)
    {
        return Err(Error::OutOfScheme {
            value,
            class_count: scheme.class_count,
            index,
        });
    }
    Ok(crate::dataset_io::LabelMap {
        width: mask.width(),
        height: mask.height(),
        data,
    })
}
