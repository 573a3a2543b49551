//! Shared fixtures for integration tests: a deterministic synthetic
//! leaf-style dataset and an output-tree digest helper.

// Each integration test target compiles this module separately and not all
// of them use every helper.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rpcp::dataset_io::{write_pair, ImageRgb, LabelMap};
use sha2::{Digest, Sha256};

/// Generate `n` image/mask pairs under `dir`/images and `dir`/masks.
///
/// Each pair is a smooth healthy-leaf background (class 0) with a few lesion
/// rectangles (class 1) and at least one insect-damage disc (class 2) large
/// enough to clear the default min_patch_area.
pub fn generate_dataset(dir: &Path, n: usize, w: u32, h: u32, seed: u64) -> (PathBuf, PathBuf) {
    let images = dir.join("images");
    let masks = dir.join("masks");
    std::fs::create_dir_all(&images).unwrap();
    std::fs::create_dir_all(&masks).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n {
        let (image, label) = synthetic_pair(&mut rng, w, h);
        write_pair(&image, &label, &images, &masks, &format!("leaf_{i:03}")).unwrap();
    }
    (images, masks)
}

pub fn synthetic_pair(rng: &mut impl Rng, w: u32, h: u32) -> (ImageRgb, LabelMap) {
    let mut image = ImageRgb::filled(w, h, 0.0);
    let mut label = LabelMap::filled(w, h, 0);
    for y in 0..h {
        for x in 0..w {
            // Smooth green gradient so PNGs stay small.
            let gx = x as f64 / w as f64;
            let gy = y as f64 / h as f64;
            image.set_pixel(x, y, [0.2 + 0.1 * gx, 0.5 + 0.2 * gy, 0.15]);
        }
    }
    // Lesion rectangles.
    for _ in 0..rng.gen_range(1..=3usize) {
        let rw = rng.gen_range(w / 16..=w / 8).max(2);
        let rh = rng.gen_range(h / 16..=h / 8).max(2);
        let x0 = rng.gen_range(0..w - rw);
        let y0 = rng.gen_range(0..h - rh);
        for y in y0..y0 + rh {
            for x in x0..x0 + rw {
                label.set(x, y, 1);
                image.set_pixel(x, y, [0.55, 0.4, 0.2]);
            }
        }
    }
    // Insect-damage discs; radius >= 3 keeps area above the default
    // min_patch_area of 16.
    for _ in 0..rng.gen_range(1..=2usize) {
        let r = rng.gen_range(3..=(w / 12).max(4)) as i64;
        let cx = rng.gen_range(r as u32..w - r as u32) as i64;
        let cy = rng.gen_range(r as u32..h - r as u32) as i64;
        for y in (cy - r).max(0)..=(cy + r).min(h as i64 - 1) {
            for x in (cx - r).max(0)..=(cx + r).min(w as i64 - 1) {
                if (x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r {
                    label.set(x as u32, y as u32, 2);
                    image.set_pixel(x as u32, y as u32, [0.35, 0.25, 0.1]);
                }
            }
        }
    }
    (image, label)
}

/// Order-independent digest of every file under a directory tree.
pub fn tree_digest(dir: &Path) -> String {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files);
    files.sort();
    let mut hasher = Sha256::new();
    for rel in files {
        hasher.update(rel.as_bytes());
        hasher.update(std::fs::read(dir.join(&rel)).unwrap());
    }
    format!("{:x}", hasher.finalize())
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) {
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            collect_files(root, &path, out);
        } else {
            out.push(path.strip_prefix(root).unwrap().to_string_lossy().into_owned());
        }
    }
}
