//! Extraction of rare-class connected regions into croppable patches and a
//! deterministic, sampleable bank.

use std::collections::VecDeque;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset_io::{self, ClassScheme, ImageRgb, LabelMap, PairDescriptor};
use crate::error::{Error, Result};

/// Binary raster used for patch masks and placed full-image masks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![false; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        self.data[y as usize * self.width as usize + x as usize] = v;
    }

    pub fn count_ones(&self) -> u64 {
        self.data.iter().filter(|b| **b).count() as u64
    }

    /// Tight bounding box (x0, y0, x1, y1) of set pixels, inclusive.
    pub fn bounding_box(&self) -> Option<(u32, u32, u32, u32)> {
        let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0, 0);
        let mut any = false;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    any = true;
                    x0 = x0.min(x);
                    y0 = y0.min(y);
                    x1 = x1.max(x);
                    y1 = y1.max(y);
                }
            }
        }
        any.then_some((x0, y0, x1, y1))
    }

    pub fn intersects(&self, other: &BinaryMask) -> bool {
        self.data
            .iter()
            .zip(&other.data)
            .any(|(a, b)| *a && *b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

/// A maximal connected component of one class within one source image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub source_id: String,
    /// (x0, y0, w, h) in source-image pixels.
    pub bounding_box: (u32, u32, u32, u32),
    pub class_id: u8,
    /// Absolute coordinates, sorted row-major.
    pub pixels: Vec<(u32, u32)>,
}

impl Region {
    pub fn pixel_count(&self) -> usize {
        self.pixels.len()
    }
}

/// Cropped RGB raster plus aligned binary mask and source class.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub rgb: ImageRgb,
    pub mask: BinaryMask,
    pub class_id: u8,
    pub source_id: String,
    pub source_box: (u32, u32, u32, u32),
}

impl Patch {
    pub fn width(&self) -> u32 {
        self.mask.width
    }

    pub fn height(&self) -> u32 {
        self.mask.height
    }

    pub fn mask_area(&self) -> u64 {
        self.mask.count_ones()
    }
}

/// Find maximal connected components of `class_id` with at least `min_area`
/// pixels, in row-major scan order of their first pixel.
pub fn extract_components(
    label: &LabelMap,
    class_id: u8,
    connectivity: Connectivity,
    min_area: usize,
) -> Vec<Region> {
    let (w, h) = (label.width, label.height);
    let mut visited = vec![false; w as usize * h as usize];
    let mut regions = Vec::new();

    let offsets: &[(i64, i64)] = match connectivity {
        Connectivity::Four => &[(0, -1), (-1, 0), (1, 0), (0, 1)],
        Connectivity::Eight => &[
            (-1, -1),
            (0, -1),
            (1, -1),
            (-1, 0),
            (1, 0),
            (-1, 1),
            (0, 1),
            (1, 1),
        ],
    };

    for sy in 0..h {
        for sx in 0..w {
            let si = sy as usize * w as usize + sx as usize;
            if visited[si] || label.get(sx, sy) != class_id {
                continue;
            }
            let mut pixels = Vec::new();
            let mut queue = VecDeque::new();
            visited[si] = true;
            queue.push_back((sx, sy));
            while let Some((x, y)) = queue.pop_front() {
                pixels.push((x, y));
                for (dx, dy) in offsets {
                    let nx = x as i64 + dx;
                    let ny = y as i64 + dy;
                    if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                        continue;
                    }
                    let (nx, ny) = (nx as u32, ny as u32);
                    let ni = ny as usize * w as usize + nx as usize;
                    if !visited[ni] && label.get(nx, ny) == class_id {
                        visited[ni] = true;
                        queue.push_back((nx, ny));
                    }
                }
            }
            if pixels.len() < min_area {
                continue;
            }
            pixels.sort_unstable_by_key(|&(x, y)| (y, x));
            let x0 = pixels.iter().map(|p| p.0).min().unwrap();
            let y0 = pixels.iter().map(|p| p.1).min().unwrap();
            let x1 = pixels.iter().map(|p| p.0).max().unwrap();
            let y1 = pixels.iter().map(|p| p.1).max().unwrap();
            regions.push(Region {
                source_id: String::new(),
                bounding_box: (x0, y0, x1 - x0 + 1, y1 - y0 + 1),
                class_id,
                pixels,
            });
        }
    }
    regions
}

/// Crop a region into a patch: rectangular RGB context, tight mask set only
/// on the region's own pixels.
pub fn crop_patch(image: &ImageRgb, label: &LabelMap, region: &Region) -> Result<Patch> {
    let (bx, by, bw, bh) = region.bounding_box;
    if bx + bw > image.width || by + bh > image.height {
        return Err(Error::InvalidArgument(format!(
            "region box ({bx},{by},{bw},{bh}) exceeds image {}x{}",
            image.width, image.height
        )));
    }
    if image.width != label.width || image.height != label.height {
        return Err(Error::DimensionMismatch {
            id: region.source_id.clone(),
            image_w: image.width,
            image_h: image.height,
            mask_w: label.width,
            mask_h: label.height,
        });
    }

    let mut rgb = ImageRgb::filled(bw, bh, 0.0);
    for y in 0..bh {
        for x in 0..bw {
            rgb.set_pixel(x, y, image.pixel(bx + x, by + y));
        }
    }
    let mut mask = BinaryMask::new(bw, bh);
    for &(px, py) in &region.pixels {
        mask.set(px - bx, py - by, true);
    }
    Ok(Patch {
        rgb,
        mask,
        class_id: region.class_id,
        source_id: region.source_id.clone(),
        source_box: region.bounding_box,
    })
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct BankSummary {
    pub patch_count: usize,
    pub total_area: u64,
    pub min_area: Option<u64>,
    pub max_area: Option<u64>,
    /// Count of patches per power-of-two area bucket [2^i, 2^(i+1)).
    pub area_histogram: Vec<(u64, usize)>,
}

#[derive(Debug, Clone, Default)]
pub struct PatchBank {
    pub patches: Vec<Patch>,
}

impl PatchBank {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn summary(&self) -> BankSummary {
        let areas: Vec<u64> = self.patches.iter().map(|p| p.mask_area()).collect();
        let mut histogram: Vec<(u64, usize)> = Vec::new();
        for &a in &areas {
            let bucket = 1u64 << (63 - a.max(1).leading_zeros());
            match histogram.iter_mut().find(|(b, _)| *b == bucket) {
                Some((_, n)) => *n += 1,
                None => histogram.push((bucket, 1)),
            }
        }
        histogram.sort_unstable();
        BankSummary {
            patch_count: self.patches.len(),
            total_area: areas.iter().sum(),
            min_area: areas.iter().min().copied(),
            max_area: areas.iter().max().copied(),
            area_histogram: histogram,
        }
    }
}

/// Extract every qualifying source-class region from every pair into a bank
/// ordered by (source_id, bounding_box).
pub fn build_bank(
    pairs: &[PairDescriptor],
    scheme: &ClassScheme,
    min_area: usize,
    connectivity: Connectivity,
) -> Result<PatchBank> {
    let mut patches = Vec::new();
    for pair in pairs {
        let (image, label) = dataset_io::load_pair(pair, scheme)?;
        for mut region in extract_components(&label, scheme.source_class, connectivity, min_area) {
            region.source_id = pair.id.clone();
            patches.push(crop_patch(&image, &label, &region)?);
        }
    }
    patches.sort_by(|a, b| {
        (&a.source_id, a.source_box).cmp(&(&b.source_id, b.source_box))
    });
    Ok(PatchBank { patches })
}

#[derive(Serialize, Deserialize)]
struct BankIndexEntry {
    source_id: String,
    bounding_box: (u32, u32, u32, u32),
    class_id: u8,
}

/// Write the bank as per-patch PNG pairs plus a JSON index.
pub fn save_bank(bank: &PatchBank, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut index = Vec::with_capacity(bank.len());
    for (i, patch) in bank.patches.iter().enumerate() {
        let rgb_bytes: Vec<u8> = patch
            .rgb
            .data
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect();
        let rgb_img = image::RgbImage::from_raw(patch.rgb.width, patch.rgb.height, rgb_bytes)
            .expect("rgb buffer length");
        let rgb_path = dir.join(format!("{i:05}_rgb.png"));
        rgb_img.save(&rgb_path).map_err(|e| Error::Io {
            path: rgb_path.clone(),
            source: std::io::Error::other(e),
        })?;

        let mask_bytes: Vec<u8> = patch.mask.data.iter().map(|&b| b as u8).collect();
        let mask_img =
            image::GrayImage::from_raw(patch.mask.width, patch.mask.height, mask_bytes)
                .expect("mask buffer length");
        let mask_path = dir.join(format!("{i:05}_mask.png"));
        mask_img.save(&mask_path).map_err(|e| Error::Io {
            path: mask_path.clone(),
            source: std::io::Error::other(e),
        })?;
        index.push(BankIndexEntry {
            source_id: patch.source_id.clone(),
            bounding_box: patch.source_box,
            class_id: patch.class_id,
        });
    }
    let index_path = dir.join("index.json");
    let json = serde_json::to_string_pretty(&index).expect("bank index serializes");
    std::fs::write(&index_path, json).map_err(|e| Error::Io {
        path: index_path,
        source: e,
    })?;
    Ok(())
}

/// Load a bank archive written by [`save_bank`].
pub fn load_bank(dir: &Path) -> Result<PatchBank> {
    let index_path = dir.join("index.json");
    let text = std::fs::read_to_string(&index_path).map_err(|e| Error::Io {
        path: index_path.clone(),
        source: e,
    })?;
    let index: Vec<BankIndexEntry> =
        serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    let mut patches = Vec::with_capacity(index.len());
    for (i, entry) in index.into_iter().enumerate() {
        let rgb_path = dir.join(format!("{i:05}_rgb.png"));
        let mask_path = dir.join(format!("{i:05}_mask.png"));
        let rgb = image::open(&rgb_path)
            .map_err(|e| Error::Decode {
                path: rgb_path.clone(),
                source: e,
            })?
            .to_rgb8();
        let mask = image::open(&mask_path)
            .map_err(|e| Error::Decode {
                path: mask_path.clone(),
                source: e,
            })?
            .to_luma8();
        let rgb = ImageRgb {
            width: rgb.width(),
            height: rgb.height(),
            data: rgb.as_raw().iter().map(|&b| b as f64 / 255.0).collect(),
        };
        let mask = BinaryMask {
            width: mask.width(),
            height: mask.height(),
            data: mask.as_raw().iter().map(|&b| b != 0).collect(),
        };
        patches.push(Patch {
            rgb,
            mask,
            class_id: entry.class_id,
            source_id: entry.source_id,
            source_box: entry.bounding_box,
        });
    }
    Ok(PatchBank { patches })
}
