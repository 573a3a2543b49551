//! Loading, validation, pairing and writing of image/label-mask files,
//! plus the run-configuration schema.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::random_projection::RpConfig;

/// H x W x 3 raster with per-channel intensities in [0, 1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageRgb {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl ImageRgb {
    pub fn new(width: u32, height: u32, data: Vec<f64>) -> Result<Self> {
        if data.len() != width as usize * height as usize * 3 {
            return Err(Error::InvalidArgument(format!(
                "image data length {} does not match {}x{}x3",
                data.len(),
                width,
                height
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!(
                "intensity {v} outside [0,1]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize * 3],
        }
    }

    #[inline]
    pub fn index(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [f64; 3] {
        let i = self.index(x, y);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, px: [f64; 3]) {
        let i = self.index(x, y);
        self.data[i..i + 3].copy_from_slice(&px);
    }
}

/// H x W raster of class identifiers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub width: u32,
    pub height: u32,
    pub data: Vec<u8>,
}

impl LabelMap {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::InvalidArgument(format!(
                "label data length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, value: u8) -> Self {
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: u8) {
        self.data[y as usize * self.width as usize + x as usize] = value;
    }

    /// Per-class pixel counts, indexed by class id.
    pub fn histogram(&self, class_count: usize) -> Vec<u64> {
        let mut counts = vec![0u64; class_count];
        for &v in &self.data {
            if (v as usize) < class_count {
                counts[v as usize] += 1;
            }
        }
        counts
    }
}

/// Declared class ids, the rare source class to copy and the class onto
/// which patches may be pasted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassScheme {
    pub class_count: usize,
    pub names: Vec<String>,
    pub source_class: u8,
    pub valid_class: u8,
    pub excluded_classes: Vec<u8>,
}

impl ClassScheme {
    pub fn validate(&self) -> Result<()> {
        if self.class_count == 0 {
            return Err(Error::Config("classes.count must be >= 1".into()));
        }
        if (self.source_class as usize) >= self.class_count {
            return Err(Error::Config(format!(
                "classes.source_class {} out of range (count {})",
                self.source_class, self.class_count
            )));
        }
        if (self.valid_class as usize) >= self.class_count {
            return Err(Error::Config(format!(
                "classes.valid_class {} out of range (count {})",
                self.valid_class, self.class_count
            )));
        }
        if self.source_class == self.valid_class {
            return Err(Error::Config(
                "classes.source_class must differ from classes.valid_class".into(),
            ));
        }
        if self.names.len() != self.class_count {
            return Err(Error::Config(format!(
                "classes.names has {} entries, expected {}",
                self.names.len(),
                self.class_count
            )));
        }
        if let Some(c) = self
            .excluded_classes
            .iter()
            .find(|c| (**c as usize) >= self.class_count)
        {
            return Err(Error::Config(format!(
                "classes.excluded id {c} out of range (count {})",
                self.class_count
            )));
        }
        Ok(())
    }

    pub fn is_excluded(&self, class_id: u8) -> bool {
        self.excluded_classes.contains(&class_id)
    }
}

impl Default for ClassScheme {
    fn default() -> Self {
        Self {
            class_count: 3,
            names: vec!["healthy".into(), "lesion".into(), "damage".into()],
            source_class: 2,
            valid_class: 0,
            excluded_classes: Vec::new(),
        }
    }
}

/// One image/mask file pair, keyed by the shared filename stem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairDescriptor {
    pub image_path: PathBuf,
    pub mask_path: PathBuf,
    pub id: String,
}

/// Full run configuration with recommended defaults.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AugConfig {
    pub seed: u64,
    pub patches_per_image: u32,
    pub scale_range: (f64, f64),
    pub rotation_range: (f64, f64),
    pub rp: RpConfig,
    pub min_patch_area: usize,
    pub max_attempts: u32,
    pub margin: u32,
    pub class_scheme: ClassScheme,
}

impl Default for AugConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            patches_per_image: 1,
            scale_range: (0.8, 1.2),
            rotation_range: (0.0, 360.0),
            rp: RpConfig::default(),
            min_patch_area: 16,
            max_attempts: 100,
            margin: 0,
            class_scheme: ClassScheme::default(),
        }
    }
}

impl AugConfig {
    pub fn validate(&self) -> Result<()> {
        let (s_min, s_max) = self.scale_range;
        if !(s_min > 0.0 && s_min <= s_max) {
            return Err(Error::Config(format!(
                "scale_range [{s_min}, {s_max}] requires 0 < s_min <= s_max"
            )));
        }
        let (t_min, t_max) = self.rotation_range;
        if !(0.0..=360.0).contains(&t_min) || !(0.0..=360.0).contains(&t_max) || t_min > t_max {
            return Err(Error::Config(format!(
                "rotation_range [{t_min}, {t_max}] must lie within [0, 360] with min <= max"
            )));
        }
        if self.max_attempts < 1 {
            return Err(Error::Config("max_attempts must be >= 1".into()));
        }
        self.rp.validate()?;
        self.class_scheme.validate()?;
        Ok(())
    }
}

// Raw JSON schema. Unknown keys are rejected so typos in sweeps fail loudly.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    patches_per_image: Option<u32>,
    scale_range: Option<[f64; 2]>,
    rotation_range: Option<[f64; 2]>,
    filter_size: Option<[u32; 2]>,
    sigma: Option<f64>,
    alpha: Option<f64>,
    min_patch_area: Option<usize>,
    max_attempts: Option<u32>,
    margin: Option<u32>,
    classes: Option<RawClasses>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClasses {
    count: Option<usize>,
    names: Option<Vec<String>>,
    source_class: Option<u8>,
    valid_class: Option<u8>,
    excluded: Option<Vec<u8>>,
}

/// Parse a JSON configuration document. Unspecified fields take the defaults
/// (k=1, 3x3 filter, sigma=0.20, alpha=0.8, scale [0.8,1.2], rotation [0,360)).
pub fn parse_config(text: &str) -> Result<AugConfig> {
    let raw: RawConfig =
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let mut cfg = AugConfig::default();
    if let Some(v) = raw.seed {
        cfg.seed = v;
    }
    if let Some(v) = raw.patches_per_image {
        cfg.patches_per_image = v;
    }
    if let Some([a, b]) = raw.scale_range {
        cfg.scale_range = (a, b);
    }
    if let Some([a, b]) = raw.rotation_range {
        cfg.rotation_range = (a, b);
    }
    if let Some([h, w]) = raw.filter_size {
        cfg.rp.h = h as usize;
        cfg.rp.w = w as usize;
    }
    if let Some(v) = raw.sigma {
        cfg.rp.sigma = v;
    }
    if let Some(v) = raw.alpha {
        cfg.rp.alpha = v;
    }
    if let Some(v) = raw.min_patch_area {
        cfg.min_patch_area = v;
    }
    if let Some(v) = raw.max_attempts {
        cfg.max_attempts = v;
    }
    if let Some(v) = raw.margin {
        cfg.margin = v;
    }
    if let Some(classes) = raw.classes {
        let mut scheme = ClassScheme::default();
        if let Some(count) = classes.count {
            scheme.class_count = count;
            scheme.names = (0..count).map(|i| format!("class_{i}")).collect();
        }
        if let Some(names) = classes.names {
            scheme.names = names;
        }
        if let Some(v) = classes.source_class {
            scheme.source_class = v;
        }
        if let Some(v) = classes.valid_class {
            scheme.valid_class = v;
        }
        if let Some(v) = classes.excluded {
            scheme.excluded_classes = v;
        }
        cfg.class_scheme = scheme;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn png_stems(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut stems = BTreeMap::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        let path = entry.path();
        let is_png = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.eq_ignore_ascii_case("png"))
            .unwrap_or(false);
        if !is_png {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            stems.insert(stem.to_string(), path.clone());
        }
    }
    Ok(stems)
}

/// Pair images with masks by filename stem. Orphans on either side are an
/// error naming every offending stem.
pub fn scan_dataset(image_dir: &Path, mask_dir: &Path) -> Result<Vec<PairDescriptor>> {
    let images = png_stems(image_dir)?;
    let masks = png_stems(mask_dir)?;

    let mut orphans = Vec::new();
    for stem in images.keys() {
        if !masks.contains_key(stem) {
            orphans.push(format!("{stem} (no mask)"));
        }
    }
    for stem in masks.keys() {
        if !images.contains_key(stem) {
            orphans.push(format!("{stem} (no image)"));
        }
    }
    if !orphans.is_empty() {
        orphans.sort();
        return Err(Error::Unpaired(orphans.join(", ")));
    }

    // BTreeMap iteration already sorts by id.
    Ok(images
        .into_iter()
        .map(|(id, image_path)| PairDescriptor {
            mask_path: masks[&id].clone(),
            image_path,
            id,
        })
        .collect())
}

/// Decode an image/mask pair, scale intensities to [0,1] and validate labels.
pub fn load_pair(desc: &PairDescriptor, scheme: &ClassScheme) -> Result<(ImageRgb, LabelMap)> {
    let img = image::open(&desc.image_path)
        .map_err(|e| Error::Decode {
            path: desc.image_path.clone(),
            source: e,
        })?
        .to_rgb8();
    let mask = image::open(&desc.mask_path)
        .map_err(|e| Error::Decode {
            path: desc.mask_path.clone(),
            source: e,
        })?
        .to_luma8();

    if img.dimensions() != mask.dimensions() {
        return Err(Error::DimensionMismatch {
            id: desc.id.clone(),
            image_w: img.width(),
            image_h: img.height(),
            mask_w: mask.width(),
            mask_h: mask.height(),
        });
    }

    let data = img.as_raw().iter().map(|&b| b as f64 / 255.0).collect();
    let image = ImageRgb {
        width: img.width(),
        height: img.height(),
        data,
    };

    let labels = mask.as_raw().clone();
    if let Some((index, &value)) = labels
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
    let label = LabelMap {
        width: mask.width(),
        height: mask.height(),
        data: labels,
    };
    Ok((image, label))
}

/// Encode intensities as round(v*255) and labels as raw class ids.
pub fn write_pair(
    image: &ImageRgb,
    label: &LabelMap,
    image_dir: &Path,
    mask_dir: &Path,
    id: &str,
) -> Result<(PathBuf, PathBuf)> {
    if id.is_empty() {
        return Err(Error::InvalidArgument("empty pair id".into()));
    }
    if image.width != label.width || image.height != label.height {
        return Err(Error::DimensionMismatch {
            id: id.to_string(),
            image_w: image.width,
            image_h: image.height,
            mask_w: label.width,
            mask_h: label.height,
        });
    }

    let bytes: Vec<u8> = image
        .data
        .iter()
        .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    let img = image::RgbImage::from_raw(image.width, image.height, bytes)
        .expect("buffer length checked by ImageRgb invariant");
    let mask = image::GrayImage::from_raw(label.width, label.height, label.data.clone())
        .expect("buffer length checked by LabelMap invariant");

    let image_path = image_dir.join(format!("{id}.png"));
    let mask_path = mask_dir.join(format!("{id}.png"));
    img.save(&image_path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::Io {
            path: image_path.clone(),
            source: io,
        },
        other => Error::Decode {
            path: image_path.clone(),
            source: other,
        },
    })?;
    mask.save(&mask_path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::Io {
            path: mask_path.clone(),
            source: io,
        },
        other => Error::Decode {
            path: mask_path.clone(),
            source: other,
        },
    })?;
    Ok((image_path, mask_path))
}
