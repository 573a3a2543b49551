//! Constraint-checked placement search and patch compositing.

use rand::Rng;

use crate::dataset_io::{AugConfig, ImageRgb, LabelMap};
use crate::geom_transform::{sample_params, transform_patch, AugParams};
use crate::patch_bank::{BinaryMask, Patch, PatchBank};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlacementConstraints {
    pub valid_class: u8,
    pub margin: u32,
    pub max_attempts: u32,
}

impl PlacementConstraints {
    pub fn from_config(config: &AugConfig) -> Self {
        Self {
            valid_class: config.class_scheme.valid_class,
            margin: config.margin,
            max_attempts: config.max_attempts,
        }
    }
}

/// A placement is valid when the patch box fits inside the image and every
/// target pixel under a set mask pixel, dilated by `margin` (Chebyshev
/// distance, clipped at image borders), carries the valid class.
pub fn is_valid_placement(
    target_label: &LabelMap,
    patch: &Patch,
    x: u32,
    y: u32,
    c: &PlacementConstraints,
) -> bool {
    let (pw, ph) = (patch.width(), patch.height());
    if x.checked_add(pw).map_or(true, |e| e > target_label.width)
        || y.checked_add(ph).map_or(true, |e| e > target_label.height)
    {
        return false;
    }
    let m = c.margin as i64;
    for py in 0..ph {
        for px in 0..pw {
            if !patch.mask.get(px, py) {
                continue;
            }
            let tx = (x + px) as i64;
            let ty = (y + py) as i64;
            for dy in -m..=m {
                for dx in -m..=m {
                    let nx = tx + dx;
                    let ny = ty + dy;
                    if nx < 0
                        || ny < 0
                        || nx >= target_label.width as i64
                        || ny >= target_label.height as i64
                    {
                        continue;
                    }
                    if target_label.get(nx as u32, ny as u32) != c.valid_class {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// Rejection-sample up to `max_attempts` uniform in-bounds positions,
/// returning the first valid one and the number of draws used.
pub fn find_placement_counted(
    rng: &mut impl Rng,
    target_label: &LabelMap,
    patch: &Patch,
    c: &PlacementConstraints,
) -> (Option<(u32, u32)>, u32) {
    let (pw, ph) = (patch.width(), patch.height());
    if pw > target_label.width || ph > target_label.height {
        return (None, 0);
    }
    let max_x = target_label.width - pw;
    let max_y = target_label.height - ph;
    for attempt in 1..=c.max_attempts {
        let x = if max_x == 0 { 0 } else { rng.gen_range(0..=max_x) };
        let y = if max_y == 0 { 0 } else { rng.gen_range(0..=max_y) };
        if is_valid_placement(target_label, patch, x, y, c) {
            return (Some((x, y)), attempt);
        }
    }
    (None, c.max_attempts)
}

pub fn find_placement(
    rng: &mut impl Rng,
    target_label: &LabelMap,
    patch: &Patch,
    c: &PlacementConstraints,
) -> Option<(u32, u32)> {
    find_placement_counted(rng, target_label, patch, c).0
}

/// Composite the patch at (x, y): inside the mask, image pixels take the
/// patch RGB and labels take the patch class; outside, both are untouched.
/// Also returns the mask placed on a full-size zero field.
pub fn composite(
    image: &ImageRgb,
    label: &LabelMap,
    patch: &Patch,
    x: u32,
    y: u32,
) -> (ImageRgb, LabelMap, BinaryMask) {
    let mut out_image = image.clone();
    let mut out_label = label.clone();
    let mut full_mask = BinaryMask::new(image.width, image.height);
    for py in 0..patch.height() {
        for px in 0..patch.width() {
            if patch.mask.get(px, py) {
                let tx = x + px;
                let ty = y + py;
                out_image.set_pixel(tx, ty, patch.rgb.pixel(px, py));
                out_label.set(tx, ty, patch.class_id);
                full_mask.set(tx, ty, true);
            }
        }
    }
    (out_image, out_label, full_mask)
}

/// Outcome of one sample-transform-place-composite round.
#[derive(Debug, Clone)]
pub struct PasteEvent {
    pub params: AugParams,
    pub attempts: u32,
    pub mask_area: u64,
    pub success: bool,
    /// Placed mask for successful events; the support for refinement.
    pub full_mask: Option<BinaryMask>,
}

/// Run up to k paste rounds against one image. The label map is updated after
/// each paste, so later placements avoid earlier pastes automatically. Failed
/// rounds (no valid placement, or a transform that collapsed the mask) are
/// recorded and skipped.
pub fn paste_k(
    rng: &mut impl Rng,
    image: &ImageRgb,
    label: &LabelMap,
    bank: &PatchBank,
    config: &AugConfig,
) -> (ImageRgb, LabelMap, Vec<PasteEvent>) {
    let mut image = image.clone();
    let mut label = label.clone();
    let mut events = Vec::new();
    if bank.is_empty() {
        return (image, label, events);
    }
    let constraints = PlacementConstraints::from_config(config);
    for _ in 0..config.patches_per_image {
        let params = sample_params(rng, config, bank.len()).expect("bank checked non-empty");
        let transformed = match transform_patch(&bank.patches[params.patch_ref], params.s, params.theta)
        {
            Ok(p) => p,
            Err(_) => {
                events.push(PasteEvent {
                    params,
                    attempts: 0,
                    mask_area: 0,
                    success: false,
                    full_mask: None,
                });
                continue;
            }
        };
        let (pos, attempts) = find_placement_counted(rng, &label, &transformed, &constraints);
        match pos {
            Some((x, y)) => {
                let (new_image, new_label, full_mask) =
                    composite(&image, &label, &transformed, x, y);
                image = new_image;
                label = new_label;
                events.push(PasteEvent {
                    params: AugParams { x, y, ..params },
                    attempts,
                    mask_area: full_mask.count_ones(),
                    success: true,
                    full_mask: Some(full_mask),
                });
            }
            None => {
                events.push(PasteEvent {
                    params,
                    attempts,
                    mask_area: 0,
                    success: false,
                    full_mask: None,
                });
            }
        }
    }
    (image, label, events)
}
