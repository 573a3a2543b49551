//! Random rotation and scaling of patches: bilinear resampling for RGB,
//! nearest-neighbor for the binary mask.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset_io::{AugConfig, ImageRgb};
use crate::error::{Error, Result};
use crate::patch_bank::{BinaryMask, Patch};

/// One pasting event's parameters plus patch identity and RNG provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugParams {
    pub x: u32,
    pub y: u32,
    pub s: f64,
    pub theta: f64,
    pub patch_ref: usize,
    pub rng_stream: u64,
}

/// Draw scale, rotation and patch index uniformly from the configured ranges.
/// Placement (x, y) is filled in by the paste engine.
pub fn sample_params(
    rng: &mut impl Rng,
    config: &AugConfig,
    bank_size: usize,
) -> Result<AugParams> {
    if bank_size == 0 {
        return Err(Error::EmptyBank);
    }
    let (s_min, s_max) = config.scale_range;
    let s = if s_min == s_max {
        s_min
    } else {
        rng.gen_range(s_min..=s_max)
    };
    let (t_min, t_max) = config.rotation_range;
    let theta = if t_min == t_max {
        t_min
    } else {
        rng.gen_range(t_min..t_max)
    };
    let patch_ref = rng.gen_range(0..bank_size);
    Ok(AugParams {
        x: 0,
        y: 0,
        s,
        theta,
        patch_ref,
        rng_stream: 0,
    })
}

// Exact trig for right-angle rotations so they remain pure pixel permutations.
fn sin_cos_degrees(theta: f64) -> (f64, f64) {
    let quarter = theta.rem_euclid(360.0);
    if quarter % 90.0 == 0.0 {
        match (quarter / 90.0) as u32 % 4 {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        }
    } else {
        theta.to_radians().sin_cos()
    }
}

fn bilinear(image: &ImageRgb, fx: f64, fy: f64) -> [f64; 3] {
    let max_x = (image.width - 1) as f64;
    let max_y = (image.height - 1) as f64;
    let fx = fx.clamp(0.0, max_x);
    let fy = fy.clamp(0.0, max_y);
    let x0 = fx.floor() as u32;
    let y0 = fy.floor() as u32;
    let x1 = (x0 + 1).min(image.width - 1);
    let y1 = (y0 + 1).min(image.height - 1);
    let tx = fx - x0 as f64;
    let ty = fy - y0 as f64;

    let p00 = image.pixel(x0, y0);
    let p10 = image.pixel(x1, y0);
    let p01 = image.pixel(x0, y1);
    let p11 = image.pixel(x1, y1);
    let mut out = [0.0; 3];
    for c in 0..3 {
        let top = p00[c] * (1.0 - tx) + p10[c] * tx;
        let bottom = p01[c] * (1.0 - tx) + p11[c] * tx;
        out[c] = top * (1.0 - ty) + bottom * ty;
    }
    out
}

/// Rotate by `theta` degrees about the patch center and scale by `s`, then
/// re-crop to the tight box of the transformed mask.
pub fn transform_patch(patch: &Patch, s: f64, theta: f64) -> Result<Patch> {
    if s <= 0.0 {
        return Err(Error::InvalidArgument(format!("scale {s} must be > 0")));
    }
    let (sin_t, cos_t) = sin_cos_degrees(theta);
    let (iw, ih) = (patch.width(), patch.height());
    let cx_in = (iw as f64 - 1.0) / 2.0;
    let cy_in = (ih as f64 - 1.0) / 2.0;

    // Forward-map the corners of the patch rectangle (pixels as unit
    // squares) to size the output canvas.
    let mut half_w = 0.0f64;
    let mut half_h = 0.0f64;
    for (rx, ry) in [
        (-(iw as f64) / 2.0, -(ih as f64) / 2.0),
        (iw as f64 / 2.0, -(ih as f64) / 2.0),
        (-(iw as f64) / 2.0, ih as f64 / 2.0),
        (iw as f64 / 2.0, ih as f64 / 2.0),
    ] {
        let qx = s * (cos_t * rx - sin_t * ry);
        let qy = s * (sin_t * rx + cos_t * ry);
        half_w = half_w.max(qx.abs());
        half_h = half_h.max(qy.abs());
    }
    // The epsilon guard keeps exact-integer extents (right angles, s=1) from
    // gaining a row or column through floating-point noise.
    let ow = ((2.0 * half_w - 1e-9).ceil() as u32).max(1);
    let oh = ((2.0 * half_h - 1e-9).ceil() as u32).max(1);
    let cx_out = (ow as f64 - 1.0) / 2.0;
    let cy_out = (oh as f64 - 1.0) / 2.0;

    let mut rgb = ImageRgb::filled(ow, oh, 0.0);
    let mut mask = BinaryMask::new(ow, oh);
    for oy in 0..oh {
        for ox in 0..ow {
            // Inverse map: un-rotate and un-scale the output pixel center.
            let vx = ox as f64 - cx_out;
            let vy = oy as f64 - cy_out;
            let sx = (cos_t * vx + sin_t * vy) / s + cx_in;
            let sy = (-sin_t * vx + cos_t * vy) / s + cy_in;

            let nx = sx.round();
            let ny = sy.round();
            let inside = nx >= 0.0 && ny >= 0.0 && nx < iw as f64 && ny < ih as f64;
            if inside && patch.mask.get(nx as u32, ny as u32) {
                mask.set(ox, oy, true);
            }
            if sx >= -1.0 && sy >= -1.0 && sx <= iw as f64 && sy <= ih as f64 {
                rgb.set_pixel(ox, oy, bilinear(&patch.rgb, sx, sy));
            }
        }
    }

    let Some((bx0, by0, bx1, by1)) = mask.bounding_box() else {
        return Err(Error::TransformCollapsed);
    };
    let (cw, ch) = (bx1 - bx0 + 1, by1 - by0 + 1);
    let mut out_rgb = ImageRgb::filled(cw, ch, 0.0);
    let mut out_mask = BinaryMask::new(cw, ch);
    for y in 0..ch {
        for x in 0..cw {
            out_rgb.set_pixel(x, y, rgb.pixel(bx0 + x, by0 + y));
            out_mask.set(x, y, mask.get(bx0 + x, by0 + y));
        }
    }
    Ok(Patch {
        rgb: out_rgb,
        mask: out_mask,
        class_id: patch.class_id,
        source_id: patch.source_id.clone(),
        source_box: patch.source_box,
    })
}
