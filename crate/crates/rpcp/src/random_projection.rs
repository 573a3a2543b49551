//! Refinement of pasted regions: a cross-channel convolution with Gaussian
//! random weights, optional restandardization, and alpha-blending inside the
//! pasted mask.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset_io::ImageRgb;
use crate::error::{Error, Result};
use crate::patch_bank::BinaryMask;

/// Random-projection settings: filter size h x w, weight std sigma and the
/// blend coefficient alpha.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpConfig {
    pub h: usize,
    pub w: usize,
    pub sigma: f64,
    pub alpha: f64,
    pub restandardize: bool,
}

impl Default for RpConfig {
    fn default() -> Self {
        Self {
            h: 3,
            w: 3,
            sigma: 0.20,
            alpha: 0.8,
            restandardize: true,
        }
    }
}

impl RpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.h == 0 || self.w == 0 || self.h % 2 == 0 || self.w % 2 == 0 {
            return Err(Error::Config(format!(
                "filter_size [{}, {}] must be odd and >= 1",
                self.h, self.w
            )));
        }
        if self.sigma < 0.0 {
            return Err(Error::Config(format!("sigma {} must be >= 0", self.sigma)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!(
                "alpha {} must lie in [0, 1]",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// h x w x 3 x 3 convolution kernel, indexed (dy, dx, c_in, c_out).
#[derive(Debug, Clone, PartialEq)]
pub struct RpFilter {
    pub h: usize,
    pub w: usize,
    pub weights: Vec<f64>,
}

impl RpFilter {
    pub fn zeros(h: usize, w: usize) -> Self {
        Self {
            h,
            w,
            weights: vec![0.0; h * w * 9],
        }
    }

    /// Delta kernel: center tap, identity channel mixing.
    pub fn identity(h: usize, w: usize) -> Self {
        let mut f = Self::zeros(h, w);
        for c in 0..3 {
            *f.at_mut(h / 2, w / 2, c, c) = 1.0;
        }
        f
    }

    #[inline]
    pub fn at(&self, dy: usize, dx: usize, c_in: usize, c_out: usize) -> f64 {
        self.weights[((dy * self.w + dx) * 3 + c_in) * 3 + c_out]
    }

    #[inline]
    pub fn at_mut(&mut self, dy: usize, dx: usize, c_in: usize, c_out: usize) -> &mut f64 {
        &mut self.weights[((dy * self.w + dx) * 3 + c_in) * 3 + c_out]
    }
}

/// Raw convolution output; values are unbounded reals.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRaster {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl RawRaster {
    pub fn from_image(image: &ImageRgb) -> Self {
        Self {
            width: image.width,
            height: image.height,
            data: image.data.clone(),
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32, c: usize) -> f64 {
        self.data[(y as usize * self.width as usize + x as usize) * 3 + c]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, c: usize, v: f64) {
        self.data[(y as usize * self.width as usize + x as usize) * 3 + c] = v;
    }
}

/// Draw every filter weight i.i.d. from N(0, sigma^2).
pub fn sample_filter(rng: &mut impl Rng, cfg: &RpConfig) -> RpFilter {
    let mut filter = RpFilter::zeros(cfg.h, cfg.w);
    if cfg.sigma == 0.0 {
        return filter;
    }
    let normal = Normal::new(0.0, cfg.sigma).expect("sigma validated non-negative");
    for w in &mut filter.weights {
        *w = normal.sample(rng);
    }
    filter
}

// Mirror across the edge pixel (reflect-101), so index -1 maps to 1.
#[inline]
fn reflect(i: i64, n: i64) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i.rem_euclid(period);
    if m >= n {
        (period - m) as usize
    } else {
        m as usize
    }
}

fn convolve_at(image: &ImageRgb, filter: &RpFilter, x: u32, y: u32) -> [f64; 3] {
    let (iw, ih) = (image.width as i64, image.height as i64);
    let (ry, rx) = (filter.h as i64 / 2, filter.w as i64 / 2);
    let mut out = [0.0; 3];
    for dy in 0..filter.h {
        let sy = reflect(y as i64 + dy as i64 - ry, ih);
        for dx in 0..filter.w {
            let sx = reflect(x as i64 + dx as i64 - rx, iw);
            let base = (sy * image.width as usize + sx) * 3;
            for c_in in 0..3 {
                let v = image.data[base + c_in];
                for (c_out, o) in out.iter_mut().enumerate() {
                    *o += filter.at(dy, dx, c_in, c_out) * v;
                }
            }
        }
    }
    out
}

/// Full-image cross-channel convolution with reflect padding.
pub fn convolve(image: &ImageRgb, filter: &RpFilter) -> RawRaster {
    let mut raw = RawRaster {
        width: image.width,
        height: image.height,
        data: vec![0.0; image.data.len()],
    };
    for y in 0..image.height {
        for x in 0..image.width {
            let px = convolve_at(image, filter, x, y);
            for (c, v) in px.iter().enumerate() {
                raw.set(x, y, c, *v);
            }
        }
    }
    raw
}

/// Convolve only the given pixel box, reading from the full image, writing
/// into `raw`. Values inside the box match full-image convolution exactly.
pub fn convolve_region(
    image: &ImageRgb,
    filter: &RpFilter,
    raw: &mut RawRaster,
    x0: u32,
    y0: u32,
    x1: u32,
    y1: u32,
) {
    for y in y0..=y1 {
        for x in x0..=x1 {
            let px = convolve_at(image, filter, x, y);
            for (c, v) in px.iter().enumerate() {
                raw.set(x, y, c, *v);
            }
        }
    }
}

fn masked_moments(get: impl Fn(u32, u32, usize) -> f64, mask: &BinaryMask) -> [(f64, f64); 3] {
    let mut sums = [0.0f64; 3];
    let mut sq_sums = [0.0f64; 3];
    let mut n = 0u64;
    for y in 0..mask.height {
        for x in 0..mask.width {
            if mask.get(x, y) {
                n += 1;
                for c in 0..3 {
                    let v = get(x, y, c);
                    sums[c] += v;
                    sq_sums[c] += v * v;
                }
            }
        }
    }
    let n = n as f64;
    let mut out = [(0.0, 0.0); 3];
    for c in 0..3 {
        let mean = sums[c] / n;
        let var = (sq_sums[c] / n - mean * mean).max(0.0);
        out[c] = (mean, var.sqrt());
    }
    out
}

/// Affinely map `raw` per channel so its mean/std over mask pixels match the
/// reference's, then clip to [0,1]. A near-zero raw std degrades to a pure
/// mean shift.
pub fn restandardize(raw: &RawRaster, reference: &ImageRgb, mask: &BinaryMask) -> ImageRgb {
    let raw_m = masked_moments(|x, y, c| raw.get(x, y, c), mask);
    let ref_m = masked_moments(|x, y, c| reference.pixel(x, y)[c], mask);

    let mut out = ImageRgb {
        width: raw.width,
        height: raw.height,
        data: vec![0.0; raw.data.len()],
    };
    for c in 0..3 {
        let (raw_mean, raw_std) = raw_m[c];
        let (ref_mean, ref_std) = ref_m[c];
        let gain = if raw_std < 1e-6 { 1.0 } else { ref_std / raw_std };
        for i in 0..raw.data.len() / 3 {
            let v = raw.data[i * 3 + c];
            let mapped = (v - raw_mean) * gain + ref_mean;
            out.data[i * 3 + c] = mapped.clamp(0.0, 1.0);
        }
    }
    out
}

/// Apply the random-projection refinement to the pasted pixels of `image`.
///
/// sigma = 0 disables refinement entirely. Otherwise one filter is drawn per
/// call, the convolution is evaluated on the mask's bounding box expanded by
/// the filter radius, and the result is blended with coefficient alpha inside
/// the mask only.
pub fn refine(image: &ImageRgb, full_mask: &BinaryMask, cfg: &RpConfig, rng: &mut impl Rng) -> ImageRgb {
    if cfg.sigma == 0.0 {
        return image.clone();
    }
    let Some((bx0, by0, bx1, by1)) = full_mask.bounding_box() else {
        return image.clone();
    };
    let filter = sample_filter(rng, cfg);

    let (ry, rx) = (cfg.h as u32 / 2, cfg.w as u32 / 2);
    let x0 = bx0.saturating_sub(rx);
    let y0 = by0.saturating_sub(ry);
    let x1 = (bx1 + rx).min(image.width - 1);
    let y1 = (by1 + ry).min(image.height - 1);

    let mut raw = RawRaster::from_image(image);
    convolve_region(image, &filter, &mut raw, x0, y0, x1, y1);

    let perturbed: RawRaster = if cfg.restandardize {
        RawRaster::from_image(&restandardize(&raw, image, full_mask))
    } else {
        raw
    };

    let mut out = image.clone();
    for y in 0..image.height {
        for x in 0..image.width {
            if full_mask.get(x, y) {
                let mut px = image.pixel(x, y);
                for (c, v) in px.iter_mut().enumerate() {
                    let blended = cfg.alpha * perturbed.get(x, y, c) + (1.0 - cfg.alpha) * *v;
                    *v = blended.clamp(0.0, 1.0);
                }
                out.set_pixel(x, y, px);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_image(rng: &mut impl Rng, w: u32, h: u32) -> ImageRgb {
        let data = (0..w as usize * h as usize * 3)
            .map(|_| rng.gen::<f64>())
            .collect();
        ImageRgb::new(w, h, data).unwrap()
    }

    #[test]
    fn zero_sigma_yields_zero_filter() {
        let cfg = RpConfig {
            sigma: 0.0,
            ..RpConfig::default()
        };
        let f = sample_filter(&mut rng(1), &cfg);
        assert!(f.weights.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn filter_weight_count() {
        let f = sample_filter(&mut rng(1), &RpConfig::default());
        assert_eq!(f.weights.len(), 81);
    }

    #[test]
    fn zero_filter_zero_output() {
        let img = random_image(&mut rng(2), 5, 4);
        let raw = convolve(&img, &RpFilter::zeros(3, 3));
        assert!(raw.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_filter_reproduces_input() {
        let img = random_image(&mut rng(3), 6, 5);
        let raw = convolve(&img, &RpFilter::identity(3, 3));
        for (a, b) in raw.data.iter().zip(&img.data) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn one_by_one_filter_is_channel_matrix_product() {
        // Single pixel image, hand-chosen 3x3 channel matrix.
        let img = ImageRgb::new(1, 1, vec![0.2, 0.5, 0.9]).unwrap();
        let mut f = RpFilter::zeros(1, 1);
        let m = [[1.0, 2.0, 3.0], [0.5, -1.0, 0.0], [0.0, 0.25, 4.0]];
        for c_in in 0..3 {
            for c_out in 0..3 {
                *f.at_mut(0, 0, c_in, c_out) = m[c_out][c_in];
            }
        }
        let raw = convolve(&img, &f);
        // Row-by-row matrix-vector product by hand.
        let expect = [
            1.0 * 0.2 + 2.0 * 0.5 + 3.0 * 0.9,
            0.5 * 0.2 - 1.0 * 0.5 + 0.0 * 0.9,
            0.0 * 0.2 + 0.25 * 0.5 + 4.0 * 0.9,
        ];
        for c in 0..3 {
            assert!((raw.get(0, 0, c) - expect[c]).abs() < 1e-12);
        }
    }

    #[test]
    fn convolve_is_linear_in_image() {
        let mut r = rng(4);
        let img = random_image(&mut r, 8, 8);
        let f = sample_filter(&mut r, &RpConfig::default());
        let scaled = ImageRgb::new(8, 8, img.data.iter().map(|v| v * 0.5).collect()).unwrap();
        let a = convolve(&scaled, &f);
        let b = convolve(&img, &f);
        for (x, y) in a.data.iter().zip(&b.data) {
            assert!((x - 0.5 * y).abs() < 1e-6);
        }
    }

    #[test]
    fn filter_sample_moments() {
        let cfg = RpConfig {
            h: 3,
            w: 3,
            sigma: 0.2,
            ..RpConfig::default()
        };
        let mut r = rng(5);
        let mut all = Vec::with_capacity(100_000);
        while all.len() < 100_000 {
            all.extend_from_slice(&sample_filter(&mut r, &cfg).weights);
        }
        all.truncate(100_000);
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let std = (all.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 0.005, "mean {mean}");
        assert!((std - 0.2).abs() < 0.005, "std {std}");
    }

    #[test]
    fn restandardize_matches_reference_moments() {
        let mut r = rng(6);
        // Keep the reference near mid-gray so the affine map lands strictly
        // inside [0,1]; clipping would shift the moments.
        let reference = ImageRgb::new(
            8,
            8,
            (0..8 * 8 * 3).map(|_| 0.48 + 0.04 * r.gen::<f64>()).collect(),
        )
        .unwrap();
        let img = random_image(&mut r, 8, 8);
        let f = sample_filter(&mut r, &RpConfig::default());
        let raw = convolve(&img, &f);
        let mut mask = BinaryMask::new(8, 8);
        for y in 2..7 {
            for x in 1..6 {
                mask.set(x, y, true);
            }
        }
        let out = restandardize(&raw, &reference, &mask);
        for y in 0..8 {
            for x in 0..8u32 {
                if mask.get(x, y) {
                    for v in out.pixel(x, y) {
                        assert!(v > 0.0 && v < 1.0, "clipped value invalidates the check");
                    }
                }
            }
        }
        let got = masked_moments(|x, y, c| out.pixel(x, y)[c], &mask);
        let want = masked_moments(|x, y, c| reference.pixel(x, y)[c], &mask);
        for c in 0..3 {
            assert!((got[c].0 - want[c].0).abs() < 1e-6, "mean channel {c}");
            assert!((got[c].1 - want[c].1).abs() < 1e-6, "std channel {c}");
        }
    }

    #[test]
    fn restandardize_constant_raw_takes_reference_mean() {
        let reference = ImageRgb::filled(4, 4, 0.4);
        let raw = RawRaster {
            width: 4,
            height: 4,
            data: vec![7.0; 48],
        };
        let mut mask = BinaryMask::new(4, 4);
        mask.set(1, 1, true);
        mask.set(2, 2, true);
        let out = restandardize(&raw, &reference, &mask);
        assert!((out.pixel(1, 1)[0] - 0.4).abs() < 1e-12);
        assert!((out.pixel(2, 2)[2] - 0.4).abs() < 1e-12);
    }

    #[test]
    fn refine_alpha_zero_is_identity() {
        let mut r = rng(7);
        let img = random_image(&mut r, 8, 8);
        let mut mask = BinaryMask::new(8, 8);
        mask.set(3, 3, true);
        mask.set(4, 3, true);
        let cfg = RpConfig {
            alpha: 0.0,
            ..RpConfig::default()
        };
        let out = refine(&img, &mask, &cfg, &mut r);
        assert_eq!(out.data, img.data);
    }

    #[test]
    fn refine_empty_mask_is_identity() {
        let mut r = rng(8);
        let img = random_image(&mut r, 8, 8);
        let mask = BinaryMask::new(8, 8);
        let out = refine(&img, &mask, &RpConfig::default(), &mut r);
        assert_eq!(out.data, img.data);
    }

    #[test]
    fn refine_sigma_zero_is_identity() {
        let mut r = rng(9);
        let img = random_image(&mut r, 8, 8);
        let mut mask = BinaryMask::new(8, 8);
        mask.set(2, 2, true);
        let cfg = RpConfig {
            sigma: 0.0,
            ..RpConfig::default()
        };
        let out = refine(&img, &mask, &cfg, &mut r);
        assert_eq!(out.data, img.data);
    }

    #[test]
    fn refine_alpha_one_no_restandardize_is_clipped_convolution() {
        let mut r = rng(10);
        let img = random_image(&mut r, 8, 8);
        let mut mask = BinaryMask::new(8, 8);
        for x in 2..6 {
            mask.set(x, 4, true);
        }
        let cfg = RpConfig {
            alpha: 1.0,
            restandardize: false,
            ..RpConfig::default()
        };
        let mut rng_a = rng(11);
        let out = refine(&img, &mask, &cfg, &mut rng_a);
        let mut rng_b = rng(11);
        let filter = sample_filter(&mut rng_b, &cfg);
        let raw = convolve(&img, &filter);
        for y in 0..8 {
            for x in 2..6u32 {
                if mask.get(x, y) {
                    for c in 0..3 {
                        assert_eq!(out.pixel(x, y)[c], raw.get(x, y, c).clamp(0.0, 1.0));
                    }
                }
            }
        }
    }

    #[test]
    fn refine_single_pixel_blend_by_hand() {
        // alpha=0.8, 1-pixel mask, fixed filter: out = 0.8*X + 0.2*I.
        let mut r = rng(12);
        let img = random_image(&mut r, 5, 5);
        let mut mask = BinaryMask::new(5, 5);
        mask.set(2, 2, true);
        let cfg = RpConfig {
            alpha: 0.8,
            restandardize: false,
            ..RpConfig::default()
        };
        let mut rng_a = rng(13);
        let out = refine(&img, &mask, &cfg, &mut rng_a);
        let mut rng_b = rng(13);
        let filter = sample_filter(&mut rng_b, &cfg);
        let x = convolve_at(&img, &filter, 2, 2);
        for c in 0..3 {
            let want = (0.8 * x[c] + 0.2 * img.pixel(2, 2)[c]).clamp(0.0, 1.0);
            assert!((out.pixel(2, 2)[c] - want).abs() < 1e-12);
        }
        // Everything off the mask is untouched.
        for y in 0..5 {
            for x in 0..5u32 {
                if (x, y) != (2, 2) {
                    assert_eq!(out.pixel(x, y), img.pixel(x, y));
                }
            }
        }
    }

    #[test]
    fn region_convolution_matches_full_on_mask() {
        let mut r = rng(14);
        let img = random_image(&mut r, 16, 16);
        let mut mask = BinaryMask::new(16, 16);
        for y in 5..9 {
            for x in 6..11 {
                mask.set(x, y, true);
            }
        }
        let cfg = RpConfig::default();
        let filter = sample_filter(&mut r, &cfg);
        let full = convolve(&img, &filter);
        let mut region = RawRaster::from_image(&img);
        let (bx0, by0, bx1, by1) = mask.bounding_box().unwrap();
        convolve_region(&img, &filter, &mut region, bx0 - 1, by0 - 1, bx1 + 1, by1 + 1);
        for y in 0..16 {
            for x in 0..16u32 {
                if mask.get(x, y) {
                    for c in 0..3 {
                        assert!((full.get(x, y, c) - region.get(x, y, c)).abs() < 1e-6);
                    }
                }
            }
        }
    }
}
