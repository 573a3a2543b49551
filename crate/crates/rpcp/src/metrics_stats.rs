//! Per-class IoU/Acc metrics, class-distribution reports and pixel sampling
//! for external analysis.

use rand::Rng;
use serde::Serialize;

use crate::dataset_io::{self, ClassScheme, LabelMap, PairDescriptor};
use crate::error::{Error, Result};

/// Per-class true/false positive and false negative pixel counts.
/// 64-bit accumulators: a full dataset of megapixel masks overflows 32 bits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub tp: Vec<u64>,
    pub fp: Vec<u64>,
    pub fn_: Vec<u64>,
}

impl ConfusionCounts {
    pub fn zeros(class_count: usize) -> Self {
        Self {
            tp: vec![0; class_count],
            fp: vec![0; class_count],
            fn_: vec![0; class_count],
        }
    }

    pub fn class_count(&self) -> usize {
        self.tp.len()
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        for c in 0..self.tp.len() {
            self.tp[c] += other.tp[c];
            self.fp[c] += other.fp[c];
            self.fn_[c] += other.fn_[c];
        }
    }
}

/// Count tp/fp/fn per class, skipping pixels whose ground-truth label is
/// excluded by the scheme.
pub fn confusion(pred: &LabelMap, gt: &LabelMap, scheme: &ClassScheme) -> Result<ConfusionCounts> {
    if pred.width != gt.width || pred.height != gt.height {
        return Err(Error::DimensionMismatch {
            id: "confusion".into(),
            image_w: pred.width,
            image_h: pred.height,
            mask_w: gt.width,
            mask_h: gt.height,
        });
    }
    let mut counts = ConfusionCounts::zeros(scheme.class_count);
    for (&p, &g) in pred.data.iter().zip(&gt.data) {
        if scheme.is_excluded(g) {
            continue;
        }
        if p == g {
            counts.tp[p as usize] += 1;
        } else {
            counts.fp[p as usize] += 1;
            counts.fn_[g as usize] += 1;
        }
    }
    Ok(counts)
}

/// Per-class IoU and Acc; `None` marks a class absent from both prediction
/// and ground truth, which is excluded from means.
pub fn class_metrics(counts: &ConfusionCounts) -> Vec<Option<(f64, f64)>> {
    (0..counts.class_count())
        .map(|c| {
            let (tp, fp, fn_) = (counts.tp[c], counts.fp[c], counts.fn_[c]);
            if tp + fp + fn_ == 0 {
                None
            } else {
                let iou = tp as f64 / (tp + fp + fn_) as f64;
                let acc = if tp + fn_ == 0 {
                    0.0
                } else {
                    tp as f64 / (tp + fn_) as f64
                };
                Some((iou, acc))
            }
        })
        .collect()
}

/// Unweighted means over present classes.
pub fn mean_metrics(per_class: &[Option<(f64, f64)>]) -> Result<(f64, f64)> {
    let present: Vec<(f64, f64)> = per_class.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(Error::InvalidArgument(
            "no class present in prediction or ground truth".into(),
        ));
    }
    let n = present.len() as f64;
    let miou = present.iter().map(|(iou, _)| iou).sum::<f64>() / n;
    let macc = present.iter().map(|(_, acc)| acc).sum::<f64>() / n;
    Ok((miou, macc))
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassMetricEntry {
    pub class_id: u8,
    pub name: String,
    pub iou: Option<f64>,
    pub acc: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub per_class: Vec<ClassMetricEntry>,
    pub miou: f64,
    pub macc: f64,
    pub evaluated_pixel_count: u64,
}

impl MetricReport {
    pub fn from_counts(counts: &ConfusionCounts, scheme: &ClassScheme) -> Result<Self> {
        let per = class_metrics(counts);
        // Excluded classes never accumulate counts (their gt pixels are
        // skipped and they cannot be predicted as gt), but filter anyway.
        let filtered: Vec<Option<(f64, f64)>> = per
            .iter()
            .enumerate()
            .map(|(c, m)| {
                if scheme.is_excluded(c as u8) {
                    None
                } else {
                    *m
                }
            })
            .collect();
        let (miou, macc) = mean_metrics(&filtered)?;
        let evaluated: u64 = counts.tp.iter().sum::<u64>() + counts.fn_.iter().sum::<u64>();
        Ok(Self {
            per_class: per
                .iter()
                .enumerate()
                .map(|(c, m)| ClassMetricEntry {
                    class_id: c as u8,
                    name: scheme
                        .names
                        .get(c)
                        .cloned()
                        .unwrap_or_else(|| format!("class_{c}")),
                    iou: m.map(|(iou, _)| iou),
                    acc: m.map(|(_, acc)| acc),
                })
                .collect(),
            miou,
            macc,
            evaluated_pixel_count: evaluated,
        })
    }

    /// Aligned-column text rendering for humans.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<12} {:>8} {:>8}\n", "class", "IoU", "Acc"));
        for e in &self.per_class {
            match (e.iou, e.acc) {
                (Some(iou), Some(acc)) => out.push_str(&format!(
                    "{:<12} {:>8.2} {:>8.2}\n",
                    e.name,
                    iou * 100.0,
                    acc * 100.0
                )),
                _ => out.push_str(&format!("{:<12} {:>8} {:>8}\n", e.name, "absent", "absent")),
            }
        }
        out.push_str(&format!(
            "{:<12} {:>8.2} {:>8.2}\n",
            "mean",
            self.miou * 100.0,
            self.macc * 100.0
        ));
        out
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DistributionReport {
    /// Exact pixel counts per class id.
    pub counts: Vec<u64>,
    /// Fractions over non-excluded classes; excluded classes report 0.
    pub fractions: Vec<f64>,
    pub total_included: u64,
}

/// Exact per-class pixel counts over a stream of label maps.
pub fn pixel_distribution<'a>(
    labels: impl IntoIterator<Item = &'a LabelMap>,
    scheme: &ClassScheme,
) -> DistributionReport {
    let mut counts = vec![0u64; scheme.class_count];
    for label in labels {
        for (c, n) in label.histogram(scheme.class_count).iter().enumerate() {
            counts[c] += n;
        }
    }
    let total_included: u64 = counts
        .iter()
        .enumerate()
        .filter(|(c, _)| !scheme.is_excluded(*c as u8))
        .map(|(_, n)| *n)
        .sum();
    let fractions = counts
        .iter()
        .enumerate()
        .map(|(c, &n)| {
            if scheme.is_excluded(c as u8) || total_included == 0 {
                0.0
            } else {
                n as f64 / total_included as f64
            }
        })
        .collect();
    DistributionReport {
        counts,
        fractions,
        total_included,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PixelSample {
    pub class_id: u8,
    pub r: u8,
    pub g: u8,
    pub b: u8,
    pub source_id: String,
    pub x: u32,
    pub y: u32,
}

/// Uniform without-replacement sample of up to `n_per_class` pixels per
/// non-excluded class, via per-class reservoir sampling over pairs in order.
pub fn sample_pixels(
    pairs: &[PairDescriptor],
    scheme: &ClassScheme,
    n_per_class: usize,
    rng: &mut impl Rng,
) -> Result<Vec<PixelSample>> {
    if n_per_class == 0 {
        return Err(Error::InvalidArgument("n_per_class must be >= 1".into()));
    }
    let mut reservoirs: Vec<Vec<PixelSample>> = vec![Vec::new(); scheme.class_count];
    let mut seen = vec![0u64; scheme.class_count];
    for pair in pairs {
        let (image, label) = dataset_io::load_pair(pair, scheme)?;
        for y in 0..label.height {
            for x in 0..label.width {
                let c = label.get(x, y);
                if scheme.is_excluded(c) {
                    continue;
                }
                let px = image.pixel(x, y);
                let sample = || PixelSample {
                    class_id: c,
                    r: (px[0] * 255.0).round() as u8,
                    g: (px[1] * 255.0).round() as u8,
                    b: (px[2] * 255.0).round() as u8,
                    source_id: pair.id.clone(),
                    x,
                    y,
                };
                let res = &mut reservoirs[c as usize];
                seen[c as usize] += 1;
                if res.len() < n_per_class {
                    res.push(sample());
                } else {
                    let j = rng.gen_range(0..seen[c as usize]);
                    if (j as usize) < n_per_class {
                        res[j as usize] = sample();
                    }
                }
            }
        }
    }
    Ok(reservoirs.into_iter().flatten().collect())
}

/// CSV with header `class_id,r,g,b,source_id,x,y`.
pub fn pixel_samples_csv(samples: &[PixelSample]) -> String {
    let mut out = String::from("class_id,r,g,b,source_id,x,y\n");
    for s in samples {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.class_id, s.r, s.g, s.b, s.source_id, s.x, s.y
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scheme(count: usize) -> ClassScheme {
        ClassScheme {
            class_count: count,
            names: (0..count).map(|i| format!("class_{i}")).collect(),
            source_class: 2.min(count as u8 - 1),
            valid_class: 0,
            excluded_classes: Vec::new(),
        }
    }

    #[test]
    fn perfect_prediction_has_no_errors() {
        let gt = LabelMap::new(2, 2, vec![0, 1, 2, 1]).unwrap();
        let counts = confusion(&gt, &gt, &scheme(3)).unwrap();
        assert!(counts.fp.iter().all(|&v| v == 0));
        assert!(counts.fn_.iter().all(|&v| v == 0));
        assert_eq!(counts.tp, vec![1, 2, 1]);
    }

    #[test]
    fn disjoint_supports_have_zero_tp() {
        let gt = LabelMap::new(2, 2, vec![1, 1, 1, 1]).unwrap();
        let pred = LabelMap::new(2, 2, vec![2, 2, 2, 2]).unwrap();
        let counts = confusion(&pred, &gt, &scheme(3)).unwrap();
        assert_eq!(counts.tp[1], 0);
        assert_eq!(counts.tp[2], 0);
    }

    #[test]
    fn hand_counted_2x2_fixture() {
        let gt = LabelMap::new(2, 2, vec![1, 1, 1, 2]).unwrap();
        let pred = LabelMap::new(2, 2, vec![1, 1, 2, 2]).unwrap();
        let counts = confusion(&pred, &gt, &scheme(3)).unwrap();
        assert_eq!((counts.tp[1], counts.fp[1], counts.fn_[1]), (2, 0, 1));
        assert_eq!((counts.tp[2], counts.fp[2], counts.fn_[2]), (1, 1, 0));
        let metrics = class_metrics(&counts);
        let (iou1, acc1) = metrics[1].unwrap();
        assert!((iou1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((acc1 - 2.0 / 3.0).abs() < 1e-12);
        let (iou2, acc2) = metrics[2].unwrap();
        assert!((iou2 - 0.5).abs() < 1e-12);
        assert_eq!(acc2, 1.0);
    }

    #[test]
    fn class_metrics_direct_arithmetic() {
        // tp=2, fp=1, fn=1: iou = 2/4, acc = 2/3.
        let counts = ConfusionCounts {
            tp: vec![2],
            fp: vec![1],
            fn_: vec![1],
        };
        let (iou, acc) = class_metrics(&counts)[0].unwrap();
        assert!((iou - 0.5).abs() < 1e-12);
        assert!((acc - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn clean_class_scores_one() {
        let counts = ConfusionCounts {
            tp: vec![5],
            fp: vec![0],
            fn_: vec![0],
        };
        let (iou, acc) = class_metrics(&counts)[0].unwrap();
        assert_eq!((iou, acc), (1.0, 1.0));
    }

    #[test]
    fn absent_class_is_none_not_zero() {
        let gt = LabelMap::new(1, 2, vec![0, 0]).unwrap();
        let counts = confusion(&gt, &gt, &scheme(3)).unwrap();
        let metrics = class_metrics(&counts);
        assert!(metrics[1].is_none());
        assert!(metrics[2].is_none());
        let (iou0, acc0) = metrics[0].unwrap();
        assert_eq!((iou0, acc0), (1.0, 1.0));
        let (miou, macc) = mean_metrics(&metrics).unwrap();
        assert_eq!((miou, macc), (1.0, 1.0));
    }

    #[test]
    fn excluded_gt_pixels_are_skipped() {
        let mut s = scheme(3);
        s.excluded_classes = vec![1];
        let gt = LabelMap::new(2, 2, vec![0, 1, 1, 2]).unwrap();
        let pred = LabelMap::new(2, 2, vec![0, 0, 2, 2]).unwrap();
        let counts = confusion(&pred, &gt, &s).unwrap();
        // The two gt=1 pixels contribute nothing anywhere.
        assert_eq!(counts.tp.iter().sum::<u64>() + counts.fn_.iter().sum::<u64>(), 2);
        assert!(counts.fp.iter().all(|&v| v == 0));
    }

    #[test]
    fn segformer_rpcp_row_aggregates_to_published_means() {
        let per: Vec<Option<(f64, f64)>> = vec![
            Some((0.9798, 0.9912)),
            Some((0.8582, 0.9167)),
            Some((0.7236, 0.8257)),
        ];
        let (miou, macc) = mean_metrics(&per).unwrap();
        assert!((miou * 100.0 - 85.39).abs() < 0.01, "{miou}");
        assert!((macc * 100.0 - 91.12).abs() < 0.01, "{macc}");
    }

    #[test]
    fn single_class_mean_is_that_class() {
        let per = vec![Some((0.7, 0.9))];
        let (miou, macc) = mean_metrics(&per).unwrap();
        assert_eq!((miou, macc), (0.7, 0.9));
    }

    #[test]
    fn misclassifications_balance_fp_fn() {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let gt = LabelMap::new(8, 8, (0..64).map(|_| rng.gen_range(0..4u8)).collect()).unwrap();
            let pred =
                LabelMap::new(8, 8, (0..64).map(|_| rng.gen_range(0..4u8)).collect()).unwrap();
            let counts = confusion(&pred, &gt, &scheme(4)).unwrap();
            assert_eq!(counts.fp.iter().sum::<u64>(), counts.fn_.iter().sum::<u64>());
            for m in class_metrics(&counts).iter().flatten() {
                assert!(m.0 <= m.1 + 1e-12, "iou {} > acc {}", m.0, m.1);
            }
        }
    }

    #[test]
    fn distribution_all_one_class() {
        let label = LabelMap::filled(4, 4, 0);
        let report = pixel_distribution([&label], &scheme(3));
        assert_eq!(report.counts, vec![16, 0, 0]);
        assert_eq!(report.fractions[0], 1.0);
    }

    #[test]
    fn distribution_empty_stream() {
        let report = pixel_distribution(std::iter::empty(), &scheme(3));
        assert_eq!(report.counts, vec![0, 0, 0]);
        assert_eq!(report.total_included, 0);
    }

    #[test]
    fn distribution_fractions_sum_to_one() {
        let label = LabelMap::new(2, 2, vec![0, 1, 2, 2]).unwrap();
        let report = pixel_distribution([&label], &scheme(3));
        let sum: f64 = report.fractions.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    fn pair_on_disk(dir: &std::path::Path, id: &str, image_bytes: u8, label: &LabelMap) -> PairDescriptor {
        let image = crate::dataset_io::ImageRgb::filled(
            label.width,
            label.height,
            image_bytes as f64 / 255.0,
        );
        let idir = dir.join("i");
        let mdir = dir.join("m");
        std::fs::create_dir_all(&idir).unwrap();
        std::fs::create_dir_all(&mdir).unwrap();
        let (ip, mp) = dataset_io::write_pair(&image, label, &idir, &mdir, id).unwrap();
        PairDescriptor {
            image_path: ip,
            mask_path: mp,
            id: id.into(),
        }
    }

    #[test]
    fn sample_exhausts_small_class() {
        let tmp = tempfile::tempdir().unwrap();
        let mut label = LabelMap::filled(4, 4, 0);
        label.set(0, 0, 2);
        label.set(1, 0, 2);
        label.set(2, 0, 2);
        let pair = pair_on_disk(tmp.path(), "a", 100, &label);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples = sample_pixels(&[pair], &scheme(3), 10, &mut rng).unwrap();
        let class2 = samples.iter().filter(|s| s.class_id == 2).count();
        assert_eq!(class2, 3);
    }

    #[test]
    fn sample_is_deterministic_given_seed() {
        let tmp = tempfile::tempdir().unwrap();
        let mut label = LabelMap::filled(8, 8, 0);
        for x in 0..8 {
            label.set(x, 0, 1);
        }
        let pair = pair_on_disk(tmp.path(), "a", 50, &label);
        let mut a = ChaCha8Rng::seed_from_u64(9);
        let mut b = ChaCha8Rng::seed_from_u64(9);
        let s1 = sample_pixels(std::slice::from_ref(&pair), &scheme(3), 4, &mut a).unwrap();
        let s2 = sample_pixels(&[pair], &scheme(3), 4, &mut b).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn two_tone_class_sampled_in_proportion() {
        let tmp = tempfile::tempdir().unwrap();
        // 200x100 class-1 field, left half dark, right half bright.
        let mut image = crate::dataset_io::ImageRgb::filled(200, 100, 0.0);
        for y in 0..100 {
            for x in 100..200 {
                image.set_pixel(x, y, [1.0, 1.0, 1.0]);
            }
        }
        let label = LabelMap::filled(200, 100, 1);
        let idir = tmp.path().join("i");
        let mdir = tmp.path().join("m");
        std::fs::create_dir_all(&idir).unwrap();
        std::fs::create_dir_all(&mdir).unwrap();
        let (ip, mp) = dataset_io::write_pair(&image, &label, &idir, &mdir, "a").unwrap();
        let pair = PairDescriptor {
            image_path: ip,
            mask_path: mp,
            id: "a".into(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let samples = sample_pixels(&[pair], &scheme(3), 10_000, &mut rng).unwrap();
        let bright = samples.iter().filter(|s| s.r == 255).count();
        let frac = bright as f64 / samples.len() as f64;
        assert!((frac - 0.5).abs() < 0.02, "bright fraction {frac}");
    }

    #[test]
    fn csv_header_and_rows() {
        let samples = vec![PixelSample {
            class_id: 2,
            r: 10,
            g: 20,
            b: 30,
            source_id: "a".into(),
            x: 1,
            y: 2,
        }];
        let csv = pixel_samples_csv(&samples);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "class_id,r,g,b,source_id,x,y");
        assert_eq!(lines.next().unwrap(), "2,10,20,30,a,1,2");
    }
}
