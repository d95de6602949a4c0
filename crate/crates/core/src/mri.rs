//! MRI tumour segmentation into background / tumour / neighbouring tissue.
//!
//! sharpen -> gamma -> multi-Otsu prior -> per-class open+close -> K-means.
//!
//! The multi-Otsu class map acts as a denoising prior: each class mask is
//! opened and closed, and pixels that drop out of their own class but are
//! claimed by another class's cleaned mask are moved to that class, taking
//! its mean intensity. K-means on the resulting image gives the final
//! clusters, which are mapped to labels by [`TumorRule`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StepContext};
use crate::imaging::{
    gamma_correct, kmeans_segment, morph_close, morph_open, multi_otsu, sharpen, BinaryMask,
    ClassMap, Image, LabelMask, SharpenParams, StructuringElement,
};
use crate::scalar::Scalar;

pub const STEP_SHARPEN: &str = "sharpen";
pub const STEP_GAMMA: &str = "gamma";
pub const STEP_MULTI_OTSU: &str = "multi_otsu";
pub const STEP_MORPHOLOGY: &str = "morphology";
pub const STEP_KMEANS: &str = "kmeans";

/// How K-means clusters become labels. The darkest cluster is always
/// background; the rule picks the tumour among the rest and every other
/// cluster becomes neighbouring tissue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TumorRule {
    #[default]
    Brightest,
    /// Darkest non-background cluster (hypointense lesions).
    Darkest,
    /// Non-background cluster owning the largest 4-connected component.
    LargestComponent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", default, deny_unknown_fields)]
pub struct MriConfig<T: Scalar> {
    pub sharpen: SharpenParams<T>,
    pub gamma: T,
    pub otsu_classes: usize,
    pub morph_radius: usize,
    pub k: usize,
    pub seed: u64,
    pub tumor_rule: TumorRule,
}

impl<T: Scalar> Default for MriConfig<T> {
    fn default() -> Self {
        Self {
            sharpen: SharpenParams::default(),
            gamma: T::lit(0.8),
            otsu_classes: 3,
            morph_radius: 2,
            k: 3,
            seed: 0,
            tumor_rule: TumorRule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MriSegmentation<T: Scalar> {
    pub labels: LabelMask,
    pub tumor_mask: BinaryMask,
    pub neighbor_mask: BinaryMask,
    /// Ascending K-means centroids.
    pub centroids: Vec<T>,
    /// K-means cluster index chosen as tumour.
    pub tumor_cluster: usize,
    /// Multi-Otsu class map before and after morphological cleaning.
    pub prior: ClassMap,
    pub refined_prior: ClassMap,
    pub config: MriConfig<T>,
    pub kmeans_converged: bool,
    /// Only one label ended up present.
    pub degenerate: bool,
}

pub fn segment_mri<T: Scalar>(img: &Image<T>, cfg: &MriConfig<T>) -> Result<MriSegmentation<T>> {
    if cfg.k < 3 {
        return Err(Error::param(
            "k",
            format!("three labels need k >= 3, got {}", cfg.k),
        ))
        .in_step(STEP_KMEANS);
    }
    // sharpening manufactures edge overshoots, so K-means' need for k distinct
    // tissue intensities is checked on the source
    let distinct = distinct_intensities(img);
    if distinct < cfg.k {
        return Err(Error::DegenerateKmeans { k: cfg.k, distinct }).in_step(STEP_KMEANS);
    }

    let sharp = sharpen(img, cfg.sharpen.amount, cfg.sharpen.sigma).in_step(STEP_SHARPEN)?;
    let enhanced = gamma_correct(&sharp, cfg.gamma).in_step(STEP_GAMMA)?;
    let prior = multi_otsu(&enhanced, cfg.otsu_classes)
        .in_step(STEP_MULTI_OTSU)?
        .class_map;
    let (refined_prior, refined) =
        refine_with_prior(&enhanced, &prior, cfg.morph_radius).in_step(STEP_MORPHOLOGY)?;
    let km = kmeans_segment(&refined, cfg.k, cfg.seed).in_step(STEP_KMEANS)?;

    let tumor_cluster = match cfg.tumor_rule {
        TumorRule::Brightest => cfg.k - 1,
        TumorRule::Darkest => 1,
        TumorRule::LargestComponent => {
            (1..cfg.k)
                .map(|c| (largest_component(&km.class_map.mask_of(c as u8)), c))
                // ties go to the brighter cluster
                .max()
                .expect("k >= 3")
                .1
        }
    };
    let labels: Vec<u8> = km
        .class_map
        .labels()
        .iter()
        .map(|&c| match c as usize {
            0 => LabelMask::BACKGROUND,
            c if c == tumor_cluster => LabelMask::TUMOR,
            _ => LabelMask::NEIGHBOR,
        })
        .collect();
    let labels = LabelMask::new(img.width(), img.height(), labels)?;
    Ok(MriSegmentation {
        tumor_mask: labels.mask_of(LabelMask::TUMOR),
        neighbor_mask: labels.mask_of(LabelMask::NEIGHBOR),
        degenerate: labels.is_degenerate(),
        labels,
        centroids: km.centroids,
        tumor_cluster,
        prior,
        refined_prior,
        config: cfg.clone(),
        kmeans_converged: km.converged,
    })
}

fn distinct_intensities<T: Scalar>(img: &Image<T>) -> usize {
    let mut v: Vec<T> = img.pixels().to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    v.dedup();
    v.len()
}

fn refine_with_prior<T: Scalar>(
    img: &Image<T>,
    prior: &ClassMap,
    radius: usize,
) -> Result<(ClassMap, Image<T>)> {
    let se = StructuringElement::disk(radius)?;
    let classes = prior.classes();
    let cleaned = (0..classes)
        .map(|c| morph_close(&morph_open(&prior.mask_of(c as u8), &se)?, &se))
        .collect::<Result<Vec<_>>>()?;

    let mut sums = vec![T::zero(); classes];
    let mut counts = vec![0usize; classes];
    for (&v, &c) in img.pixels().iter().zip(prior.labels()) {
        sums[c as usize] += v;
        counts[c as usize] += 1;
    }
    let means: Vec<T> = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &n)| {
            if n == 0 {
                T::zero()
            } else {
                s / T::from_count(n)
            }
        })
        .collect();

    let mut labels = Vec::with_capacity(img.len());
    let mut pixels = Vec::with_capacity(img.len());
    for (i, (&v, &c)) in img.pixels().iter().zip(prior.labels()).enumerate() {
        if cleaned[c as usize].bits()[i] {
            labels.push(c);
            pixels.push(v);
        } else if let Some(d) = (0..classes).find(|&d| cleaned[d].bits()[i]) {
            labels.push(d as u8);
            pixels.push(means[d]);
        } else {
            labels.push(c);
            pixels.push(v);
        }
    }
    Ok((
        ClassMap::from_labels(img.width(), img.height(), classes, labels),
        Image::from_raw(img.width(), img.height(), pixels),
    ))
}

/// Size of the largest 4-connected foreground component.
fn largest_component(mask: &BinaryMask) -> usize {
    let (w, h) = mask.dims();
    let bits = mask.bits();
    let mut seen = vec![false; bits.len()];
    let mut stack = Vec::new();
    let mut best = 0;
    for start in 0..bits.len() {
        if !bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut size = 0;
        while let Some(i) = stack.pop() {
            size += 1;
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if bits[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        best = best.max(size);
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", default, deny_unknown_fields)]
pub struct QualityThresholds<T: Scalar> {
    /// Intensity at or above which a pixel counts as saturated.
    pub saturation_level: T,
    pub max_saturated_fraction: T,
    pub min_std: T,
}

impl<T: Scalar> Default for QualityThresholds<T> {
    fn default() -> Self {
        Self {
            saturation_level: T::lit(0.98),
            max_saturated_fraction: T::lit(0.20),
            min_std: T::lit(0.05),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", tag = "rule", rename_all = "snake_case")]
pub enum RejectReason<T: Scalar> {
    HighSaturation { saturated_fraction: T },
    LowContrast { std_dev: T },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct QualityReport<T: Scalar> {
    pub accepted: bool,
    pub reasons: Vec<RejectReason<T>>,
}

/// Screens out saturated or flat images before segmentation.
pub fn quality_filter<T: Scalar>(img: &Image<T>, th: &QualityThresholds<T>) -> QualityReport<T> {
    let saturated = img
        .pixels()
        .iter()
        .filter(|&&v| v >= th.saturation_level)
        .count();
    let fraction = T::from_count(saturated) / T::from_count(img.len());
    let std_dev = img.std_dev();
    let mut reasons = Vec::new();
    if fraction > th.max_saturated_fraction {
        reasons.push(RejectReason::HighSaturation {
            saturated_fraction: fraction,
        });
    }
    if std_dev < th.min_std {
        reasons.push(RejectReason::LowContrast { std_dev });
    }
    QualityReport {
        accepted: reasons.is_empty(),
        reasons,
    }
}
