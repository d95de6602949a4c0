//! Otsu and multi-Otsu thresholding over a 256-bin histogram.
//!
//! Class statistics are integer prefix sums, and the between-class variance
//! is ranked through `sum_c s_c^2 / n_c` (it differs from the variance only
//! by terms constant over the cut points). Equal integer class statistics
//! therefore always produce bit-identical scores, so ties resolve the same
//! way regardless of summation order: the lexicographically lowest cut wins.

use super::{BinaryMask, ClassMap, Image};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const BINS: usize = 256;

#[inline]
pub fn intensity_to_bin<T: Scalar>(v: T) -> usize {
    (v * T::lit(255.0))
        .round()
        .to_usize()
        .unwrap_or(0)
        .min(BINS - 1)
}

pub fn histogram<T: Scalar>(img: &Image<T>) -> [u64; BINS] {
    let mut hist = [0u64; BINS];
    for &v in img.pixels() {
        hist[intensity_to_bin(v)] += 1;
    }
    hist
}

#[derive(Debug, Clone, PartialEq)]
pub struct Otsu<T> {
    /// Threshold intensity, `bin / 255`.
    pub threshold: T,
    pub bin: u8,
    /// Pixels whose bin lies strictly above `bin`.
    pub mask: BinaryMask,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiOtsu<T> {
    pub thresholds: Vec<T>,
    pub bins: Vec<u8>,
    pub class_map: ClassMap,
}

struct Prefix {
    count: [u64; BINS + 1],
    sum: [u64; BINS + 1],
}

impl Prefix {
    fn new(hist: &[u64; BINS]) -> Self {
        let mut count = [0u64; BINS + 1];
        let mut sum = [0u64; BINS + 1];
        for (b, &h) in hist.iter().enumerate() {
            count[b + 1] = count[b] + h;
            sum[b + 1] = sum[b] + h * b as u64;
        }
        Self { count, sum }
    }

    /// Score term of bins `lo..hi`, or `None` when the class is empty.
    #[inline]
    fn term(&self, lo: usize, hi: usize) -> Option<f64> {
        let n = self.count[hi] - self.count[lo];
        if n == 0 {
            return None;
        }
        let s = (self.sum[hi] - self.sum[lo]) as f64;
        Some(s * s / n as f64)
    }
}

fn occupied(hist: &[u64; BINS]) -> usize {
    hist.iter().filter(|&&h| h > 0).count()
}

pub fn otsu_threshold<T: Scalar>(img: &Image<T>) -> Result<Otsu<T>> {
    let hist = histogram(img);
    if occupied(&hist) < 2 {
        return Err(Error::DegenerateHistogram(
            "Otsu needs at least two occupied histogram bins".into(),
        ));
    }
    let prefix = Prefix::new(&hist);
    let mut best: Option<(f64, usize)> = None;
    for k in 0..BINS - 1 {
        let (Some(a), Some(b)) = (prefix.term(0, k + 1), prefix.term(k + 1, BINS)) else {
            continue;
        };
        let score = a + b;
        if best.is_none_or(|(s, _)| score > s) {
            best = Some((score, k));
        }
    }
    let (_, k) = best.expect("two occupied bins admit a cut");
    let mask = BinaryMask::from_bits(
        img.width(),
        img.height(),
        img.pixels()
            .iter()
            .map(|&v| intensity_to_bin(v) > k)
            .collect(),
    );
    Ok(Otsu {
        threshold: bin_intensity(k),
        bin: k as u8,
        mask,
    })
}

/// Exhaustive multi-level Otsu for 3 or 4 classes.
pub fn multi_otsu<T: Scalar>(img: &Image<T>, classes: usize) -> Result<MultiOtsu<T>> {
    if !(3..=4).contains(&classes) {
        return Err(Error::param(
            "classes",
            format!("must be 3 or 4, got {classes}"),
        ));
    }
    let hist = histogram(img);
    let distinct = occupied(&hist);
    if distinct < classes {
        return Err(Error::DegenerateHistogram(format!(
            "{classes}-class Otsu needs {classes} occupied bins, found {distinct}"
        )));
    }
    let p = Prefix::new(&hist);
    let cuts: Vec<usize> = if classes == 3 {
        let mut best: Option<(f64, [usize; 2])> = None;
        for k1 in 0..BINS - 2 {
            let Some(t0) = p.term(0, k1 + 1) else {
                continue;
            };
            for k2 in k1 + 1..BINS - 1 {
                let (Some(t1), Some(t2)) = (p.term(k1 + 1, k2 + 1), p.term(k2 + 1, BINS)) else {
                    continue;
                };
                let score = t0 + t1 + t2;
                if best.is_none_or(|(s, _)| score > s) {
                    best = Some((score, [k1, k2]));
                }
            }
        }
        best.expect("three occupied bins admit two cuts").1.to_vec()
    } else {
        let mut best: Option<(f64, [usize; 3])> = None;
        for k1 in 0..BINS - 3 {
            let Some(t0) = p.term(0, k1 + 1) else {
                continue;
            };
            for k2 in k1 + 1..BINS - 2 {
                let Some(t1) = p.term(k1 + 1, k2 + 1) else {
                    continue;
                };
                for k3 in k2 + 1..BINS - 1 {
                    let (Some(t2), Some(t3)) = (p.term(k2 + 1, k3 + 1), p.term(k3 + 1, BINS))
                    else {
                        continue;
                    };
                    let score = t0 + t1 + t2 + t3;
                    if best.is_none_or(|(s, _)| score > s) {
                        best = Some((score, [k1, k2, k3]));
                    }
                }
            }
        }
        best.expect("four occupied bins admit three cuts")
            .1
            .to_vec()
    };

    let labels = img
        .pixels()
        .iter()
        .map(|&v| {
            let b = intensity_to_bin(v);
            cuts.iter().filter(|&&k| b > k).count() as u8
        })
        .collect();
    Ok(MultiOtsu {
        thresholds: cuts.iter().map(|&k| bin_intensity(k)).collect(),
        bins: cuts.iter().map(|&k| k as u8).collect(),
        class_map: ClassMap::from_labels(img.width(), img.height(), classes, labels),
    })
}

fn bin_intensity<T: Scalar>(bin: usize) -> T {
    T::from_count(bin) / T::lit(255.0)
}
