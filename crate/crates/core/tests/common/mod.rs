//! Independent reference implementations shared by the integration tests and
//! the acceptance suite. Nothing here calls into the library's algorithms.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Surgical safety margins as published, one row per radius:
/// `(radius, IIB margin, IB margin, IIA margin)`, all in cm.
pub const PUBLISHED_MARGINS: [(f64, f64, f64, f64); 18] = [
    (0.50, 1.01990, 2.828850, 1.77170),
    (0.75, 1.54585, 3.065975, 2.00225),
    (1.00, 2.07180, 3.303100, 2.23280),
    (1.25, 2.59775, 3.540225, 2.46335),
    (1.50, 3.12370, 3.777350, 2.69390),
    (1.75, 3.64965, 4.014475, 2.92445),
    (2.00, 4.17560, 4.251600, 3.15500),
    (2.25, 4.70155, 4.488725, 3.38555),
    (2.50, 5.22750, 4.725850, 3.61610),
    (2.75, 5.75345, 4.962975, 3.84665),
    (3.00, 6.27940, 5.200100, 4.07720),
    (3.25, 6.80535, 5.437225, 4.30775),
    (3.50, 7.33130, 5.674350, 4.53830),
    (3.75, 7.85725, 5.911475, 4.76885),
    (4.00, 8.38320, 6.148600, 4.99940),
    (4.25, 8.90915, 6.385725, 5.22995),
    (4.50, 9.43510, 6.622850, 5.46050),
    (4.75, 9.96105, 6.859975, 5.69105),
];

/// 8-bit histogram of raw byte data.
pub fn byte_histogram(data: &[u8]) -> [u64; 256] {
    let mut h = [0u64; 256];
    for &b in data {
        h[b as usize] += 1;
    }
    h
}

/// Exact fraction `num / den` with a non-negative numerator.
#[derive(Clone, Copy)]
struct Frac {
    num: u128,
    den: u128,
}

impl Frac {
    fn gt(self, other: Frac) -> bool {
        self.num * other.den > other.num * self.den
    }
}

/// Cumulative counts and intensity sums, so class statistics are O(1).
struct Cumulative {
    n: [i128; 257],
    s: [i128; 257],
}

impl Cumulative {
    #[allow(clippy::needless_range_loop)]
    fn new(h: &[u64; 256]) -> Self {
        let mut c = Cumulative {
            n: [0; 257],
            s: [0; 257],
        };
        for b in 0..256 {
            c.n[b + 1] = c.n[b] + h[b] as i128;
            c.s[b + 1] = c.s[b] + (h[b] * b as u64) as i128;
        }
        c
    }

    fn class(&self, lo: usize, hi: usize) -> (i128, i128) {
        (self.n[hi] - self.n[lo], self.s[hi] - self.s[lo])
    }
}

/// Between-class variance over `classes` (each `(n, s)`), up to the constant
/// factor `1/N^2`: `sum_c (N s_c - n_c S)^2 / n_c`.
fn between_class(classes: &[(i128, i128)]) -> Option<Frac> {
    if classes.iter().any(|&(n, _)| n == 0) {
        return None;
    }
    let total_n: i128 = classes.iter().map(|c| c.0).sum();
    let total_s: i128 = classes.iter().map(|c| c.1).sum();
    let den: u128 = classes.iter().map(|&(n, _)| n as u128).product();
    let mut num = 0u128;
    for (i, &(n, s)) in classes.iter().enumerate() {
        let d = total_n * s - n * total_s;
        let others: u128 = classes
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, c)| c.0 as u128)
            .product();
        num += (d * d) as u128 * others;
    }
    Some(Frac { num, den })
}

/// Otsu by exhaustive search with exact arithmetic. Returns the bin `k`
/// such that the foreground is bins `> k`; lowest `k` wins ties.
pub fn otsu_brute(h: &[u64; 256]) -> Option<usize> {
    let c = Cumulative::new(h);
    let mut best: Option<(Frac, usize)> = None;
    for k in 0..255 {
        let Some(score) = between_class(&[c.class(0, k + 1), c.class(k + 1, 256)]) else {
            continue;
        };
        if best.is_none_or(|(b, _)| score.gt(b)) {
            best = Some((score, k));
        }
    }
    best.map(|b| b.1)
}

/// Three-class Otsu over all `O(256^2)` cut pairs, exact arithmetic,
/// lexicographically lowest cut pair on ties.
pub fn multi_otsu3_brute(h: &[u64; 256]) -> Option<[usize; 2]> {
    let c = Cumulative::new(h);
    let mut best: Option<(Frac, [usize; 2])> = None;
    for k1 in 0..254 {
        for k2 in k1 + 1..255 {
            let classes = [
                c.class(0, k1 + 1),
                c.class(k1 + 1, k2 + 1),
                c.class(k2 + 1, 256),
            ];
            let Some(score) = between_class(&classes) else {
                continue;
            };
            if best.is_none_or(|(b, _)| score.gt(b)) {
                best = Some((score, [k1, k2]));
            }
        }
    }
    best.map(|b| b.1)
}

/// Four-class version; keep images small (<= 16x16) so the exact products
/// stay inside `u128`.
pub fn multi_otsu4_brute(h: &[u64; 256]) -> Option<[usize; 3]> {
    let c = Cumulative::new(h);
    let mut best: Option<(Frac, [usize; 3])> = None;
    for k1 in 0..253 {
        for k2 in k1 + 1..254 {
            for k3 in k2 + 1..255 {
                let classes = [
                    c.class(0, k1 + 1),
                    c.class(k1 + 1, k2 + 1),
                    c.class(k2 + 1, k3 + 1),
                    c.class(k3 + 1, 256),
                ];
                let Some(score) = between_class(&classes) else {
                    continue;
                };
                if best.is_none_or(|(b, _)| score.gt(b)) {
                    best = Some((score, [k1, k2, k3]));
                }
            }
        }
    }
    best.map(|b| b.1)
}

/// Randomised 8-bit image of one of several histogram shapes, chosen by seed.
pub fn random_suite_image(seed: u64, w: usize, h: usize) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = w * h;
    match seed % 5 {
        0 => (0..n).map(|_| rng.random()).collect(),
        1 => {
            // a few spikes
            let levels: Vec<u8> = (0..rng.random_range(3..7)).map(|_| rng.random()).collect();
            (0..n)
                .map(|_| levels[rng.random_range(0..levels.len())])
                .collect()
        }
        2 => {
            // bimodal clumps
            let (a, b): (u8, u8) = (rng.random_range(10..100), rng.random_range(150..245));
            (0..n)
                .map(|_| {
                    let c = if rng.random_bool(0.4) { a } else { b };
                    c.saturating_add(rng.random_range(0..10))
                })
                .collect()
        }
        3 => {
            // trimodal with noise
            let centres = [
                rng.random_range(5..60u8),
                rng.random_range(90..160),
                rng.random_range(190..250),
            ];
            (0..n)
                .map(|_| centres[rng.random_range(0..3)].saturating_add(rng.random_range(0..6)))
                .collect()
        }
        _ => {
            // narrow band
            let base: u8 = rng.random_range(0..200);
            (0..n).map(|_| base + rng.random_range(0..40)).collect()
        }
    }
}

/// Plain Lloyd K-means with uniform random initial centroids drawn from the
/// data, run to a fixed assignment. Returns the best SSE over `restarts`.
pub fn kmeans_best_of_restarts(values: &[f64], k: usize, restarts: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut distinct = values.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    let mut best = f64::INFINITY;
    for _ in 0..restarts {
        let mut centres: Vec<f64> = rand::seq::index::sample(&mut rng, distinct.len(), k)
            .into_iter()
            .map(|i| distinct[i])
            .collect();
        let mut assign = vec![usize::MAX; values.len()];
        for _ in 0..10_000 {
            let mut changed = false;
            for (a, &v) in assign.iter_mut().zip(values) {
                let c = (0..k)
                    .min_by(|&i, &j| {
                        (v - centres[i])
                            .abs()
                            .partial_cmp(&(v - centres[j]).abs())
                            .unwrap()
                    })
                    .unwrap();
                if *a != c {
                    *a = c;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            for (c, centre) in centres.iter_mut().enumerate() {
                let members: Vec<f64> = values
                    .iter()
                    .zip(&assign)
                    .filter(|&(_, &a)| a == c)
                    .map(|(&v, _)| v)
                    .collect();
                if !members.is_empty() {
                    *centre = members.iter().sum::<f64>() / members.len() as f64;
                }
            }
        }
        let sse: f64 = values
            .iter()
            .zip(&assign)
            .map(|(&v, &a)| (v - centres[a]).powi(2))
            .sum();
        best = best.min(sse);
    }
    best
}

/// Per-pixel counting oracle: `(tp, fp, fn, tn)`.
pub fn count_pixels(pred: &[bool], gt: &[bool]) -> (u64, u64, u64, u64) {
    let mut c = (0, 0, 0, 0);
    for i in 0..pred.len() {
        if pred[i] && gt[i] {
            c.0 += 1;
        } else if pred[i] {
            c.1 += 1;
        } else if gt[i] {
            c.2 += 1;
        } else {
            c.3 += 1;
        }
    }
    c
}

/// Metrics straight from the textbook definitions, with the empty-mask
/// conventions (both empty -> 1, one empty -> 0).
pub struct OracleMetrics {
    pub dice: f64,
    pub jaccard: f64,
    pub sensitivity: f64,
    pub precision: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub micro_jaccard: f64,
}

pub fn oracle_metrics(pred: &[bool], gt: &[bool]) -> OracleMetrics {
    let (tp, fp, fn_, tn) = count_pixels(pred, gt);
    let (tp, fp, fn_, tn) = (tp as f64, fp as f64, fn_ as f64, tn as f64);
    let pred_n = tp + fp;
    let gt_n = tp + fn_;
    let both_empty = pred_n == 0.0 && gt_n == 0.0;
    let or_one = |v: f64| if both_empty { 1.0 } else { v };
    let safe = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
    let precision = or_one(safe(tp, pred_n));
    let sensitivity = or_one(safe(tp, gt_n));
    let f1 = or_one(safe(2.0 * precision * sensitivity, precision + sensitivity));
    // micro: per-class counts pooled over {fg, bg}
    let (class_tp, class_fp, class_fn) = (tp + tn, fp + fn_, fn_ + fp);
    OracleMetrics {
        dice: or_one(safe(2.0 * tp, pred_n + gt_n)),
        jaccard: or_one(safe(tp, tp + fp + fn_)),
        sensitivity,
        precision,
        f1,
        accuracy: (tp + tn) / (tp + fp + fn_ + tn),
        micro_jaccard: class_tp / (class_tp + class_fp + class_fn),
    }
}

/// Pixel set of a solid rasterised disk.
pub fn disk_bits(w: usize, h: usize, cx: f64, cy: f64, r: f64) -> Vec<bool> {
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (x as f64 - cx, y as f64 - cy);
            out.push(dx * dx + dy * dy <= r * r);
        }
    }
    out
}
