//! 1-D K-means on pixel intensity.
//!
//! Pixels are collapsed to their distinct intensities with multiplicities, so
//! each Lloyd step costs `O(distinct * k)` regardless of image size. Seeding is
//! k-means++ driven by a ChaCha8 stream derived from the caller's seed; the
//! best of [`KMEANS_N_INIT`] seeded runs (lowest SSE, earliest on ties) is kept.
//! One more run starts from the exact optimal 1-D partition (dynamic
//! programming over sorted intensities), so the retained SSE is never above
//! what any restart strategy could reach.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ClassMap, Image};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const KMEANS_MAX_ITER: usize = 300;
pub const KMEANS_TOL: f64 = 1e-4;
pub const KMEANS_N_INIT: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult<T> {
    /// Labels renumbered so that label 0 is the darkest centroid.
    pub class_map: ClassMap,
    /// Ascending.
    pub centroids: Vec<T>,
    /// Within-cluster sum of squared intensity deviations.
    pub sse: T,
    /// Lloyd iterations of the retained run.
    pub iterations: usize,
    pub converged: bool,
}

struct Run<T> {
    centroids: Vec<T>,
    assignment: Vec<usize>,
    sse: T,
    iterations: usize,
    converged: bool,
}

pub fn kmeans_segment<T: Scalar>(img: &Image<T>, k: usize, seed: u64) -> Result<KmeansResult<T>> {
    if k < 2 {
        return Err(Error::param("k", format!("must be >= 2, got {k}")));
    }
    let (values, counts) = distinct_values(img);
    if values.len() < k {
        return Err(Error::DegenerateKmeans {
            k,
            distinct: values.len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Run<T>> = None;
    for _ in 0..KMEANS_N_INIT {
        let init = kmeans_plus_plus(&values, &counts, k, &mut rng);
        let run = lloyd(&values, &counts, init);
        if best.as_ref().is_none_or(|b| run.sse < b.sse) {
            best = Some(run);
        }
    }
    let exact = lloyd(
        &values,
        &counts,
        optimal_partition_means(&values, &counts, k),
    );
    if best.as_ref().is_none_or(|b| exact.sse < b.sse) {
        best = Some(exact);
    }
    let run = best.expect("at least one initialisation");

    // relabel by ascending centroid
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        run.centroids[a]
            .partial_cmp(&run.centroids[b])
            .expect("finite centroids")
            .then(a.cmp(&b))
    });
    let mut rank = vec![0u8; k];
    for (r, &c) in order.iter().enumerate() {
        rank[c] = r as u8;
    }
    let centroids = order.iter().map(|&c| run.centroids[c]).collect();

    let labels = img
        .pixels()
        .iter()
        .map(|v| {
            let idx = values
                .binary_search_by(|probe| probe.partial_cmp(v).expect("finite"))
                .expect("pixel value present");
            rank[run.assignment[idx]]
        })
        .collect();
    Ok(KmeansResult {
        class_map: ClassMap::from_labels(img.width(), img.height(), k, labels),
        centroids,
        sse: run.sse,
        iterations: run.iterations,
        converged: run.converged,
    })
}

fn distinct_values<T: Scalar>(img: &Image<T>) -> (Vec<T>, Vec<usize>) {
    let mut sorted = img.pixels().to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite intensities"));
    let mut values: Vec<T> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for v in sorted {
        if values.last() == Some(&v) {
            *counts.last_mut().unwrap() += 1;
        } else {
            values.push(v);
            counts.push(1);
        }
    }
    (values, counts)
}

/// Index of the first cumulative weight exceeding `target`.
fn pick(weights: &[f64], target: f64) -> usize {
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if acc > target {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn kmeans_plus_plus<T: Scalar>(
    values: &[T],
    counts: &[usize],
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<T> {
    let total: f64 = counts.iter().map(|&c| c as f64).sum();
    let weights: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let first = pick(&weights, rng.random::<f64>() * total);
    let mut centres = vec![values[first]];
    let mut d2: Vec<f64> = values
        .iter()
        .map(|&v| (v - values[first]).as_f64().powi(2))
        .collect();
    while centres.len() < k {
        let w: Vec<f64> = d2.iter().zip(counts).map(|(&d, &c)| d * c as f64).collect();
        let mass: f64 = w.iter().sum();
        let next = pick(&w, rng.random::<f64>() * mass);
        let c = values[next];
        centres.push(c);
        for (d, &v) in d2.iter_mut().zip(values) {
            *d = d.min((v - c).as_f64().powi(2));
        }
    }
    centres
}

/// Means of the SSE-optimal split of the sorted `values` into `k` contiguous
/// non-empty groups. `O(k n log n)` via the monotone split point.
fn optimal_partition_means<T: Scalar>(values: &[T], counts: &[usize], k: usize) -> Vec<T> {
    let n = values.len();
    let mut w = vec![0.0; n + 1];
    let mut s1 = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for (i, (&v, &c)) in values.iter().zip(counts).enumerate() {
        let (v, c) = (v.as_f64(), c as f64);
        w[i + 1] = w[i] + c;
        s1[i + 1] = s1[i] + c * v;
        s2[i + 1] = s2[i] + c * v * v;
    }
    // values[i..j]
    let cost = |i: usize, j: usize| {
        let m = s1[j] - s1[i];
        (s2[j] - s2[i] - m * m / (w[j] - w[i])).max(0.0)
    };

    // prev[j]: best cost of splitting values[..j] into the groups so far
    let mut prev: Vec<f64> = (0..=n)
        .map(|j| if j == 0 { f64::INFINITY } else { cost(0, j) })
        .collect();
    let mut splits: Vec<Vec<usize>> = Vec::with_capacity(k);
    splits.push(vec![0; n + 1]);
    for g in 1..k {
        let mut cur = vec![f64::INFINITY; n + 1];
        let mut arg = vec![0usize; n + 1];
        // group g covers values[i..j] with g <= i < j, j >= g + 1
        fill(g + 1, n, g, n - 1, &prev, &cost, &mut cur, &mut arg);
        prev = cur;
        splits.push(arg);
    }

    let mut bounds = vec![n; k + 1];
    for g in (1..k).rev() {
        bounds[g] = splits[g][bounds[g + 1]];
    }
    bounds[0] = 0;
    (0..k)
        .map(|g| {
            let (i, j) = (bounds[g], bounds[g + 1]);
            T::lit((s1[j] - s1[i]) / (w[j] - w[i]))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn fill(
    jlo: usize,
    jhi: usize,
    ilo: usize,
    ihi: usize,
    prev: &[f64],
    cost: &impl Fn(usize, usize) -> f64,
    cur: &mut [f64],
    arg: &mut [usize],
) {
    if jlo > jhi {
        return;
    }
    let j = (jlo + jhi) / 2;
    let (mut best, mut best_i) = (f64::INFINITY, ilo);
    for (i, &p) in prev.iter().enumerate().take(ihi.min(j - 1) + 1).skip(ilo) {
        let c = p + cost(i, j);
        if c < best {
            best = c;
            best_i = i;
        }
    }
    cur[j] = best;
    arg[j] = best_i;
    if j > jlo {
        fill(jlo, j - 1, ilo, best_i, prev, cost, cur, arg);
    }
    fill(j + 1, jhi, best_i, ihi, prev, cost, cur, arg);
}

fn nearest<T: Scalar>(v: T, centroids: &[T]) -> usize {
    let mut best = 0;
    let mut best_d = (v - centroids[0]).abs();
    for (i, &c) in centroids.iter().enumerate().skip(1) {
        let d = (v - c).abs();
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

fn lloyd<T: Scalar>(values: &[T], counts: &[usize], mut centroids: Vec<T>) -> Run<T> {
    let k = centroids.len();
    let tol = T::lit(KMEANS_TOL);
    let mut assignment: Vec<usize> = values.iter().map(|&v| nearest(v, &centroids)).collect();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < KMEANS_MAX_ITER {
        iterations += 1;
        let mut sums = vec![T::zero(); k];
        let mut sizes = vec![0usize; k];
        for ((&v, &n), &a) in values.iter().zip(counts).zip(&assignment) {
            sums[a] += v * T::from_count(n);
            sizes[a] += n;
        }
        let mut movement = T::zero();
        for c in 0..k {
            if sizes[c] > 0 {
                let updated = sums[c] / T::from_count(sizes[c]);
                movement = movement.max((updated - centroids[c]).abs());
                centroids[c] = updated;
            }
        }
        let next: Vec<usize> = values.iter().map(|&v| nearest(v, &centroids)).collect();
        let stable = next == assignment;
        assignment = next;
        if movement < tol && stable {
            converged = true;
            break;
        }
    }
    let sse = values
        .iter()
        .zip(counts)
        .zip(&assignment)
        .fold(T::zero(), |acc, ((&v, &n), &a)| {
            let d = v - centroids[a];
            acc + d * d * T::from_count(n)
        });
    Run {
        centroids,
        assignment,
        sse,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_level() -> Image<f64> {
        Image::from_fn(30, 30, |x, y| {
            if x < 10 {
                0.1
            } else if y < 15 {
                0.5
            } else {
                0.9
            }
        })
    }

    #[test]
    fn recovers_separable_levels_for_any_seed() {
        let img = three_level();
        let reference = kmeans_segment(&img, 3, 0).unwrap();
        for (c, want) in reference.centroids.iter().zip([0.1, 0.5, 0.9]) {
            assert!((c - want).abs() < 1e-12);
        }
        for (i, &v) in img.pixels().iter().enumerate() {
            let want = [0.1, 0.5, 0.9].iter().position(|&l| l == v).unwrap() as u8;
            assert_eq!(reference.class_map.labels()[i], want);
        }
        assert!(reference.sse.abs() < 1e-20);
        for seed in [1, 7, 42, 1_000_003] {
            assert_eq!(
                kmeans_segment(&img, 3, seed).unwrap().class_map,
                reference.class_map
            );
        }
    }

    #[test]
    fn too_few_distinct_values() {
        let img = Image::<f64>::from_fn(8, 8, |x, _| if x < 4 { 0.0 } else { 1.0 });
        let err = kmeans_segment(&img, 3, 1).unwrap_err();
        assert_eq!(err.code(), "DEGENERATE_KMEANS");
        assert!(kmeans_segment(&img, 1, 1).is_err());
    }

    #[test]
    fn bit_deterministic_for_fixed_seed() {
        let img = Image::<f64>::from_fn(32, 32, |x, y| ((x * 31 + y * 17) % 53) as f64 / 52.0);
        let a = kmeans_segment(&img, 4, 99).unwrap();
        let b = kmeans_segment(&img, 4, 99).unwrap();
        assert_eq!(a, b);
        assert!(a.centroids.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn optimal_partition_matches_exhaustive_splits() {
        let values: Vec<f64> = vec![0.02, 0.05, 0.11, 0.3, 0.31, 0.47, 0.5, 0.66, 0.8, 0.97];
        let counts = vec![3, 1, 4, 1, 5, 9, 2, 6, 5, 3];
        let sse = |bounds: &[usize]| -> f64 {
            bounds
                .windows(2)
                .map(|b| {
                    let (vs, cs) = (&values[b[0]..b[1]], &counts[b[0]..b[1]]);
                    let n: f64 = cs.iter().map(|&c| c as f64).sum();
                    let m: f64 = vs.iter().zip(cs).map(|(v, &c)| v * c as f64).sum::<f64>() / n;
                    vs.iter()
                        .zip(cs)
                        .map(|(v, &c)| (v - m).powi(2) * c as f64)
                        .sum::<f64>()
                })
                .sum()
        };
        let mut best = f64::INFINITY;
        for a in 1..values.len() {
            for b in a + 1..values.len() {
                best = best.min(sse(&[0, a, b, values.len()]));
            }
        }
        let means = optimal_partition_means(&values, &counts, 3);
        let got: f64 = values
            .iter()
            .zip(&counts)
            .map(|(&v, &c)| {
                means
                    .iter()
                    .map(|m| (v - m).powi(2))
                    .fold(f64::INFINITY, f64::min)
                    * c as f64
            })
            .sum();
        assert!((got - best).abs() < 1e-12, "{got} vs {best}");
    }
}
