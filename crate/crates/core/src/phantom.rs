//! Synthetic images with known ground truth, for tests, demos and the
//! acceptance suite. Nothing here resembles real anatomy beyond the coarse
//! intensity layout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imaging::{BinaryMask, Image};
use crate::scalar::Scalar;

/// Filled disk: pixel centres within `r` of `(cx, cy)`.
pub fn disk_mask(width: usize, height: usize, cx: f64, cy: f64, r: f64) -> BinaryMask {
    BinaryMask::from_fn(width, height, |x, y| {
        let (dx, dy) = (x as f64 - cx, y as f64 - cy);
        dx * dx + dy * dy <= r * r
    })
}

/// Two-level image: `fg` on the mask, `bg` elsewhere.
pub fn paint<T: Scalar>(mask: &BinaryMask, fg: f64, bg: f64) -> Image<T> {
    Image::from_fn(mask.width(), mask.height(), |x, y| {
        T::lit(if mask.get(x, y) { fg } else { bg })
    })
}

#[derive(Debug, Clone)]
pub struct Phantom<T> {
    pub image: Image<T>,
    /// The structure a pipeline is expected to find.
    pub truth: BinaryMask,
}

/// Radiograph-like phantom: dark soft tissue on both sides of a bright
/// vertical shaft, with a brighter round blob inside the shaft and a little
/// uniform noise. `truth` is the blob.
pub fn xray_phantom<T: Scalar>(size: usize, seed: u64) -> Phantom<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as f64;
    let margin = (0.04 * s).round() as usize;
    let cx = s / 2.0 + rng.random_range(-0.05..0.05) * s;
    let cy = s / 2.0 + rng.random_range(-0.1..0.1) * s;
    let r = s * rng.random_range(0.2..0.23);
    let truth = disk_mask(size, size, cx, cy, r);
    let image = Image::from_fn(size, size, |x, y| {
        let base = if truth.get(x, y) {
            0.9
        } else if x >= margin && x < size - margin {
            0.55
        } else {
            0.15
        };
        T::lit(base + rng.random_range(-0.03..0.03))
    });
    Phantom { image, truth }
}

/// MRI-like phantom: dark background, a muscle band across the middle and a
/// bright tumour blob overlapping the band. `truth` is the tumour.
pub fn mri_phantom<T: Scalar>(size: usize, seed: u64) -> Phantom<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = size as f64;
    let top = (s * rng.random_range(0.2..0.3)) as usize;
    let bottom = (s * rng.random_range(0.7..0.8)) as usize;
    let cx = s * rng.random_range(0.4..0.6);
    let cy = s * rng.random_range(0.45..0.55);
    let r = s * rng.random_range(0.12..0.16);
    let truth = disk_mask(size, size, cx, cy, r);
    let image = Image::from_fn(size, size, |x, y| {
        T::lit(if truth.get(x, y) {
            0.9
        } else if (top..bottom).contains(&y) {
            0.45
        } else {
            0.05
        })
    });
    Phantom { image, truth }
}

/// Uniform random 8-bit image.
pub fn random_u8_image<T: Scalar>(width: usize, height: usize, seed: u64) -> Image<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<u8> = (0..width * height).map(|_| rng.random()).collect();
    Image::from_u8(width, height, &data).expect("dimensions match data")
}
