//! Image rasters and the point/neighbourhood operations both pipelines are
//! composed from.

mod chan_vese;
mod clahe;
mod filter;
pub mod io;
mod kmeans;
mod morphology;
mod point;
mod threshold;

pub use chan_vese::{chan_vese, chan_vese_from_mask, ChanVeseParams, ChanVeseResult};
pub use clahe::{clahe, ClaheParams};
pub use filter::{gaussian_blur, gaussian_kernel, sharpen, SharpenParams};
pub use kmeans::{kmeans_segment, KmeansResult, KMEANS_MAX_ITER, KMEANS_N_INIT, KMEANS_TOL};
pub use morphology::{dilate, erode, morph_close, morph_open, StructuringElement};
pub use point::{contrast_stretch, gamma_correct, StretchResult};
pub use threshold::{
    histogram, intensity_to_bin, multi_otsu, otsu_threshold, MultiOtsu, Otsu, BINS,
};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major 2-D intensity raster with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    pixels: Vec<T>,
}

impl<T: Scalar> Image<T> {
    pub fn new(width: usize, height: usize, pixels: Vec<T>) -> Result<Self> {
        check_dims(width, height, pixels.len())?;
        if let Some(bad) = pixels
            .iter()
            .position(|v| !(v.is_finite() && *v >= T::zero() && *v <= T::one()))
        {
            return Err(Error::param(
                "pixels",
                format!("intensity at index {bad} is outside [0, 1]"),
            ));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Builds an image from a closure over `(x, y)`; values are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(width >= 1 && height >= 1, "image must be at least 1x1");
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(clamp01(f(x, y)));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn constant(width: usize, height: usize, value: T) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    /// Maps 8-bit samples by `v / 255`.
    pub fn from_u8(width: usize, height: usize, data: &[u8]) -> Result<Self> {
        check_dims(width, height, data.len())?;
        let scale = T::lit(255.0);
        Ok(Self {
            width,
            height,
            pixels: data
                .iter()
                .map(|&v| T::from_count(v as usize) / scale)
                .collect(),
        })
    }

    /// Quantises with `round(v * 255)`.
    pub fn to_u8(&self) -> Vec<u8> {
        let scale = T::lit(255.0);
        self.pixels
            .iter()
            .map(|&v| (v * scale).round().to_u8().unwrap_or(255))
            .collect()
    }

    /// Values are clamped into `[0, 1]`; non-finite values become 0.
    pub(crate) fn from_raw(width: usize, height: usize, pixels: Vec<T>) -> Self {
        debug_assert_eq!(pixels.len(), width * height);
        Self {
            width,
            height,
            pixels: pixels.into_iter().map(clamp01).collect(),
        }
    }

    pub(crate) fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_raw(
            self.width,
            self.height,
            self.pixels.iter().map(|&v| f(v)).collect(),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[T] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.pixels[y * self.width + x]
    }

    pub fn is_constant(&self) -> bool {
        let first = self.pixels[0];
        self.pixels.iter().all(|&v| v == first)
    }

    pub fn mean(&self) -> T {
        let sum = self.pixels.iter().fold(T::zero(), |acc, &v| acc + v);
        sum / T::from_count(self.len())
    }

    /// Population standard deviation.
    pub fn std_dev(&self) -> T {
        let mean = self.mean();
        let ss = self
            .pixels
            .iter()
            .fold(T::zero(), |acc, &v| acc + (v - mean) * (v - mean));
        (ss / T::from_count(self.len())).sqrt()
    }

    pub fn convert<U: Scalar>(&self) -> Image<U> {
        Image::from_raw(
            self.width,
            self.height,
            self.pixels.iter().map(|v| U::lit(v.as_f64())).collect(),
        )
    }
}

#[inline]
pub(crate) fn clamp01<T: Scalar>(v: T) -> T {
    if v.is_nan() {
        T::zero()
    } else {
        v.max(T::zero()).min(T::one())
    }
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::param("dimensions", "width and height must be >= 1"));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::param(
            "pixels",
            format!(
                "expected {}x{} = {} samples, got {len}",
                width,
                height,
                width * height
            ),
        ));
    }
    Ok(())
}

pub(crate) fn ensure_same_dims(left: (usize, usize), right: (usize, usize)) -> Result<()> {
    if left != right {
        return Err(Error::DimensionMismatch { left, right });
    }
    Ok(())
}

/// Foreground/background raster; `true` is foreground.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
    count: usize,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        check_dims(width, height, bits.len())?;
        Ok(Self::from_bits(width, height, bits))
    }

    pub(crate) fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Self {
        let count = bits.iter().filter(|&&b| b).count();
        Self {
            width,
            height,
            bits,
            count,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        assert!(width >= 1 && height >= 1, "mask must be at least 1x1");
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self::from_bits(width, height, bits)
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self::from_fn(width, height, |_, _| false)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Foreground pixel count.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn complement(&self) -> Self {
        Self::from_bits(
            self.width,
            self.height,
            self.bits.iter().map(|b| !b).collect(),
        )
    }

    /// Intersection-over-union; two empty masks score 1.
    pub fn iou(&self, other: &Self) -> Result<f64> {
        ensure_same_dims(self.dims(), other.dims())?;
        let (mut inter, mut union) = (0usize, 0usize);
        for (&a, &b) in self.bits.iter().zip(&other.bits) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        Ok(if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        })
    }

    /// Nearest-neighbour upscaling by an integer factor.
    pub fn upscale(&self, factor: usize) -> Self {
        assert!(factor >= 1);
        Self::from_fn(self.width * factor, self.height * factor, |x, y| {
            self.get(x / factor, y / factor)
        })
    }

    /// Mean `(x, y)` of the foreground pixels.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        if self.count == 0 {
            return None;
        }
        let (mut sx, mut sy) = (0.0, 0.0);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    sx += x as f64;
                    sy += y as f64;
                }
            }
        }
        Some((sx / self.count as f64, sy / self.count as f64))
    }
}

/// Per-pixel class indices produced by multi-Otsu or K-means.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMap {
    width: usize,
    height: usize,
    classes: usize,
    labels: Vec<u8>,
}

impl ClassMap {
    pub(crate) fn from_labels(
        width: usize,
        height: usize,
        classes: usize,
        labels: Vec<u8>,
    ) -> Self {
        debug_assert_eq!(labels.len(), width * height);
        debug_assert!(labels.iter().all(|&l| (l as usize) < classes));
        Self {
            width,
            height,
            classes,
            labels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn mask_of(&self, class: u8) -> BinaryMask {
        BinaryMask::from_bits(
            self.width,
            self.height,
            self.labels.iter().map(|&l| l == class).collect(),
        )
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}

/// Tissue labelling: 0 = background, 1 = tumor, 2 = neighbouring region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl LabelMask {
    pub const BACKGROUND: u8 = 0;
    pub const TUMOR: u8 = 1;
    pub const NEIGHBOR: u8 = 2;

    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        check_dims(width, height, labels.len())?;
        if let Some(i) = labels.iter().position(|&l| l > 2) {
            return Err(Error::param(
                "labels",
                format!("label {} at index {i} is not one of 0, 1, 2", labels[i]),
            ));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    /// Labels that occur at least once, ascending.
    pub fn present(&self) -> Vec<u8> {
        let mut seen = [false; 3];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        (0..3u8).filter(|&l| seen[l as usize]).collect()
    }

    /// True when at most one label occurs.
    pub fn is_degenerate(&self) -> bool {
        self.present().len() <= 1
    }

    pub fn mask_of(&self, label: u8) -> BinaryMask {
        BinaryMask::from_bits(
            self.width,
            self.height,
            self.labels.iter().map(|&l| l == label).collect(),
        )
    }
}
