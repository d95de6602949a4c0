use serde::{Deserialize, Serialize};

use super::Image;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Normalised 1-D Gaussian taps for offsets `-r..=r`, `r = ceil(3 sigma)`.
pub fn gaussian_kernel<T: Scalar>(sigma: T) -> Result<Vec<T>> {
    if !(sigma.is_finite() && sigma > T::zero()) {
        return Err(Error::param("sigma", format!("must be > 0, got {sigma}")));
    }
    let radius = (T::lit(3.0) * sigma).ceil().to_usize().unwrap_or(0).max(1);
    let two_var = T::lit(2.0) * sigma * sigma;
    let mut taps: Vec<T> = (0..=2 * radius)
        .map(|i| {
            let d = T::from_count(i) - T::from_count(radius);
            (-(d * d) / two_var).exp()
        })
        .collect();
    let sum = taps.iter().fold(T::zero(), |acc, &w| acc + w);
    for w in &mut taps {
        *w /= sum;
    }
    Ok(taps)
}

/// Separable Gaussian blur with edge replication.
pub fn gaussian_blur<T: Scalar>(img: &Image<T>, sigma: T) -> Result<Image<T>> {
    let kernel = gaussian_kernel(sigma)?;
    Ok(convolve_separable(img, &kernel))
}

fn convolve_separable<T: Scalar>(img: &Image<T>, kernel: &[T]) -> Image<T> {
    let (w, h) = img.dims();
    let r = (kernel.len() / 2) as isize;
    let src = img.pixels();

    let mut horiz = vec![T::zero(); w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = T::zero();
            for (k, &wt) in kernel.iter().enumerate() {
                let sx = (x as isize + k as isize - r).clamp(0, w as isize - 1) as usize;
                acc += wt * row[sx];
            }
            horiz[y * w + x] = acc;
        }
    }

    let mut out = vec![T::zero(); w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = T::zero();
            for (k, &wt) in kernel.iter().enumerate() {
                let sy = (y as isize + k as isize - r).clamp(0, h as isize - 1) as usize;
                acc += wt * horiz[sy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    Image::from_raw(w, h, out)
}

/// Unsharp-masking parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SharpenParams<T: Scalar> {
    pub amount: T,
    pub sigma: T,
}

impl<T: Scalar> Default for SharpenParams<T> {
    fn default() -> Self {
        Self {
            amount: T::one(),
            sigma: T::one(),
        }
    }
}

/// Unsharp mask: `clamp(img + amount * (img - blur(img, sigma)), 0, 1)`.
pub fn sharpen<T: Scalar>(img: &Image<T>, amount: T, sigma: T) -> Result<Image<T>> {
    if !(amount.is_finite() && amount >= T::zero()) {
        return Err(Error::param(
            "amount",
            format!("must be >= 0, got {amount}"),
        ));
    }
    let blurred = gaussian_blur(img, sigma)?;
    let pixels = img
        .pixels()
        .iter()
        .zip(blurred.pixels())
        .map(|(&v, &b)| v + amount * (v - b))
        .collect();
    Ok(Image::from_raw(img.width(), img.height(), pixels))
}
