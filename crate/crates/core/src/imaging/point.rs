use super::Image;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `v -> v^gamma`.
pub fn gamma_correct<T: Scalar>(img: &Image<T>, gamma: T) -> Result<Image<T>> {
    if !(gamma.is_finite() && gamma > T::zero()) {
        return Err(Error::param("gamma", format!("must be > 0, got {gamma}")));
    }
    if gamma == T::one() {
        return Ok(img.clone());
    }
    Ok(img.map(|v| v.powf(gamma)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StretchResult<T> {
    pub image: Image<T>,
    /// The two percentile values coincided; `image` is all zeros.
    pub degenerate: bool,
    pub low: T,
    pub high: T,
}

/// Linear percentile stretch: the `p_low` percentile maps to 0 and `p_high`
/// to 1, with clamping outside. Percentiles use linear interpolation between
/// order statistics.
pub fn contrast_stretch<T: Scalar>(
    img: &Image<T>,
    p_low: T,
    p_high: T,
) -> Result<StretchResult<T>> {
    let hundred = T::lit(100.0);
    if !(p_low >= T::zero() && p_high <= hundred && p_low < p_high) {
        return Err(Error::param(
            "percentiles",
            format!("need 0 <= p_low < p_high <= 100, got ({p_low}, {p_high})"),
        ));
    }
    let mut sorted = img.pixels().to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite intensities"));
    let low = percentile(&sorted, p_low);
    let high = percentile(&sorted, p_high);
    if high <= low {
        return Ok(StretchResult {
            image: Image::constant(img.width(), img.height(), T::zero()),
            degenerate: true,
            low,
            high,
        });
    }
    let span = high - low;
    Ok(StretchResult {
        image: img.map(|v| (v - low) / span),
        degenerate: false,
        low,
        high,
    })
}

fn percentile<T: Scalar>(sorted: &[T], p: T) -> T {
    let last = sorted.len() - 1;
    let pos = p / T::lit(100.0) * T::from_count(last);
    let lo = pos.floor().to_usize().unwrap_or(0).min(last);
    let hi = (lo + 1).min(last);
    let frac = pos - T::from_count(lo);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}
