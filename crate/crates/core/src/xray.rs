//! Radiograph lesion segmentation.
//!
//! blur -> gamma -> CLAHE -> contrast stretch -> Otsu -> Chan–Vese -> gamma.
//! Chan–Vese starts from the Otsu mask and refines it; the second gamma only
//! produces the display image.

use serde::{Deserialize, Serialize};

use crate::error::{Result, StepContext};
use crate::imaging::{
    chan_vese_from_mask, clahe, contrast_stretch, gamma_correct, gaussian_blur, otsu_threshold,
    BinaryMask, ChanVeseParams, ClaheParams, Image,
};
use crate::scalar::Scalar;

pub const STEP_BLUR: &str = "gaussian_blur";
pub const STEP_GAMMA1: &str = "gamma1";
pub const STEP_CLAHE: &str = "clahe";
pub const STEP_STRETCH: &str = "contrast_stretch";
pub const STEP_OTSU: &str = "otsu";
pub const STEP_CHAN_VESE: &str = "chan_vese";
pub const STEP_GAMMA2: &str = "gamma2";

/// Which intermediate image Chan–Vese runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChanVeseInput {
    Original,
    Equalized,
    #[default]
    Stretched,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "", default, deny_unknown_fields)]
pub struct XrayConfig<T: Scalar> {
    pub gaussian_sigma: T,
    pub gamma1: T,
    pub clahe: ClaheParams<T>,
    /// Percentiles mapped to 0 and 1.
    pub stretch_low: T,
    pub stretch_high: T,
    pub chan_vese: ChanVeseParams<T>,
    pub chan_vese_input: ChanVeseInput,
    pub gamma2: T,
}

impl<T: Scalar> Default for XrayConfig<T> {
    fn default() -> Self {
        Self {
            gaussian_sigma: T::one(),
            gamma1: T::lit(0.8),
            clahe: ClaheParams::default(),
            stretch_low: T::lit(2.0),
            stretch_high: T::lit(98.0),
            chan_vese: ChanVeseParams::default(),
            chan_vese_input: ChanVeseInput::default(),
            gamma2: T::lit(1.2),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Artifact<T> {
    Image(Image<T>),
    Mask(BinaryMask),
}

#[derive(Debug, Clone, PartialEq)]
pub struct XraySegmentation<T: Scalar> {
    pub lesion_mask: BinaryMask,
    pub otsu_mask: BinaryMask,
    pub otsu_threshold: T,
    /// Stretched image after the second gamma correction.
    pub display: Image<T>,
    /// `(step, output)` in pipeline order; empty unless requested.
    pub intermediates: Vec<(&'static str, Artifact<T>)>,
    pub config: XrayConfig<T>,
    pub converged: bool,
    pub iterations: usize,
}

pub fn segment_xray<T: Scalar>(
    img: &Image<T>,
    cfg: &XrayConfig<T>,
    record_intermediates: bool,
) -> Result<XraySegmentation<T>> {
    let mut steps = Vec::new();
    let mut record = |name: &'static str, a: Artifact<T>| {
        if record_intermediates {
            steps.push((name, a));
        }
    };

    let blurred = gaussian_blur(img, cfg.gaussian_sigma).in_step(STEP_BLUR)?;
    record(STEP_BLUR, Artifact::Image(blurred.clone()));
    let bright = gamma_correct(&blurred, cfg.gamma1).in_step(STEP_GAMMA1)?;
    record(STEP_GAMMA1, Artifact::Image(bright.clone()));
    let c = &cfg.clahe;
    let equalized = clahe(&bright, c.clip_limit, c.tiles_x, c.tiles_y).in_step(STEP_CLAHE)?;
    record(STEP_CLAHE, Artifact::Image(equalized.clone()));
    let stretched = contrast_stretch(&equalized, cfg.stretch_low, cfg.stretch_high)
        .in_step(STEP_STRETCH)?
        .image;
    record(STEP_STRETCH, Artifact::Image(stretched.clone()));
    let otsu = otsu_threshold(&stretched).in_step(STEP_OTSU)?;
    record(STEP_OTSU, Artifact::Mask(otsu.mask.clone()));

    let cv_input = match cfg.chan_vese_input {
        ChanVeseInput::Original => img,
        ChanVeseInput::Equalized => &equalized,
        ChanVeseInput::Stretched => &stretched,
    };
    let cv = chan_vese_from_mask(cv_input, &otsu.mask, &cfg.chan_vese).in_step(STEP_CHAN_VESE)?;
    record(STEP_CHAN_VESE, Artifact::Mask(cv.mask.clone()));
    let display = gamma_correct(&stretched, cfg.gamma2).in_step(STEP_GAMMA2)?;
    record(STEP_GAMMA2, Artifact::Image(display.clone()));

    Ok(XraySegmentation {
        lesion_mask: cv.mask,
        otsu_mask: otsu.mask,
        otsu_threshold: otsu.threshold,
        display,
        intermediates: steps,
        config: cfg.clone(),
        converged: cv.converged,
        iterations: cv.iterations,
    })
}
