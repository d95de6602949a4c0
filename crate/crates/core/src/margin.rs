//! Lesion statistics, linear fits and the per-stage surgical safety margin
//! model.
//!
//! The reference margin table is embedded as CSV and the model is fitted
//! from it by least squares, so the published table stays the only source of
//! the coefficients. The table is exactly linear per stage; the fit residuals
//! are kept on the model so callers can check that.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationRecord;
use crate::error::{Error, Result};
use crate::imaging::{ensure_same_dims, BinaryMask, Image};
use crate::scalar::Scalar;

pub const REFERENCE_TABLE_CSV: &str = include_str!("../data/table3.csv");

/// Radius range the reference table covers, in cm.
pub const TABLE_R_MIN: f64 = 0.50;
pub const TABLE_R_MAX: f64 = 4.75;
pub const TABLE_STEP: f64 = 0.25;

/// Predictions are reported to this many cm (1e-6).
const OUTPUT_DECIMALS: i32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EnnekingStage {
    IB,
    IIA,
    IIB,
}

impl EnnekingStage {
    pub const ALL: [EnnekingStage; 3] = [EnnekingStage::IIB, EnnekingStage::IB, EnnekingStage::IIA];

    pub fn as_str(self) -> &'static str {
        match self {
            EnnekingStage::IB => "IB",
            EnnekingStage::IIA => "IIA",
            EnnekingStage::IIB => "IIB",
        }
    }
}

impl FromStr for EnnekingStage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "IB" => Ok(EnnekingStage::IB),
            "IIA" => Ok(EnnekingStage::IIA),
            "IIB" => Ok(EnnekingStage::IIB),
            other => Err(Error::UnknownKey(format!("stage `{other}`"))),
        }
    }
}

impl fmt::Display for EnnekingStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Mean intensity over the mask.
pub fn weighted_mask_mean<T: Scalar>(img: &Image<T>, mask: &BinaryMask) -> Result<T> {
    pooled_mask_mean(&[(img, mask)])
}

/// Pixel-count weighted combination of several masks' means, i.e. the mean
/// over all masked pixels pooled together.
pub fn pooled_mask_mean<T: Scalar>(parts: &[(&Image<T>, &BinaryMask)]) -> Result<T> {
    let mut sum = T::zero();
    let mut n = 0usize;
    for (img, mask) in parts {
        ensure_same_dims(img.dims(), mask.dims())?;
        if mask.count() == 0 {
            return Err(Error::EmptyMask);
        }
        for (&v, &b) in img.pixels().iter().zip(mask.bits()) {
            if b {
                sum += v;
            }
        }
        n += mask.count();
    }
    if n == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / T::from_count(n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CorrelationFit<T: Scalar> {
    pub slope: T,
    pub intercept: T,
    /// Pearson correlation; 1 when `ys` is constant (the fit is exact).
    pub r: T,
    pub r_squared: T,
    pub n_points: usize,
}

/// Ordinary least squares line with Pearson correlation.
pub fn fit_linear<T: Scalar>(xs: &[T], ys: &[T]) -> Result<CorrelationFit<T>> {
    if xs.len() != ys.len() {
        return Err(Error::param(
            "ys",
            format!("length {} differs from xs length {}", ys.len(), xs.len()),
        ));
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientRows(format!(
            "a line fit needs at least 2 points, got {}",
            xs.len()
        )));
    }
    let n = T::from_count(xs.len());
    let mx = xs.iter().fold(T::zero(), |a, &v| a + v) / n;
    let my = ys.iter().fold(T::zero(), |a, &v| a + v) / n;
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx.is_nan() || sxx <= T::zero() {
        return Err(Error::param("xs", "all values are equal; slope undefined"));
    }
    let slope = sxy / sxx;
    let r = if syy > T::zero() {
        (sxy / (sxx * syy).sqrt()).max(-T::one()).min(T::one())
    } else {
        T::one()
    };
    Ok(CorrelationFit {
        slope,
        intercept: my - slope * mx,
        r,
        r_squared: r * r,
        n_points: xs.len(),
    })
}

/// How a mask becomes a radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusRule {
    /// Radius of the circle with the mask's area.
    #[default]
    EquivalentCircle,
    /// Largest distance from the centroid to a foreground pixel centre.
    Circumscribed,
}

pub fn lesion_radius<T: Scalar>(
    mask: &BinaryMask,
    cal: &CalibrationRecord<T>,
    rule: RadiusRule,
) -> Result<T> {
    if mask.count() == 0 {
        return Err(Error::EmptyMask);
    }
    let px = match rule {
        RadiusRule::EquivalentCircle => (T::from_count(mask.count()) / T::PI()).sqrt(),
        RadiusRule::Circumscribed => {
            let (cx, cy) = mask.centroid().expect("non-empty mask");
            let mut best = 0.0f64;
            for y in 0..mask.height() {
                for x in 0..mask.width() {
                    if mask.get(x, y) {
                        best = best.max((x as f64 - cx).hypot(y as f64 - cy));
                    }
                }
            }
            T::lit(best)
        }
    };
    Ok(px * cal.scale_cm_per_px)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TableRow<T: Scalar> {
    pub stage: EnnekingStage,
    pub radius_cm: T,
    pub margin_cm: T,
}

/// Parses rows from CSV with header `stage,radius_cm,margin_cm`.
pub fn parse_table<T: Scalar>(text: &str, origin: &Path) -> Result<Vec<TableRow<T>>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes())
        .deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::format(origin, e))
}

/// The embedded reference margin table.
pub fn reference_table<T: Scalar>() -> Vec<TableRow<T>> {
    parse_table(REFERENCE_TABLE_CSV, Path::new("table3.csv")).expect("embedded table parses")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct StageLine<T: Scalar> {
    pub slope: T,
    pub intercept: T,
    /// Largest |fit - table| over the stage's rows.
    pub max_residual: T,
    pub n_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MarginModel<T: Scalar> {
    #[serde(rename = "IB")]
    pub ib: StageLine<T>,
    #[serde(rename = "IIA")]
    pub iia: StageLine<T>,
    #[serde(rename = "IIB")]
    pub iib: StageLine<T>,
    /// Radii outside `[r_min, r_max]` are extrapolations.
    pub r_min: T,
    pub r_max: T,
}

impl<T: Scalar> MarginModel<T> {
    /// Model fitted from the embedded reference table.
    pub fn reference() -> Self {
        fit_margin_model(&reference_table()).expect("embedded table fits")
    }

    pub fn line(&self, stage: EnnekingStage) -> &StageLine<T> {
        match stage {
            EnnekingStage::IB => &self.ib,
            EnnekingStage::IIA => &self.iia,
            EnnekingStage::IIB => &self.iib,
        }
    }

    /// Radius where two stages' margins coincide, if the lines cross.
    pub fn crossover(&self, a: EnnekingStage, b: EnnekingStage) -> Option<T> {
        let (la, lb) = (self.line(a), self.line(b));
        let ds = la.slope - lb.slope;
        (ds != T::zero()).then(|| (lb.intercept - la.intercept) / ds)
    }
}

pub fn fit_margin_model<T: Scalar>(rows: &[TableRow<T>]) -> Result<MarginModel<T>> {
    let fit_stage = |stage: EnnekingStage| -> Result<StageLine<T>> {
        let (xs, ys): (Vec<T>, Vec<T>) = rows
            .iter()
            .filter(|r| r.stage == stage)
            .map(|r| (r.radius_cm, r.margin_cm))
            .unzip();
        if xs.len() < 2 {
            return Err(Error::InsufficientRows(format!(
                "stage {stage} has {} rows, needs 2",
                xs.len()
            )));
        }
        let fit = fit_linear(&xs, &ys)?;
        if fit.slope.is_nan() || fit.slope <= T::zero() {
            return Err(Error::param(
                "table",
                format!("stage {stage} margin must grow with radius"),
            ));
        }
        let max_residual = xs
            .iter()
            .zip(&ys)
            .map(|(&x, &y)| (fit.slope * x + fit.intercept - y).abs())
            .fold(T::zero(), T::max);
        Ok(StageLine {
            slope: fit.slope,
            intercept: fit.intercept,
            max_residual,
            n_rows: xs.len(),
        })
    };
    let radii = rows.iter().map(|r| r.radius_cm);
    let r_min = radii.clone().fold(T::infinity(), T::min);
    let r_max = radii.fold(T::neg_infinity(), T::max);
    Ok(MarginModel {
        ib: fit_stage(EnnekingStage::IB)?,
        iia: fit_stage(EnnekingStage::IIA)?,
        iib: fit_stage(EnnekingStage::IIB)?,
        r_min,
        r_max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct MarginPrediction<T: Scalar> {
    pub stage: EnnekingStage,
    pub lesion_radius_cm: T,
    pub margin_cm: T,
    pub extrapolated: bool,
}

fn round_to<T: Scalar>(v: T, decimals: i32) -> T {
    let f = T::lit(10f64.powi(decimals));
    (v * f).round() / f
}

pub fn predict_margin<T: Scalar>(
    model: &MarginModel<T>,
    stage: EnnekingStage,
    radius_cm: T,
) -> Result<MarginPrediction<T>> {
    if !(radius_cm.is_finite() && radius_cm > T::zero()) {
        return Err(Error::param(
            "radius_cm",
            format!("must be > 0, got {radius_cm}"),
        ));
    }
    let line = model.line(stage);
    Ok(MarginPrediction {
        stage,
        lesion_radius_cm: radius_cm,
        margin_cm: round_to(line.slope * radius_cm + line.intercept, OUTPUT_DECIMALS),
        extrapolated: radius_cm < model.r_min || radius_cm > model.r_max,
    })
}

/// Predictions on the inclusive grid `r_min, r_min + step, ... <= r_max`.
pub fn margin_table<T: Scalar>(
    model: &MarginModel<T>,
    stage: EnnekingStage,
    r_min: T,
    r_max: T,
    step: T,
) -> Result<Vec<MarginPrediction<T>>> {
    if !(step.is_finite() && step > T::zero()) {
        return Err(Error::param("step", format!("must be > 0, got {step}")));
    }
    if !(r_min.is_finite() && r_max.is_finite()) || r_min > r_max {
        return Err(Error::param(
            "r_max",
            format!("range [{r_min}, {r_max}] is empty"),
        ));
    }
    // slack for accumulated rounding in the last grid point
    let slack = step * T::lit(1e-9);
    let mut rows = Vec::new();
    for i in 0.. {
        let r = round_to(r_min + T::from_count(i) * step, 9);
        if r > r_max + slack {
            break;
        }
        rows.push(predict_margin(model, stage, r)?);
    }
    Ok(rows)
}

/// CSV with the radius/margin column pair of the reference table.
pub fn write_margin_table_csv<T: Scalar, W: Write>(
    rows: &[MarginPrediction<T>],
    out: W,
) -> Result<()> {
    let radius_header = match rows.first().map(|r| r.stage) {
        Some(EnnekingStage::IIB) | None => "bone_injury_radius_cm",
        Some(_) => "soft_tissue_injury_radius_cm",
    };
    let mut w = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| Error::format("<margin table>", e);
    w.write_record([
        "stage",
        radius_header,
        "safety_margin_radius_cm",
        "extrapolated",
    ])
    .map_err(to_err)?;
    for r in rows {
        w.write_record([
            r.stage.to_string(),
            format!("{:.2}", r.lesion_radius_cm.as_f64()),
            r.margin_cm.to_string(),
            r.extrapolated.to_string(),
        ])
        .map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io("<margin table>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_fit() {
        let f = fit_linear(&[0.0, 1.0], &[1.0, 3.0]).unwrap();
        assert_eq!((f.slope, f.intercept, f.r_squared), (2.0, 1.0, 1.0));
        assert!(fit_linear(&[2.0, 2.0], &[1.0, 3.0]).is_err());
        assert!(fit_linear(&[2.0], &[1.0]).is_err());
    }

    #[test]
    fn stage_parsing() {
        assert_eq!("iib".parse::<EnnekingStage>().unwrap(), EnnekingStage::IIB);
        assert_eq!(
            "III".parse::<EnnekingStage>().unwrap_err().code(),
            "UNKNOWN_KEY"
        );
        assert_eq!(
            serde_json::to_string(&EnnekingStage::IIA).unwrap(),
            "\"IIA\""
        );
    }

    #[test]
    fn grid_rules() {
        let m = MarginModel::<f64>::reference();
        assert_eq!(
            margin_table(&m, EnnekingStage::IB, 1.0, 1.0, 0.25)
                .unwrap()
                .len(),
            1
        );
        let rows = margin_table(&m, EnnekingStage::IB, 1.0, 1.2, 5.0).unwrap();
        assert_eq!((rows.len(), rows[0].lesion_radius_cm), (1, 1.0));
        assert!(margin_table(&m, EnnekingStage::IB, 2.0, 1.0, 0.25).is_err());
        assert!(margin_table(&m, EnnekingStage::IB, 1.0, 2.0, 0.0).is_err());
        assert_eq!(
            margin_table(&m, EnnekingStage::IB, 0.1, 0.3, 0.1)
                .unwrap()
                .len(),
            3
        );
    }

    #[test]
    fn extrapolation_is_flagged_not_clamped() {
        let m = MarginModel::<f64>::reference();
        let p = predict_margin(&m, EnnekingStage::IIB, 5.5).unwrap();
        assert!(p.extrapolated);
        assert!(
            p.margin_cm
                > predict_margin(&m, EnnekingStage::IIB, 4.75)
                    .unwrap()
                    .margin_cm
        );
        assert!(
            !predict_margin(&m, EnnekingStage::IIB, 4.75)
                .unwrap()
                .extrapolated
        );
        assert!(predict_margin(&m, EnnekingStage::IIB, 0.0).is_err());
    }

    #[test]
    fn pooled_mean_weights_by_pixels() {
        let img_a = Image::<f64>::constant(10, 1, 0.2);
        let img_b = Image::<f64>::constant(30, 1, 0.6);
        let (ma, mb) = (
            BinaryMask::from_fn(10, 1, |_, _| true),
            BinaryMask::from_fn(30, 1, |_, _| true),
        );
        let v = pooled_mask_mean(&[(&img_a, &ma), (&img_b, &mb)]).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
        assert_eq!(
            weighted_mask_mean(&img_a, &BinaryMask::empty(10, 1))
                .unwrap_err()
                .code(),
            "EMPTY_MASK"
        );
    }
}
