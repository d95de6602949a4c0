//! Unsupervised osteosarcoma segmentation for knee radiographs and MRI
//! slices, per-pixel evaluation metrics, femur-based pixel calibration and
//! the Enneking-stage surgical safety margin model.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix `f64`, which is what the CLI and service use.

pub mod calibration;
pub mod dataset;
pub mod error;
pub mod imaging;
pub mod margin;
pub mod metrics;
pub mod mri;
pub mod phantom;
pub mod scalar;
pub mod xray;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use imaging::{BinaryMask, ClassMap, LabelMask, StructuringElement};

pub type GrayImage = imaging::Image<f64>;
pub type GrayImageF32 = imaging::Image<f32>;
pub type ChanVeseParams = imaging::ChanVeseParams<f64>;
pub type XrayConfig = xray::XrayConfig<f64>;
pub type XraySegmentation = xray::XraySegmentation<f64>;
pub type MriConfig = mri::MriConfig<f64>;
pub type MriSegmentation = mri::MriSegmentation<f64>;
pub type QualityThresholds = mri::QualityThresholds<f64>;
pub type QualityReport = mri::QualityReport<f64>;
pub type ReferenceLine = calibration::ReferenceLine<f64>;
pub type CalibrationRecord = calibration::CalibrationRecord<f64>;
pub type FemurReferenceTable = calibration::FemurReferenceTable<f64>;
pub type CorrelationFit = margin::CorrelationFit<f64>;
pub type MarginModel = margin::MarginModel<f64>;
pub type MarginPrediction = margin::MarginPrediction<f64>;
