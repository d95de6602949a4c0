//! Pixel to centimetre scaling from a femur reference line.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Placeholder reference table shipped with the crate; not clinical data.
pub const BUNDLED_FEMUR_TABLE: &str = include_str!("../data/femur_reference.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Male,
    Female,
    Unknown,
}

impl FromStr for Sex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" | "m" => Ok(Sex::Male),
            "female" | "f" => Ok(Sex::Female),
            "unknown" | "" => Ok(Sex::Unknown),
            other => Err(Error::UnknownKey(format!("sex `{other}`"))),
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sex::Male => "male",
            Sex::Female => "female",
            Sex::Unknown => "unknown",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Point<T: Scalar> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }
}

/// Line drawn on the image, in (sub-)pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ReferenceLine<T: Scalar> {
    pub p0: Point<T>,
    pub p1: Point<T>,
}

impl<T: Scalar> ReferenceLine<T> {
    pub fn new(p0: Point<T>, p1: Point<T>) -> Result<Self> {
        let line = Self { p0, p1 };
        let finite = [p0.x, p0.y, p1.x, p1.y].iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::param("line", "endpoints must be finite"));
        }
        if p0 == p1 {
            return Err(Error::param("line", "endpoints coincide"));
        }
        Ok(line)
    }

    pub fn from_coords(x0: T, y0: T, x1: T, y1: T) -> Result<Self> {
        Self::new(Point::new(x0, y0), Point::new(x1, y1))
    }

    pub fn pixel_length(&self) -> T {
        (self.p1.x - self.p0.x).hypot(self.p1.y - self.p0.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationSource {
    UserSupplied,
    ReferenceTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct CalibrationRecord<T: Scalar> {
    pub line: ReferenceLine<T>,
    pub known_length_cm: T,
    pub scale_cm_per_px: T,
    pub source: CalibrationSource,
}

/// Calibrates from a line of known length.
pub fn set_scale<T: Scalar>(
    line: ReferenceLine<T>,
    known_length_cm: T,
) -> Result<CalibrationRecord<T>> {
    scale_with_source(line, known_length_cm, CalibrationSource::UserSupplied)
}

fn scale_with_source<T: Scalar>(
    line: ReferenceLine<T>,
    known_length_cm: T,
    source: CalibrationSource,
) -> Result<CalibrationRecord<T>> {
    if !(known_length_cm.is_finite() && known_length_cm > T::zero()) {
        return Err(Error::param(
            "known_length_cm",
            format!("must be > 0, got {known_length_cm}"),
        ));
    }
    let px = line.pixel_length();
    if px < T::one() {
        return Err(Error::param(
            "line",
            format!("must be at least 1 px long, got {px}"),
        ));
    }
    Ok(CalibrationRecord {
        line,
        known_length_cm,
        scale_cm_per_px: known_length_cm / px,
        source,
    })
}

pub fn measure_length<T: Scalar>(line: &ReferenceLine<T>, cal: &CalibrationRecord<T>) -> T {
    line.pixel_length() * cal.scale_cm_per_px
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FemurRow<T: Scalar> {
    pub sex: Sex,
    pub age_years: T,
    pub femur_length_cm: T,
}

/// Femur length by sex and age, interpolated linearly between ages.
#[derive(Debug, Clone, PartialEq)]
pub struct FemurReferenceTable<T: Scalar> {
    /// Sorted by sex then age.
    rows: Vec<FemurRow<T>>,
}

impl<T: Scalar> FemurReferenceTable<T> {
    pub fn new(mut rows: Vec<FemurRow<T>>) -> Result<Self> {
        for r in &rows {
            if !(r.femur_length_cm.is_finite() && r.femur_length_cm > T::zero()) {
                return Err(Error::param(
                    "femur_length_cm",
                    format!("{} at age {}: must be > 0", r.sex, r.age_years),
                ));
            }
            if !r.age_years.is_finite() {
                return Err(Error::param("age_years", "must be finite"));
            }
        }
        rows.sort_by(|a, b| {
            a.sex
                .cmp(&b.sex)
                .then(a.age_years.partial_cmp(&b.age_years).expect("finite"))
        });
        if let Some(w) = rows
            .windows(2)
            .find(|w| w[0].sex == w[1].sex && w[0].age_years == w[1].age_years)
        {
            return Err(Error::Duplicate(format!(
                "{} at age {}",
                w[0].sex, w[0].age_years
            )));
        }
        Ok(Self { rows })
    }

    /// CSV with header `sex,age_years,femur_length_cm`; `#` lines are comments.
    pub fn from_csv_str(text: &str, origin: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let rows = reader
            .deserialize::<FemurRow<T>>()
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(origin, e))?;
        Self::new(rows)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text, path)
    }

    /// The placeholder table compiled into the crate.
    pub fn bundled() -> Self {
        Self::from_csv_str(BUNDLED_FEMUR_TABLE, Path::new("femur_reference.csv"))
            .expect("bundled table is valid")
    }

    pub fn rows(&self) -> &[FemurRow<T>] {
        &self.rows
    }
}

pub fn estimate_femur_length<T: Scalar>(
    sex: Sex,
    age_years: T,
    table: &FemurReferenceTable<T>,
) -> Result<T> {
    let rows: Vec<&FemurRow<T>> = table.rows.iter().filter(|r| r.sex == sex).collect();
    let (first, last) = match (rows.first(), rows.last()) {
        (Some(f), Some(l)) => (*f, *l),
        _ => {
            return Err(Error::UnknownKey(format!(
                "no femur reference rows for sex `{sex}`"
            )))
        }
    };
    if age_years <= first.age_years {
        return Ok(first.femur_length_cm);
    }
    if age_years >= last.age_years {
        return Ok(last.femur_length_cm);
    }
    let i = rows.partition_point(|r| r.age_years <= age_years);
    let (a, b) = (rows[i - 1], rows[i]);
    let t = (age_years - a.age_years) / (b.age_years - a.age_years);
    Ok(a.femur_length_cm + t * (b.femur_length_cm - a.femur_length_cm))
}

/// Calibrates from a femur line using the table's length for this patient.
pub fn calibrate_from_table<T: Scalar>(
    line: ReferenceLine<T>,
    sex: Sex,
    age_years: T,
    table: &FemurReferenceTable<T>,
) -> Result<CalibrationRecord<T>> {
    let cm = estimate_femur_length(sex, age_years, table)?;
    scale_with_source(line, cm, CalibrationSource::ReferenceTable)
}
