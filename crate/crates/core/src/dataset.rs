//! Case directories: metadata ingestion, exploration statistics and
//! persistence of per-case results.
//!
//! Layout: `<root>/metadata.csv` plus `<root>/<case_id>/<filename>` images.
//! Results go to `<out>/<case_id>/index.json` with the masks as PNG files
//! beside it.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::calibration::{CalibrationRecord, Sex};
use crate::error::{Error, Result};
use crate::imaging::io::{read_labels, read_mask, write_labels, write_mask};
use crate::imaging::{BinaryMask, LabelMask};
use crate::margin::MarginPrediction;
use crate::metrics::ImageMetrics;

pub const METADATA_FILE: &str = "metadata.csv";
pub const INDEX_FILE: &str = "index.json";
pub const INDEX_SCHEMA_VERSION: u32 = 1;

const COLUMNS: [&str; 8] = [
    "case_id", "age", "sex", "origin", "bone", "filename", "modality", "plane",
];

macro_rules! keyword_enum {
    ($name:ident { $($variant:ident => $text:literal $(| $alias:literal)*),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim().to_ascii_lowercase().as_str() {
                    $($text $(| $alias)* => Ok($name::$variant),)+
                    other => Err(Error::UnknownKey(format!(
                        "{} `{other}`",
                        stringify!($name).to_ascii_lowercase()
                    ))),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

keyword_enum!(Bone {
    Femur => "femur",
    Tibia => "tibia",
    Fibula => "fibula",
    Other => "other",
});

keyword_enum!(Modality {
    Xray => "xray" | "x-ray" | "radiograph",
    Mri => "mri",
});

keyword_enum!(Plane {
    Frontal => "frontal" | "coronal",
    Sagittal => "sagittal",
    Axial => "axial",
});

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    pub filename: String,
    /// Relative to the case root.
    pub path: PathBuf,
    pub modality: Modality,
    pub plane: Option<Plane>,
    /// Quality-filter outcome once known.
    pub accepted: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientCase {
    pub case_id: String,
    pub age_years: u32,
    pub sex: Sex,
    pub origin: String,
    pub bone: Bone,
    pub images: Vec<ImageRef>,
}

/// `case_id:filename`, the identifier the service uses for images.
pub fn image_id(case_id: &str, filename: &str) -> String {
    format!("{case_id}:{filename}")
}

/// Splits an image id back into `(case_id, filename)`.
pub fn split_image_id(id: &str) -> Option<(&str, &str)> {
    id.split_once(':')
        .filter(|(c, f)| !c.is_empty() && !f.is_empty())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    /// 1-based line in the metadata file.
    pub line: u64,
    pub case_id: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ingested {
    /// Sorted by case id; images sorted by filename.
    pub cases: Vec<PatientCase>,
    /// Rows that could not be used, in file order.
    pub diagnostics: Vec<Diagnostic>,
}

struct Row {
    case_id: String,
    age: u32,
    sex: Sex,
    origin: String,
    bone: Bone,
    image: ImageRef,
}

/// Reads `metadata_csv` and resolves image files under `root`.
///
/// Bad rows become diagnostics. A repeated `case_id` + `filename` pair or a
/// case whose rows disagree on patient fields is an error.
pub fn ingest(root: &Path, metadata_csv: &Path) -> Result<Ingested> {
    let text = std::fs::read_to_string(metadata_csv).map_err(|e| Error::io(metadata_csv, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::format(metadata_csv, e))?
        .clone();
    let mut col = HashMap::new();
    for name in COLUMNS {
        let idx = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema {
                path: metadata_csv.to_path_buf(),
                message: format!("missing column `{name}`"),
            })?;
        col.insert(name, idx);
    }

    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                diagnostics.push(Diagnostic {
                    line,
                    case_id: None,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = record.position().map_or(0, |p| p.line());
        let field = |name: &str| record.get(col[name]).unwrap_or("").to_string();
        let case_id = field("case_id");
        let filename = field("filename");
        if !case_id.is_empty()
            && !filename.is_empty()
            && !seen.insert((case_id.clone(), filename.clone()))
        {
            return Err(Error::Duplicate(format!(
                "{} (line {line})",
                image_id(&case_id, &filename)
            )));
        }
        match parse_row(root, &field) {
            Ok(row) => rows.push(row),
            Err(message) => diagnostics.push(Diagnostic {
                line,
                case_id: (!case_id.is_empty()).then_some(case_id),
                message,
            }),
        }
    }

    let mut by_case: BTreeMap<String, PatientCase> = BTreeMap::new();
    for row in rows {
        match by_case.get_mut(&row.case_id) {
            Some(case) => {
                if (case.age_years, case.sex, &case.origin, case.bone)
                    != (row.age, row.sex, &row.origin, row.bone)
                {
                    return Err(Error::format(
                        metadata_csv,
                        format!(
                            "case `{}` has rows with conflicting patient fields",
                            row.case_id
                        ),
                    ));
                }
                case.images.push(row.image);
            }
            None => {
                by_case.insert(
                    row.case_id.clone(),
                    PatientCase {
                        case_id: row.case_id,
                        age_years: row.age,
                        sex: row.sex,
                        origin: row.origin,
                        bone: row.bone,
                        images: vec![row.image],
                    },
                );
            }
        }
    }
    let mut cases: Vec<PatientCase> = by_case.into_values().collect();
    for c in &mut cases {
        c.images.sort_by(|a, b| a.filename.cmp(&b.filename));
    }
    Ok(Ingested { cases, diagnostics })
}

fn parse_row(root: &Path, field: &dyn Fn(&str) -> String) -> std::result::Result<Row, String> {
    let case_id = field("case_id");
    let filename = field("filename");
    if case_id.is_empty() {
        return Err("empty case_id".into());
    }
    if filename.is_empty() {
        return Err("empty filename".into());
    }
    if case_id.contains(['/', '\\', ':']) || filename.contains(['/', '\\', ':']) || case_id == ".."
    {
        return Err("case_id and filename must not contain path separators or ':'".into());
    }
    let age = field("age");
    let age: u32 = age
        .parse()
        .map_err(|_| format!("age `{age}` is not a non-negative integer"))?;
    let sex: Sex = field("sex").parse().map_err(|e: Error| e.to_string())?;
    let bone: Bone = field("bone").parse().map_err(|e: Error| e.to_string())?;
    let modality: Modality = field("modality")
        .parse()
        .map_err(|e: Error| e.to_string())?;
    let plane_text = field("plane");
    let plane = if plane_text.is_empty() {
        None
    } else {
        Some(plane_text.parse::<Plane>().map_err(|e| e.to_string())?)
    };
    if modality == Modality::Mri && plane.is_none() {
        return Err("MRI image needs a plane".into());
    }
    let rel = Path::new(&case_id).join(&filename);
    if !root.join(&rel).is_file() {
        return Err(format!("missing image file {}", root.join(&rel).display()));
    }
    Ok(Row {
        case_id,
        age,
        sex,
        origin: field("origin"),
        bone,
        image: ImageRef {
            filename,
            path: rel,
            modality,
            plane,
            accepted: None,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeBin {
    /// Inclusive lower edge.
    pub from: u32,
    /// Exclusive upper edge.
    pub to: u32,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreReport {
    pub cases: usize,
    pub images: usize,
    /// Decades from 0 up to the oldest patient's, zero bins included.
    pub age_histogram: Vec<AgeBin>,
    pub sex: BTreeMap<Sex, usize>,
    pub bones: BTreeMap<Bone, usize>,
    pub mri_images: usize,
    pub mri_planes: BTreeMap<Plane, usize>,
    pub xray_images: usize,
    /// Radiograph views; `unspecified` when the plane field is empty.
    pub xray_planes: BTreeMap<String, usize>,
}

pub fn explore(cases: &[PatientCase]) -> ExploreReport {
    let max_decade = cases.iter().map(|c| c.age_years / 10).max();
    let n_bins = max_decade.map_or(0, |d| d + 1);
    let mut age_histogram: Vec<AgeBin> = (0..n_bins)
        .map(|d| AgeBin {
            from: d * 10,
            to: d * 10 + 10,
            count: 0,
        })
        .collect();
    let mut sex: BTreeMap<Sex, usize> = [Sex::Male, Sex::Female, Sex::Unknown]
        .map(|s| (s, 0))
        .into();
    let mut bones: BTreeMap<Bone, usize> = Bone::ALL.iter().map(|&b| (b, 0)).collect();
    let mut mri_planes: BTreeMap<Plane, usize> = Plane::ALL.iter().map(|&p| (p, 0)).collect();
    let mut xray_planes = BTreeMap::new();
    let (mut images, mut mri_images, mut xray_images) = (0, 0, 0);
    for c in cases {
        age_histogram[(c.age_years / 10) as usize].count += 1;
        *sex.entry(c.sex).or_default() += 1;
        *bones.entry(c.bone).or_default() += 1;
        for img in &c.images {
            images += 1;
            match img.modality {
                Modality::Mri => {
                    mri_images += 1;
                    if let Some(p) = img.plane {
                        *mri_planes.entry(p).or_default() += 1;
                    }
                }
                Modality::Xray => {
                    xray_images += 1;
                    let key = img.plane.map_or("unspecified", Plane::as_str);
                    *xray_planes.entry(key.to_string()).or_default() += 1;
                }
            }
        }
    }
    ExploreReport {
        cases: cases.len(),
        images,
        age_histogram,
        sex,
        bones,
        mri_images,
        mri_planes,
        xray_images,
        xray_planes,
    }
}

impl ExploreReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    /// Long format: `section,key,count`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["section", "key", "count"])
            .expect("in-memory write");
        let mut put = |section: &str, key: String, count: usize| {
            w.write_record([section, &key, &count.to_string()])
                .expect("in-memory write");
        };
        put("total", "cases".into(), self.cases);
        put("total", "images".into(), self.images);
        put("total", "mri_images".into(), self.mri_images);
        put("total", "xray_images".into(), self.xray_images);
        for b in &self.age_histogram {
            put("age", format!("{}-{}", b.from, b.to), b.count);
        }
        for (k, v) in &self.sex {
            put("sex", k.to_string(), *v);
        }
        for (k, v) in &self.bones {
            put("bone", k.to_string(), *v);
        }
        for (k, v) in &self.mri_planes {
            put("mri_plane", k.to_string(), *v);
        }
        for (k, v) in &self.xray_planes {
            put("xray_plane", k.clone(), *v);
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageResult {
    pub image_id: String,
    pub modality: Modality,
    pub mask: Option<BinaryMask>,
    pub labels: Option<LabelMask>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseResultBundle {
    pub case_id: String,
    pub created: DateTime<Utc>,
    pub updated: DateTime<Utc>,
    pub images: Vec<ImageResult>,
    pub calibration: Option<CalibrationRecord<f64>>,
    pub margins: Vec<MarginPrediction<f64>>,
    pub metrics: Vec<ImageMetrics>,
}

impl CaseResultBundle {
    pub fn new(case_id: impl Into<String>, now: DateTime<Utc>) -> Self {
        Self {
            case_id: case_id.into(),
            created: now,
            updated: now,
            images: Vec::new(),
            calibration: None,
            margins: Vec::new(),
            metrics: Vec::new(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexFile {
    schema_version: u32,
    case_id: String,
    created: DateTime<Utc>,
    updated: DateTime<Utc>,
    images: Vec<IndexImage>,
    calibration: Option<CalibrationRecord<f64>>,
    margins: Vec<MarginPrediction<f64>>,
    metrics: Vec<ImageMetrics>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexImage {
    image_id: String,
    modality: Modality,
    mask: Option<String>,
    labels: Option<String>,
}

fn artifact_stem(i: usize, image_id: &str) -> String {
    let safe: String = image_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{i:03}_{safe}")
}

/// Writes the bundle under `<out_dir>/<case_id>/` and returns the index path.
/// Files are written to temporaries and renamed into place, so readers never
/// see a partially written artifact.
pub fn persist(bundle: &CaseResultBundle, out_dir: &Path) -> Result<PathBuf> {
    if bundle.case_id.is_empty() || bundle.case_id.contains(['/', '\\']) || bundle.case_id == ".." {
        return Err(Error::param(
            "case_id",
            format!("`{}` is not a directory name", bundle.case_id),
        ));
    }
    let dir = out_dir.join(&bundle.case_id);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut images = Vec::with_capacity(bundle.images.len());
    for (i, img) in bundle.images.iter().enumerate() {
        let stem = artifact_stem(i, &img.image_id);
        let mask = match &img.mask {
            Some(m) => {
                let name = format!("{stem}.mask.png");
                atomic_write(&dir.join(&name), |tmp| write_mask(m, tmp))?;
                Some(name)
            }
            None => None,
        };
        let labels = match &img.labels {
            Some(l) => {
                let name = format!("{stem}.labels.png");
                atomic_write(&dir.join(&name), |tmp| write_labels(l, tmp))?;
                Some(name)
            }
            None => None,
        };
        images.push(IndexImage {
            image_id: img.image_id.clone(),
            modality: img.modality,
            mask,
            labels,
        });
    }
    let index = IndexFile {
        schema_version: INDEX_SCHEMA_VERSION,
        case_id: bundle.case_id.clone(),
        created: bundle.created,
        updated: bundle.updated,
        images,
        calibration: bundle.calibration,
        margins: bundle.margins.clone(),
        metrics: bundle.metrics.clone(),
    };
    let mut json = serde_json::to_string_pretty(&index).expect("index serialises");
    json.push('\n');
    let path = dir.join(INDEX_FILE);
    atomic_write(&path, |tmp| {
        std::fs::write(tmp, &json).map_err(|e| Error::io(tmp, e))
    })?;
    Ok(path)
}

fn atomic_write(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    write(&tmp)?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Reads a bundle written by [`persist`].
pub fn load(index_path: &Path) -> Result<CaseResultBundle> {
    let text = std::fs::read_to_string(index_path).map_err(|e| Error::io(index_path, e))?;
    let index: IndexFile = serde_json::from_str(&text).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => Error::Schema {
            path: index_path.to_path_buf(),
            message: e.to_string(),
        },
        _ => Error::format(index_path, e),
    })?;
    if index.schema_version != INDEX_SCHEMA_VERSION {
        return Err(Error::Schema {
            path: index_path.to_path_buf(),
            message: format!(
                "schema_version {} is not supported (expected {INDEX_SCHEMA_VERSION})",
                index.schema_version
            ),
        });
    }
    let dir = index_path.parent().unwrap_or(Path::new("."));
    let images = index
        .images
        .into_iter()
        .map(|img| {
            Ok(ImageResult {
                mask: img.mask.map(|n| read_mask(dir.join(n))).transpose()?,
                labels: img.labels.map(|n| read_labels(dir.join(n))).transpose()?,
                image_id: img.image_id,
                modality: img.modality,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CaseResultBundle {
        case_id: index.case_id,
        created: index.created,
        updated: index.updated,
        images,
        calibration: index.calibration,
        margins: index.margins,
        metrics: index.metrics,
    })
}
