//! Local JSON-over-HTTP service for the workbench.
//!
//! Case metadata is read once at start-up. Each case has a working session
//! (current image, calibration, stage, results) held behind its own mutex as
//! an immutable snapshot: readers clone the `Arc`, writers build a new
//! snapshot and swap it in, so a GET never sees a half-applied change and
//! distinct cases never contend. Every mutation bumps a global revision,
//! returned on every response in the `x-session-revision` header.

use std::collections::BTreeMap;
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{middleware, Json, Router};
use chrono::Utc;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use osteo_core::calibration::{calibrate_from_table, set_scale, Sex};
use osteo_core::dataset::{
    image_id, ingest, persist, split_image_id, CaseResultBundle, Diagnostic, ImageRef, ImageResult,
    Modality, PatientCase, METADATA_FILE,
};
use osteo_core::imaging::io::{encode_gray, encode_labels, encode_mask, read_gray};
use osteo_core::margin::{lesion_radius, margin_table, predict_margin, EnnekingStage, RadiusRule};
use osteo_core::mri::{quality_filter, segment_mri};
use osteo_core::xray::segment_xray;
use osteo_core::{
    BinaryMask, CalibrationRecord, Error, FemurReferenceTable, GrayImage, MarginModel,
    MarginPrediction, MriConfig, QualityReport, QualityThresholds, ReferenceLine, XrayConfig,
};

use crate::summary::{MriSummary, XraySummary};

pub const REVISION_HEADER: &str = "x-session-revision";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    /// Used by POST /segment when the request carries no config.
    pub xray: XrayConfig,
    pub mri: MriConfig,
    pub quality: QualityThresholds,
    pub radius_rule: RadiusRule,
    /// Femur reference CSV; the bundled placeholder when absent.
    pub femur_table: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<&'static str>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status,
            body: ErrorBody {
                code: code.into(),
                message: message.into(),
                step: None,
            },
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "BAD_REQUEST", message)
    }

    fn not_found(what: impl std::fmt::Display) -> Self {
        Self::new(
            StatusCode::NOT_FOUND,
            "NOT_FOUND",
            format!("{what} not found"),
        )
    }

    fn unprocessable(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, code, message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Io { .. } => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        Self {
            status,
            body: ErrorBody {
                code: e.code().into(),
                message: e.to_string(),
                step: e.step(),
            },
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Per-case working state. Replaced wholesale on every change.
#[derive(Debug, Clone)]
pub struct CaseSession {
    /// Global revision of the last change to this case, 0 if untouched.
    pub revision: u64,
    pub current_image: Option<String>,
    pub stage: Option<EnnekingStage>,
    pub bundle: CaseResultBundle,
    /// Image id and tumour/lesion mask of the latest segmentation.
    pub latest_mask: Option<(String, BinaryMask)>,
    artifacts: BTreeMap<String, Arc<Vec<u8>>>,
}

pub struct AppState {
    case_root: PathBuf,
    cases: BTreeMap<String, PatientCase>,
    diagnostics: Vec<Diagnostic>,
    sessions: BTreeMap<String, Mutex<Arc<CaseSession>>>,
    revision: AtomicU64,
    model: MarginModel,
    femur: FemurReferenceTable,
    config: ServiceConfig,
}

impl AppState {
    /// Ingests `<case_root>/metadata.csv`; a root without one has no cases.
    pub fn load(case_root: &Path, config: ServiceConfig) -> osteo_core::Result<Self> {
        if !case_root.is_dir() {
            return Err(Error::Io {
                path: case_root.to_path_buf(),
                source: std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    "case root is not a directory",
                ),
            });
        }
        let metadata = case_root.join(METADATA_FILE);
        let (cases, diagnostics) = if metadata.exists() {
            let ing = ingest(case_root, &metadata)?;
            (ing.cases, ing.diagnostics)
        } else {
            (Vec::new(), Vec::new())
        };
        let femur = match &config.femur_table {
            Some(p) => FemurReferenceTable::load(p)?,
            None => FemurReferenceTable::bundled(),
        };
        let now = Utc::now();
        let sessions = cases
            .iter()
            .map(|c| {
                let s = CaseSession {
                    revision: 0,
                    current_image: None,
                    stage: None,
                    bundle: CaseResultBundle::new(&c.case_id, now),
                    latest_mask: None,
                    artifacts: BTreeMap::new(),
                };
                (c.case_id.clone(), Mutex::new(Arc::new(s)))
            })
            .collect();
        Ok(Self {
            case_root: case_root.to_path_buf(),
            cases: cases.into_iter().map(|c| (c.case_id.clone(), c)).collect(),
            diagnostics,
            sessions,
            revision: AtomicU64::new(0),
            model: MarginModel::reference(),
            femur,
            config,
        })
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        &self.diagnostics
    }

    pub fn revision(&self) -> u64 {
        self.revision.load(Ordering::SeqCst)
    }

    pub fn snapshot(&self, case_id: &str) -> ApiResult<Arc<CaseSession>> {
        let slot = self
            .sessions
            .get(case_id)
            .ok_or_else(|| ApiError::not_found(format!("case `{case_id}`")))?;
        Ok(slot.lock().expect("session lock").clone())
    }

    fn image(&self, id: &str) -> ApiResult<(&PatientCase, &ImageRef)> {
        let missing = || ApiError::not_found(format!("image `{id}`"));
        let (case_id, file) = split_image_id(id).ok_or_else(missing)?;
        let case = self.cases.get(case_id).ok_or_else(missing)?;
        let img = case
            .images
            .iter()
            .find(|i| i.filename == file)
            .ok_or_else(missing)?;
        Ok((case, img))
    }

    /// Applies `f` to a copy of the case session and publishes it under a new
    /// revision. Changes to one case are serialised by its mutex.
    fn commit<R>(
        &self,
        case_id: &str,
        if_revision: Option<u64>,
        f: impl FnOnce(&mut CaseSession) -> ApiResult<R>,
    ) -> ApiResult<R> {
        let slot = self
            .sessions
            .get(case_id)
            .ok_or_else(|| ApiError::not_found(format!("case `{case_id}`")))?;
        let mut guard = slot.lock().expect("session lock");
        if let Some(want) = if_revision {
            if want != guard.revision {
                return Err(ApiError::new(
                    StatusCode::CONFLICT,
                    "STALE_REVISION",
                    format!(
                        "case `{case_id}` is at revision {}, request expected {want}",
                        guard.revision
                    ),
                ));
            }
        }
        let mut next = CaseSession::clone(&guard);
        let out = f(&mut next)?;
        next.bundle.updated = Utc::now();
        if let Some(dir) = &self.config.out_dir {
            persist(&next.bundle, dir)?;
        }
        next.revision = self.revision.fetch_add(1, Ordering::SeqCst) + 1;
        *guard = Arc::new(next);
        Ok(out)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/cases", get(list_cases))
        .route("/cases/{id}", get(get_case))
        .route("/images/{id}", get(get_image))
        .route("/artifacts/{case_id}/{name}", get(get_artifact))
        .route("/segment", post(segment))
        .route("/calibrate", post(calibrate))
        .route("/margin", post(margin))
        .route("/margin-table", get(get_margin_table))
        .fallback(|| async { ApiError::not_found("route") })
        .layer(middleware::map_response_with_state(
            state.clone(),
            stamp_revision,
        ))
        .with_state(state)
}

/// Binds to loopback only.
pub async fn serve(port: u16, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind((Ipv4Addr::LOCALHOST, port)).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state))).await
}

async fn stamp_revision(State(state): State<Arc<AppState>>, mut res: Response) -> Response {
    res.headers_mut()
        .insert(REVISION_HEADER, HeaderValue::from(state.revision()));
    res
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("malformed body: {e}")))
}

fn json_bytes<T: Serialize>(value: &T) -> Response {
    let body = serde_json::to_vec(value).expect("serialisable");
    ([(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn png(bytes: Vec<u8>) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

async fn blocking<R: Send + 'static>(
    f: impl FnOnce() -> ApiResult<R> + Send + 'static,
) -> ApiResult<R> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", e.to_string()))?
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageView {
    pub image_id: String,
    pub filename: String,
    pub modality: Modality,
    pub plane: Option<osteo_core::dataset::Plane>,
    pub accepted: Option<bool>,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseView {
    pub case_id: String,
    pub age_years: u32,
    pub sex: Sex,
    pub origin: String,
    pub bone: osteo_core::dataset::Bone,
    pub images: Vec<ImageView>,
}

impl From<&PatientCase> for CaseView {
    fn from(c: &PatientCase) -> Self {
        Self {
            case_id: c.case_id.clone(),
            age_years: c.age_years,
            sex: c.sex,
            origin: c.origin.clone(),
            bone: c.bone,
            images: c
                .images
                .iter()
                .map(|i| {
                    let id = image_id(&c.case_id, &i.filename);
                    ImageView {
                        url: format!("/images/{id}"),
                        image_id: id,
                        filename: i.filename.clone(),
                        modality: i.modality,
                        plane: i.plane,
                        accepted: i.accepted,
                    }
                })
                .collect(),
        }
    }
}

async fn list_cases(State(state): State<Arc<AppState>>) -> Response {
    let cases: Vec<CaseView> = state.cases.values().map(CaseView::from).collect();
    json_bytes(&cases)
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultView {
    pub image_id: String,
    pub modality: Modality,
    pub artifacts: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseDetail {
    pub case: CaseView,
    pub revision: u64,
    pub current_image: Option<String>,
    pub stage: Option<EnnekingStage>,
    pub calibration: Option<CalibrationRecord>,
    pub margins: Vec<MarginPrediction>,
    pub results: Vec<ResultView>,
    pub updated: chrono::DateTime<Utc>,
}

async fn get_case(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Response> {
    let case = state
        .cases
        .get(&id)
        .ok_or_else(|| ApiError::not_found(format!("case `{id}`")))?;
    let s = state.snapshot(&id)?;
    let results = s
        .bundle
        .images
        .iter()
        .map(|r| ResultView {
            image_id: r.image_id.clone(),
            modality: r.modality,
            artifacts: artifact_urls(&id, &r.image_id, &s.artifacts),
        })
        .collect();
    Ok(json_bytes(&CaseDetail {
        case: CaseView::from(case),
        revision: s.revision,
        current_image: s.current_image.clone(),
        stage: s.stage,
        calibration: s.bundle.calibration,
        margins: s.bundle.margins.clone(),
        results,
        updated: s.bundle.updated,
    }))
}

async fn get_image(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> ApiResult<Response> {
    let (_, img) = state.image(&id)?;
    let path = state.case_root.join(&img.path);
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|e| Error::Io { path, source: e })?;
    Ok(png(bytes))
}

async fn get_artifact(
    State(state): State<Arc<AppState>>,
    UrlPath((case_id, name)): UrlPath<(String, String)>,
) -> ApiResult<Response> {
    let s = state.snapshot(&case_id)?;
    let bytes = s
        .artifacts
        .get(&name)
        .ok_or_else(|| ApiError::not_found(format!("artifact `{name}`")))?;
    Ok(png(bytes.as_ref().clone()))
}

fn artifact_name(image_id: &str, kind: &str) -> String {
    let file = split_image_id(image_id).map_or(image_id, |(_, f)| f);
    let stem: String = file
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{stem}.{kind}.png")
}

fn artifact_urls(
    case_id: &str,
    image_id: &str,
    artifacts: &BTreeMap<String, Arc<Vec<u8>>>,
) -> BTreeMap<String, String> {
    ["mask", "display", "labels", "tumor", "neighbor"]
        .into_iter()
        .filter_map(|kind| {
            let name = artifact_name(image_id, kind);
            artifacts
                .contains_key(&name)
                .then(|| (kind.to_string(), format!("/artifacts/{case_id}/{name}")))
        })
        .collect()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentRequest {
    pub image_id: String,
    /// Must match the image's metadata when given.
    #[serde(default)]
    pub modality: Option<Modality>,
    /// XrayConfig or MriConfig fields; missing fields take library defaults.
    #[serde(default)]
    pub config: Option<serde_json::Value>,
    #[serde(default)]
    pub if_revision: Option<u64>,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "modality", rename_all = "lowercase")]
pub enum SegmentSummary {
    Xray(XraySummary),
    Mri {
        #[serde(flatten)]
        summary: MriSummary,
        quality: QualityReport,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct SegmentResponse {
    pub image_id: String,
    #[serde(flatten)]
    pub summary: SegmentSummary,
    /// Present once the case is calibrated.
    pub lesion_radius_cm: Option<f64>,
    pub artifacts: BTreeMap<String, String>,
}

async fn segment(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let req: SegmentRequest = parse_body(&body)?;
    let (case, img_ref) = state.image(&req.image_id)?;
    if let Some(m) = req.modality {
        if m != img_ref.modality {
            return Err(ApiError::unprocessable(
                "MODALITY_MISMATCH",
                format!(
                    "`{}` is {} but {m} was requested",
                    req.image_id, img_ref.modality
                ),
            ));
        }
    }
    let modality = img_ref.modality;
    let (xray_cfg, mri_cfg) = match (&req.config, modality) {
        (None, _) => (state.config.xray.clone(), state.config.mri.clone()),
        (Some(v), Modality::Xray) => (config_from(v)?, state.config.mri.clone()),
        (Some(v), Modality::Mri) => (state.config.xray.clone(), config_from(v)?),
    };
    let case_id = case.case_id.clone();
    let path = state.case_root.join(&img_ref.path);
    let st = state.clone();
    let response = blocking(move || {
        let img: GrayImage = read_gray(&path)?;
        let (summary, mask, mut artifacts, result) = match modality {
            Modality::Xray => {
                let seg = segment_xray(&img, &xray_cfg, false)?;
                let artifacts = vec![
                    ("mask", encode_mask(&seg.lesion_mask)?),
                    ("display", encode_gray(&seg.display)?),
                ];
                let result = ImageResult {
                    image_id: req.image_id.clone(),
                    modality,
                    mask: Some(seg.lesion_mask.clone()),
                    labels: None,
                };
                (
                    SegmentSummary::Xray(XraySummary::from(&seg)),
                    seg.lesion_mask,
                    artifacts,
                    result,
                )
            }
            Modality::Mri => {
                let quality = quality_filter(&img, &st.config.quality);
                let seg = segment_mri(&img, &mri_cfg)?;
                let artifacts = vec![
                    ("labels", encode_labels(&seg.labels)?),
                    ("tumor", encode_mask(&seg.tumor_mask)?),
                    ("neighbor", encode_mask(&seg.neighbor_mask)?),
                ];
                let result = ImageResult {
                    image_id: req.image_id.clone(),
                    modality,
                    mask: Some(seg.tumor_mask.clone()),
                    labels: Some(seg.labels.clone()),
                };
                let summary = SegmentSummary::Mri {
                    summary: MriSummary::from(&seg),
                    quality,
                };
                (summary, seg.tumor_mask, artifacts, result)
            }
        };
        st.commit(&case_id, req.if_revision, |s| {
            let lesion_radius_cm = match &s.bundle.calibration {
                Some(cal) if mask.count() > 0 => {
                    Some(lesion_radius(&mask, cal, st.config.radius_rule)?)
                }
                _ => None,
            };
            for (kind, bytes) in artifacts.drain(..) {
                s.artifacts
                    .insert(artifact_name(&req.image_id, kind), Arc::new(bytes));
            }
            match s
                .bundle
                .images
                .iter_mut()
                .find(|r| r.image_id == req.image_id)
            {
                Some(r) => *r = result,
                None => s.bundle.images.push(result),
            }
            s.current_image = Some(req.image_id.clone());
            s.latest_mask = Some((req.image_id.clone(), mask));
            Ok(SegmentResponse {
                artifacts: artifact_urls(&case_id, &req.image_id, &s.artifacts),
                image_id: req.image_id,
                summary,
                lesion_radius_cm,
            })
        })
    })
    .await?;
    Ok(json_bytes(&response))
}

fn config_from<T: DeserializeOwned>(v: &serde_json::Value) -> ApiResult<T> {
    T::deserialize(v).map_err(|e| ApiError::bad_request(format!("malformed config: {e}")))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateRequest {
    pub image_id: String,
    pub line: ReferenceLine,
    #[serde(default)]
    pub known_cm: Option<f64>,
    #[serde(default)]
    pub sex: Option<Sex>,
    #[serde(default)]
    pub age: Option<f64>,
    #[serde(default)]
    pub if_revision: Option<u64>,
}

async fn calibrate(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let req: CalibrateRequest = parse_body(&body)?;
    let (case, _) = state.image(&req.image_id)?;
    let record = match (req.known_cm, req.sex, req.age) {
        (Some(cm), None, None) => set_scale(req.line, cm)?,
        (None, Some(sex), Some(age)) => calibrate_from_table(req.line, sex, age, &state.femur)?,
        _ => {
            return Err(ApiError::bad_request(
                "give either `known_cm` or both `sex` and `age`",
            ))
        }
    };
    let case_id = case.case_id.clone();
    state.commit(&case_id, req.if_revision, |s| {
        s.bundle.calibration = Some(record);
        s.current_image = Some(req.image_id.clone());
        Ok(())
    })?;
    Ok(json_bytes(&record))
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarginRequest {
    /// Records the prediction on this case; required when `radius_cm` is
    /// absent.
    #[serde(default)]
    pub case_id: Option<String>,
    pub stage: EnnekingStage,
    /// Defaults to the radius of the case's latest tumour mask.
    #[serde(default)]
    pub radius_cm: Option<f64>,
    #[serde(default)]
    pub if_revision: Option<u64>,
}

async fn margin(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let req: MarginRequest = parse_body(&body)?;
    let Some(case_id) = req.case_id else {
        let radius = req
            .radius_cm
            .ok_or_else(|| ApiError::bad_request("`radius_cm` is required without `case_id`"))?;
        return Ok(json_bytes(&predict_margin(
            &state.model,
            req.stage,
            radius,
        )?));
    };
    let prediction = state.commit(&case_id, req.if_revision, |s| {
        let radius = match req.radius_cm {
            Some(r) => r,
            None => {
                let (_, mask) = s.latest_mask.as_ref().ok_or_else(|| {
                    ApiError::unprocessable(
                        "NO_SEGMENTATION",
                        format!("case `{case_id}` has no tumour mask yet"),
                    )
                })?;
                let cal = s.bundle.calibration.as_ref().ok_or_else(|| {
                    ApiError::unprocessable(
                        "NOT_CALIBRATED",
                        format!("case `{case_id}` has no calibration"),
                    )
                })?;
                lesion_radius(mask, cal, state.config.radius_rule)?
            }
        };
        let p = predict_margin(&state.model, req.stage, radius)?;
        s.stage = Some(req.stage);
        s.bundle.margins.push(p);
        Ok(p)
    })?;
    Ok(json_bytes(&prediction))
}

#[derive(Debug, Clone, Deserialize)]
pub struct TableQuery {
    pub stage: Option<String>,
    pub from: Option<f64>,
    pub to: Option<f64>,
    pub step: Option<f64>,
}

async fn get_margin_table(
    State(state): State<Arc<AppState>>,
    Query(q): Query<TableQuery>,
) -> ApiResult<Response> {
    let stage: EnnekingStage = q
        .stage
        .as_deref()
        .ok_or_else(|| ApiError::bad_request("query parameter `stage` is required"))?
        .parse()
        .map_err(|e: Error| ApiError::bad_request(e.to_string()))?;
    let rows = margin_table(
        &state.model,
        stage,
        q.from.unwrap_or(osteo_core::margin::TABLE_R_MIN),
        q.to.unwrap_or(osteo_core::margin::TABLE_R_MAX),
        q.step.unwrap_or(osteo_core::margin::TABLE_STEP),
    )?;
    Ok(json_bytes(&rows))
}
