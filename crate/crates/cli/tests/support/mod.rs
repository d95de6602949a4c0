//! Case-root fixture and in-process request helpers.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{HeaderMap, Method, Request, StatusCode};
use http_body_util::BodyExt;
use tower::ServiceExt;

use osteo_cli::service::{router, AppState, ServiceConfig};
use osteo_core::imaging::io::write_gray;
use osteo_core::phantom::{mri_phantom, xray_phantom};
use osteo_core::GrayImage;

pub const METADATA: &str = "\
case_id,age,sex,origin,bone,filename,modality,plane
c01,15,male,Bolivia,femur,knee.png,xray,frontal
c01,15,male,Bolivia,femur,t2.png,mri,sagittal
c02,12,female,Peru,tibia,flat.png,mri,axial
c03,19,male,Chile,femur,ap.png,xray,
";

/// Three cases: an X-ray and an MRI phantom, a two-intensity MRI slice, and
/// a second X-ray phantom.
pub fn case_root(dir: &Path) -> PathBuf {
    let root = dir.join("cases");
    for c in ["c01", "c02", "c03"] {
        std::fs::create_dir_all(root.join(c)).unwrap();
    }
    write_gray(&xray_phantom::<f64>(96, 1).image, root.join("c01/knee.png")).unwrap();
    write_gray(&mri_phantom::<f64>(64, 1).image, root.join("c01/t2.png")).unwrap();
    let two = GrayImage::from_fn(32, 32, |x, _| if x < 16 { 0.2 } else { 0.8 });
    write_gray(&two, root.join("c02/flat.png")).unwrap();
    write_gray(&xray_phantom::<f64>(96, 4).image, root.join("c03/ap.png")).unwrap();
    std::fs::write(root.join("metadata.csv"), METADATA).unwrap();
    root
}

pub fn app(root: &Path, config: ServiceConfig) -> (axum::Router, Arc<AppState>) {
    let state = Arc::new(AppState::load(root, config).unwrap());
    (router(state.clone()), state)
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| {
            panic!("{e}: {}", String::from_utf8_lossy(&self.body));
        })
    }

    pub fn revision(&self) -> u64 {
        self.headers["x-session-revision"]
            .to_str()
            .unwrap()
            .parse()
            .unwrap()
    }
}

pub async fn call(app: &axum::Router, method: Method, uri: &str, body: Option<&str>) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(Body::from(body.unwrap_or("").to_owned())).unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let headers = res.headers().clone();
    let body = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply {
        status,
        headers,
        body,
    }
}

pub async fn get(app: &axum::Router, uri: &str) -> Reply {
    call(app, Method::GET, uri, None).await
}

pub async fn post(app: &axum::Router, uri: &str, body: &str) -> Reply {
    call(app, Method::POST, uri, Some(body)).await
}
