//! JSON shapes shared by the CLI and the service, so both report the same
//! numbers for the same call.

use std::path::Path;

use serde::Serialize;

use osteo_core::mri::RejectReason;
use osteo_core::{LabelMask, MriSegmentation, XraySegmentation};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XraySummary {
    pub lesion_pixels: usize,
    pub otsu_pixels: usize,
    pub otsu_threshold: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl From<&XraySegmentation> for XraySummary {
    fn from(s: &XraySegmentation) -> Self {
        Self {
            lesion_pixels: s.lesion_mask.count(),
            otsu_pixels: s.otsu_mask.count(),
            otsu_threshold: s.otsu_threshold,
            converged: s.converged,
            iterations: s.iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MriSummary {
    pub background_pixels: usize,
    pub tumor_pixels: usize,
    pub neighbor_pixels: usize,
    pub centroids: Vec<f64>,
    pub tumor_cluster: usize,
    pub kmeans_converged: bool,
    pub degenerate: bool,
}

impl From<&MriSegmentation> for MriSummary {
    fn from(s: &MriSegmentation) -> Self {
        Self {
            background_pixels: s.labels.mask_of(LabelMask::BACKGROUND).count(),
            tumor_pixels: s.tumor_mask.count(),
            neighbor_pixels: s.neighbor_mask.count(),
            centroids: s.centroids.clone(),
            tumor_cluster: s.tumor_cluster,
            kmeans_converged: s.kmeans_converged,
            degenerate: s.degenerate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejected {
    pub file: String,
    pub reasons: Vec<RejectReason<f64>>,
}

/// Outcome of the quality filter over a directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FilterReport {
    pub accepted: Vec<String>,
    pub rejected: Vec<Rejected>,
}

/// `*.png` files directly inside `dir`, sorted by name.
pub fn png_files(dir: &Path) -> std::io::Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let is_png = Path::new(&name)
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png && entry.file_type()?.is_file() {
            names.push(name);
        }
    }
    names.sort();
    Ok(names)
}
