//! Argument parsing and the batch subcommands.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use osteo_core::calibration::{calibrate_from_table, measure_length, set_scale, Sex};
use osteo_core::dataset::{explore, ingest, METADATA_FILE};
use osteo_core::imaging::io::{read_gray, read_mask, write_gray, write_labels, write_mask};
use osteo_core::margin::{
    lesion_radius, margin_table, predict_margin, write_margin_table_csv, EnnekingStage, RadiusRule,
};
use osteo_core::metrics::evaluate_batch;
use osteo_core::mri::{quality_filter, segment_mri};
use osteo_core::xray::{segment_xray, Artifact};
use osteo_core::{
    CalibrationRecord, FemurReferenceTable, GrayImage, MarginModel, MriConfig, QualityThresholds,
    ReferenceLine, XrayConfig,
};

use crate::service::{self, ServiceConfig};
use crate::summary::{png_files, FilterReport, MriSummary, Rejected, XraySummary};

#[derive(Debug, Parser)]
#[command(
    name = "osteo",
    version,
    about = "Osteosarcoma segmentation, calibration and safety margins"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment the lesion on a radiograph.
    SegmentXray(SegmentXrayArgs),
    /// Segment an MRI slice into background, tumour and neighbouring tissue.
    SegmentMri(SegmentMriArgs),
    /// Screen a directory of MRI slices for saturation and low contrast.
    Filter(FilterArgs),
    /// Compare predicted masks against reference masks.
    Evaluate(EvaluateArgs),
    /// Derive the cm-per-pixel scale from a femur reference line.
    Calibrate(CalibrateArgs),
    /// Predict the surgical safety margin for one lesion.
    Margin(MarginArgs),
    /// Print the margin table for one stage as CSV.
    MarginTable(MarginTableArgs),
    /// Summarise a case directory.
    Explore(ExploreArgs),
    /// Run the local HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SegmentXrayArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out_mask: PathBuf,
    /// Write every pipeline step's output here as PNG.
    #[arg(long)]
    pub dump_intermediates: Option<PathBuf>,
    /// JSON file with XrayConfig fields; missing fields keep their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Also write the gamma-corrected display image.
    #[arg(long)]
    pub out_display: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SegmentMriArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out_labels: PathBuf,
    /// K-means seed, overrides the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_tumor_mask: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub report: PathBuf,
    /// JSON file with QualityThresholds fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred_dir: PathBuf,
    #[arg(long)]
    pub gt_dir: PathBuf,
    /// `.csv` or `.json`.
    #[arg(long, value_parser = report_path)]
    pub out: PathBuf,
}

fn report_path(s: &str) -> Result<PathBuf, String> {
    match Path::new(s).extension().and_then(|e| e.to_str()) {
        Some("csv" | "json") => Ok(PathBuf::from(s)),
        _ => Err("expected a .csv or .json file".into()),
    }
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("length").required(true).args(["known_cm", "sex"]))]
pub struct CalibrateArgs {
    /// Reference line as `x0,y0,x1,y1` in pixels.
    #[arg(long, value_parser = parse_line, allow_hyphen_values = true)]
    pub line: ReferenceLine,
    /// Known length of the line.
    #[arg(long)]
    pub known_cm: Option<f64>,
    /// Look the length up in the femur table by sex and age instead.
    #[arg(long, requires = "age")]
    pub sex: Option<Sex>,
    #[arg(long, requires = "sex")]
    pub age: Option<f64>,
    /// Femur reference CSV (sex,age_years,femur_length_cm).
    #[arg(long, requires = "sex")]
    pub table: Option<PathBuf>,
    /// Lines to measure with the new scale, `x0,y0,x1,y1` each.
    #[arg(long, value_parser = parse_line, allow_hyphen_values = true)]
    pub measure: Vec<ReferenceLine>,
    /// Also write the calibration record here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_line(s: &str) -> Result<ReferenceLine, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("bad coordinate: {e}"))?;
    let [x0, y0, x1, y1] = v[..] else {
        return Err("expected x0,y0,x1,y1".into());
    };
    ReferenceLine::from_coords(x0, y0, x1, y1).map_err(|e| e.to_string())
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("size").required(true).args(["radius", "mask"]))]
pub struct MarginArgs {
    #[arg(long)]
    pub stage: EnnekingStage,
    /// Lesion radius in cm.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Tumour mask PNG; its radius is measured with `--calibration`.
    #[arg(long, requires = "calibration")]
    pub mask: Option<PathBuf>,
    /// Calibration record JSON as written by `calibrate --out`.
    #[arg(long, requires = "mask")]
    pub calibration: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "equivalent-circle")]
    pub radius_rule: RadiusRuleArg,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum RadiusRuleArg {
    EquivalentCircle,
    Circumscribed,
}

impl From<RadiusRuleArg> for RadiusRule {
    fn from(r: RadiusRuleArg) -> Self {
        match r {
            RadiusRuleArg::EquivalentCircle => RadiusRule::EquivalentCircle,
            RadiusRuleArg::Circumscribed => RadiusRule::Circumscribed,
        }
    }
}

#[derive(Debug, Args)]
pub struct MarginTableArgs {
    #[arg(long)]
    pub stage: EnnekingStage,
    #[arg(long, default_value_t = osteo_core::margin::TABLE_R_MIN)]
    pub from: f64,
    #[arg(long, default_value_t = osteo_core::margin::TABLE_R_MAX)]
    pub to: f64,
    #[arg(long, default_value_t = osteo_core::margin::TABLE_STEP)]
    pub step: f64,
}

#[derive(Debug, Args)]
pub struct ExploreArgs {
    #[arg(long)]
    pub root: PathBuf,
    /// Defaults to `<root>/metadata.csv`.
    #[arg(long)]
    pub metadata: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long)]
    pub case_root: PathBuf,
    /// JSON ServiceConfig.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Persist case bundles here after every change.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::SegmentXray(a) => segment_xray_cmd(a),
        Command::SegmentMri(a) => segment_mri_cmd(a),
        Command::Filter(a) => filter_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Margin(a) => margin_cmd(a),
        Command::MarginTable(a) => margin_table_cmd(a),
        Command::Explore(a) => explore_cmd(a),
        Command::Serve(a) => serve_cmd(a),
    }
}

fn segment_xray_cmd(a: SegmentXrayArgs) -> Result<()> {
    let cfg: XrayConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => XrayConfig::default(),
    };
    let img: GrayImage = read_gray(&a.input)?;
    let seg = segment_xray(&img, &cfg, a.dump_intermediates.is_some())?;
    write_mask(&seg.lesion_mask, &a.out_mask)?;
    if let Some(p) = &a.out_display {
        write_gray(&seg.display, p)?;
    }
    if let Some(dir) = &a.dump_intermediates {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (i, (step, artifact)) in seg.intermediates.iter().enumerate() {
            let path = dir.join(format!("{:02}_{step}.png", i + 1));
            match artifact {
                Artifact::Image(im) => write_gray(im, &path)?,
                Artifact::Mask(m) => write_mask(m, &path)?,
            }
        }
    }
    print_json(&XraySummary::from(&seg))
}

fn segment_mri_cmd(a: SegmentMriArgs) -> Result<()> {
    let mut cfg: MriConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => MriConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let img: GrayImage = read_gray(&a.input)?;
    let seg = segment_mri(&img, &cfg)?;
    write_labels(&seg.labels, &a.out_labels)?;
    if let Some(p) = &a.out_tumor_mask {
        write_mask(&seg.tumor_mask, p)?;
    }
    print_json(&MriSummary::from(&seg))
}

fn filter_cmd(a: FilterArgs) -> Result<()> {
    let th: QualityThresholds = match &a.config {
        Some(p) => read_json(p)?,
        None => QualityThresholds::default(),
    };
    let files = png_files(&a.input).with_context(|| format!("listing {}", a.input.display()))?;
    let mut report = FilterReport::default();
    for file in files {
        let img: GrayImage = read_gray(a.input.join(&file))?;
        let q = quality_filter(&img, &th);
        if q.accepted {
            report.accepted.push(file);
        } else {
            report.rejected.push(Rejected {
                file,
                reasons: q.reasons,
            });
        }
    }
    let json = serde_json::to_string_pretty(&report)?;
    fs::write(&a.report, json + "\n").with_context(|| format!("writing {}", a.report.display()))?;
    eprintln!(
        "{} accepted, {} rejected",
        report.accepted.len(),
        report.rejected.len()
    );
    print_json(&report)
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let preds =
        png_files(&a.pred_dir).with_context(|| format!("listing {}", a.pred_dir.display()))?;
    let mut pairs = Vec::new();
    for name in preds {
        let gt_path = a.gt_dir.join(&name);
        if !gt_path.is_file() {
            eprintln!(
                "warning: no reference mask for {name} in {}",
                a.gt_dir.display()
            );
            continue;
        }
        pairs.push((
            name.clone(),
            read_mask(a.pred_dir.join(&name))?,
            read_mask(&gt_path)?,
        ));
    }
    if pairs.is_empty() {
        bail!(
            "no prediction in {} has a same-named reference in {}",
            a.pred_dir.display(),
            a.gt_dir.display()
        );
    }
    let report = evaluate_batch(&pairs)?;
    let is_csv = a.out.extension().is_some_and(|e| e == "csv");
    let text = if is_csv {
        report.to_csv()
    } else {
        report.to_json()
    };
    fs::write(&a.out, text).with_context(|| format!("writing {}", a.out.display()))?;
    print_json(&report.mean)
}

#[derive(Serialize)]
struct CalibrateOutput {
    calibration: CalibrationRecord,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    measurements_cm: Vec<f64>,
}

fn calibrate_cmd(a: CalibrateArgs) -> Result<()> {
    let record = match (a.known_cm, a.sex, a.age) {
        (Some(cm), _, _) => set_scale(a.line, cm)?,
        (None, Some(sex), Some(age)) => {
            let table = match &a.table {
                Some(p) => FemurReferenceTable::load(p)?,
                None => {
                    eprintln!(
                        "warning: using the bundled placeholder femur table, not for clinical use"
                    );
                    FemurReferenceTable::bundled()
                }
            };
            calibrate_from_table(a.line, sex, age, &table)?
        }
        _ => unreachable!("enforced by the argument groups"),
    };
    if let Some(p) = &a.out {
        let json = serde_json::to_string_pretty(&record)?;
        fs::write(p, json + "\n").with_context(|| format!("writing {}", p.display()))?;
    }
    let measurements_cm = a
        .measure
        .iter()
        .map(|l| measure_length(l, &record))
        .collect();
    print_json(&CalibrateOutput {
        calibration: record,
        measurements_cm,
    })
}

fn margin_cmd(a: MarginArgs) -> Result<()> {
    let model = MarginModel::reference();
    let radius = match (a.radius, &a.mask, &a.calibration) {
        (Some(r), _, _) => r,
        (None, Some(mask), Some(cal)) => {
            let cal: CalibrationRecord = read_json(cal)?;
            lesion_radius(&read_mask(mask)?, &cal, a.radius_rule.into())?
        }
        _ => unreachable!("enforced by the argument groups"),
    };
    let p = predict_margin(&model, a.stage, radius)?;
    if p.extrapolated {
        eprintln!(
            "warning: radius {radius} cm is outside the fitted range [{}, {}]",
            model.r_min, model.r_max
        );
    }
    print_json(&p)
}

fn margin_table_cmd(a: MarginTableArgs) -> Result<()> {
    let rows = margin_table(&MarginModel::reference(), a.stage, a.from, a.to, a.step)?;
    write_margin_table_csv(&rows, std::io::stdout().lock())?;
    Ok(())
}

fn explore_cmd(a: ExploreArgs) -> Result<()> {
    let metadata = a.metadata.unwrap_or_else(|| a.root.join(METADATA_FILE));
    let ingested = ingest(&a.root, &metadata)?;
    for d in &ingested.diagnostics {
        eprintln!("{}:{}: {}", metadata.display(), d.line, d.message);
    }
    let report = explore(&ingested.cases);
    let text = match a.format {
        Format::Json => report.to_json(),
        Format::Csv => report.to_csv(),
    };
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        writeln!(out)?;
    }
    Ok(())
}

fn serve_cmd(a: ServeArgs) -> Result<()> {
    let mut cfg: ServiceConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => ServiceConfig::default(),
    };
    if a.out_dir.is_some() {
        cfg.out_dir = a.out_dir;
    }
    let state = service::AppState::load(&a.case_root, cfg)?;
    for d in state.diagnostics() {
        eprintln!("metadata line {}: {}", d.line, d.message);
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(service::serve(a.port, state))?;
    Ok(())
}
