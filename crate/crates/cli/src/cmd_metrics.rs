use std::path::PathBuf;

use anyhow::{bail, Result};
use serde::Serialize;

use ratioq::metrics::{beta_edges, mssim, psnr, roi_table, roi_table_csv, RoiTableRow};
use ratioq::simulate::{phantom_blocks_points, BlocksLayout};
use ratioq::{Raster, Roi};

use crate::common::{ensure_dir, load, write_json, write_text};
use crate::manifest::RunContext;

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Ground truth.
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    noisy: Option<PathBuf>,
    #[arg(long)]
    filtered: Option<PathBuf>,
    /// PSNR peak (default: maximum of the truth).
    #[arg(long)]
    peak: Option<f64>,
    /// Regions of the ROI table: auto (blocks layout when the truth is the
    /// blocks phantom, whole raster otherwise), blocks or full.
    #[arg(long, default_value = "auto")]
    rois: String,
    /// Output directory.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct Scores {
    image: String,
    #[serde(with = "ratioq::serde_inf")]
    psnr: f64,
    mssim: f64,
    /// Absent when the truth has no edges.
    beta: Option<f64>,
}

#[derive(Serialize)]
struct Report {
    peak: f64,
    scores: Vec<Scores>,
    rois: Vec<RoiTableRow>,
}

fn rois_for(kind: &str, truth: &Raster) -> Result<Vec<(String, Roi)>> {
    let full = || vec![("full".to_owned(), truth.full_roi())];
    let blocks = || -> Result<Vec<(String, Roi)>> {
        if truth.width() != truth.height() {
            bail!("blocks ROIs need a square raster");
        }
        Ok(BlocksLayout::new(truth.width())?.labelled_rois())
    };
    match kind {
        "full" => Ok(full()),
        "blocks" => blocks(),
        "auto" => {
            let is_blocks = truth.width() == truth.height()
                && phantom_blocks_points(truth.width()).map(|p| &p == truth).unwrap_or(false);
            if is_blocks { blocks() } else { Ok(full()) }
        }
        other => bail!("unknown ROI set {other:?} (expected auto, blocks or full)"),
    }
}

pub fn run(a: Args, ctx: RunContext) -> Result<()> {
    let truth = load(&a.truth)?;
    let noisy = a.noisy.as_deref().map(load).transpose()?;
    let filtered = a.filtered.as_deref().map(load).transpose()?;
    let peak = match a.peak {
        Some(p) => p,
        None => truth.max(),
    };
    let mut scores = Vec::new();
    for (name, img) in [("noisy", &noisy), ("filtered", &filtered)] {
        if let Some(img) = img {
            scores.push(Scores {
                image: name.to_owned(),
                psnr: psnr(&truth, img, peak)?,
                mssim: mssim(&truth, img)?,
                beta: beta_edges(&truth, img).ok(),
            });
        }
    }
    let rois = rois_for(&a.rois, &truth)?;
    let rows = roi_table(Some(&truth), noisy.as_ref(), filtered.as_ref(), &rois)?;

    ensure_dir(&a.out)?;
    let mut m = ctx.manifest("metrics");
    m.input(&a.truth);
    for p in a.noisy.iter().chain(&a.filtered) {
        m.input(p);
    }
    let json_path = a.out.join("metrics.json");
    let csv_path = a.out.join("roi_table.csv");
    write_json(&json_path, &Report { peak, scores, rois: rows.clone() })?;
    write_text(&csv_path, &roi_table_csv(&rows))?;
    m.output(&json_path).output(&csv_path);
    m.config(serde_json::json!({ "peak": peak, "rois": a.rois }))?;
    m.write(&a.out.join("manifest.json"))
}
