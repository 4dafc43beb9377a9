use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use ratioq::quality::{evaluate_m, evaluate_m_additive, ratio_image, MReport};
use ratioq::raster::{to_gray8, write_png8};
use ratioq::Raster;

use crate::common::{ensure_dir, file_stem, load, write_json, write_text, EvalFlags};
use crate::manifest::RunContext;

#[derive(clap::Args, Debug)]
pub struct Args {
    /// Observed (noisy) image.
    #[arg(long)]
    noisy: PathBuf,
    /// Filtered image; repeat to compare several filters.
    #[arg(long, required = true)]
    filtered: Vec<PathBuf>,
    /// Label of each filtered image, in the same order; unlabelled images
    /// use their file stem.
    #[arg(long)]
    label: Vec<String>,
    /// Nominal number of looks of the observation.
    #[arg(long, required_unless_present = "sigma")]
    looks: Option<f64>,
    /// Known noise standard deviation; switches to the additive model.
    #[arg(long, conflicts_with = "looks")]
    sigma: Option<f64>,
    #[command(flatten)]
    eval: EvalFlags,
    /// Also write PNGs of each ratio image and of the selected windows.
    #[arg(long)]
    png: bool,
    /// Output directory.
    #[arg(short, long)]
    out: PathBuf,
}

#[derive(Serialize)]
struct Config<'a> {
    looks: Option<f64>,
    sigma: Option<f64>,
    labels: &'a [String],
    eval: ratioq::EvalConfig,
}

fn overlay(z: &Raster, report: &MReport, path: &Path) -> Result<()> {
    let mut px = to_gray8(z, (1.0, 99.0));
    let w = z.width();
    for win in &report.windows {
        let r = win.roi;
        for x in r.x0..r.x0 + r.w {
            px[r.y0 * w + x] = 255;
            px[(r.y0 + r.h - 1) * w + x] = 255;
        }
        for y in r.y0..r.y0 + r.h {
            px[y * w + r.x0] = 255;
            px[y * w + r.x0 + r.w - 1] = 255;
        }
    }
    Ok(write_png8(path, z.width(), z.height(), px)?)
}

pub fn run(a: Args, ctx: RunContext) -> Result<()> {
    if a.label.len() > a.filtered.len() {
        bail!("{} labels given for {} filtered images", a.label.len(), a.filtered.len());
    }
    // missing labels fall back to the file stem
    let labels: Vec<String> = a
        .filtered
        .iter()
        .enumerate()
        .map(|(i, p)| match a.label.get(i) {
            Some(l) => l.clone(),
            None => p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        })
        .collect();
    let stems: Vec<String> = labels.iter().map(|l| file_stem(l)).collect();
    for (i, s) in stems.iter().enumerate() {
        if stems[..i].contains(s) {
            bail!("duplicate label {:?}; pass distinct --label values", labels[i]);
        }
    }
    let cfg = a.eval.config();
    let z = load(&a.noisy)?;
    ensure_dir(&a.out)?;
    let mut m = ctx.manifest("evaluate");
    m.seed("shuffle", cfg.seed).input(&a.noisy);

    let mut csv = String::from(MReport::CSV_HEADER);
    csv.push('\n');
    for ((path, label), stem) in a.filtered.iter().zip(&labels).zip(&stems) {
        let xhat = load(path)?;
        m.input(path);
        let report = match (a.looks, a.sigma) {
            (_, Some(sigma)) => evaluate_m_additive(&z, &xhat, sigma, &cfg),
            (Some(looks), None) => evaluate_m(&z, &xhat, looks, &cfg),
            (None, None) => unreachable!("clap requires --looks or --sigma"),
        }
        .with_context(|| format!("evaluating {label}"))?;
        csv.push_str(&report.csv_row(label));
        csv.push('\n');
        let report_path = a.out.join(format!("{stem}.report.json"));
        write_json(&report_path, &report)?;
        m.output(&report_path);
        if a.png {
            let ratio = match a.sigma {
                Some(_) => z.zip_with(&xhat, |p, q| p - q)?,
                None => ratio_image(&z, &xhat, cfg.eps)?,
            };
            let rp = a.out.join(format!("{stem}.ratio.png"));
            ratioq::raster::export_png8(&ratio, &rp, (1.0, 99.0))?;
            let sp = a.out.join(format!("{stem}.selection.png"));
            overlay(&z, &report, &sp)?;
            m.output(&rp).output(&sp);
        }
    }
    let table = a.out.join("table.csv");
    write_text(&table, &csv)?;
    m.output(&table);
    m.config(Config { looks: a.looks, sigma: a.sigma, labels: &labels, eval: cfg })?;
    m.write(&a.out.join("manifest.json"))
}
