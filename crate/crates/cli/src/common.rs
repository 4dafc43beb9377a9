use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::Args;
use serde::Serialize;

use ratioq::firstorder::{default_split, SelectionMode};
use ratioq::quality::EvalConfig;
use ratioq::Raster;

pub fn load(path: &Path) -> Result<Raster> {
    Ok(ratioq::load_raster(path)?)
}

pub fn save(r: &Raster, path: &Path) -> Result<()> {
    ensure_parent(path)?;
    Ok(ratioq::save_raster(r, path)?)
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => ensure_dir(p),
        _ => Ok(()),
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// Reads JSON given inline (starting with `{`) or from a file.
pub fn json_arg(arg: &str) -> Result<String> {
    if arg.trim_start().starts_with('{') {
        Ok(arg.to_owned())
    } else {
        fs::read_to_string(arg).with_context(|| format!("reading {arg}"))
    }
}

/// File-name-safe version of a label.
pub fn file_stem(label: &str) -> String {
    let s: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect();
    if s.is_empty() { "filtered".into() } else { s }
}

/// `dir/stem.manifest.json` next to an output file.
pub fn sidecar(output: &Path, suffix: &str) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    output.with_file_name(format!("{stem}.{suffix}"))
}

/// Evaluation knobs shared by `evaluate` and `tune`.
#[derive(Args, Debug, Clone)]
pub struct EvalFlags {
    /// Seed of the shuffled replicates.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Textureless-area selection rule.
    #[arg(long, default_value = "noisy")]
    pub mode: SelectionMode,
    /// Number of shuffled replicates.
    #[arg(long, default_value_t = 100)]
    pub p: usize,
    /// Side of the textureless-area windows.
    #[arg(long, default_value_t = 25)]
    pub w: usize,
    /// Tolerance of the `paper` selection rule.
    #[arg(long, default_value_t = 0.03)]
    pub tol: f64,
    /// Relative ENL tolerance of the `noisy` selection rule.
    #[arg(long, default_value_t = 0.25)]
    pub tol_detect: f64,
    /// Band-agreement bound of the `noisy` rule, in standard errors.
    #[arg(long, default_value_t = default_split())]
    pub split: f64,
    /// Tile side of the co-occurrence matrices.
    #[arg(long, default_value_t = 11)]
    pub win: usize,
    /// Floor applied to the filtered image before division.
    #[arg(long, default_value_t = ratioq::quality::DEFAULT_EPS)]
    pub eps: f64,
}

impl EvalFlags {
    pub fn config(&self) -> EvalConfig {
        EvalConfig {
            w: self.w,
            tol: self.tol,
            tol_detect: self.tol_detect,
            mode: self.mode,
            split: self.split,
            p: self.p,
            win: self.win,
            eps: self.eps,
            seed: self.seed,
            ..EvalConfig::default()
        }
    }
}
