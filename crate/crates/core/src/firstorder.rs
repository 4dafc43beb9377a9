//! First-order part of the measure: local statistics, automatic selection of
//! textureless windows, and the residual built from mean and ENL deviations
//! of the ratio image inside those windows.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::raster::{enl_of, Raster, Roi, SummaryStats};

/// Per-pixel sliding-window statistics (mirrored borders).
#[derive(Debug, Clone)]
pub struct LocalStatsField {
    pub mean: Raster,
    pub std: Raster,
    /// `mean² / std²`, `+inf` where the window is constant.
    pub enl: Raster,
    pub window: usize,
}

pub fn local_stats(r: &Raster, w: usize) -> Result<LocalStatsField> {
    let (width, height) = r.dims();
    if w < 3 || w % 2 == 0 || w >= width.min(height) {
        return Err(invalid(format!("window must be odd, >= 3 and below {}, got {w}", width.min(height))));
    }
    let h = (w / 2) as isize;
    let n = (w * w) as f64;
    let rows: Vec<Vec<(f64, f64, f64)>> = (0..height)
        .into_par_iter()
        .map(|y| {
            (0..width)
                .map(|x| {
                    let mut sum = 0.0;
                    let mut lo = f64::INFINITY;
                    let mut hi = f64::NEG_INFINITY;
                    for dy in -h..=h {
                        let row = r.row(crate::filters::mirror(y as isize + dy, height));
                        for dx in -h..=h {
                            let v = row[crate::filters::mirror(x as isize + dx, width)];
                            sum += v;
                            lo = lo.min(v);
                            hi = hi.max(v);
                        }
                    }
                    if lo == hi {
                        return (lo, 0.0, f64::INFINITY);
                    }
                    let mean = sum / n;
                    let mut ss = 0.0;
                    for dy in -h..=h {
                        let row = r.row(crate::filters::mirror(y as isize + dy, height));
                        for dx in -h..=h {
                            let d = row[crate::filters::mirror(x as isize + dx, width)] - mean;
                            ss += d * d;
                        }
                    }
                    let var = ss / (n - 1.0);
                    (mean, var.sqrt(), enl_of(mean, var))
                })
                .collect()
        })
        .collect();
    let flat: Vec<(f64, f64, f64)> = rows.into_iter().flatten().collect();
    Ok(LocalStatsField {
        mean: Raster::new(width, height, flat.iter().map(|t| t.0).collect())?,
        std: Raster::new(width, height, flat.iter().map(|t| t.1).collect())?,
        enl: Raster::new(width, height, flat.iter().map(|t| t.2).collect())?,
        window: w,
    })
}

/// Rule deciding which windows count as textureless.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SelectionMode {
    /// Accept when the ratio image's ENL is within `tol` (relative) of the
    /// observed ENL and its mean within `tol` of one.
    Paper,
    /// Judge textureless-ness on the observation alone: accept when the
    /// observed ENL is within `tol_detect` (relative) of the nominal number
    /// of looks and the means of the window's column and row bands agree
    /// (see [`SelectionConfig::split`]). The ratio statistics are then
    /// unconstrained.
    #[default]
    Noisy,
}

impl std::str::FromStr for SelectionMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "paper" => Ok(Self::Paper),
            "noisy" => Ok(Self::Noisy),
            other => Err(format!("unknown selection mode {other:?} (expected paper or noisy)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub window: usize,
    pub tol: f64,
    pub tol_detect: f64,
    pub mode: SelectionMode,
    /// Largest allowed difference between two band means of a window, in
    /// standard errors of that difference under pure noise. Only used
    /// in `noisy` mode, where an edge crossing a window can leave its ENL
    /// close to the nominal value.
    #[serde(default = "default_split")]
    pub split: f64,
}

pub fn default_split() -> f64 {
    4.0
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self { window: 25, tol: 0.03, tol_detect: 0.25, mode: SelectionMode::Noisy, split: default_split() }
    }
}

impl SelectionConfig {
    fn validate(&self) -> Result<()> {
        if self.window < 2 {
            return Err(invalid(format!("selection window must be >= 2, got {}", self.window)));
        }
        if !(self.tol > 0.0) || !(self.tol_detect > 0.0) || !(self.split > 0.0) {
            return Err(invalid("selection tolerances must be positive"));
        }
        Ok(())
    }

    /// Bound that each first-order term of an accepted window is expected
    /// to respect under the active mode.
    pub fn regime_bound(&self) -> f64 {
        match self.mode {
            SelectionMode::Paper => self.tol,
            SelectionMode::Noisy => self.tol_detect,
        }
    }
}

/// Statistics of one candidate window on the observation and on the
/// ratio (or residual) image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub roi: Roi,
    pub mu_noisy: f64,
    pub std_noisy: f64,
    #[serde(with = "crate::serde_inf")]
    pub enl_noisy: f64,
    pub mu_ratio: f64,
    pub std_ratio: f64,
    #[serde(with = "crate::serde_inf")]
    pub enl_ratio: f64,
}

impl WindowStats {
    pub fn from_stats(roi: Roi, noisy: SummaryStats, ratio: SummaryStats) -> Self {
        Self {
            roi,
            mu_noisy: noisy.mean,
            std_noisy: noisy.std,
            enl_noisy: noisy.enl,
            mu_ratio: ratio.mean,
            std_ratio: ratio.std,
            enl_ratio: ratio.enl,
        }
    }

    /// Window described only by the triple used in the residual.
    pub fn from_triple(roi: Roi, enl_noisy: f64, enl_ratio: f64, mu_ratio: f64) -> Self {
        Self {
            roi,
            mu_noisy: 1.0,
            std_noisy: 1.0 / enl_noisy.sqrt(),
            enl_noisy,
            mu_ratio,
            std_ratio: mu_ratio / enl_ratio.sqrt(),
            enl_ratio,
        }
    }

    /// `(|ENL_noisy - ENL_ratio| / ENL_noisy, |1 - mu_ratio|)`.
    pub fn residual_terms(&self) -> (f64, f64) {
        ((self.enl_noisy - self.enl_ratio).abs() / self.enl_noisy, (1.0 - self.mu_ratio).abs())
    }

    /// `(|mu_res| / sigma, |s_res - sigma| / sigma)` for residual images.
    pub fn additive_terms(&self, sigma: f64) -> (f64, f64) {
        (self.mu_ratio.abs() / sigma, (self.std_ratio - sigma).abs() / sigma)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaSelection {
    pub windows: Vec<WindowStats>,
    pub config: SelectionConfig,
    pub n: usize,
}

impl AreaSelection {
    pub fn new(windows: Vec<WindowStats>, config: SelectionConfig) -> Self {
        let n = windows.len();
        Self { windows, config, n }
    }
}

/// Greedy row-major scan with stride `w/2`; accepted windows are kept
/// pairwise disjoint by skipping any candidate that overlaps one already
/// accepted.
fn scan(
    z: &Raster,
    ratio: &Raster,
    cfg: &SelectionConfig,
    accept: impl Fn(&WindowStats) -> bool,
) -> Result<Vec<WindowStats>> {
    cfg.validate()?;
    z.ensure_same_dims(ratio)?;
    let w = cfg.window;
    if z.width() < w || z.height() < w {
        return Err(invalid(format!("raster {}x{} is smaller than the selection window {w}", z.width(), z.height())));
    }
    let stride = (w / 2).max(1);
    let mut accepted: Vec<WindowStats> = Vec::new();
    for y0 in (0..=z.height() - w).step_by(stride) {
        for x0 in (0..=z.width() - w).step_by(stride) {
            let roi = Roi::new(x0, y0, w, w);
            if accepted.iter().any(|a| a.roi.overlaps(&roi)) {
                continue;
            }
            let noisy = SummaryStats::from_values(roi.values(z))?;
            let rs = SummaryStats::from_values(roi.values(ratio))?;
            let ws = WindowStats::from_stats(roi, noisy, rs);
            if accept(&ws) {
                accepted.push(ws);
            }
        }
    }
    Ok(accepted)
}

/// Number of column (and row) bands compared by the `noisy` mode.
pub const SPLIT_BANDS: usize = 5;

/// Means of the column bands and of the row bands of `roi`, each with its
/// pixel count. Thin strips of another region along a window border show
/// up as one deviating band.
fn band_means(r: &Raster, roi: Roi) -> [Vec<(f64, usize)>; 2] {
    let edges = |len: usize| -> Vec<(usize, usize)> {
        (0..SPLIT_BANDS).map(|k| (k * len / SPLIT_BANDS, (k + 1) * len / SPLIT_BANDS)).filter(|(a, b)| b > a).collect()
    };
    let mean = |band: Roi| (band.values(r).sum::<f64>() / band.area() as f64, band.area());
    let cols = edges(roi.w).into_iter().map(|(a, b)| mean(Roi::new(roi.x0 + a, roi.y0, b - a, roi.h))).collect();
    let rows = edges(roi.h).into_iter().map(|(a, b)| mean(Roi::new(roi.x0, roi.y0 + a, roi.w, b - a))).collect();
    [cols, rows]
}

/// Whether every pair of bands differs by at most `split` standard errors,
/// `se(m)` being the standard error of one band statistic over `m` pixels.
fn bands_agree(r: &Raster, roi: Roi, split: f64, stat: impl Fn(f64) -> f64, se: impl Fn(usize) -> f64) -> bool {
    band_means(r, roi).iter().all(|bands| {
        bands.iter().enumerate().all(|(i, &(a, na))| {
            bands[i + 1..].iter().all(|&(b, nb)| {
                let d = (stat(a) - stat(b)).abs();
                d.is_finite() && d <= split * (se(na).powi(2) + se(nb).powi(2)).sqrt()
            })
        })
    })
}

/// Speckle: the log of a band mean has standard error about `1/sqrt(m L)`.
fn bands_agree_multiplicative(z: &Raster, roi: Roi, looks: f64, split: f64) -> bool {
    bands_agree(z, roi, split, f64::ln, |m| 1.0 / (m as f64 * looks).sqrt())
}

/// Gaussian noise: a band mean has standard error `sigma/sqrt(m)`.
fn bands_agree_additive(z: &Raster, roi: Roi, sigma: f64, split: f64) -> bool {
    bands_agree(z, roi, split, |v| v, |m| sigma / (m as f64).sqrt())
}

fn usable_enl(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

/// Finds textureless windows for the multiplicative model.
///
/// Windows whose ENL (observed or ratio) is the infinite sentinel are never
/// selected. Fails with [`Error::NoTexturelessArea`] when nothing qualifies.
pub fn select_areas(z: &Raster, ratio: &Raster, looks: f64, cfg: &SelectionConfig) -> Result<AreaSelection> {
    if !(looks > 0.0) {
        return Err(invalid(format!("nominal looks must be positive, got {looks}")));
    }
    let windows = scan(z, ratio, cfg, |ws| {
        if !usable_enl(ws.enl_noisy) || !usable_enl(ws.enl_ratio) {
            return false;
        }
        match cfg.mode {
            SelectionMode::Paper => {
                let (r_enl, r_mu) = ws.residual_terms();
                r_enl <= cfg.tol && r_mu <= cfg.tol
            }
            SelectionMode::Noisy => {
                (ws.enl_noisy - looks).abs() / looks <= cfg.tol_detect
                    && bands_agree_multiplicative(z, ws.roi, looks, cfg.split)
            }
        }
    })?;
    if windows.is_empty() {
        return Err(Error::NoTexturelessArea(format!("{:?} mode, window {}", cfg.mode, cfg.window)));
    }
    Ok(AreaSelection::new(windows, *cfg))
}

/// Finds textureless windows for the additive model, where `residual` is
/// `Z - X̂` and the ideal residual is zero-mean with standard deviation
/// `sigma`.
pub fn select_areas_additive(z: &Raster, residual: &Raster, sigma: f64, cfg: &SelectionConfig) -> Result<AreaSelection> {
    if !(sigma > 0.0) {
        return Err(invalid(format!("sigma must be positive, got {sigma}")));
    }
    let windows = scan(z, residual, cfg, |ws| {
        if !(ws.std_noisy > 0.0) || !(ws.std_ratio > 0.0) {
            return false;
        }
        match cfg.mode {
            SelectionMode::Paper => {
                let (a, b) = ws.additive_terms(sigma);
                a <= cfg.tol && b <= cfg.tol
            }
            SelectionMode::Noisy => {
                (ws.std_noisy - sigma).abs() / sigma <= cfg.tol_detect
                    && bands_agree_additive(z, ws.roi, sigma, cfg.split)
            }
        }
    })?;
    if windows.is_empty() {
        return Err(Error::NoTexturelessArea(format!("additive {:?} mode, window {}", cfg.mode, cfg.window)));
    }
    Ok(AreaSelection::new(windows, *cfg))
}

/// `r = 1/2 * sum_i (|ENL_noisy(i) - ENL_ratio(i)| / ENL_noisy(i) + |1 - mu_ratio(i)|)`.
///
/// This is a sum over windows, not a mean.
pub fn first_order_residual(sel: &AreaSelection) -> Result<f64> {
    if sel.windows.is_empty() {
        return Err(Error::NoTexturelessArea("empty selection".into()));
    }
    let mut total = 0.0;
    for ws in &sel.windows {
        if !usable_enl(ws.enl_noisy) {
            return Err(invalid(format!("window {:?} has unusable observed ENL {}", ws.roi, ws.enl_noisy)));
        }
        let (a, b) = ws.residual_terms();
        total += a + b;
    }
    Ok(0.5 * total)
}

/// Additive counterpart: `1/2 * sum_i (|mu_res(i)| / sigma + |s_res(i) - sigma| / sigma)`.
pub fn additive_residual(sel: &AreaSelection, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(invalid(format!("sigma must be positive, got {sigma}")));
    }
    if sel.windows.is_empty() {
        return Err(Error::NoTexturelessArea("empty selection".into()));
    }
    Ok(0.5 * sel.windows.iter().map(|ws| {
        let (a, b) = ws.additive_terms(sigma);
        a + b
    }).sum::<f64>())
}
