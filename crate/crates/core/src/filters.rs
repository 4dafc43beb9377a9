//! Reference despeckling filters: identity, Boxcar, Enhanced Lee and SRAD.
//!
//! Boxcar and Enhanced Lee extend the image by half-sample mirroring
//! (`c b a | a b c`); SRAD uses zero-flux (Neumann) boundaries.

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::raster::{load_raster, Raster, Roi, SummaryStats};

/// Filter family plus parameters, shared by the CLI and the tuner.
///
/// JSON form: `{"family":"srad","params":{"T":300,"dt":0.05}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "lowercase")]
pub enum FilterSpec {
    Identity,
    Boxcar {
        w: usize,
    },
    Elee {
        #[serde(default = "default_elee_window")]
        w: usize,
        #[serde(default = "default_looks")]
        looks: f64,
        #[serde(default = "default_damping")]
        k: f64,
    },
    Srad {
        #[serde(rename = "T")]
        iterations: usize,
        #[serde(default = "default_dt")]
        dt: f64,
        #[serde(default = "default_q0_window")]
        q0_window: usize,
    },
    /// Output of a third-party filter, read from a RAS1 file.
    External {
        path: PathBuf,
    },
}

fn default_elee_window() -> usize {
    9
}
fn default_looks() -> f64 {
    1.0
}
fn default_damping() -> f64 {
    1.0
}
pub fn default_dt() -> f64 {
    0.05
}
pub fn default_q0_window() -> usize {
    25
}

impl FilterSpec {
    pub fn family(&self) -> &'static str {
        match self {
            FilterSpec::Identity => "identity",
            FilterSpec::Boxcar { .. } => "boxcar",
            FilterSpec::Elee { .. } => "elee",
            FilterSpec::Srad { .. } => "srad",
            FilterSpec::External { .. } => "external",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            FilterSpec::Identity | FilterSpec::External { .. } => Ok(()),
            FilterSpec::Boxcar { w } => check_window(w),
            FilterSpec::Elee { w, looks, k } => {
                check_window(w)?;
                check_elee_params(looks, k)
            }
            FilterSpec::Srad { iterations, dt, q0_window } => {
                if iterations < 1 {
                    return Err(invalid("SRAD needs at least one iteration"));
                }
                check_dt(dt)?;
                check_window(q0_window)
            }
        }
    }

    /// Short label such as `boxcar(w=5)`.
    pub fn label(&self) -> String {
        match self {
            FilterSpec::Identity => "identity".into(),
            FilterSpec::Boxcar { w } => format!("boxcar(w={w})"),
            FilterSpec::Elee { w, looks, k } => format!("elee(w={w},L={looks},k={k})"),
            FilterSpec::Srad { iterations, dt, .. } => format!("srad(T={iterations},dt={dt})"),
            FilterSpec::External { path } => format!("external({})", path.display()),
        }
    }

    pub fn apply(&self, z: &Raster) -> Result<Raster> {
        self.validate()?;
        match self {
            FilterSpec::Identity => Ok(filter_identity(z)),
            FilterSpec::Boxcar { w } => filter_boxcar(z, *w),
            FilterSpec::Elee { w, looks, k } => filter_elee(z, *w, *looks, *k),
            FilterSpec::Srad { iterations, dt, q0_window } => filter_srad_with_window(z, *iterations, *dt, *q0_window),
            FilterSpec::External { path } => {
                let out = load_raster(path)?;
                z.ensure_same_dims(&out)?;
                Ok(out)
            }
        }
    }
}

fn check_window(w: usize) -> Result<()> {
    if w < 3 || w % 2 == 0 {
        return Err(invalid(format!("window must be odd and >= 3, got {w}")));
    }
    Ok(())
}

fn check_fits(z: &Raster, w: usize) -> Result<()> {
    check_window(w)?;
    if w > z.width().min(z.height()) {
        return Err(invalid(format!("window {w} exceeds raster {}x{}", z.width(), z.height())));
    }
    Ok(())
}

fn check_elee_params(looks: f64, k: f64) -> Result<()> {
    if !(looks > 0.0) || !looks.is_finite() {
        return Err(invalid(format!("looks must be positive, got {looks}")));
    }
    if !(k >= 0.0) || !k.is_finite() {
        return Err(invalid(format!("damping must be non-negative, got {k}")));
    }
    Ok(())
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt <= 0.25) {
        return Err(invalid(format!("dt must lie in (0, 0.25], got {dt}")));
    }
    Ok(())
}

/// Half-sample symmetric index: -1 -> 0, n -> n-1.
#[inline]
pub(crate) fn mirror(i: isize, n: usize) -> usize {
    let n = n as isize;
    let j = if i < 0 {
        -i - 1
    } else if i >= n {
        2 * n - i - 1
    } else {
        i
    };
    j as usize
}

/// Sums over every `w x w` neighbourhood with mirrored borders. Each sum is
/// accumulated directly (no running differences), in two separable passes.
pub(crate) fn window_sums(data: &[f64], width: usize, height: usize, w: usize) -> Vec<f64> {
    let h = (w / 2) as isize;
    let mut rows = vec![0.0; width * height];
    rows.par_chunks_mut(width).enumerate().for_each(|(y, out)| {
        let src = &data[y * width..(y + 1) * width];
        for (x, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in -h..=h {
                s += src[mirror(x as isize + k, width)];
            }
            *o = s;
        }
    });
    let mut out = vec![0.0; width * height];
    out.par_chunks_mut(width).enumerate().for_each(|(y, o)| {
        for k in -h..=h {
            let yy = mirror(y as isize + k, height);
            let src = &rows[yy * width..(yy + 1) * width];
            for (a, b) in o.iter_mut().zip(src) {
                *a += b;
            }
        }
    });
    out
}

pub fn filter_identity(z: &Raster) -> Raster {
    z.clone()
}

/// Local mean over a `w x w` window.
pub fn filter_boxcar(z: &Raster, w: usize) -> Result<Raster> {
    check_fits(z, w)?;
    let n = (w * w) as f64;
    let sums = window_sums(z.data(), z.width(), z.height(), w);
    Raster::new(z.width(), z.height(), sums.into_iter().map(|s| s / n).collect())
}

/// Enhanced Lee filter.
///
/// With `C` the local coefficient of variation, `Cu = 1/sqrt(L)` and
/// `Cmax = sqrt(1 + 2/L)`:
///
/// * `C <= Cu`: local mean;
/// * `Cu < C < Cmax`: `W * mean + (1 - W) * z` with
///   `W = exp(-k (C - Cu) / (Cmax - C))`;
/// * `C >= Cmax`: the pixel is kept.
pub fn filter_elee(z: &Raster, w: usize, looks: f64, k: f64) -> Result<Raster> {
    check_fits(z, w)?;
    check_elee_params(looks, k)?;
    let (width, height) = z.dims();
    let n = (w * w) as f64;
    let s1 = window_sums(z.data(), width, height, w);
    let sq: Vec<f64> = z.data().iter().map(|v| v * v).collect();
    let s2 = window_sums(&sq, width, height, w);
    let cu = 1.0 / looks.sqrt();
    let cmax = (1.0 + 2.0 / looks).sqrt();
    let out = z
        .data()
        .par_iter()
        .zip(s1.par_iter().zip(s2.par_iter()))
        .map(|(&zv, (&a, &b))| {
            let mean = a / n;
            let var = ((b - a * a / n) / (n - 1.0)).max(0.0);
            let c = if mean > 0.0 { var.sqrt() / mean } else { 0.0 };
            if c <= cu {
                mean
            } else if c >= cmax {
                zv
            } else {
                let weight = (-k * (c - cu) / (cmax - c)).exp();
                weight * mean + (1.0 - weight) * zv
            }
        })
        .collect();
    Raster::new(width, height, out)
}

/// SRAD with the default homogeneous-window size for `q0`.
pub fn filter_srad(z: &Raster, iterations: usize, dt: f64) -> Result<Raster> {
    filter_srad_with_window(z, iterations, dt, default_q0_window())
}

/// Speckle reducing anisotropic diffusion, explicit four-neighbour scheme.
///
/// Each iteration estimates the speckle scale `q0` as the smallest
/// coefficient of variation among the non-overlapping `q0_window` tiles,
/// computes the instantaneous coefficient of variation `q` from the
/// normalised gradient and Laplacian, and diffuses with
/// `c(q) = 1 / (1 + (q² - q0²) / (q0² (1 + q0²)))`, clamped to [0, 1].
pub fn filter_srad_with_window(z: &Raster, iterations: usize, dt: f64, q0_window: usize) -> Result<Raster> {
    check_dt(dt)?;
    check_window(q0_window)?;
    if let Some(i) = z.data().iter().position(|v| !(*v > 0.0)) {
        return Err(Error::Domain(format!("SRAD needs strictly positive input, found {} at index {i}", z.data()[i])));
    }
    let (width, height) = z.dims();
    let mut img = z.clone();
    let mut coef = vec![0.0; width * height];
    for it in 0..iterations {
        let q0 = min_tile_cv(&img, q0_window);
        let q0sq = (q0 * q0).max(1e-12);
        let cur = img.data();
        coef.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
            let up = if y == 0 { 0 } else { y - 1 };
            let down = if y + 1 == height { y } else { y + 1 };
            for (x, c) in row.iter_mut().enumerate() {
                let left = if x == 0 { 0 } else { x - 1 };
                let right = if x + 1 == width { x } else { x + 1 };
                let v = cur[y * width + x];
                let dn = cur[up * width + x] - v;
                let ds = cur[down * width + x] - v;
                let dw = cur[y * width + left] - v;
                let de = cur[y * width + right] - v;
                let g2 = (dn * dn + ds * ds + dw * dw + de * de) / (v * v);
                let lap = (dn + ds + dw + de) / v;
                let num = 0.5 * g2 - lap * lap / 16.0;
                let den = (1.0 + 0.25 * lap).powi(2);
                let q2 = num / den;
                let cq = 1.0 / (1.0 + (q2 - q0sq) / (q0sq * (1.0 + q0sq)));
                *c = if cq.is_finite() { cq.clamp(0.0, 1.0) } else { 0.0 };
            }
        });
        let mut next = vec![0.0; width * height];
        next.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
            let up = if y == 0 { 0 } else { y - 1 };
            let down = if y + 1 == height { y } else { y + 1 };
            for (x, o) in row.iter_mut().enumerate() {
                let left = if x == 0 { 0 } else { x - 1 };
                let right = if x + 1 == width { x } else { x + 1 };
                let i = y * width + x;
                let v = cur[i];
                let flux = coef[i] * (cur[up * width + x] - v)
                    + coef[down * width + x] * (cur[down * width + x] - v)
                    + coef[i] * (cur[y * width + left] - v)
                    + coef[y * width + right] * (cur[y * width + right] - v);
                *o = v + 0.25 * dt * flux;
            }
        });
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { iteration: it + 1 });
        }
        img = Raster::new(width, height, next)?;
    }
    Ok(img)
}

/// Smallest coefficient of variation over the non-overlapping tiles of side
/// `w` (the whole raster if it is smaller than one tile).
pub(crate) fn min_tile_cv(r: &Raster, w: usize) -> f64 {
    let (width, height) = r.dims();
    let tw = w.min(width);
    let th = w.min(height);
    let mut best = f64::INFINITY;
    for y0 in (0..=height - th).step_by(th) {
        for x0 in (0..=width - tw).step_by(tw) {
            if let Ok(s) = SummaryStats::from_values(Roi::new(x0, y0, tw, th).values(r)) {
                if s.mean > 0.0 {
                    best = best.min(s.std / s.mean);
                }
            }
        }
    }
    if best.is_finite() {
        best
    } else {
        0.0
    }
}
