//! The composite score `M = r + delta_h` and its report.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::firstorder::{
    additive_residual, default_split, first_order_residual, select_areas, select_areas_additive, AreaSelection, SelectionConfig,
    SelectionMode, WindowStats,
};
use crate::raster::Raster;
use crate::secondorder::{delta_h, Offset, SecondOrderConfig, DEFAULT_OFFSETS};

pub const DEFAULT_EPS: f64 = 1e-12;

/// Every knob of the evaluation pipeline, echoed into each report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    /// Side of the textureless-area windows.
    pub w: usize,
    pub tol: f64,
    pub tol_detect: f64,
    pub mode: SelectionMode,
    /// Band-agreement bound of the `noisy` selection mode.
    pub split: f64,
    /// Shuffled replicates.
    pub p: usize,
    /// Co-occurrence tile side.
    pub win: usize,
    pub offsets: Vec<Offset>,
    pub percentiles: (f64, f64),
    /// Floor applied to the filtered image before division.
    pub eps: f64,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            w: 25,
            tol: 0.03,
            tol_detect: 0.25,
            mode: SelectionMode::Noisy,
            split: default_split(),
            p: 100,
            win: 11,
            offsets: DEFAULT_OFFSETS.to_vec(),
            percentiles: (1.0, 99.0),
            eps: DEFAULT_EPS,
            seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn selection(&self) -> SelectionConfig {
        SelectionConfig {
            window: self.w,
            tol: self.tol,
            tol_detect: self.tol_detect,
            mode: self.mode,
            split: self.split,
        }
    }

    pub fn second_order(&self) -> SecondOrderConfig {
        SecondOrderConfig { p: self.p, win: self.win, offsets: self.offsets.clone(), percentiles: self.percentiles }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum NoiseReference {
    /// Multiplicative model with the user-supplied number of looks.
    Multiplicative { looks: f64 },
    /// Additive model with the known noise standard deviation.
    Additive { sigma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MReport {
    /// First-order residual.
    pub r: f64,
    pub h_o: f64,
    pub h_g_bar: f64,
    pub delta_h: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub n: usize,
    pub mode: SelectionMode,
    pub seed: u64,
    pub reference: NoiseReference,
    pub config: EvalConfig,
    pub windows: Vec<WindowStats>,
    pub h_g_samples: Vec<f64>,
}

impl MReport {
    pub const CSV_HEADER: &'static str = "label,h_o,h_g_bar,delta_h,r,M,n";

    /// One CSV line in comparison-table column order, 6 significant digits.
    pub fn csv_row(&self, label: &str) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            csv_field(label),
            sig6(self.h_o),
            sig6(self.h_g_bar),
            sig6(self.delta_h),
            sig6(self.r),
            sig6(self.m),
            self.n
        )
    }
}

pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Formats with six significant digits; plain notation for moderate
/// magnitudes, scientific otherwise.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.5e}");
    let exp: i32 = sci.split('e').nth(1).and_then(|e| e.parse().ok()).unwrap_or(0);
    if (-5..6).contains(&exp) {
        format!("{:.*}", (5 - exp).max(0) as usize, x)
    } else {
        sci
    }
}

/// `I = Z / max(X̂, eps)`.
pub fn ratio_image(z: &Raster, xhat: &Raster, eps: f64) -> Result<Raster> {
    if !(eps > 0.0) {
        return Err(invalid(format!("eps must be positive, got {eps}")));
    }
    z.ensure_same_dims(xhat)?;
    z.ensure_non_negative("observed image")?;
    xhat.ensure_non_negative("filtered image")?;
    z.zip_with(xhat, |a, b| a / b.max(eps))
}

fn check_finite(v: f64, what: &'static str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what))
    }
}

fn assemble(sel: AreaSelection, r: f64, image: &Raster, cfg: &EvalConfig, reference: NoiseReference) -> Result<MReport> {
    let r = check_finite(r, "first-order residual")?;
    let so = delta_h(image, &cfg.second_order(), cfg.seed)?;
    let dh = check_finite(so.delta_h, "delta_h")?;
    Ok(MReport {
        r,
        h_o: so.h_o,
        h_g_bar: so.h_g_bar,
        delta_h: dh,
        m: r + dh,
        n: sel.n,
        mode: cfg.mode,
        seed: cfg.seed,
        reference,
        config: cfg.clone(),
        windows: sel.windows,
        h_g_samples: so.h_g_samples,
    })
}

/// Scores a filtered image without any ground reference.
pub fn evaluate_m(z: &Raster, xhat: &Raster, looks: f64, cfg: &EvalConfig) -> Result<MReport> {
    if !(looks > 0.0) || !looks.is_finite() {
        return Err(invalid(format!("looks must be positive, got {looks}")));
    }
    let ratio = ratio_image(z, xhat, cfg.eps)?;
    if ratio.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ratio image"));
    }
    let sel = select_areas(z, &ratio, looks, &cfg.selection())?;
    let r = first_order_residual(&sel)?;
    assemble(sel, r, &ratio, cfg, NoiseReference::Multiplicative { looks })
}

/// Additive-noise variant working on the residual `Z - X̂`; the ideal
/// residual has zero mean and standard deviation `sigma`.
pub fn evaluate_m_additive(z: &Raster, xhat: &Raster, sigma: f64, cfg: &EvalConfig) -> Result<MReport> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(invalid(format!("sigma must be positive, got {sigma}")));
    }
    let residual = z.zip_with(xhat, |a, b| a - b)?;
    let sel = select_areas_additive(z, &residual, sigma, &cfg.selection())?;
    let r = additive_residual(&sel, sigma)?;
    assemble(sel, r, &residual, cfg, NoiseReference::Additive { sigma })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::filter_boxcar;
    use crate::simulate::{apply_additive, gamma_speckle, phantom_blocks_points, speckle, SpeckleParams};

    #[test]
    fn ratio_image_cases() {
        let z = gamma_speckle(20, 20, SpeckleParams::new(1.0, 1).unwrap()).unwrap();
        assert!(ratio_image(&z, &z, DEFAULT_EPS).unwrap().data().iter().all(|&v| v == 1.0));

        let x = Raster::from_fn(20, 20, |a, b| 1.0 + (a * b % 7) as f64).unwrap();
        let zz = x.zip_with(&z, |a, b| a * b).unwrap();
        let y = ratio_image(&zz, &x, DEFAULT_EPS).unwrap();
        for (a, b) in y.data().iter().zip(z.data()) {
            assert!((a - b).abs() <= 1e-15 * b.max(1.0));
        }

        let zero = Raster::filled(20, 20, 0.0).unwrap();
        assert!(ratio_image(&z, &zero, 1e-12).unwrap().data().iter().all(|v| v.is_finite()));
        assert!(ratio_image(&z, &zero, 0.0).is_err());
        assert!(ratio_image(&z, &Raster::filled(20, 19, 1.0).unwrap(), 1e-12).is_err());
    }

    #[test]
    fn sig6_formatting() {
        assert_eq!(sig6(0.302612345), "0.302612");
        assert_eq!(sig6(9.41), "9.41000");
        assert_eq!(sig6(123456.7), "123457");
        assert_eq!(sig6(9.9999996), "10.0000");
        assert_eq!(sig6(1.5e-9), "1.50000e-9");
        assert_eq!(sig6(0.0), "0");
    }

    #[test]
    fn unfiltered_input_has_no_textureless_area() {
        let x = phantom_blocks_points(200).unwrap();
        let z = speckle(&x, SpeckleParams::new(1.0, 2).unwrap()).unwrap();
        let cfg = EvalConfig { p: 4, ..Default::default() };
        assert!(matches!(evaluate_m(&z, &z, 1.0, &cfg), Err(Error::NoTexturelessArea(_))));
    }

    #[test]
    fn pure_speckle_null() {
        let z = gamma_speckle(256, 256, SpeckleParams::new(1.0, 6).unwrap()).unwrap();
        let ones = Raster::filled(256, 256, 1.0).unwrap();
        let cfg = EvalConfig { p: 20, seed: 3, ..Default::default() };
        let rep = evaluate_m(&z, &ones, 1.0, &cfg).unwrap();
        assert!(rep.n >= 1);
        assert!(rep.delta_h < 1.0);
        assert_eq!(rep.m, rep.r + rep.delta_h);
        for ws in &rep.windows {
            let (a, b) = ws.residual_terms();
            assert_eq!(a, 0.0);
            assert!(b <= cfg.tol_detect);
        }
    }

    #[test]
    fn joint_rescaling_keeps_first_order_part() {
        let x = phantom_blocks_points(200).unwrap();
        let z = speckle(&x, SpeckleParams::new(1.0, 9).unwrap()).unwrap();
        let xhat = filter_boxcar(&z, 5).unwrap();
        let cfg = EvalConfig { p: 4, seed: 1, ..Default::default() };
        let a = evaluate_m(&z, &xhat, 1.0, &cfg).unwrap();
        // powers of two keep every quotient bit-identical
        let b = evaluate_m(&z.scale(4.0), &xhat.scale(4.0), 1.0, &cfg).unwrap();
        assert_eq!(a.r, b.r);
        assert_eq!(a.delta_h, b.delta_h);
        let rois_a: Vec<_> = a.windows.iter().map(|w| w.roi).collect();
        let rois_b: Vec<_> = b.windows.iter().map(|w| w.roi).collect();
        assert_eq!(rois_a, rois_b);
        let c = evaluate_m(&z.scale(3.7), &xhat.scale(3.7), 1.0, &cfg).unwrap();
        assert!((a.r - c.r).abs() < 1e-9 * a.r.max(1.0));
    }

    #[test]
    fn additive_mode_cases() {
        let x = phantom_blocks_points(200).unwrap();
        let z = apply_additive(&x, 2.0, 4).unwrap();
        let cfg = EvalConfig { p: 20, seed: 2, ..Default::default() };
        let rep = evaluate_m_additive(&z, &x, 2.0, &cfg).unwrap();
        assert!(rep.delta_h < 1.0);
        assert!(rep.n >= 1);
        assert!(matches!(evaluate_m_additive(&z, &z, 2.0, &cfg), Err(Error::NoTexturelessArea(_))));
        assert!(evaluate_m_additive(&z, &x, 0.0, &cfg).is_err());
    }

    #[test]
    fn report_serializes_with_m_field() {
        let z = gamma_speckle(64, 64, SpeckleParams::new(1.0, 6).unwrap()).unwrap();
        let ones = Raster::filled(64, 64, 1.0).unwrap();
        let rep = evaluate_m(&z, &ones, 1.0, &EvalConfig { p: 2, ..Default::default() }).unwrap();
        let v: serde_json::Value = serde_json::to_value(&rep).unwrap();
        assert!(v.get("M").is_some());
        assert_eq!(v["reference"]["model"], "multiplicative");
        let back: MReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, rep);
        assert!(rep.csv_row("ideal").starts_with("ideal,"));
        assert_eq!(MReport::CSV_HEADER.split(',').count(), rep.csv_row("x").split(',').count());
    }
}
