//! Reference-based metrics: PSNR, mean SSIM, Laplacian edge correlation
//! and per-ROI statistics.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::filters::mirror;
use crate::quality::{csv_field, sig6};
use crate::raster::{roi_stats, Raster, Roi, SummaryStats};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// `20 log10(peak) - 10 log10(MSE)`; identical images give `+inf`.
pub fn psnr(reference: &Raster, test: &Raster, peak: f64) -> Result<f64> {
    reference.ensure_same_dims(test)?;
    if !(peak > 0.0) || !peak.is_finite() {
        return Err(invalid(format!("PSNR peak must be positive, got {peak}")));
    }
    let sse: f64 = reference.data().iter().zip(test.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    let mse = sse / reference.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(20.0 * peak.log10() - 10.0 * mse.log10())
}

/// PSNR with the peak taken as the maximum of the reference.
pub fn psnr_default(reference: &Raster, test: &Raster) -> Result<f64> {
    let peak = reference.max();
    if !(peak > 0.0) {
        return Err(Error::Degenerate("reference maximum is not positive; pass an explicit peak".into()));
    }
    psnr(reference, test, peak)
}

fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size as f64 - 1.0) / 2.0;
    let k: Vec<f64> = (0..size).map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" correlation: output is `(w-k+1) x (h-k+1)`.
fn filter_valid(data: &[f64], width: usize, height: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let ow = width - n + 1;
    let oh = height - n + 1;
    let mut tmp = vec![0.0; ow * height];
    for y in 0..height {
        let row = &data[y * width..(y + 1) * width];
        for x in 0..ow {
            tmp[y * ow + x] = k.iter().zip(&row[x..x + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for (j, kv) in k.iter().enumerate() {
                acc += kv * tmp[(y + j) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Mean structural similarity with dynamic range `max(reference)`.
pub fn mssim(reference: &Raster, test: &Raster) -> Result<f64> {
    let peak = reference.max();
    mssim_with_peak(reference, test, if peak > 0.0 { peak } else { 1.0 })
}

/// Mean structural similarity over every fully contained 11x11 Gaussian
/// window, with `C1 = (0.01 peak)^2` and `C2 = (0.03 peak)^2`.
pub fn mssim_with_peak(reference: &Raster, test: &Raster, peak: f64) -> Result<f64> {
    reference.ensure_same_dims(test)?;
    if !(peak > 0.0) || !peak.is_finite() {
        return Err(invalid(format!("MSSIM dynamic range must be positive, got {peak}")));
    }
    let (w, h) = reference.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(invalid(format!("MSSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {w}x{h}")));
    }
    let k = gaussian_kernel(SSIM_WINDOW, SSIM_SIGMA);
    let a = reference.data();
    let b = test.data();
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(a, w, h, &k);
    let mu_b = filter_valid(b, w, h, &k);
    let e_aa = filter_valid(&aa, w, h, &k);
    let e_bb = filter_valid(&bb, w, h, &k);
    let e_ab = filter_valid(&ab, w, h, &k);
    let c1 = (SSIM_K1 * peak).powi(2);
    let c2 = (SSIM_K2 * peak).powi(2);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

/// 4-neighbour Laplacian with mirrored borders.
pub fn laplacian(r: &Raster) -> Raster {
    let (w, h) = r.dims();
    Raster::from_fn(w, h, |x, y| {
        let (xi, yi) = (x as isize, y as isize);
        r.get(mirror(xi - 1, w), y) + r.get(mirror(xi + 1, w), y) + r.get(x, mirror(yi - 1, h))
            + r.get(x, mirror(yi + 1, h))
            - 4.0 * r.get(x, y)
    })
    .expect("same dimensions")
}

fn centered(v: &[f64]) -> Vec<f64> {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| x - m).collect()
}

/// Normalized correlation of the mean-removed Laplacians.
pub fn beta_edges(reference: &Raster, test: &Raster) -> Result<f64> {
    reference.ensure_same_dims(test)?;
    let a = centered(laplacian(reference).data());
    let b = centered(laplacian(test).data());
    let gaa: f64 = a.iter().map(|v| v * v).sum();
    let gbb: f64 = b.iter().map(|v| v * v).sum();
    if gaa == 0.0 || gbb == 0.0 {
        return Err(Error::Degenerate("Laplacian has zero energy; beta is undefined for flat images".into()));
    }
    let gab: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    Ok((gab / (gaa.sqrt() * gbb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiTableRow {
    pub label: String,
    pub roi: Roi,
    pub truth: Option<SummaryStats>,
    pub noisy: Option<SummaryStats>,
    pub filtered: Option<SummaryStats>,
}

/// Per-ROI mean, standard deviation and ENL for each supplied raster.
pub fn roi_table(
    truth: Option<&Raster>,
    noisy: Option<&Raster>,
    filtered: Option<&Raster>,
    rois: &[(String, Roi)],
) -> Result<Vec<RoiTableRow>> {
    let present: Vec<&Raster> = [truth, noisy, filtered].into_iter().flatten().collect();
    if present.is_empty() {
        return Err(invalid("roi_table needs at least one raster"));
    }
    for r in &present[1..] {
        present[0].ensure_same_dims(r)?;
    }
    let stats = |r: Option<&Raster>, roi: Roi| r.map(|r| roi_stats(r, roi)).transpose();
    rois.iter()
        .map(|(label, roi)| {
            Ok(RoiTableRow {
                label: label.clone(),
                roi: *roi,
                truth: stats(truth, *roi)?,
                noisy: stats(noisy, *roi)?,
                filtered: stats(filtered, *roi)?,
            })
        })
        .collect()
}

pub const ROI_CSV_HEADER: &str =
    "roi,truth_mean,truth_std,truth_enl,noisy_mean,noisy_std,noisy_enl,filtered_mean,filtered_std,filtered_enl";

/// CSV with one line per ROI; absent rasters leave their columns empty.
pub fn roi_table_csv(rows: &[RoiTableRow]) -> String {
    let mut out = String::from(ROI_CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&csv_field(&row.label));
        for s in [&row.truth, &row.noisy, &row.filtered] {
            match s {
                Some(s) => out.push_str(&format!(",{},{},{}", sig6(s.mean), sig6(s.std), sig6(s.enl))),
                None => out.push_str(",,,"),
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::filter_boxcar;
    use crate::simulate::{apply_additive, phantom_blocks_points, speckle, BlocksLayout, SpeckleParams};

    fn ramp() -> Raster {
        Raster::from_fn(40, 30, |x, y| ((x * 7 + y * 13) % 17) as f64 + 0.5 * x as f64).unwrap()
    }

    #[test]
    fn psnr_hand_cases() {
        let zero = Raster::filled(8, 8, 0.0).unwrap();
        let one = Raster::filled(8, 8, 1.0).unwrap();
        assert!((psnr(&zero, &one, 255.0).unwrap() - 20.0 * 255f64.log10()).abs() < 1e-12);
        assert!((psnr(&zero, &one, 255.0).unwrap() - 48.1308).abs() < 1e-4);
        assert_eq!(psnr(&one, &one, 1.0).unwrap(), f64::INFINITY);
        let two = Raster::filled(8, 8, 3.0).unwrap();
        // MSE = 4
        assert!((psnr(&one, &two, 10.0).unwrap() - (20.0 - 10.0 * 4f64.log10())).abs() < 1e-12);
        assert!(psnr(&zero, &one, 0.0).is_err());
        assert!(psnr(&zero, &Raster::filled(8, 7, 0.0).unwrap(), 1.0).is_err());
    }

    #[test]
    fn psnr_decreases_with_noise() {
        let x = ramp().map(|v| v + 50.0);
        let vals: Vec<f64> =
            [1.0, 2.0, 4.0].iter().map(|&s| psnr_default(&x, &apply_additive(&x, s, 11).unwrap()).unwrap()).collect();
        assert!(vals[0] > vals[1] && vals[1] > vals[2]);
    }

    #[test]
    fn mssim_cases() {
        let x = ramp();
        assert!((mssim(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let small = apply_additive(&x, 0.5, 3).unwrap();
        let large = apply_additive(&x, 5.0, 3).unwrap();
        assert!(mssim(&x, &large).unwrap() < mssim(&x, &small).unwrap());
        let peak = 30.0;
        let ab = mssim_with_peak(&x, &large, peak).unwrap();
        let ba = mssim_with_peak(&large, &x, peak).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        let c = Raster::filled(20, 20, 3.0).unwrap();
        assert!((mssim(&c, &c).unwrap() - 1.0).abs() < 1e-12);
        assert!(mssim(&Raster::filled(5, 5, 1.0).unwrap(), &Raster::filled(5, 5, 1.0).unwrap()).is_err());
    }

    #[test]
    fn mssim_blocks_noisy_is_low() {
        let x = phantom_blocks_points(200).unwrap();
        let z = speckle(&x, SpeckleParams::new(1.0, 1).unwrap()).unwrap();
        assert!(mssim(&x, &z).unwrap() < 0.6);
    }

    #[test]
    fn beta_cases() {
        let x = ramp();
        assert!((beta_edges(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        assert!((beta_edges(&x, &x.scale(-1.0)).unwrap() + 1.0).abs() < 1e-12);
        let affine = x.map(|v| 3.0 * v + 7.0);
        assert!((beta_edges(&x, &affine).unwrap() - 1.0).abs() < 1e-12);
        let c = Raster::filled(10, 10, 2.0).unwrap();
        assert!(matches!(beta_edges(&c, &x.crop(Roi::new(0, 0, 10, 10)).unwrap()), Err(Error::Degenerate(_))));
        // a sharp step loses all Laplacian overlap under any blur, so use a smooth bump
        let b = Raster::from_fn(120, 120, |x, y| {
            let d = ((x as f64 - 60.0).powi(2) + (y as f64 - 60.0).powi(2)) / 200.0;
            10.0 + 50.0 * (-d).exp()
        })
        .unwrap();
        let b5 = beta_edges(&b, &filter_boxcar(&b, 5).unwrap()).unwrap();
        let b15 = beta_edges(&b, &filter_boxcar(&b, 15).unwrap()).unwrap();
        assert!(0.0 < b15 && b15 < b5 && b5 < 1.0);
        let n = speckle(&phantom_blocks_points(200).unwrap(), SpeckleParams::new(1.0, 2).unwrap()).unwrap();
        let b = phantom_blocks_points(200).unwrap();
        assert!((beta_edges(&b, &n).unwrap() - beta_edges(&n, &b).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn roi_table_blocks() {
        let side = 200;
        let x = phantom_blocks_points(side).unwrap();
        let rois = BlocksLayout::new(side).unwrap().labelled_rois();
        let rows = roi_table(Some(&x), None, Some(&x), &rois).unwrap();
        let expected = [10.0, 2.0, 40.0, 60.0, 80.0];
        for (row, e) in rows.iter().zip(expected) {
            let t = row.truth.unwrap();
            assert_eq!(t.mean, e);
            assert_eq!(t.std, 0.0);
            assert_eq!(row.filtered, row.truth);
            assert!(row.noisy.is_none());
        }
        let csv = roi_table_csv(&rows);
        assert_eq!(csv.lines().count(), 6);
        assert!(csv.lines().nth(1).unwrap().starts_with("background,10.0000,0,inf,,,,"));
        assert!(roi_table(Some(&x), None, None, &[("bad".into(), Roi::new(190, 190, 20, 20))]).is_err());
    }
}
