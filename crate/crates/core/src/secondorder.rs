//! Second-order part of the measure: structure left in the ratio image.
//!
//! The ratio image is quantized to eight levels, Haralick homogeneity is
//! averaged over tiled co-occurrence matrices, and the result is compared
//! with the same statistic on random permutations of the pixels. Under
//! the ideal filter the ratio image is i.i.d., so permuting it changes
//! nothing in distribution; structure shows up as a gap between the two.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::raster::{percentile_sorted, Raster, Roi};
use crate::rng::{stream, Stage};

pub const LEVELS: usize = 8;

/// Pixel displacement `(dy, dx)`.
pub type Offset = (i32, i32);

pub const DEFAULT_OFFSETS: [Offset; 2] = [(0, 1), (1, 0)];

/// Raster of gray levels in `0..LEVELS`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedRaster {
    width: usize,
    height: usize,
    levels: Vec<u8>,
}

impl QuantizedRaster {
    pub fn new(width: usize, height: usize, levels: Vec<u8>) -> Result<Self> {
        if levels.len() != width * height || width == 0 || height == 0 {
            return Err(invalid(format!("{}x{} quantized raster needs {} levels, got {}", width, height, width * height, levels.len())));
        }
        if let Some(&l) = levels.iter().find(|&&l| l as usize >= LEVELS) {
            return Err(invalid(format!("gray level {l} outside 0..{LEVELS}")));
        }
        Ok(Self { width, height, levels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn levels(&self) -> &[u8] {
        &self.levels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.levels[y * self.width + x]
    }

    /// Uniform random permutation of all pixels.
    pub fn shuffled(&self, seed: u64, replicate: u64) -> QuantizedRaster {
        let mut levels = self.levels.clone();
        levels.shuffle(&mut stream(seed, Stage::Shuffle, replicate));
        QuantizedRaster { width: self.width, height: self.height, levels }
    }
}

/// Eight equal-width bins between the 1st and 99th percentiles.
pub fn quantize8(r: &Raster) -> QuantizedRaster {
    quantize_with(r, (1.0, 99.0))
}

/// Eight equal-width bins between the given percentiles; values outside
/// are clipped. A degenerate range maps everything to level 0.
pub fn quantize_with(r: &Raster, percentiles: (f64, f64)) -> QuantizedRaster {
    let mut sorted = r.data().to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = percentile_sorted(&sorted, percentiles.0);
    let hi = percentile_sorted(&sorted, percentiles.1);
    let levels = if hi > lo {
        let scale = LEVELS as f64 / (hi - lo);
        r.data()
            .iter()
            .map(|&v| (((v.clamp(lo, hi) - lo) * scale) as usize).min(LEVELS - 1) as u8)
            .collect()
    } else {
        vec![0; r.len()]
    };
    QuantizedRaster { width: r.width(), height: r.height(), levels }
}

/// Symmetric gray-level co-occurrence matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Glcm {
    pub counts: [[u64; LEVELS]; LEVELS],
    /// Total count, the normalisation constant.
    pub k: u64,
    pub offset: Offset,
}

impl Glcm {
    pub fn normalized(&self, i: usize, j: usize) -> f64 {
        self.counts[i][j] as f64 / self.k as f64
    }
}

fn check_offset(roi: Roi, offset: Offset) -> Result<()> {
    if offset == (0, 0) {
        return Err(invalid("co-occurrence offset must be non-zero"));
    }
    if offset.0.unsigned_abs() as usize >= roi.h || offset.1.unsigned_abs() as usize >= roi.w {
        return Err(invalid(format!("roi {}x{} is smaller than the offset span {offset:?}", roi.w, roi.h)));
    }
    Ok(())
}

#[inline]
fn accumulate(q: &QuantizedRaster, roi: Roi, (dy, dx): Offset, counts: &mut [[u64; LEVELS]; LEVELS]) -> u64 {
    let (ys, ye) = if dy >= 0 { (roi.y0, roi.y0 + roi.h - dy as usize) } else { (roi.y0 + (-dy) as usize, roi.y0 + roi.h) };
    let (xs, xe) = if dx >= 0 { (roi.x0, roi.x0 + roi.w - dx as usize) } else { (roi.x0 + (-dx) as usize, roi.x0 + roi.w) };
    let mut pairs = 0;
    for y in ys..ye {
        let y2 = (y as isize + dy as isize) as usize;
        for x in xs..xe {
            let x2 = (x as isize + dx as isize) as usize;
            let a = q.get(x, y) as usize;
            let b = q.get(x2, y2) as usize;
            counts[a][b] += 1;
            counts[b][a] += 1;
            pairs += 1;
        }
    }
    2 * pairs
}

/// Co-occurrence counts of `(q(p), q(p + offset))` for every `p` with both
/// ends inside `roi`; each pair is also counted reversed.
pub fn glcm(q: &QuantizedRaster, roi: Roi, offset: Offset) -> Result<Glcm> {
    if roi.w == 0 || roi.h == 0 || roi.x0 + roi.w > q.width || roi.y0 + roi.h > q.height {
        return Err(invalid(format!("roi {roi:?} does not fit inside a {}x{} raster", q.width, q.height)));
    }
    check_offset(roi, offset)?;
    let mut counts = [[0u64; LEVELS]; LEVELS];
    let k = accumulate(q, roi, offset, &mut counts);
    Ok(Glcm { counts, k, offset })
}

fn homogeneity_of_counts(counts: &[[u64; LEVELS]; LEVELS], k: u64) -> f64 {
    let k = k as f64;
    let mut h = 0.0;
    for (i, row) in counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            let d = i as f64 - j as f64;
            h += (c as f64 / k) / (1.0 + d * d);
        }
    }
    h
}

/// Inverse difference moment, `sum_ij p(i,j) / (1 + (i-j)²)`.
pub fn homogeneity(g: &Glcm) -> Result<f64> {
    if g.k == 0 {
        return Err(invalid("homogeneity of an empty co-occurrence matrix"));
    }
    Ok(homogeneity_of_counts(&g.counts, g.k))
}

/// Tiles of side `win` (stride `win`, full tiles only) starting at the origin.
pub fn tiles(width: usize, height: usize, win: usize) -> Vec<Roi> {
    let mut v = Vec::new();
    if win == 0 || width < win || height < win {
        return v;
    }
    for y0 in (0..=height - win).step_by(win) {
        for x0 in (0..=width - win).step_by(win) {
            v.push(Roi::new(x0, y0, win, win));
        }
    }
    v
}

/// Homogeneity averaged over all tiles and offsets, taken tile by tile
/// (row-major) with offsets in the given order; see [`shifted_mean`].
pub fn mean_homogeneity(q: &QuantizedRaster, win: usize, offsets: &[Offset]) -> Result<f64> {
    if offsets.is_empty() {
        return Err(invalid("at least one offset is required"));
    }
    let tiles = tiles(q.width, q.height, win);
    if tiles.is_empty() {
        return Err(invalid(format!("no {win}x{win} window fits in a {}x{} raster", q.width, q.height)));
    }
    for &o in offsets {
        check_offset(tiles[0], o)?;
    }
    let mut values = Vec::with_capacity(tiles.len() * offsets.len());
    for roi in &tiles {
        for &o in offsets {
            let mut counts = [[0u64; LEVELS]; LEVELS];
            let k = accumulate(q, *roi, o, &mut counts);
            values.push(homogeneity_of_counts(&counts, k));
        }
    }
    Ok(shifted_mean(&values))
}

/// `v[0] + sum(v[i] - v[0]) / n`, accumulated in order. Exact when all
/// values are equal.
pub fn shifted_mean(values: &[f64]) -> f64 {
    let first = values[0];
    let dev: f64 = values.iter().map(|v| v - first).sum();
    first + dev / values.len() as f64
}

/// Uniform random permutation (Fisher-Yates) of all pixel values.
pub fn shuffle(r: &Raster, seed: u64) -> Raster {
    let mut data = r.data().to_vec();
    data.shuffle(&mut stream(seed, Stage::Shuffle, 0));
    Raster::new(r.width(), r.height(), data).expect("same dimensions")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderConfig {
    /// Number of shuffled replicates.
    pub p: usize,
    /// Tile side for the co-occurrence matrices.
    pub win: usize,
    pub offsets: Vec<Offset>,
    /// Clipping percentiles of the quantizer.
    pub percentiles: (f64, f64),
}

impl Default for SecondOrderConfig {
    fn default() -> Self {
        Self { p: 100, win: 11, offsets: DEFAULT_OFFSETS.to_vec(), percentiles: (1.0, 99.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondOrderReport {
    pub h_o: f64,
    pub h_g_samples: Vec<f64>,
    pub h_g_bar: f64,
    /// `100 * |h_o - h_g_bar| / h_o`.
    pub delta_h: f64,
    pub p: usize,
    pub seed: u64,
}

/// Mean homogeneity of the ratio image against `p` shuffled replicates.
///
/// Quantization thresholds depend only on the value multiset, which
/// shuffling preserves, so the replicates permute the quantized levels.
/// Replicate `i` uses its own stream, making the report independent of
/// how replicates are scheduled across threads.
pub fn delta_h(ratio: &Raster, cfg: &SecondOrderConfig, seed: u64) -> Result<SecondOrderReport> {
    if cfg.p < 1 {
        return Err(invalid("delta_h needs p >= 1 shuffled samples"));
    }
    let q = quantize_with(ratio, cfg.percentiles);
    let h_o = mean_homogeneity(&q, cfg.win, &cfg.offsets)?;
    let h_g_samples = (0..cfg.p as u64)
        .into_par_iter()
        .map(|i| mean_homogeneity(&q.shuffled(seed, i), cfg.win, &cfg.offsets))
        .collect::<Result<Vec<f64>>>()?;
    let h_g_bar = h_g_samples.iter().sum::<f64>() / cfg.p as f64;
    let delta_h = 100.0 * (h_o - h_g_bar).abs() / h_o;
    Ok(SecondOrderReport { h_o, h_g_samples, h_g_bar, delta_h, p: cfg.p, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::filter_boxcar;
    use crate::simulate::{gamma_speckle, phantom_strips, speckle, SpeckleParams};
    use proptest::prelude::*;

    fn q(w: usize, h: usize, v: &[u8]) -> QuantizedRaster {
        QuantizedRaster::new(w, h, v.to_vec()).unwrap()
    }

    #[test]
    fn quantizer_rules() {
        assert!(quantize8(&Raster::filled(5, 5, 3.0).unwrap()).levels().iter().all(|&l| l == 0));
        let r = Raster::new(101, 1, (0..=100).map(|i| i as f64).collect()).unwrap();
        let qq = quantize8(&r);
        // 1st percentile is 1.0, 99th is 99.0
        assert_eq!(qq.get(1, 0), 0);
        assert_eq!(qq.get(99, 0), 7);
        assert_eq!(qq.get(0, 0), 0);
        assert_eq!(qq.get(100, 0), 7);
    }

    #[test]
    fn quantizer_uniform_occupancy() {
        let y = gamma_speckle(1000, 1000, SpeckleParams::new(1.0, 2).unwrap()).unwrap();
        // exp(-Y) is uniform on (0, 1)
        let u = y.map(|v| (-v).exp());
        let qq = quantize8(&u);
        let mut hist = [0usize; LEVELS];
        for &l in qq.levels() {
            hist[l as usize] += 1;
        }
        for c in hist {
            let frac = c as f64 / 1e6;
            assert!((frac - 0.125).abs() <= 0.01, "{hist:?}");
        }
    }

    #[test]
    fn glcm_hand_enumeration() {
        let img = q(2, 2, &[0, 0, 1, 1]);
        let roi = Roi::new(0, 0, 2, 2);
        let g = glcm(&img, roi, (0, 1)).unwrap();
        assert_eq!(g.k, 4);
        assert_eq!((g.counts[0][0], g.counts[1][1], g.counts[0][1]), (2, 2, 0));
        let g = glcm(&img, roi, (1, 0)).unwrap();
        assert_eq!(g.k, 4);
        assert_eq!((g.counts[0][1], g.counts[1][0], g.counts[0][0]), (2, 2, 0));
        assert_eq!(homogeneity(&g).unwrap(), 0.5);

        assert!(glcm(&img, roi, (0, 0)).is_err());
        assert!(glcm(&img, roi, (0, 2)).is_err());
        let c = q(3, 3, &[5; 9]);
        let g = glcm(&c, Roi::new(0, 0, 3, 3), (1, 1)).unwrap();
        assert_eq!(g.counts[5][5], g.k);
        assert_eq!(homogeneity(&g).unwrap(), 1.0);
    }

    #[test]
    fn homogeneity_extremes() {
        let mut counts = [[0u64; LEVELS]; LEVELS];
        counts[0][7] = 3;
        counts[7][0] = 3;
        let g = Glcm { counts, k: 6, offset: (0, 1) };
        assert_eq!(homogeneity(&g).unwrap(), 0.02);
        let empty = Glcm { counts: [[0; LEVELS]; LEVELS], k: 0, offset: (0, 1) };
        assert!(homogeneity(&empty).is_err());
    }

    #[test]
    fn mean_homogeneity_special_rasters() {
        let c = q(22, 22, &[3; 22 * 22]);
        assert_eq!(mean_homogeneity(&c, 11, &DEFAULT_OFFSETS).unwrap(), 1.0);
        let board: Vec<u8> = (0..22 * 22).map(|i| if (i % 22 + i / 22) % 2 == 0 { 0 } else { 7 }).collect();
        let b = q(22, 22, &board);
        assert_eq!(mean_homogeneity(&b, 11, &DEFAULT_OFFSETS).unwrap(), 0.02);
        assert!(mean_homogeneity(&b, 23, &DEFAULT_OFFSETS).is_err());
        assert!(mean_homogeneity(&b, 11, &[]).is_err());
    }

    proptest! {
        #[test]
        fn homogeneity_in_unit_interval(levels in proptest::collection::vec(0u8..8, 36)) {
            let img = q(6, 6, &levels);
            for o in [(0, 1), (1, 0), (1, 1), (-1, 2)] {
                let g = glcm(&img, Roi::new(0, 0, 6, 6), o).unwrap();
                let total: u64 = g.counts.iter().flatten().sum();
                prop_assert_eq!(total, g.k);
                let h = homogeneity(&g).unwrap();
                prop_assert!(h > 0.0 && h <= 1.0 + 1e-15);
                let diagonal: u64 = (0..LEVELS).map(|i| g.counts[i][i]).sum();
                prop_assert_eq!(h >= 1.0 - 1e-15, diagonal == g.k);
            }
        }

        #[test]
        fn shuffle_preserves_multiset(seed in any::<u64>(), n in 1usize..200) {
            let r = Raster::new(n, 1, (0..n).map(|i| (i * 7 % 13) as f64).collect()).unwrap();
            let s = shuffle(&r, seed);
            let mut a = r.data().to_vec();
            let mut b = s.data().to_vec();
            a.sort_by(f64::total_cmp);
            b.sort_by(f64::total_cmp);
            prop_assert_eq!(a, b);
            prop_assert_eq!(shuffle(&r, seed), s);
        }
    }

    #[test]
    fn shuffle_trivial_case() {
        let one = Raster::filled(1, 1, 4.2).unwrap();
        assert_eq!(shuffle(&one, 3), one);
    }

    #[test]
    fn iid_ratio_has_small_delta_h() {
        let y = gamma_speckle(512, 512, SpeckleParams::new(1.0, 31).unwrap()).unwrap();
        let rep = delta_h(&y, &SecondOrderConfig::default(), 9).unwrap();
        assert!(rep.delta_h < 1.0, "{}", rep.delta_h);
        assert_eq!(rep.h_g_samples.len(), 100);
        let recomputed = 100.0 * (rep.h_o - rep.h_g_bar).abs() / rep.h_o;
        assert_eq!(rep.delta_h, recomputed);
        assert!(delta_h(&y, &SecondOrderConfig { p: 0, ..Default::default() }, 1).is_err());
    }

    #[test]
    fn structured_ratio_has_larger_delta_h() {
        let x = phantom_strips(256, 256, 1.0, 20.0, &[2, 4, 8, 16, 32], None).unwrap();
        let z = speckle(&x, SpeckleParams::new(3.0, 4).unwrap()).unwrap();
        let cfg = SecondOrderConfig::default();
        let ideal = delta_h(&z.zip_with(&x, |a, b| a / b).unwrap(), &cfg, 1).unwrap();
        let boxed = filter_boxcar(&z, 11).unwrap();
        let poor = delta_h(&z.zip_with(&boxed, |a, b| a / b).unwrap(), &cfg, 1).unwrap();
        assert!(poor.delta_h > ideal.delta_h, "{} vs {}", poor.delta_h, ideal.delta_h);
    }
}
