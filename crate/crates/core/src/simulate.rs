//! Phantoms and noise injection.
//!
//! Observations follow the multiplicative model `Z = X * Y`, where `Y` is
//! i.i.d. Gamma speckle with unit mean and shape equal to the number of
//! looks. The additive Gaussian model `Z = X + N(0, sigma²)` is available
//! for residual-image experiments.
//!
//! Every random raster draws each row from its own stream (see
//! [`crate::rng`]), so generation is parallel and still deterministic.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::raster::{Raster, Roi};
use crate::rng::{stream, Stage};

/// Largest integer number of looks sampled as a sum of exponentials.
const MAX_EXP_SUM_LOOKS: f64 = 64.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeckleParams {
    pub looks: f64,
    pub seed: u64,
}

impl SpeckleParams {
    pub fn new(looks: f64, seed: u64) -> Result<Self> {
        let p = Self { looks, seed };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.looks > 0.0) || !self.looks.is_finite() {
            return Err(invalid(format!("number of looks must be positive, got {}", self.looks)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhantomKind {
    #[serde(alias = "blocks")]
    BlocksPoints,
    Strips,
    Step,
    TexturedStep,
    Sine,
}

/// Kind-specific phantom parameters; absent fields take the defaults
/// listed on each generator.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomParams {
    /// Raster height; defaults to `side` (square raster). Use 1 for a profile.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub low: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub high: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub widths: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub left: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub right: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub side: usize,
    #[serde(default)]
    pub params: PhantomParams,
}

/// Noise model of a scene.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum NoiseModel {
    Multiplicative,
    Additive { sigma: f64 },
}

/// JSON scene descriptor: `{kind, side, params, looks, seed}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDescriptor {
    pub kind: PhantomKind,
    pub side: usize,
    #[serde(default)]
    pub params: PhantomParams,
    pub looks: f64,
    pub seed: u64,
    #[serde(default = "default_noise")]
    pub noise: NoiseModel,
}

fn default_noise() -> NoiseModel {
    NoiseModel::Multiplicative
}

impl SceneDescriptor {
    pub fn phantom(&self) -> PhantomSpec {
        PhantomSpec { kind: self.kind, side: self.side, params: self.params.clone() }
    }

    /// Returns `(truth, observed)`.
    pub fn render(&self) -> Result<(Raster, Raster)> {
        let truth = render_phantom(&self.phantom(), self.seed)?;
        let noisy = match self.noise {
            NoiseModel::Multiplicative => speckle(&truth, SpeckleParams::new(self.looks, self.seed)?)?,
            NoiseModel::Additive { sigma } => apply_additive(&truth, sigma, self.seed)?,
        };
        Ok((truth, noisy))
    }
}

pub fn render_phantom(spec: &PhantomSpec, seed: u64) -> Result<Raster> {
    let p = &spec.params;
    match spec.kind {
        PhantomKind::BlocksPoints => phantom_blocks_points(spec.side),
        PhantomKind::Strips => phantom_strips(
            spec.side,
            p.rows.unwrap_or(spec.side),
            p.low.unwrap_or(1.0),
            p.high.unwrap_or(20.0),
            p.widths.as_deref().unwrap_or(DEFAULT_STRIP_WIDTHS),
            p.gap,
        ),
        PhantomKind::Step => phantom_step(spec),
        PhantomKind::TexturedStep => phantom_textured_step(spec, seed),
        PhantomKind::Sine => phantom_sine(spec),
    }
}

pub const BLOCKS_BACKGROUND: f64 = 10.0;
pub const BLOCKS_SCATTERER: f64 = 240.0;
/// Square intensities: top left, top right, bottom left, bottom right.
pub const BLOCKS_SQUARES: [f64; 4] = [2.0, 40.0, 60.0, 80.0];
pub const BLOCKS_SCATTERER_COUNT: usize = 20;

/// Geometry of the blocks-and-points phantom.
///
/// Squares of side `side/5` are centred in the four quadrants. Twenty 4x4
/// scatterers are spaced evenly along the row band centred at `0.4*side`,
/// between the two rows of squares; twenty 4x2 (rows x cols) scatterers are
/// spaced evenly along the column band centred at `side/2`, between the two
/// columns of squares.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlocksLayout {
    pub side: usize,
    pub squares: [Roi; 4],
    pub point_scatterers: Vec<Roi>,
    pub bar_scatterers: Vec<Roi>,
}

impl BlocksLayout {
    pub fn new(side: usize) -> Result<Self> {
        if side < 100 {
            return Err(invalid(format!("blocks phantom needs side >= 100, got {side}")));
        }
        let sq = side / 5;
        let half = side / 2;
        let off = (half - sq) / 2;
        let squares = [
            Roi::new(off, off, sq, sq),
            Roi::new(half + off, off, sq, sq),
            Roi::new(off, half + off, sq, sq),
            Roi::new(half + off, half + off, sq, sq),
        ];
        let spacing = side as f64 / BLOCKS_SCATTERER_COUNT as f64;
        let centre = |k: usize| ((k as f64 + 0.5) * spacing).floor() as usize;
        let row_y = (2 * side) / 5 - 2;
        let point_scatterers = (0..BLOCKS_SCATTERER_COUNT).map(|k| Roi::new(centre(k) - 2, row_y, 4, 4)).collect();
        let bar_scatterers = (0..BLOCKS_SCATTERER_COUNT).map(|k| Roi::new(half - 1, centre(k) - 2, 2, 4)).collect();
        let layout = Self { side, squares, point_scatterers, bar_scatterers };

        let mut features: Vec<Roi> = layout.squares.to_vec();
        features.extend(layout.scatterers());
        for (i, a) in features.iter().enumerate() {
            if a.x0 + a.w > side || a.y0 + a.h > side {
                return Err(invalid(format!("side {side} too small: feature {a:?} leaves the raster")));
            }
            for b in &features[i + 1..] {
                if a.overlaps(b) {
                    return Err(invalid(format!("side {side} too small: features {a:?} and {b:?} overlap")));
                }
            }
        }
        Ok(layout)
    }

    pub fn scatterers(&self) -> impl Iterator<Item = Roi> + '_ {
        self.point_scatterers.iter().chain(&self.bar_scatterers).copied()
    }

    pub fn value_at(&self, x: usize, y: usize) -> f64 {
        if self.scatterers().any(|r| r.contains(x, y)) {
            return BLOCKS_SCATTERER;
        }
        for (roi, v) in self.squares.iter().zip(BLOCKS_SQUARES) {
            if roi.contains(x, y) {
                return v;
            }
        }
        BLOCKS_BACKGROUND
    }

    pub fn is_scatterer(&self, x: usize, y: usize) -> bool {
        self.scatterers().any(|r| r.contains(x, y))
    }

    /// Largest clean background rectangle: the top margin left of the
    /// scatterer column.
    pub fn background_roi(&self) -> Roi {
        Roi::new(0, 0, self.bar_scatterers[0].x0 - 1, self.squares[0].y0)
    }

    /// Labelled measurement regions in table order: background, then the
    /// squares top-left, top-right, bottom-left, bottom-right.
    pub fn labelled_rois(&self) -> Vec<(String, Roi)> {
        let mut v = vec![("background".to_owned(), self.background_roi())];
        for (name, roi) in ["top_left", "top_right", "bottom_left", "bottom_right"].iter().zip(self.squares) {
            v.push((name.to_string(), roi));
        }
        v
    }
}

pub fn phantom_blocks_points(side: usize) -> Result<Raster> {
    let layout = BlocksLayout::new(side)?;
    let mut data = vec![BLOCKS_BACKGROUND; side * side];
    for (roi, v) in layout.squares.iter().zip(BLOCKS_SQUARES) {
        paint(&mut data, side, *roi, v);
    }
    for roi in layout.scatterers() {
        paint(&mut data, side, roi, BLOCKS_SCATTERER);
    }
    Raster::new(side, side, data)
}

fn paint(data: &mut [f64], width: usize, roi: Roi, value: f64) {
    for y in roi.y0..roi.y0 + roi.h {
        data[y * width + roi.x0..y * width + roi.x0 + roi.w].fill(value);
    }
}

/// Strip widths used when none are given: narrow on the left, wide on the right.
pub const DEFAULT_STRIP_WIDTHS: &[usize] = &[1, 2, 3, 4, 6, 8, 12, 16];

/// Column extents `(x0, width)` of each strip.
pub fn strip_layout(side: usize, widths: &[usize], gap: Option<usize>) -> Result<Vec<(usize, usize)>> {
    if widths.iter().any(|&w| w == 0) {
        return Err(invalid("strip widths must be positive"));
    }
    let total: usize = widths.iter().sum();
    let slots = widths.len() + 1;
    let gap = match gap {
        Some(g) => g,
        None if widths.is_empty() => 0,
        None => side.saturating_sub(total) / slots,
    };
    if !widths.is_empty() && (gap == 0 || total + slots * gap > side) {
        return Err(invalid(format!(
            "strips of total width {total} with {slots} gaps of {gap} do not fit in side {side}"
        )));
    }
    let mut x = gap;
    Ok(widths
        .iter()
        .map(|&w| {
            let s = (x, w);
            x += w + gap;
            s
        })
        .collect())
}

/// Vertical strips of `high` on a `low` background, separated by equal gaps.
pub fn phantom_strips(side: usize, rows: usize, low: f64, high: f64, widths: &[usize], gap: Option<usize>) -> Result<Raster> {
    check_dims(side, rows)?;
    check_level(low)?;
    check_level(high)?;
    let strips = strip_layout(side, widths, gap)?;
    let mut profile = vec![low; side];
    for (x0, w) in strips {
        profile[x0..x0 + w].fill(high);
    }
    Raster::from_fn(side, rows, |x, _| profile[x])
}

fn check_dims(side: usize, rows: usize) -> Result<()> {
    if side == 0 || rows == 0 {
        return Err(invalid(format!("phantom dimensions must be positive, got {side}x{rows}")));
    }
    Ok(())
}

fn check_level(v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(invalid(format!("intensity levels must be positive, got {v}")));
    }
    Ok(())
}

fn step_levels(spec: &PhantomSpec) -> Result<(f64, f64, usize)> {
    let rows = spec.params.rows.unwrap_or(spec.side);
    check_dims(spec.side, rows)?;
    let left = spec.params.left.unwrap_or(11.0);
    let right = spec.params.right.unwrap_or(1.0);
    check_level(left)?;
    check_level(right)?;
    Ok((left, right, rows))
}

/// Two-level step: `left` (default 11) on the left half, `right` (default 1)
/// on the right half.
pub fn phantom_step(spec: &PhantomSpec) -> Result<Raster> {
    let (left, right, rows) = step_levels(spec)?;
    let half = spec.side / 2;
    Raster::from_fn(spec.side, rows, |x, _| if x < half { left } else { right })
}

/// Step whose levels are modulated by unit-mean exponential texture.
pub fn phantom_textured_step(spec: &PhantomSpec, seed: u64) -> Result<Raster> {
    let step = phantom_step(spec)?;
    let texture = gamma_field(spec.side, step.height(), 1.0, seed, Stage::Texture);
    apply_multiplicative(&step, &texture)
}

/// Slowly varying backscatter `mean + amplitude * sin(2*pi*x/period)`.
/// Defaults: mean 10, amplitude 5, period side/2.
pub fn phantom_sine(spec: &PhantomSpec) -> Result<Raster> {
    let rows = spec.params.rows.unwrap_or(spec.side);
    check_dims(spec.side, rows)?;
    let mean = spec.params.mean.unwrap_or(10.0);
    let amplitude = spec.params.amplitude.unwrap_or(5.0);
    let period = spec.params.period.unwrap_or(spec.side as f64 / 2.0);
    check_level(mean)?;
    if !(amplitude >= 0.0) || amplitude >= mean {
        return Err(invalid(format!(
            "sine amplitude {amplitude} must be in [0, mean) with mean {mean} to keep backscatter positive"
        )));
    }
    if !(period > 0.0) {
        return Err(invalid(format!("sine period must be positive, got {period}")));
    }
    let k = std::f64::consts::TAU / period;
    Raster::from_fn(spec.side, rows, |x, _| mean + amplitude * (k * x as f64).sin())
}

fn exp_deviate<R: Rng>(rng: &mut R) -> f64 {
    // 1 - U lies in (0, 1], so the log is finite.
    -(1.0 - rng.random::<f64>()).ln()
}

fn gamma_field(width: usize, height: usize, looks: f64, seed: u64, stage: Stage) -> Raster {
    let integral = looks.fract() == 0.0 && looks <= MAX_EXP_SUM_LOOKS;
    let mut data = vec![0.0; width * height];
    data.par_chunks_mut(width).enumerate().for_each(|(y, row)| {
        let mut rng = stream(seed, stage, y as u64);
        if integral {
            let n = looks as usize;
            for v in row.iter_mut() {
                let s: f64 = (0..n).map(|_| exp_deviate(&mut rng)).sum();
                *v = s / looks;
            }
        } else {
            let g = Gamma::new(looks, 1.0 / looks).expect("validated shape");
            for v in row.iter_mut() {
                *v = g.sample(&mut rng);
            }
        }
    });
    Raster::new(width, height, data).expect("dimensions match")
}

/// I.i.d. Gamma speckle, unit mean, shape `looks`.
pub fn gamma_speckle(width: usize, height: usize, params: SpeckleParams) -> Result<Raster> {
    params.validate()?;
    check_dims(width, height)?;
    Ok(gamma_field(width, height, params.looks, params.seed, Stage::Speckle))
}

pub fn apply_multiplicative(x: &Raster, y: &Raster) -> Result<Raster> {
    x.zip_with(y, |a, b| a * b)
}

/// `Z = X * Y` with fresh speckle.
pub fn speckle(x: &Raster, params: SpeckleParams) -> Result<Raster> {
    let y = gamma_speckle(x.width(), x.height(), params)?;
    apply_multiplicative(x, &y)
}

/// `Z = X + N(0, sigma²)`.
pub fn apply_additive(x: &Raster, sigma: f64, seed: u64) -> Result<Raster> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(invalid(format!("sigma must be non-negative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(x.clone());
    }
    let width = x.width();
    let mut out = x.clone();
    out.data_mut().par_chunks_mut(width).enumerate().for_each(|(y, row)| {
        let mut rng = stream(seed, Stage::Additive, y as u64);
        for v in row.iter_mut() {
            let n: f64 = StandardNormal.sample(&mut rng);
            *v += sigma * n;
        }
    });
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::roi_stats;

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn speckle_moments_single_look() {
        let y = gamma_speckle(1000, 1000, SpeckleParams::new(1.0, 11).unwrap()).unwrap();
        let (m, v) = mean_var(y.data());
        assert!((0.995..=1.005).contains(&m), "mean {m}");
        let enl = m * m / v;
        assert!((0.97..=1.03).contains(&enl), "enl {enl}");
    }

    #[test]
    fn speckle_moments_three_looks() {
        let y = gamma_speckle(1000, 1000, SpeckleParams::new(3.0, 12).unwrap()).unwrap();
        let (m, v) = mean_var(y.data());
        let enl = m * m / v;
        assert!((2.91..=3.09).contains(&enl), "enl {enl}");
    }

    #[test]
    fn fractional_looks_use_gamma_sampler() {
        let y = gamma_speckle(500, 400, SpeckleParams::new(2.5, 3).unwrap()).unwrap();
        let (m, v) = mean_var(y.data());
        assert!((m - 1.0).abs() < 0.01);
        assert!((m * m / v - 2.5).abs() < 0.1);
    }

    #[test]
    fn speckle_is_deterministic() {
        let p = SpeckleParams::new(1.0, 99).unwrap();
        assert_eq!(gamma_speckle(64, 32, p).unwrap(), gamma_speckle(64, 32, p).unwrap());
        let q = SpeckleParams::new(1.0, 100).unwrap();
        assert_ne!(gamma_speckle(64, 32, p).unwrap(), gamma_speckle(64, 32, q).unwrap());
        assert!(SpeckleParams::new(0.0, 1).is_err());
        assert!(SpeckleParams::new(-2.0, 1).is_err());
    }

    #[test]
    fn blocks_phantom_values() {
        let layout = BlocksLayout::new(500).unwrap();
        let x = phantom_blocks_points(500).unwrap();
        let tl = layout.squares[0];
        assert_eq!(x.get(tl.x0 + 10, tl.y0 + 10), 2.0);
        assert_eq!(x.get(layout.squares[1].x0 + 1, layout.squares[1].y0 + 1), 40.0);
        assert_eq!(x.get(layout.squares[2].x0 + 1, layout.squares[2].y0 + 1), 60.0);
        assert_eq!(x.get(layout.squares[3].x0 + 1, layout.squares[3].y0 + 1), 80.0);
        assert_eq!(x.get(2, 2), 10.0);
        for s in layout.scatterers() {
            for yy in s.y0..s.y0 + s.h {
                for xx in s.x0..s.x0 + s.w {
                    assert_eq!(x.get(xx, yy), 240.0);
                }
            }
        }
        let n240 = x.data().iter().filter(|&&v| v == 240.0).count();
        assert_eq!(n240, 20 * 16 + 20 * 8);
        assert_eq!(layout.point_scatterers.len(), 20);
        assert_eq!(layout.bar_scatterers.len(), 20);
        let bg = layout.background_roi();
        let s = roi_stats(&x, bg).unwrap();
        assert_eq!((s.mean, s.std), (10.0, 0.0));
        assert!(phantom_blocks_points(99).is_err());
    }

    #[test]
    fn blocks_layout_agrees_with_raster() {
        let layout = BlocksLayout::new(500).unwrap();
        let x = phantom_blocks_points(500).unwrap();
        for y in (0..500).step_by(3) {
            for xx in (0..500).step_by(7) {
                assert_eq!(layout.value_at(xx, y), x.get(xx, y));
            }
        }
    }

    #[test]
    fn strips_cases() {
        let s = phantom_strips(256, 4, 1.0, 20.0, DEFAULT_STRIP_WIDTHS, None).unwrap();
        assert!(s.data().iter().all(|&v| v == 1.0 || v == 20.0));
        let ones = phantom_strips(32, 2, 1.0, 20.0, &[], None).unwrap();
        assert!(ones.data().iter().all(|&v| v == 1.0));
        assert!(phantom_strips(10, 1, 1.0, 20.0, &[4, 4], Some(1)).is_err());
        assert!(phantom_strips(10, 1, 1.0, 20.0, &[4, 3], None).is_ok());
        // narrow strips sit on the left
        let layout = strip_layout(256, DEFAULT_STRIP_WIDTHS, None).unwrap();
        assert!(layout.windows(2).all(|p| p[0].0 < p[1].0 && p[0].1 <= p[1].1));
    }

    #[test]
    fn step_and_sine() {
        let spec = PhantomSpec { kind: PhantomKind::Step, side: 64, params: PhantomParams::default() };
        let s = phantom_step(&spec).unwrap();
        assert_eq!(s.get(0, 0), 11.0);
        assert_eq!(s.get(63, 63), 1.0);

        let sine = PhantomSpec {
            kind: PhantomKind::Sine,
            side: 64,
            params: PhantomParams { mean: Some(10.0), amplitude: Some(10.0), ..Default::default() },
        };
        assert!(phantom_sine(&sine).is_err());
        let ok = PhantomSpec { params: PhantomParams { amplitude: Some(9.0), rows: Some(1), ..sine.params.clone() }, ..sine };
        let r = phantom_sine(&ok).unwrap();
        assert_eq!(r.height(), 1);
        assert!(r.min() > 0.0);
    }

    #[test]
    fn textured_step_left_half_mean() {
        let spec = PhantomSpec { kind: PhantomKind::TexturedStep, side: 512, params: PhantomParams::default() };
        let t = phantom_textured_step(&spec, 5).unwrap();
        let s = roi_stats(&t, Roi::new(0, 0, 256, 512)).unwrap();
        assert!((s.mean / 11.0 - 1.0).abs() < 0.05, "mean {}", s.mean);
    }

    #[test]
    fn multiplicative_and_additive_cases() {
        let x = Raster::filled(8, 8, 10.0).unwrap();
        let y = Raster::filled(8, 8, 1.0).unwrap();
        assert_eq!(apply_multiplicative(&x, &y).unwrap(), x);
        assert!(apply_multiplicative(&x, &Raster::filled(8, 7, 1.0).unwrap()).is_err());

        assert_eq!(apply_additive(&x, 0.0, 3).unwrap(), x);
        assert!(apply_additive(&x, -1.0, 3).is_err());
        assert_eq!(apply_additive(&x, 2.0, 3).unwrap(), apply_additive(&x, 2.0, 3).unwrap());

        let zero = Raster::filled(1000, 1000, 0.0).unwrap();
        let n = apply_additive(&zero, 1.0, 8).unwrap();
        let (m, v) = mean_var(n.data());
        assert!(m.abs() <= 0.005, "mean {m}");
        assert!((0.995..=1.005).contains(&v.sqrt()), "std {}", v.sqrt());
    }

    #[test]
    fn blocks_background_statistics_after_speckle() {
        let x = phantom_blocks_points(500).unwrap();
        let z = speckle(&x, SpeckleParams::new(1.0, 21).unwrap()).unwrap();
        let bg = BlocksLayout::new(500).unwrap().background_roi();
        let s = roi_stats(&z, bg).unwrap();
        assert!((s.mean / 10.0 - 1.0).abs() < 0.03, "mean {}", s.mean);
        assert!((s.enl - 1.0).abs() < 0.1, "enl {}", s.enl);
    }

    #[test]
    fn scene_descriptor_json() {
        let json = r#"{"kind":"blocks_points","side":200,"looks":1,"seed":7}"#;
        let d: SceneDescriptor = serde_json::from_str(json).unwrap();
        assert_eq!(d.noise, NoiseModel::Multiplicative);
        let (t, z) = d.render().unwrap();
        assert_eq!(t.dims(), z.dims());
        let json = r#"{"kind":"strips","side":128,"params":{"widths":[2,4],"rows":8},"looks":3,"seed":1,"noise":{"model":"additive","sigma":0.5}}"#;
        let d: SceneDescriptor = serde_json::from_str(json).unwrap();
        let (t, _) = d.render().unwrap();
        assert_eq!(t.dims(), (128, 8));
    }
}
