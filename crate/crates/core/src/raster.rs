//! Raster container, region statistics and RAS1 file I/O.
//!
//! A [`Raster`] is a row-major grid of `f64`. The same type carries every
//! image role in the pipeline: observed intensities, backscatter, speckle,
//! filter output and ratio images. Intensity-role rasters must be
//! non-negative; the operations that need it check it themselves so that
//! residual images of the additive model (which are signed) fit as well.
//!
//! RAS1 layout: one line of JSON,
//! `{"magic":"RAS1","width":W,"height":H,"dtype":"f64le"}\n`, followed by
//! exactly `W*H` little-endian IEEE-754 doubles in row-major order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, ParseError, Result};

pub const RAS1_MAGIC: &str = "RAS1";
pub const RAS1_DTYPE: &str = "f64le";

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Raster {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid(format!("raster must be non-empty, got {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(invalid(format!(
                "raster {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds a raster by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Whole-raster region.
    pub fn full_roi(&self) -> Roi {
        Roi::new(0, 0, self.width, self.height)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination of two rasters of identical shape.
    pub fn zip_with(&self, other: &Raster, f: impl Fn(f64, f64) -> f64) -> Result<Raster> {
        self.ensure_same_dims(other)?;
        Ok(Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn scale(&self, factor: f64) -> Raster {
        self.map(|v| v * factor)
    }

    pub fn ensure_same_dims(&self, other: &Raster) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch { left: self.dims(), right: other.dims() });
        }
        Ok(())
    }

    pub fn ensure_non_negative(&self, what: &str) -> Result<()> {
        match self.data.iter().position(|v| !(*v >= 0.0)) {
            Some(i) => Err(Error::Domain(format!("{what} has negative or NaN value {} at index {i}", self.data[i]))),
            None => Ok(()),
        }
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Copies the pixels of `roi` into a new raster.
    pub fn crop(&self, roi: Roi) -> Result<Raster> {
        roi.check_inside(self)?;
        let mut data = Vec::with_capacity(roi.w * roi.h);
        for y in roi.y0..roi.y0 + roi.h {
            data.extend_from_slice(&self.row(y)[roi.x0..roi.x0 + roi.w]);
        }
        Raster::new(roi.w, roi.h, data)
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Axis-aligned rectangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Roi {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
}

impl Roi {
    pub const fn new(x0: usize, y0: usize, w: usize, h: usize) -> Self {
        Self { x0, y0, w, h }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x0 + self.w && y >= self.y0 && y < self.y0 + self.h
    }

    pub fn overlaps(&self, other: &Roi) -> bool {
        self.x0 < other.x0 + other.w
            && other.x0 < self.x0 + self.w
            && self.y0 < other.y0 + other.h
            && other.y0 < self.y0 + self.h
    }

    pub fn check_inside(&self, r: &Raster) -> Result<()> {
        if self.w == 0 || self.h == 0 || self.x0 + self.w > r.width() || self.y0 + self.h > r.height() {
            return Err(invalid(format!("roi {self:?} does not fit inside a {}x{} raster", r.width(), r.height())));
        }
        Ok(())
    }

    /// Iterates the values of `r` inside the roi, row-major.
    pub fn values<'a>(&self, r: &'a Raster) -> impl Iterator<Item = f64> + Clone + 'a {
        let Roi { x0, y0, w, h } = *self;
        (y0..y0 + h).flat_map(move |y| r.row(y)[x0..x0 + w].iter().copied())
    }
}

/// Sample mean, sample standard deviation (divisor N-1) and ENL.
///
/// `enl` is `mean² / std²`; it is `+inf` when the region has zero
/// variance, which is how flat areas are flagged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub std: f64,
    #[serde(with = "crate::serde_inf")]
    pub enl: f64,
}

impl SummaryStats {
    /// Two-pass statistics. A region whose values are all identical gets
    /// `std = 0` exactly, whatever rounding the mean accumulated.
    pub fn from_values<I>(values: I) -> Result<Self>
    where
        I: Iterator<Item = f64> + Clone,
    {
        let mut n = 0usize;
        let mut sum = 0.0;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for v in values.clone() {
            n += 1;
            sum += v;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if n < 2 {
            return Err(invalid(format!("statistics need at least 2 samples, got {n}")));
        }
        if lo == hi {
            return Ok(Self { mean: lo, std: 0.0, enl: f64::INFINITY });
        }
        let mean = sum / n as f64;
        let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
        let var = ss / (n - 1) as f64;
        Ok(Self { mean, std: var.sqrt(), enl: enl_of(mean, var) })
    }
}

pub(crate) fn enl_of(mean: f64, var: f64) -> f64 {
    if var > 0.0 {
        mean * mean / var
    } else {
        f64::INFINITY
    }
}

pub fn roi_stats(r: &Raster, roi: Roi) -> Result<SummaryStats> {
    roi.check_inside(r)?;
    SummaryStats::from_values(roi.values(r))
}

/// Amplitude to intensity.
pub fn square_amplitude(r: &Raster) -> Result<Raster> {
    r.ensure_non_negative("amplitude raster")?;
    Ok(r.map(|v| v * v))
}

/// Percentile with linear interpolation between closest ranks; `p` in [0, 100].
pub fn percentile(values: &[f64], p: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    percentile_sorted(&sorted, p)
}

pub(crate) fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = (p.clamp(0.0, 100.0) / 100.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * frac
    }
}

#[derive(Serialize, Deserialize)]
struct Ras1Header {
    magic: String,
    width: usize,
    height: usize,
    dtype: String,
}

pub fn encode_ras1(r: &Raster) -> Vec<u8> {
    let header = Ras1Header {
        magic: RAS1_MAGIC.to_owned(),
        width: r.width,
        height: r.height,
        dtype: RAS1_DTYPE.to_owned(),
    };
    let mut out = serde_json::to_vec(&header).expect("header serializes");
    out.push(b'\n');
    out.reserve(r.len() * 8);
    for v in &r.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_ras1(bytes: &[u8]) -> std::result::Result<Raster, ParseError> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| ParseError::MalformedHeader("missing newline after header".into()))?;
    let header: Ras1Header = serde_json::from_slice(&bytes[..nl]).map_err(|e| ParseError::MalformedHeader(e.to_string()))?;
    if header.magic != RAS1_MAGIC {
        return Err(ParseError::MalformedHeader(format!("bad magic {:?}", header.magic)));
    }
    if header.dtype != RAS1_DTYPE {
        return Err(ParseError::MalformedHeader(format!("unsupported dtype {:?}", header.dtype)));
    }
    if header.width == 0 || header.height == 0 {
        return Err(ParseError::MalformedHeader(format!("empty raster {}x{}", header.width, header.height)));
    }
    let payload = &bytes[nl + 1..];
    let expected = header
        .width
        .checked_mul(header.height)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| ParseError::MalformedHeader("dimensions overflow".into()))?;
    if payload.len() != expected {
        return Err(ParseError::LengthMismatch { expected, found: payload.len() });
    }
    let mut data = Vec::with_capacity(expected / 8);
    for (index, chunk) in payload.chunks_exact(8).enumerate() {
        let value = f64::from_le_bytes(chunk.try_into().unwrap());
        if !value.is_finite() {
            return Err(ParseError::NonFinite { index, value });
        }
        data.push(value);
    }
    Ok(Raster { width: header.width, height: header.height, data })
}

pub fn load_raster(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|source| Error::Io { path: path.into(), source })?;
    decode_ras1(&bytes).map_err(|source| Error::Parse { path: path.into(), source })
}

pub fn save_raster(r: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |source| Error::Io { path: path.into(), source };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(&encode_ras1(r)).map_err(io)?;
    Ok(())
}

/// Maps a raster to 8-bit gray: clip at the given percentiles, then scale
/// linearly onto 0..=255. Degenerate ranges give mid-gray (128).
pub fn to_gray8(r: &Raster, clip_percentiles: (f64, f64)) -> Vec<u8> {
    let mut sorted = r.data.clone();
    sorted.sort_by(f64::total_cmp);
    let lo = percentile_sorted(&sorted, clip_percentiles.0);
    let hi = percentile_sorted(&sorted, clip_percentiles.1);
    if !(hi > lo) {
        return vec![128; r.len()];
    }
    r.data
        .iter()
        .map(|&v| ((v.clamp(lo, hi) - lo) / (hi - lo) * 255.0).round() as u8)
        .collect()
}

pub fn write_png8(path: impl AsRef<Path>, width: usize, height: usize, pixels: Vec<u8>) -> Result<()> {
    let img = image::GrayImage::from_raw(width as u32, height as u32, pixels)
        .ok_or_else(|| Error::Image("pixel buffer does not match dimensions".into()))?;
    img.save_with_format(path.as_ref(), image::ImageFormat::Png)
        .map_err(|e| Error::Image(format!("{}: {e}", path.as_ref().display())))
}

pub fn export_png8(r: &Raster, path: impl AsRef<Path>, clip_percentiles: (f64, f64)) -> Result<()> {
    write_png8(path, r.width, r.height, to_gray8(r, clip_percentiles))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ras1_small_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ras1");
        let r = Raster::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        save_raster(&r, &path).unwrap();
        let bytes = fs::read(&path).unwrap();
        let header = b"{\"magic\":\"RAS1\",\"width\":2,\"height\":2,\"dtype\":\"f64le\"}\n";
        assert!(bytes.starts_with(header));
        assert_eq!(bytes.len(), header.len() + 32);
        assert_eq!(load_raster(&path).unwrap(), r);
    }

    #[test]
    fn ras1_length_mismatch() {
        let r = Raster::filled(4, 4, 1.0).unwrap();
        let mut bytes = encode_ras1(&r);
        bytes.truncate(bytes.len() - 8);
        match decode_ras1(&bytes) {
            Err(ParseError::LengthMismatch { expected: 128, found: 120 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ras1_header_and_payload_errors() {
        assert!(matches!(decode_ras1(b"not json\n"), Err(ParseError::MalformedHeader(_))));
        assert!(matches!(decode_ras1(b"{\"magic\":\"RAS1\""), Err(ParseError::MalformedHeader(_))));
        let bad_magic = b"{\"magic\":\"RAS2\",\"width\":1,\"height\":1,\"dtype\":\"f64le\"}\n\0\0\0\0\0\0\0\0";
        assert!(matches!(decode_ras1(bad_magic), Err(ParseError::MalformedHeader(_))));
        let r = Raster::new(2, 1, vec![1.0, 2.0]).unwrap();
        let mut bytes = encode_ras1(&r);
        let n = bytes.len();
        bytes[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(matches!(decode_ras1(&bytes), Err(ParseError::NonFinite { index: 1, .. })));
    }

    proptest! {
        #[test]
        fn ras1_round_trip_is_bit_exact(w in 1usize..9, h in 1usize..9, seed in any::<u64>()) {
            let mut s = seed;
            let data: Vec<f64> = (0..w * h).map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let v = f64::from_bits(s >> 2);
                if v.is_finite() { v } else { 0.5 }
            }).collect();
            let r = Raster::new(w, h, data).unwrap();
            let back = decode_ras1(&encode_ras1(&r)).unwrap();
            let a: Vec<u64> = r.data().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u64> = back.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn enl_is_scale_invariant(vals in proptest::collection::vec(0.1f64..100.0, 4..64), c in 0.01f64..100.0) {
            let r = Raster::new(vals.len(), 1, vals).unwrap();
            let a = roi_stats(&r, r.full_roi()).unwrap();
            let b = roi_stats(&r.scale(c), r.full_roi()).unwrap();
            prop_assert!((a.enl - b.enl).abs() <= 1e-9 * a.enl.max(1.0));
        }
    }

    #[test]
    fn square_amplitude_cases() {
        let r = Raster::new(3, 1, vec![0.0, 1.0, 3.0]).unwrap();
        assert_eq!(square_amplitude(&r).unwrap().data(), &[0.0, 1.0, 9.0]);
        let ones = Raster::filled(3, 3, 1.0).unwrap();
        assert_eq!(square_amplitude(&ones).unwrap(), ones);
        let neg = Raster::new(2, 1, vec![1.0, -1.0]).unwrap();
        assert!(matches!(square_amplitude(&neg), Err(Error::Domain(_))));
    }

    #[test]
    fn roi_stats_hand_cases() {
        let c = Raster::filled(4, 4, 5.0).unwrap();
        let s = roi_stats(&c, c.full_roi()).unwrap();
        assert_eq!((s.mean, s.std), (5.0, 0.0));
        assert_eq!(s.enl, f64::INFINITY);

        let two = Raster::new(2, 1, vec![1.0, 3.0]).unwrap();
        let s = roi_stats(&two, two.full_roi()).unwrap();
        assert_eq!(s.mean, 2.0);
        assert!((s.std - 2f64.sqrt()).abs() < 1e-15);
        assert!((s.enl - 2.0).abs() < 1e-12);

        assert!(roi_stats(&two, Roi::new(0, 0, 1, 1)).is_err());
        assert!(roi_stats(&two, Roi::new(1, 0, 2, 1)).is_err());
    }

    #[test]
    fn whole_roi_matches_flattened_sequence() {
        let r = Raster::from_fn(7, 5, |x, y| ((x * 31 + y * 17) % 11) as f64 + 0.25).unwrap();
        let a = roi_stats(&r, r.full_roi()).unwrap();
        let b = SummaryStats::from_values(r.data().iter().copied()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn png_mapping_rules() {
        assert!(to_gray8(&Raster::filled(3, 2, 7.0).unwrap(), (1.0, 99.0)).iter().all(|&p| p == 128));
        let two = Raster::new(4, 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(to_gray8(&two, (0.0, 100.0)), vec![0, 255, 255, 0]);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.png");
        let r = Raster::from_fn(13, 5, |x, y| (x + y) as f64).unwrap();
        export_png8(&r, &path, (1.0, 99.0)).unwrap();
        let img = image::open(&path).unwrap();
        assert_eq!((img.width(), img.height()), (13, 5));
    }

    #[test]
    fn percentile_interpolates() {
        let v = [4.0, 1.0, 3.0, 2.0];
        assert_eq!(percentile(&v, 0.0), 1.0);
        assert_eq!(percentile(&v, 100.0), 4.0);
        assert!((percentile(&v, 50.0) - 2.5).abs() < 1e-15);
    }
}
