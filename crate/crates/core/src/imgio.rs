//! Image, label-map and ground-truth table I/O.
//!
//! Intensities are stored as binary portable graymaps (P5, maxval 255),
//! label maps as 16-bit P5 (maxval 65535, big-endian samples). Ground-truth
//! bubble tables are plain CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Normalized single-channel image, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Dimension(format!(
                "image must be non-empty, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Range(format!(
                "pixel {i} has value {} outside [0,1]",
                data[i]
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        assert!(width > 0 && height > 0, "image must be non-empty");
        Self {
            width,
            height,
            data: vec![value.clamp(0.0, 1.0); width * height],
        }
    }

    /// Builds an image from `f(x, y)`, clamping each value into `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        assert!(width > 0 && height > 0, "image must be non-empty");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                data.push(if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// 8-bit level of every pixel under round-half-up quantization.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }

    pub fn from_bytes(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(
            width,
            height,
            bytes.iter().map(|&b| b as f32 / 255.0).collect(),
        )
    }
}

/// Round-half-up quantization of an intensity to an 8-bit level.
pub fn quantize(v: f32) -> u8 {
    ((v as f64).clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8
}

/// Unbounded single-channel float image, e.g. a network output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Dimension(format!(
                "plane data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Clamps into `[0, 1]` for storage as an 8-bit image.
    pub fn to_gray(&self) -> GrayImage {
        GrayImage::from_fn(self.width, self.height, |x, y| self.get(x, y))
    }
}

impl From<&GrayImage> for Plane {
    fn from(img: &GrayImage) -> Self {
        Self {
            width: img.width,
            height: img.height,
            data: img.data.clone(),
        }
    }
}

/// Integer-labeled segmentation. Label 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::Dimension(format!(
                "label length {} does not match {width}x{height}",
                labels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            labels: vec![0; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [u32] {
        &mut self.labels
    }

    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn max_label(&self) -> u32 {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// Number of distinct non-zero labels.
    pub fn region_count(&self) -> usize {
        let mut seen = vec![false; self.max_label() as usize + 1];
        let mut n = 0;
        for &l in &self.labels {
            if l != 0 && !seen[l as usize] {
                seen[l as usize] = true;
                n += 1;
            }
        }
        n
    }
}

struct Pgm {
    width: usize,
    height: usize,
    maxval: u32,
    payload: Vec<u8>,
}

fn parse_pgm(bytes: &[u8]) -> Result<Pgm> {
    let mut pos = 0usize;

    fn skip_ws(bytes: &[u8], pos: &mut usize) {
        loop {
            while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if *pos < bytes.len() && bytes[*pos] == b'#' {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn number(bytes: &[u8], pos: &mut usize, field: &'static str) -> Result<u32> {
        skip_ws(bytes, pos);
        let start = *pos;
        while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
            *pos += 1;
        }
        if start == *pos {
            return Err(Error::format(field, "expected a decimal integer"));
        }
        std::str::from_utf8(&bytes[start..*pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(field, "integer out of range"))
    }

    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::format("magic", "expected P5"));
    }
    pos += 2;
    let width = number(bytes, &mut pos, "width")? as usize;
    let height = number(bytes, &mut pos, "height")? as usize;
    let maxval = number(bytes, &mut pos, "maxval")?;
    if width == 0 {
        return Err(Error::format("width", "must be positive"));
    }
    if height == 0 {
        return Err(Error::format("height", "must be positive"));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::format("maxval", format!("invalid maxval {maxval}")));
    }
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::format("maxval", "missing whitespace before payload"));
    }
    pos += 1;
    let sample = if maxval < 256 { 1 } else { 2 };
    let expected = width * height * sample;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(Error::format(
            "payload",
            format!("truncated: expected {expected} bytes, found {}", payload.len()),
        ));
    }
    Ok(Pgm {
        width,
        height,
        maxval,
        payload: payload[..expected].to_vec(),
    })
}

fn write_pgm(path: &Path, width: usize, height: usize, maxval: u32, payload: &[u8]) -> Result<()> {
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    out.extend_from_slice(payload);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

/// Decodes an in-memory 8-bit P5 file.
pub fn decode_image(bytes: &[u8]) -> Result<GrayImage> {
    let pgm = parse_pgm(bytes)?;
    if pgm.maxval != 255 {
        return Err(Error::format(
            "maxval",
            format!("unsupported maxval {} (expected 255)", pgm.maxval),
        ));
    }
    GrayImage::from_bytes(pgm.width, pgm.height, &pgm.payload)
}

pub fn encode_image(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.to_bytes());
    out
}

pub fn save_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    write_pgm(path.as_ref(), img.width, img.height, 255, &img.to_bytes())
}

pub fn save_label_map(lm: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let mut payload = Vec::with_capacity(lm.labels.len() * 2);
    for (i, &l) in lm.labels.iter().enumerate() {
        let v = u16::try_from(l).map_err(|_| {
            Error::Range(format!("label {l} at pixel {i} exceeds 65535"))
        })?;
        payload.extend_from_slice(&v.to_be_bytes());
    }
    write_pgm(path.as_ref(), lm.width, lm.height, 65535, &payload)
}

pub fn load_label_map(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let pgm = parse_pgm(&bytes)?;
    let labels = if pgm.maxval < 256 {
        pgm.payload.iter().map(|&b| b as u32).collect()
    } else {
        pgm.payload
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as u32)
            .collect()
    };
    LabelMap::new(pgm.width, pgm.height, labels)
}

/// One row of a ground-truth bubble table.
#[derive(Debug, Clone, PartialEq)]
pub struct GtRecord {
    pub id: u32,
    pub cx: f64,
    pub cy: f64,
    pub r_eq: f64,
    pub aspect: f64,
    pub theta: f64,
    pub area_px: u64,
}

pub const GT_HEADER: &str = "id,cx,cy,r_eq,aspect,theta,area_px";

pub fn format_gt_table(records: &[GtRecord]) -> String {
    let mut s = String::from(GT_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.id, r.cx, r.cy, r.r_eq, r.aspect, r.theta, r.area_px
        );
    }
    s
}

pub fn save_gt_table(records: &[GtRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_gt_table(records)).map_err(|e| Error::io(path, e))
}

pub fn parse_gt_table(text: &str) -> Result<Vec<GtRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == GT_HEADER => {}
        _ => return Err(Error::format("header", format!("expected `{GT_HEADER}`"))),
    }
    let mut out = Vec::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 7 {
            return Err(Error::format("row", format!("expected 7 fields in `{line}`")));
        }
        let num = |i: usize, name: &'static str| -> Result<f64> {
            f[i].parse::<f64>()
                .map_err(|_| Error::format(name, format!("bad number `{}`", f[i])))
        };
        out.push(GtRecord {
            id: f[0]
                .parse()
                .map_err(|_| Error::format("id", format!("bad id `{}`", f[0])))?,
            cx: num(1, "cx")?,
            cy: num(2, "cy")?,
            r_eq: num(3, "r_eq")?,
            aspect: num(4, "aspect")?,
            theta: num(5, "theta")?,
            area_px: f[6]
                .parse()
                .map_err(|_| Error::format("area_px", format!("bad count `{}`", f[6])))?,
        });
    }
    Ok(out)
}

pub fn load_gt_table(path: impl AsRef<Path>) -> Result<Vec<GtRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_gt_table(&text)
}

fn cdf256(img: &GrayImage) -> [f64; 256] {
    let mut hist = [0u64; 256];
    for &v in img.data() {
        hist[quantize(v) as usize] += 1;
    }
    let n = img.data().len() as f64;
    let mut cdf = [0.0; 256];
    let mut acc = 0u64;
    for (c, h) in cdf.iter_mut().zip(hist) {
        acc += h;
        *c = acc as f64 / n;
    }
    cdf
}

fn inverse_cdf(cdf: &[f64; 256], level: f64) -> usize {
    // Exact comparison is safe: both sides are count/n ratios.
    cdf.iter().position(|&c| c >= level).unwrap_or(255)
}

/// Histogram matching on 256 bins: each pixel goes through the source CDF
/// and then the inverse reference CDF. A constant source maps every pixel to
/// the reference level at CDF 0.5.
pub fn match_intensity(img: &GrayImage, reference: &GrayImage) -> GrayImage {
    let src = cdf256(img);
    let dst = cdf256(reference);
    let bytes = img.to_bytes();
    let constant = bytes.iter().all(|&b| b == bytes[0]);
    let mut lut = [0u8; 256];
    if constant {
        lut = [inverse_cdf(&dst, 0.5) as u8; 256];
    } else {
        for (q, out) in lut.iter_mut().enumerate() {
            *out = inverse_cdf(&dst, src[q]) as u8;
        }
    }
    let data = bytes.iter().map(|&b| lut[b as usize] as f32 / 255.0).collect();
    GrayImage {
        width: img.width,
        height: img.height,
        data,
    }
}

/// 256-bin cumulative histogram, exposed for diagnostics and tests.
pub fn intensity_cdf(img: &GrayImage) -> [f64; 256] {
    cdf256(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn endpoint_bytes_map_to_unit_interval() {
        let img = decode_image(b"P5\n2 1\n255\n\x00\xff").unwrap();
        assert_eq!(img.data(), &[0.0, 1.0]);
    }

    #[test]
    fn header_comments_are_skipped() {
        let img = decode_image(b"P5 # made by hand\n1 1 255\n\x80").unwrap();
        assert_eq!(img.to_bytes(), vec![128]);
    }

    #[test]
    fn half_rounds_up() {
        assert_eq!(quantize(0.5), 128);
        assert_eq!(GrayImage::filled(1, 1, 0.5).to_bytes(), vec![128]);
    }

    #[test]
    fn zero_image_zero_payload() {
        let dir = tmp();
        let p = dir.path().join("z.pgm");
        save_image(&GrayImage::filled(4, 3, 0.0), &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert!(bytes.ends_with(&[0u8; 12]));
        assert_eq!(bytes, b"P5\n4 3\n255\n\0\0\0\0\0\0\0\0\0\0\0\0");
    }

    #[test]
    fn save_is_deterministic_and_roundtrips() {
        let dir = tmp();
        let img = GrayImage::from_fn(7, 5, |x, y| ((x * 31 + y * 17) % 256) as f32 / 255.0);
        let (a, b) = (dir.path().join("a.pgm"), dir.path().join("b.pgm"));
        save_image(&img, &a).unwrap();
        save_image(&img, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        let back = load_image(&a).unwrap();
        assert_eq!(back.to_bytes(), img.to_bytes());
        save_image(&back, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn sixteen_bit_image_rejected() {
        let err = decode_image(b"P5\n1 1\n65535\n\x00\x01").unwrap_err();
        assert!(err.to_string().contains("unsupported maxval"), "{err}");
    }

    #[test]
    fn malformed_headers_name_the_field() {
        let cases: [(&[u8], &str); 4] = [
            (b"P6\n1 1\n255\n\0", "magic"),
            (b"P5\nx 1\n255\n\0", "width"),
            (b"P5\n1\n", "height"),
            (b"P5\n2 2\n255\n\0\0", "payload"),
        ];
        for (bytes, field) in cases {
            match decode_image(bytes) {
                Err(Error::Format { field: f, .. }) => assert_eq!(f, field),
                other => panic!("expected format error for {field}, got {other:?}"),
            }
        }
    }

    #[test]
    fn gray_image_rejects_out_of_range() {
        assert!(GrayImage::new(1, 1, vec![1.5]).is_err());
        assert!(GrayImage::new(2, 1, vec![0.5]).is_err());
        assert!(GrayImage::new(0, 1, vec![]).is_err());
    }

    #[test]
    fn label_map_samples_are_big_endian() {
        let dir = tmp();
        let p = dir.path().join("l.pgm");
        let lm = LabelMap::new(3, 1, vec![0, 1, 2]).unwrap();
        save_label_map(&lm, &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert!(bytes.ends_with(&[0, 0, 0, 1, 0, 2]));
        assert_eq!(load_label_map(&p).unwrap(), lm);
    }

    #[test]
    fn label_overflow_is_range_error() {
        let dir = tmp();
        let lm = LabelMap::new(1, 1, vec![70000]).unwrap();
        assert!(matches!(
            save_label_map(&lm, dir.path().join("x.pgm")),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn gt_table_roundtrip() {
        let recs = vec![
            GtRecord { id: 1, cx: 10.25, cy: 3.5, r_eq: 4.0, aspect: 1.25, theta: 0.5, area_px: 50 },
            GtRecord { id: 2, cx: 0.1, cy: 0.2, r_eq: 7.125, aspect: 1.0, theta: 3.0, area_px: 160 },
        ];
        let text = format_gt_table(&recs);
        assert!(text.starts_with("id,cx,cy,r_eq,aspect,theta,area_px\n"));
        assert_eq!(parse_gt_table(&text).unwrap(), recs);
        assert!(parse_gt_table("id,x\n").is_err());
    }

    #[test]
    fn matching_against_itself_is_identity() {
        let img = GrayImage::from_fn(16, 16, |x, y| ((x * 7 + y * 3) % 40) as f32 / 100.0 + 0.3);
        let out = match_intensity(&img, &img);
        assert_eq!(out.to_bytes(), img.to_bytes());
    }

    #[test]
    fn constant_source_maps_to_reference_median_level() {
        let img = GrayImage::filled(8, 8, 0.3);
        // Reference: levels 10..=73, one pixel each.
        let reference = GrayImage::from_fn(8, 8, |x, y| (10 + y * 8 + x) as f32 / 255.0);
        let out = match_intensity(&img, &reference);
        // CDF reaches 0.5 at the 32nd pixel, level 41.
        assert!(out.to_bytes().iter().all(|&b| b == 41));
    }

    #[test]
    fn uniform_onto_half_range_stays_below_half() {
        // Source covers all 256 levels equally; the reference covers 0..=0.5.
        let img = GrayImage::from_fn(256, 4, |x, _| x as f32 / 255.0);
        let reference = GrayImage::from_fn(128, 4, |x, _| x as f32 / 254.0);
        let out = match_intensity(&img, &reference);
        let max = out.data().iter().cloned().fold(0.0f32, f32::max);
        assert!(max <= 0.5 + 1.0 / 256.0, "max {max}");
        let (co, cr) = (intensity_cdf(&out), intensity_cdf(&reference));
        for k in 0..256 {
            assert!((co[k] - cr[k]).abs() <= 1.0 / 256.0 + 1e-12, "bin {k}");
        }
    }
}
