//! Parametric bubble-field renderer with pixel-exact ground truth.
//!
//! Each bubble is an ellipse drawn as a dark rim, a mid-gray interior and a
//! bright central spot, blurred per bubble and composited over a noisy,
//! slowly varying background by per-pixel minimum. Ground truth comes from
//! the unblurred ellipses.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::imgio::{self, GrayImage, GtRecord};
use crate::kv::{self, KeyValues};

/// Radius of the ground-truth centroid disk, pixels.
pub const CENTROID_RADIUS: f64 = 2.0;

/// Deterministic generator used for every random stream in the crate.
pub type SynthRng = ChaCha8Rng;

pub fn rng_for(seed: u64) -> SynthRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One synthetic bubble. Semi-axes are `r_eq*sqrt(aspect)` and
/// `r_eq/sqrt(aspect)`, so the ellipse area is exactly `pi*r_eq^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BubbleSpec {
    pub cx: f64,
    pub cy: f64,
    pub r_eq: f64,
    pub aspect: f64,
    pub theta: f64,
    pub blur_sigma: f64,
}

impl BubbleSpec {
    pub fn semi_axes(&self) -> (f64, f64) {
        let s = self.aspect.sqrt();
        (self.r_eq * s, self.r_eq / s)
    }

    pub fn area(&self) -> f64 {
        let (a, b) = self.semi_axes();
        PI * a * b
    }

    /// Half-extents of the axis-aligned bounding box.
    pub fn half_extents(&self) -> (f64, f64) {
        let (a, b) = self.semi_axes();
        let (s, c) = self.theta.sin_cos();
        (
            (a * a * c * c + b * b * s * s).sqrt(),
            (a * a * s * s + b * b * c * c).sqrt(),
        )
    }

    /// Coordinates of `(x, y)` in the ellipse frame, scaled so the boundary
    /// is the unit circle.
    fn normalized(&self, x: f64, y: f64) -> (f64, f64, f64, f64) {
        let (a, b) = self.semi_axes();
        let (s, c) = self.theta.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u, v, u / a, v / b)
    }

    /// True when the pixel center `(x, y)` lies inside or on the ellipse.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (_, _, nu, nv) = self.normalized(x, y);
        nu * nu + nv * nv <= 1.0
    }

    /// Inclusive pixel range covered by the bounding box, clipped to the image.
    fn pixel_box(&self, margin: f64, width: usize, height: usize) -> (usize, usize, usize, usize) {
        let (ex, ey) = self.half_extents();
        let clip = |v: f64, hi: usize| v.max(0.0).min(hi as f64 - 1.0) as usize;
        (
            clip((self.cx - ex - margin).floor(), width),
            clip((self.cy - ey - margin).floor(), height),
            clip((self.cx + ex + margin).ceil(), width),
            clip((self.cy + ey + margin).ceil(), height),
        )
    }

    /// Pixels of the image whose centers fall inside the ellipse.
    pub fn raster_area(&self, width: usize, height: usize) -> u64 {
        let (x0, y0, x1, y1) = self.pixel_box(1.0, width, height);
        let mut n = 0;
        for y in y0..=y1 {
            for x in x0..=x1 {
                if self.contains(x as f64, y as f64) {
                    n += 1;
                }
            }
        }
        n
    }

    pub fn to_record(&self, id: u32, width: usize, height: usize) -> GtRecord {
        GtRecord {
            id,
            cx: self.cx,
            cy: self.cy,
            r_eq: self.r_eq,
            aspect: self.aspect,
            theta: self.theta,
            area_px: self.raster_area(width, height),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub bubble_count_mean: f64,
    pub r_min: f64,
    pub r_max: f64,
    pub aspect_max: f64,
    pub background_level: f64,
    pub gradient_amplitude: f64,
    pub noise_sigma: f64,
    pub rim_width: f64,
    pub rim_level: f64,
    pub interior_level: f64,
    pub highlight_level: f64,
    pub blur_min: f64,
    pub blur_max: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            bubble_count_mean: 100.0,
            r_min: 4.0,
            r_max: 8.0,
            aspect_max: 2.0,
            background_level: 0.85,
            gradient_amplitude: 0.05,
            noise_sigma: 0.02,
            rim_width: 1.5,
            rim_level: 0.1,
            interior_level: 0.5,
            highlight_level: 0.9,
            blur_min: 0.5,
            blur_max: 1.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Training set geometry: 256x256, about 100 bubbles of radius 4-8 px.
    pub fn paper_train() -> Self {
        Self::default()
    }

    /// Test set geometry: 256x256, about 50 bubbles of radius 3-9 px.
    pub fn paper_test() -> Self {
        Self {
            bubble_count_mean: 50.0,
            r_min: 3.0,
            r_max: 9.0,
            ..Self::default()
        }
    }

    /// Small images for CPU-scale experiments.
    pub fn desk() -> Self {
        Self {
            width: 64,
            height: 64,
            bubble_count_mean: 20.0,
            r_min: 3.0,
            r_max: 6.0,
            ..Self::default()
        }
    }
}

impl KeyValues for SynthConfig {
    const PREFIX: &'static str = "synth";

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "width" => self.width = kv::parse(key, value)?,
            "height" => self.height = kv::parse(key, value)?,
            "bubble_count_mean" => self.bubble_count_mean = kv::parse(key, value)?,
            "r_min" => self.r_min = kv::parse(key, value)?,
            "r_max" => self.r_max = kv::parse(key, value)?,
            "aspect_max" => self.aspect_max = kv::parse(key, value)?,
            "background_level" => self.background_level = kv::parse(key, value)?,
            "gradient_amplitude" => self.gradient_amplitude = kv::parse(key, value)?,
            "noise_sigma" => self.noise_sigma = kv::parse(key, value)?,
            "rim_width" => self.rim_width = kv::parse(key, value)?,
            "rim_level" => self.rim_level = kv::parse(key, value)?,
            "interior_level" => self.interior_level = kv::parse(key, value)?,
            "highlight_level" => self.highlight_level = kv::parse(key, value)?,
            "blur_min" => self.blur_min = kv::parse(key, value)?,
            "blur_max" => self.blur_max = kv::parse(key, value)?,
            "seed" => self.seed = kv::parse(key, value)?,
            _ => return Err(kv::unknown(Self::PREFIX, key)),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("width", self.width.to_string()),
            ("height", self.height.to_string()),
            ("bubble_count_mean", self.bubble_count_mean.to_string()),
            ("r_min", self.r_min.to_string()),
            ("r_max", self.r_max.to_string()),
            ("aspect_max", self.aspect_max.to_string()),
            ("background_level", self.background_level.to_string()),
            ("gradient_amplitude", self.gradient_amplitude.to_string()),
            ("noise_sigma", self.noise_sigma.to_string()),
            ("rim_width", self.rim_width.to_string()),
            ("rim_level", self.rim_level.to_string()),
            ("interior_level", self.interior_level.to_string()),
            ("highlight_level", self.highlight_level.to_string()),
            ("blur_min", self.blur_min.to_string()),
            ("blur_max", self.blur_max.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    // Negated comparisons so NaN fails validation.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synth: {m}")));
        if self.width == 0 || self.height == 0 {
            return bad("image must be non-empty");
        }
        if !(self.r_min > 0.0 && self.r_min <= self.r_max) {
            return bad("need 0 < r_min <= r_max");
        }
        if !(self.aspect_max >= 1.0) {
            return bad("aspect_max must be >= 1");
        }
        if !(self.bubble_count_mean >= 0.0) {
            return bad("bubble_count_mean must be >= 0");
        }
        let unit = [
            ("background_level", self.background_level),
            ("gradient_amplitude", self.gradient_amplitude),
            ("noise_sigma", self.noise_sigma),
            ("rim_level", self.rim_level),
            ("interior_level", self.interior_level),
            ("highlight_level", self.highlight_level),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return bad(&format!("{name} must lie in [0,1]"));
            }
        }
        if !(self.rim_width >= 0.0) || !(0.0 <= self.blur_min && self.blur_min <= self.blur_max) {
            return bad("need rim_width >= 0 and 0 <= blur_min <= blur_max");
        }
        Ok(())
    }
}

/// Image plus its ground-truth channels and bubble list.
#[derive(Debug, Clone)]
pub struct DatasetSample {
    pub image: GrayImage,
    pub gt_binary: GrayImage,
    pub gt_centroid: GrayImage,
    pub bubbles: Vec<BubbleSpec>,
}

impl DatasetSample {
    pub fn gt_records(&self) -> Vec<GtRecord> {
        let (w, h) = (self.image.width(), self.image.height());
        self.bubbles
            .iter()
            .enumerate()
            .map(|(i, b)| b.to_record(i as u32 + 1, w, h))
            .collect()
    }
}

fn uniform(rng: &mut SynthRng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Draws a bubble list: Poisson count (at least one), uniform radius,
/// aspect, orientation and blur, centers uniform with the full ellipse
/// inside the image.
pub fn sample_bubbles(cfg: &SynthConfig, rng: &mut SynthRng) -> Result<Vec<BubbleSpec>> {
    cfg.validate()?;
    // Pixel centers sit at integer coordinates; the image spans
    // [-0.5, W-0.5] x [-0.5, H-0.5].
    let (span_x, span_y) = (cfg.width as f64, cfg.height as f64);
    if 2.0 * cfg.r_min > span_x.min(span_y) {
        return Err(Error::Config(format!(
            "a bubble of radius {} does not fit in {}x{}",
            cfg.r_min, cfg.width, cfg.height
        )));
    }
    let count = if cfg.bubble_count_mean > 0.0 {
        let d = Poisson::new(cfg.bubble_count_mean)
            .map_err(|e| Error::Config(format!("bubble_count_mean: {e}")))?;
        (d.sample(rng) as usize).max(1)
    } else {
        1
    };
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut attempt = 0;
        let spec = loop {
            let mut b = BubbleSpec {
                cx: 0.0,
                cy: 0.0,
                r_eq: uniform(rng, cfg.r_min, cfg.r_max),
                aspect: uniform(rng, 1.0, cfg.aspect_max),
                theta: uniform(rng, 0.0, PI),
                blur_sigma: uniform(rng, cfg.blur_min, cfg.blur_max),
            };
            let (ex, ey) = b.half_extents();
            if 2.0 * ex <= span_x && 2.0 * ey <= span_y {
                b.cx = uniform(rng, ex - 0.5, span_x - 0.5 - ex);
                b.cy = uniform(rng, ey - 0.5, span_y - 0.5 - ey);
                break b;
            }
            attempt += 1;
            if attempt > 1000 {
                return Err(Error::Config(
                    "bubble shapes repeatedly exceed the image; reduce r_max or aspect_max".into(),
                ));
            }
        };
        out.push(spec);
    }
    Ok(out)
}

/// Overlap-unaware void fraction `sum(pi*r_eq^2) / (W*H)`.
pub fn void_fraction(bubbles: &[BubbleSpec], width: usize, height: usize) -> f64 {
    bubbles.iter().map(|b| PI * b.r_eq * b.r_eq).sum::<f64>() / (width * height) as f64
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-r..=r)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable blur of a `w x h` patch; samples outside the patch read as 1.
fn blur_patch(patch: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    if k.len() == 1 {
        return patch.to_vec();
    }
    let r = (k.len() / 2) as i64;
    let at = |buf: &[f64], x: i64, y: i64| {
        if x < 0 || y < 0 || x >= w as i64 || y >= h as i64 {
            1.0
        } else {
            buf[y as usize * w + x as usize]
        }
    };
    let mut tmp = vec![0.0; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            tmp[y as usize * w + x as usize] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * at(patch, x + i as i64 - r, y))
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            out[y as usize * w + x as usize] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * at(&tmp, x, y + i as i64 - r))
                .sum();
        }
    }
    out
}

/// Unblurred intensity of bubble `b` at pixel `(x, y)`; `None` outside.
fn bubble_profile(b: &BubbleSpec, cfg: &SynthConfig, x: f64, y: f64) -> Option<f64> {
    let (u, v, nu, nv) = b.normalized(x, y);
    let rho = (nu * nu + nv * nv).sqrt();
    if rho > 1.0 {
        return None;
    }
    let radial = (u * u + v * v).sqrt();
    if radial <= 0.3 * b.r_eq {
        return Some(cfg.highlight_level);
    }
    // Distance to the boundary along the ray through the center.
    let to_edge = radial * (1.0 - rho) / rho;
    Some(if to_edge < cfg.rim_width {
        cfg.rim_level
    } else {
        cfg.interior_level
    })
}

/// Renders the shadow image and ground-truth channels for `bubbles`.
pub fn render_field(bubbles: &[BubbleSpec], cfg: &SynthConfig, rng: &mut SynthRng) -> DatasetSample {
    let (w, h) = (cfg.width, cfg.height);
    let phi = uniform(rng, 0.0, 2.0 * PI);
    let (ps, pc) = phi.sin_cos();
    // Projection onto the gradient direction, normalized to [-0.5, 0.5].
    let corners = [(0.0, 0.0), (w as f64 - 1.0, 0.0), (0.0, h as f64 - 1.0), (w as f64 - 1.0, h as f64 - 1.0)];
    let proj = |x: f64, y: f64| x * pc + y * ps;
    let (pmin, pmax) = corners.iter().fold((f64::MAX, f64::MIN), |(lo, hi), &(x, y)| {
        let p = proj(x, y);
        (lo.min(p), hi.max(p))
    });
    let span = (pmax - pmin).max(1e-12);

    let mut img = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let g = (proj(x as f64, y as f64) - pmin) / span - 0.5;
            let z: f64 = rng.sample(StandardNormal);
            img[y * w + x] = cfg.background_level + cfg.gradient_amplitude * g + cfg.noise_sigma * z;
        }
    }

    let mut binary = vec![0.0f32; w * h];
    let mut centroid = vec![0.0f32; w * h];
    for b in bubbles {
        let margin = (3.0 * b.blur_sigma).ceil() + 1.0;
        let (x0, y0, x1, y1) = b.pixel_box(margin, w, h);
        let (pw, ph) = (x1 - x0 + 1, y1 - y0 + 1);
        let mut patch = vec![1.0; pw * ph];
        for py in 0..ph {
            for px in 0..pw {
                let (x, y) = ((x0 + px) as f64, (y0 + py) as f64);
                if let Some(v) = bubble_profile(b, cfg, x, y) {
                    patch[py * pw + px] = v;
                    binary[(y0 + py) * w + x0 + px] = 1.0;
                }
            }
        }
        let blurred = blur_patch(&patch, pw, ph, b.blur_sigma);
        for py in 0..ph {
            for px in 0..pw {
                let i = (y0 + py) * w + x0 + px;
                img[i] = img[i].min(blurred[py * pw + px]);
            }
        }
        let (rx, ry) = (b.cx.round() as i64, b.cy.round() as i64);
        let r = CENTROID_RADIUS as i64;
        for y in (ry - r).max(0)..=(ry + r).min(h as i64 - 1) {
            for x in (rx - r).max(0)..=(rx + r).min(w as i64 - 1) {
                let (dx, dy) = ((x - rx) as f64, (y - ry) as f64);
                if dx * dx + dy * dy <= CENTROID_RADIUS * CENTROID_RADIUS {
                    centroid[y as usize * w + x as usize] = 1.0;
                }
            }
        }
    }

    let image = GrayImage::from_fn(w, h, |x, y| img[y * w + x] as f32);
    DatasetSample {
        image,
        gt_binary: GrayImage::new(w, h, binary).expect("binary values are 0/1"),
        gt_centroid: GrayImage::new(w, h, centroid).expect("centroid values are 0/1"),
        bubbles: bubbles.to_vec(),
    }
}

/// Sample `index` of the dataset described by `cfg`, seeded with
/// `cfg.seed + index`.
pub fn generate_sample(cfg: &SynthConfig, index: u64) -> Result<DatasetSample> {
    let mut rng = rng_for(cfg.seed.wrapping_add(index));
    let bubbles = sample_bubbles(cfg, &mut rng)?;
    Ok(render_field(&bubbles, cfg, &mut rng))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub index: usize,
    pub image: PathBuf,
    pub binary: PathBuf,
    pub centroid: PathBuf,
    pub csv: PathBuf,
}

/// Dataset index. Entry paths are stored relative to the manifest and
/// resolved against `root` on load.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub config: SynthConfig,
    pub entries: Vec<ManifestEntry>,
    pub root: PathBuf,
}

pub const MANIFEST_NAME: &str = "manifest.txt";
const MANIFEST_HEADER: &str = "index,image_path,binary_path,centroid_path,csv_path";

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let path = if path.is_dir() {
            path.join(MANIFEST_NAME)
        } else {
            path.to_path_buf()
        };
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut config = SynthConfig::default();
        let mut entries = Vec::new();
        let mut in_table = false;
        for line in text.lines() {
            if line.trim() == MANIFEST_HEADER {
                in_table = true;
                continue;
            }
            if in_table {
                if line.trim().is_empty() {
                    continue;
                }
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 5 {
                    return Err(Error::format("manifest", format!("bad row `{line}`")));
                }
                entries.push(ManifestEntry {
                    index: kv::parse("index", f[0])?,
                    image: root.join(f[1]),
                    binary: root.join(f[2]),
                    centroid: root.join(f[3]),
                    csv: root.join(f[4]),
                });
            } else if let Some(kvp) = kv::split_line(line) {
                let (k, v) = kvp?;
                let key = k
                    .strip_prefix("synth.")
                    .ok_or_else(|| kv::unknown("manifest", k))?;
                config.set(key, v)?;
            }
        }
        if !in_table {
            return Err(Error::format("manifest", "missing sample table header"));
        }
        Ok(Self {
            config,
            entries,
            root,
        })
    }

    /// Reads one sample back from disk.
    pub fn load_sample(&self, i: usize) -> Result<LoadedSample> {
        let e = &self.entries[i];
        Ok(LoadedSample {
            image: imgio::load_image(&e.image)?,
            gt_binary: imgio::load_image(&e.binary)?,
            gt_centroid: imgio::load_image(&e.centroid)?,
            gt: imgio::load_gt_table(&e.csv)?,
        })
    }
}

/// A dataset sample as stored on disk.
#[derive(Debug, Clone)]
pub struct LoadedSample {
    pub image: GrayImage,
    pub gt_binary: GrayImage,
    pub gt_centroid: GrayImage,
    pub gt: Vec<GtRecord>,
}

impl From<&DatasetSample> for LoadedSample {
    fn from(s: &DatasetSample) -> Self {
        Self {
            image: s.image.clone(),
            gt_binary: s.gt_binary.clone(),
            gt_centroid: s.gt_centroid.clone(),
            gt: s.gt_records(),
        }
    }
}

/// Writes `n_samples` samples plus `manifest.txt` into `out_dir`.
pub fn generate_dataset(cfg: &SynthConfig, n_samples: usize, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    cfg.validate()?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut table = String::new();
    let mut entries = Vec::with_capacity(n_samples);
    for k in 0..n_samples {
        let sample = generate_sample(cfg, k as u64)?;
        let names = [
            format!("{k:05}_image.pgm"),
            format!("{k:05}_binary.pgm"),
            format!("{k:05}_centroid.pgm"),
            format!("{k:05}_bubbles.csv"),
        ];
        imgio::save_image(&sample.image, out_dir.join(&names[0]))?;
        imgio::save_image(&sample.gt_binary, out_dir.join(&names[1]))?;
        imgio::save_image(&sample.gt_centroid, out_dir.join(&names[2]))?;
        imgio::save_gt_table(&sample.gt_records(), out_dir.join(&names[3]))?;
        table.push_str(&format!("{k},{},{},{},{}\n", names[0], names[1], names[2], names[3]));
        entries.push(ManifestEntry {
            index: k,
            image: out_dir.join(&names[0]),
            binary: out_dir.join(&names[1]),
            centroid: out_dir.join(&names[2]),
            csv: out_dir.join(&names[3]),
        });
    }
    let text = format!("{}\n{MANIFEST_HEADER}\n{table}", cfg.to_lines());
    let mpath = out_dir.join(MANIFEST_NAME);
    fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))?;
    Ok(Manifest {
        config: cfg.clone(),
        entries,
        root: out_dir.to_path_buf(),
    })
}
