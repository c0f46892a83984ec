//! Conventional comparison segmenter: global Otsu threshold, hole filling,
//! morphological opening, and a distance-transform watershed whose markers
//! are the upper plateaus of each component's distance field.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::imgio::{quantize, GrayImage, LabelMap};
use crate::kv::{self, KeyValues};
use crate::segment::{connected_components, distance_transform, flood_with_leftovers, BinaryMask};

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineConfig {
    pub opening_radius: usize,
    /// Marker depth as a fraction of the component's largest distance.
    pub h_fraction: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            opening_radius: 1,
            h_fraction: 0.3,
        }
    }
}

impl KeyValues for BaselineConfig {
    const PREFIX: &'static str = "baseline";

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "opening_radius" => self.opening_radius = kv::parse(key, value)?,
            "h_fraction" => self.h_fraction = kv::parse(key, value)?,
            _ => return Err(kv::unknown(Self::PREFIX, key)),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("opening_radius", self.opening_radius.to_string()),
            ("h_fraction", self.h_fraction.to_string()),
        ]
    }

    fn validate(&self) -> Result<()> {
        if !(self.h_fraction > 0.0 && self.h_fraction < 1.0) {
            return Err(Error::Config("baseline.h_fraction must lie in (0,1)".into()));
        }
        Ok(())
    }
}

/// Otsu threshold over the 256 quantized levels. The mask selects pixels
/// darker than the threshold. When several splits tie, the middle of the
/// tied range is used. A constant image returns its own value and an empty
/// mask.
pub fn otsu_threshold(img: &GrayImage) -> (f32, BinaryMask) {
    let levels: Vec<u8> = img.data().iter().map(|&v| quantize(v)).collect();
    let mut hist = [0u64; 256];
    for &q in &levels {
        hist[q as usize] += 1;
    }
    let total = levels.len() as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(i, &c)| i as f64 * c as f64).sum();
    let (mut w0, mut sum0) = (0.0f64, 0.0f64);
    let mut best = 0.0f64;
    let (mut first, mut last) = (None, 0usize);
    for (t, &c) in hist.iter().enumerate().take(255) {
        w0 += c as f64;
        sum0 += t as f64 * c as f64;
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let diff = sum0 / w0 - (sum_all - sum0) / w1;
        let between = w0 * w1 * diff * diff;
        // Relative slack so rounding noise does not break a genuine tie.
        if between > best * (1.0 + 1e-12) {
            best = between;
            first = Some(t);
            last = t;
        } else if first.is_some() && between >= best * (1.0 - 1e-12) {
            last = t;
        }
    }
    let (w, h) = (img.width(), img.height());
    match first {
        None => (img.data()[0], BinaryMask::empty(w, h)),
        Some(f) => {
            let t = (f + last) / 2;
            let bits = levels.iter().map(|&q| q as usize <= t).collect();
            (
                (t as f32 + 0.5) / 255.0,
                BinaryMask::new(w, h, bits).expect("sized"),
            )
        }
    }
}

/// Sets background regions that do not touch the image border to
/// foreground. Background connectivity is 4, the dual of the 8-connected
/// foreground.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let bits = mask.bits();
    let mut outside = vec![false; w * h];
    let mut queue = VecDeque::new();
    for i in 0..w * h {
        let (x, y) = (i % w, i / w);
        if (x == 0 || y == 0 || x + 1 == w || y + 1 == h) && !bits[i] {
            outside[i] = true;
            queue.push_back(i);
        }
    }
    while let Some(p) = queue.pop_front() {
        let (x, y) = (p % w, p / w);
        let mut visit = |q: usize| {
            if !bits[q] && !outside[q] {
                outside[q] = true;
                queue.push_back(q);
            }
        };
        if x > 0 {
            visit(p - 1);
        }
        if x + 1 < w {
            visit(p + 1);
        }
        if y > 0 {
            visit(p - w);
        }
        if y + 1 < h {
            visit(p + w);
        }
    }
    BinaryMask::new(w, h, outside.iter().map(|&o| !o).collect()).expect("sized")
}

fn disc_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Erosion (`keep_if_all`) or dilation with a disc footprint; footprint
/// pixels outside the image are ignored.
fn morph(mask: &BinaryMask, radius: usize, erode: bool) -> BinaryMask {
    let (w, h) = (mask.width(), mask.height());
    let offs = disc_offsets(radius);
    BinaryMask::from_fn(w, h, |x, y| {
        let mut inside = offs.iter().filter_map(|&(dx, dy)| {
            let (nx, ny) = (x as isize + dx, y as isize + dy);
            (nx >= 0 && ny >= 0 && nx < w as isize && ny < h as isize).then(|| mask.get(nx as usize, ny as usize))
        });
        if erode {
            inside.all(|b| b)
        } else {
            inside.any(|b| b)
        }
    })
}

pub fn opening(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    morph(&morph(mask, radius, true), radius, false)
}

/// The full conventional pipeline. Labels partition the opened mask.
pub fn baseline_segment(img: &GrayImage, cfg: &BaselineConfig) -> Result<LabelMap> {
    cfg.validate()?;
    let (_, mask) = otsu_threshold(img);
    let mask = opening(&fill_holes(&mask), cfg.opening_radius);
    let dist = distance_transform(&mask);
    let (comps, _) = connected_components(&mask);
    let mut peak = vec![0u32; comps.max_label() as usize + 1];
    for (&c, &d) in comps.labels().iter().zip(dist.squared()) {
        peak[c as usize] = peak[c as usize].max(d);
    }
    let keep = 1.0 - cfg.h_fraction;
    let plateau = BinaryMask::new(
        mask.width(),
        mask.height(),
        comps
            .labels()
            .iter()
            .zip(dist.squared())
            .map(|(&c, &d)| c != 0 && (d as f64).sqrt() >= keep * (peak[c as usize] as f64).sqrt())
            .collect(),
    )?;
    let (markers, _) = connected_components(&plateau);
    flood_with_leftovers(&mask, &markers, &dist)
}
