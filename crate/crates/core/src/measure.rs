//! Per-region size and shape from a label map.
//!
//! Axis lengths come from the ellipse with the same second moments as the
//! union of unit pixel squares, so every pixel contributes an extra 1/12 of
//! variance along each axis.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imgio::LabelMap;

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub label: u32,
    pub area: u64,
    pub cx: f64,
    pub cy: f64,
    pub r_eq: f64,
    pub major: f64,
    pub minor: f64,
    pub aspect: f64,
    /// Inclusive pixel bounds `(x0, y0, x1, y1)`.
    pub bbox: (usize, usize, usize, usize),
}

pub const MEASURE_HEADER: &str = "label,area,cx,cy,r_eq,major,minor,aspect";

pub fn equivalent_radius(area: f64) -> f64 {
    (area / std::f64::consts::PI).sqrt()
}

#[derive(Clone)]
struct Acc {
    n: u64,
    sx: f64,
    sy: f64,
    bbox: (usize, usize, usize, usize),
}

/// Properties of every non-zero label, sorted by label.
pub fn region_props(lm: &LabelMap) -> Vec<Region> {
    let w = lm.width();
    let max = lm.max_label() as usize;
    let mut acc: Vec<Option<Acc>> = vec![None; max + 1];
    for (i, &l) in lm.labels().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let (x, y) = (i % w, i / w);
        let a = acc[l as usize].get_or_insert(Acc {
            n: 0,
            sx: 0.0,
            sy: 0.0,
            bbox: (x, y, x, y),
        });
        a.n += 1;
        a.sx += x as f64;
        a.sy += y as f64;
        a.bbox.0 = a.bbox.0.min(x);
        a.bbox.1 = a.bbox.1.min(y);
        a.bbox.2 = a.bbox.2.max(x);
        a.bbox.3 = a.bbox.3.max(y);
    }
    let centers: Vec<(f64, f64)> = acc
        .iter()
        .map(|a| a.as_ref().map_or((0.0, 0.0), |a| (a.sx / a.n as f64, a.sy / a.n as f64)))
        .collect();
    // Central moments in a second pass to avoid cancellation.
    let mut mom = vec![(0.0f64, 0.0f64, 0.0f64); max + 1];
    for (i, &l) in lm.labels().iter().enumerate() {
        if l == 0 {
            continue;
        }
        let (cx, cy) = centers[l as usize];
        let (dx, dy) = ((i % w) as f64 - cx, (i / w) as f64 - cy);
        let m = &mut mom[l as usize];
        m.0 += dx * dx;
        m.1 += dy * dy;
        m.2 += dx * dy;
    }
    acc.iter()
        .enumerate()
        .filter_map(|(l, a)| {
            let a = a.as_ref()?;
            let n = a.n as f64;
            let (cx, cy) = centers[l];
            let mu20 = mom[l].0 / n + 1.0 / 12.0;
            let mu02 = mom[l].1 / n + 1.0 / 12.0;
            let mu11 = mom[l].2 / n;
            let mean = 0.5 * (mu20 + mu02);
            let half = (0.25 * (mu20 - mu02).powi(2) + mu11 * mu11).sqrt();
            let (l1, l2) = (mean + half, (mean - half).max(0.0));
            let (major, minor) = (4.0 * l1.sqrt(), 4.0 * l2.sqrt());
            Some(Region {
                label: l as u32,
                area: a.n,
                cx,
                cy,
                r_eq: equivalent_radius(n),
                major,
                minor,
                aspect: major / minor,
                bbox: a.bbox,
            })
        })
        .collect()
}

pub fn format_measurements(regions: &[Region]) -> String {
    let mut s = String::from(MEASURE_HEADER);
    s.push('\n');
    for r in regions {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.label, r.area, r.cx, r.cy, r.r_eq, r.major, r.minor, r.aspect
        );
    }
    s
}

pub fn save_measurements(regions: &[Region], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_measurements(regions)).map_err(|e| Error::io(path, e))
}

/// Parses a measurement table. Bounding boxes are not stored and come back
/// as a degenerate box at the rounded centroid.
pub fn parse_measurements(text: &str) -> Result<Vec<Region>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(MEASURE_HEADER) {
        return Err(Error::format("header", format!("expected `{MEASURE_HEADER}`")));
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(Error::format("row", format!("line {}: expected 8 fields", n + 2)));
        }
        let num = |i: usize| -> Result<f64> {
            f[i].trim()
                .parse()
                .map_err(|_| Error::format("row", format!("line {}: bad number `{}`", n + 2, f[i])))
        };
        let label = f[0]
            .trim()
            .parse()
            .map_err(|_| Error::format("label", format!("line {}: `{}`", n + 2, f[0])))?;
        let area = f[1]
            .trim()
            .parse()
            .map_err(|_| Error::format("area", format!("line {}: `{}`", n + 2, f[1])))?;
        let (cx, cy) = (num(2)?, num(3)?);
        let (px, py) = (cx.round().max(0.0) as usize, cy.round().max(0.0) as usize);
        out.push(Region {
            label,
            area,
            cx,
            cy,
            r_eq: num(4)?,
            major: num(5)?,
            minor: num(6)?,
            aspect: num(7)?,
            bbox: (px, py, px, py),
        });
    }
    Ok(out)
}

pub fn load_measurements(path: impl AsRef<Path>) -> Result<Vec<Region>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_measurements(&text)
}
