//! Marker-controlled watershed segmentation of the network outputs.
//!
//! The binary channel is thresholded into a foreground mask, the centroid
//! channel into marker components, and the mask is flooded from the markers
//! over its Euclidean distance transform, deepest pixels first.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};
use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::imgio::{GrayImage, LabelMap, Plane};
use crate::kv::{self, KeyValues};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::Dimension(format!(
                "mask length {} does not match {width}x{height}",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    /// Pixels with value `>= threshold`.
    pub fn threshold(plane: &Plane, threshold: f32) -> Self {
        Self {
            width: plane.width,
            height: plane.height,
            bits: plane.data.iter().map(|&v| v >= threshold).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

/// Squared Euclidean distance from each foreground pixel to the nearest
/// background pixel. Pixels outside the image count as background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceField {
    width: usize,
    height: usize,
    sq: Vec<u32>,
}

impl DistanceField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn squared(&self) -> &[u32] {
        &self.sq
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        (self.sq[y * self.width + x] as f64).sqrt()
    }

    pub fn max(&self) -> f64 {
        (self.sq.iter().copied().max().unwrap_or(0) as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentConfig {
    pub binary_threshold: f32,
    pub marker_threshold: f32,
    pub min_marker_area: usize,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            binary_threshold: 0.5,
            marker_threshold: 0.5,
            min_marker_area: 2,
        }
    }
}

impl KeyValues for SegmentConfig {
    const PREFIX: &'static str = "segment";

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "binary_threshold" => self.binary_threshold = kv::parse(key, value)?,
            "marker_threshold" => self.marker_threshold = kv::parse(key, value)?,
            "min_marker_area" => self.min_marker_area = kv::parse(key, value)?,
            _ => return Err(kv::unknown(Self::PREFIX, key)),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("binary_threshold", self.binary_threshold.to_string()),
            ("marker_threshold", self.marker_threshold.to_string()),
            ("min_marker_area", self.min_marker_area.to_string()),
        ]
    }

    fn validate(&self) -> Result<()> {
        let open = |v: f32| v > 0.0 && v < 1.0;
        if !open(self.binary_threshold) || !open(self.marker_threshold) {
            return Err(Error::Config("segment thresholds must lie in (0,1)".into()));
        }
        if self.min_marker_area == 0 {
            return Err(Error::Config("segment.min_marker_area must be >= 1".into()));
        }
        Ok(())
    }
}

const NEIGHBORS8: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

fn neighbors8(width: usize, height: usize, idx: usize) -> impl Iterator<Item = usize> {
    let (x, y) = ((idx % width) as isize, (idx / width) as isize);
    NEIGHBORS8.iter().filter_map(move |&(dx, dy)| {
        let (nx, ny) = (x + dx, y + dy);
        (nx >= 0 && ny >= 0 && nx < width as isize && ny < height as isize)
            .then(|| ny as usize * width + nx as usize)
    })
}

/// Labels 8-connected components of `mask` in row-major discovery order.
/// Returns the label map and the area of each label (index 0 unused).
pub fn connected_components(mask: &BinaryMask) -> (LabelMap, Vec<usize>) {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; w * h];
    let mut areas = vec![0usize];
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.bits[start] || labels[start] != 0 {
            continue;
        }
        let label = areas.len() as u32;
        let mut area = 0;
        labels[start] = label;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            area += 1;
            for q in neighbors8(w, h, p) {
                if mask.bits[q] && labels[q] == 0 {
                    labels[q] = label;
                    queue.push_back(q);
                }
            }
        }
        areas.push(area);
    }
    (LabelMap::new(w, h, labels).expect("sized"), areas)
}

/// Renumbers non-zero labels to `1..=K` in order of first appearance in a
/// row-major scan, dropping labels for which `keep` is false.
fn compact(lm: &LabelMap, keep: impl Fn(u32) -> bool) -> LabelMap {
    let mut map = vec![0u32; lm.max_label() as usize + 1];
    let mut next = 0;
    let labels = lm
        .labels()
        .iter()
        .map(|&l| {
            if l == 0 || !keep(l) {
                return 0;
            }
            if map[l as usize] == 0 {
                next += 1;
                map[l as usize] = next;
            }
            map[l as usize]
        })
        .collect();
    LabelMap::new(lm.width(), lm.height(), labels).expect("sized")
}

/// Thresholds the centroid channel at `marker_threshold` and keeps
/// 8-connected components of at least `min_marker_area` pixels.
pub fn extract_markers(centroid: &Plane, cfg: &SegmentConfig) -> LabelMap {
    let mask = BinaryMask::threshold(centroid, cfg.marker_threshold);
    let (lm, areas) = connected_components(&mask);
    compact(&lm, |l| areas[l as usize] >= cfg.min_marker_area)
}

/// 1-D squared distance transform of a sampled function (lower envelope of
/// parabolas rooted at each sample).
fn dt1d(f: &[f64], d: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let s = loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k] && k > 0 {
                k -= 1;
            } else {
                break s;
            }
        };
        if s <= z[k] {
            // k == 0 and the new parabola dominates everywhere.
            v[0] = q;
            z[0] = f64::NEG_INFINITY;
            z[1] = f64::INFINITY;
            continue;
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        *out = dq * dq + f[p];
    }
}

/// Exact Euclidean distance transform by the separable lower-envelope
/// method, with a virtual background frame around the image.
pub fn distance_transform(mask: &BinaryMask) -> DistanceField {
    let (w, h) = (mask.width, mask.height);
    let (pw, ph) = (w + 2, h + 2);
    // Larger than any squared distance on the padded grid.
    let inf = ((pw * pw + ph * ph) as f64) * 4.0;
    let mut grid = vec![0.0f64; pw * ph];
    for y in 0..h {
        for x in 0..w {
            if mask.bits[y * w + x] {
                grid[(y + 1) * pw + x + 1] = inf;
            }
        }
    }
    let n = pw.max(ph);
    let (mut f, mut d) = (vec![0.0; n], vec![0.0; n]);
    let (mut v, mut z) = (vec![0usize; n], vec![0.0; n + 1]);
    for x in 0..pw {
        for y in 0..ph {
            f[y] = grid[y * pw + x];
        }
        dt1d(&f[..ph], &mut d[..ph], &mut v, &mut z);
        for y in 0..ph {
            grid[y * pw + x] = d[y];
        }
    }
    for y in 0..ph {
        f[..pw].copy_from_slice(&grid[y * pw..(y + 1) * pw]);
        dt1d(&f[..pw], &mut d[..pw], &mut v, &mut z);
        grid[y * pw..(y + 1) * pw].copy_from_slice(&d[..pw]);
    }
    let mut sq = vec![0u32; w * h];
    for y in 0..h {
        for x in 0..w {
            sq[y * w + x] = grid[(y + 1) * pw + x + 1].round() as u32;
        }
    }
    DistanceField {
        width: w,
        height: h,
        sq,
    }
}

/// Priority flood from the marker pixels over the foreground, 8-connected.
/// Pixels with larger distance are claimed first; ties are served in
/// insertion order. A claimed pixel takes the label of its labeled neighbor
/// along the steepest distance ascent, so fronts meet where the ascent
/// paths part rather than where one front happened to arrive first.
/// Foreground not reachable from any marker stays 0.
pub fn watershed(mask: &BinaryMask, markers: &LabelMap, dist: &DistanceField) -> Result<LabelMap> {
    let (w, h) = (mask.width, mask.height);
    if (markers.width(), markers.height()) != (w, h) || (dist.width, dist.height) != (w, h) {
        return Err(Error::Dimension(format!(
            "watershed inputs disagree: mask {w}x{h}, markers {}x{}, distance {}x{}",
            markers.width(),
            markers.height(),
            dist.width,
            dist.height
        )));
    }
    let mut labels = markers.labels().to_vec();
    let mut queued = vec![false; w * h];
    let mut heap = BinaryHeap::new();
    let mut counter = 0u64;
    for (i, &l) in labels.iter().enumerate() {
        if l == 0 {
            continue;
        }
        if !mask.bits[i] {
            return Err(Error::Contract(format!(
                "marker {l} at pixel ({}, {}) lies off the foreground",
                i % w,
                i / w
            )));
        }
        queued[i] = true;
        heap.push((dist.sq[i], Reverse(counter), i));
        counter += 1;
    }
    while let Some((_, _, p)) = heap.pop() {
        if labels[p] == 0 {
            labels[p] = ascent_label(&labels, dist, w, h, p);
        }
        for q in neighbors8(w, h, p) {
            if mask.bits[q] && !queued[q] {
                queued[q] = true;
                heap.push((dist.sq[q], Reverse(counter), q));
                counter += 1;
            }
        }
    }
    LabelMap::new(w, h, labels)
}

// Label found one unit step up the distance gradient (central differences):
// the labeled pixels around that point vote with bilinear weights. Following
// the gradient itself instead of the best of eight neighbors keeps label
// chains from drifting along diagonals. Falls back to the steepest labeled
// neighbor on flat spots or when nothing there is labeled yet.
fn ascent_label(labels: &[u32], dist: &DistanceField, w: usize, h: usize, p: usize) -> u32 {
    let inside = |x: isize, y: isize| x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h;
    let d = |x: isize, y: isize| {
        if inside(x, y) {
            dist.get(x as usize, y as usize)
        } else {
            0.0
        }
    };
    let (x, y) = ((p % w) as isize, (p / w) as isize);
    let gx = (d(x + 1, y) - d(x - 1, y)) / 2.0;
    let gy = (d(x, y + 1) - d(x, y - 1)) / 2.0;
    let norm = gx.hypot(gy);
    if norm > 1e-9 {
        let (tx, ty) = (x as f64 + gx / norm, y as f64 + gy / norm);
        let (x0, y0) = (tx.floor(), ty.floor());
        let (fx, fy) = (tx - x0, ty - y0);
        let corners = [
            (0, 0, (1.0 - fx) * (1.0 - fy)),
            (1, 0, fx * (1.0 - fy)),
            (0, 1, (1.0 - fx) * fy),
            (1, 1, fx * fy),
        ];
        let mut votes: Vec<(u32, f64)> = Vec::with_capacity(4);
        for (dx, dy, weight) in corners {
            let (qx, qy) = (x0 as isize + dx, y0 as isize + dy);
            if !inside(qx, qy) {
                continue;
            }
            let l = labels[qy as usize * w + qx as usize];
            if l == 0 || weight <= 0.0 {
                continue;
            }
            match votes.iter_mut().find(|v| v.0 == l) {
                Some(v) => v.1 += weight,
                None => votes.push((l, weight)),
            }
        }
        let mut best = (0u32, 0.0f64);
        for (l, weight) in votes {
            if weight > best.1 {
                best = (l, weight);
            }
        }
        if best.0 != 0 {
            return best.0;
        }
    }
    steepest_label(labels, dist, w, h, p)
}

// Label of the labeled neighbor with the largest distance gain per unit
// step; the first such neighbor in scan order wins ties.
fn steepest_label(labels: &[u32], dist: &DistanceField, w: usize, h: usize, p: usize) -> u32 {
    let here = (dist.sq[p] as f64).sqrt();
    let mut best = (f64::NEG_INFINITY, 0u32);
    for q in neighbors8(w, h, p) {
        if labels[q] == 0 {
            continue;
        }
        let step = if q % w != p % w && q / w != p / w { SQRT_2 } else { 1.0 };
        let slope = ((dist.sq[q] as f64).sqrt() - here) / step;
        if slope > best.0 {
            best = (slope, labels[q]);
        }
    }
    best.1
}

/// Full segmentation of the two network channels. Marker pixels outside the
/// foreground are discarded; foreground components without any marker are
/// kept as whole regions with fresh labels.
pub fn segment_image(binary: &Plane, centroid: &Plane, cfg: &SegmentConfig) -> Result<LabelMap> {
    if (binary.width, binary.height) != (centroid.width, centroid.height) {
        return Err(Error::Dimension(format!(
            "channel sizes differ: {}x{} vs {}x{}",
            binary.width, binary.height, centroid.width, centroid.height
        )));
    }
    let mask = BinaryMask::threshold(binary, cfg.binary_threshold);
    let mut markers = extract_markers(centroid, cfg);
    for (l, &m) in markers.labels_mut().iter_mut().zip(&mask.bits) {
        if !m {
            *l = 0;
        }
    }
    let markers = compact(&markers, |_| true);
    let dist = distance_transform(&mask);
    flood_with_leftovers(&mask, &markers, &dist)
}

/// Watershed followed by fresh labels for markerless components.
pub(crate) fn flood_with_leftovers(
    mask: &BinaryMask,
    markers: &LabelMap,
    dist: &DistanceField,
) -> Result<LabelMap> {
    let mut out = watershed(mask, markers, dist)?;
    let next = out.max_label();
    let rest = BinaryMask {
        width: mask.width,
        height: mask.height,
        bits: mask
            .bits
            .iter()
            .zip(out.labels())
            .map(|(&m, &l)| m && l == 0)
            .collect(),
    };
    let (extra, _) = connected_components(&rest);
    for (l, &e) in out.labels_mut().iter_mut().zip(extra.labels()) {
        if e != 0 {
            *l = next + e;
        }
    }
    Ok(out)
}

/// Grayscale copy of `image` with region outlines drawn at full intensity.
pub fn edge_overlay(image: &GrayImage, labels: &LabelMap) -> Result<GrayImage> {
    let (w, h) = (image.width(), image.height());
    if (labels.width(), labels.height()) != (w, h) {
        return Err(Error::Dimension("overlay image and label map differ in size".into()));
    }
    Ok(GrayImage::from_fn(w, h, |x, y| {
        let l = labels.get(x, y);
        let edge = l != 0
            && [(0isize, -1isize), (-1, 0), (1, 0), (0, 1)].iter().any(|&(dx, dy)| {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                nx < 0
                    || ny < 0
                    || nx >= w as isize
                    || ny >= h as isize
                    || labels.get(nx as usize, ny as usize) != l
            });
        if edge {
            1.0
        } else {
            image.get(x, y)
        }
    }))
}
