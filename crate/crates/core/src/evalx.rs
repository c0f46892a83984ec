//! Matching detections to ground truth and summarizing the result as rates
//! and size/shape histograms.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imgio::GtRecord;
use crate::kv::{self, KeyValues};
use crate::measure::Region;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Centroid gate is `max(centroid_gate_min, r_gt)`.
    pub centroid_gate_min: f64,
    /// Radius gate is `max(radius_gate_min, radius_gate_frac * r_gt)`.
    pub radius_gate_min: f64,
    pub radius_gate_frac: f64,
    pub size_bin_width: f64,
    pub aspect_bin_width: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            centroid_gate_min: 2.0,
            radius_gate_min: 2.0,
            radius_gate_frac: 0.5,
            size_bin_width: 1.0,
            aspect_bin_width: 0.1,
        }
    }
}

impl KeyValues for EvalConfig {
    const PREFIX: &'static str = "eval";

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "centroid_gate_min" => self.centroid_gate_min = kv::parse(key, value)?,
            "radius_gate_min" => self.radius_gate_min = kv::parse(key, value)?,
            "radius_gate_frac" => self.radius_gate_frac = kv::parse(key, value)?,
            "size_bin_width" => self.size_bin_width = kv::parse(key, value)?,
            "aspect_bin_width" => self.aspect_bin_width = kv::parse(key, value)?,
            _ => return Err(kv::unknown(Self::PREFIX, key)),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("centroid_gate_min", self.centroid_gate_min.to_string()),
            ("radius_gate_min", self.radius_gate_min.to_string()),
            ("radius_gate_frac", self.radius_gate_frac.to_string()),
            ("size_bin_width", self.size_bin_width.to_string()),
            ("aspect_bin_width", self.aspect_bin_width.to_string()),
        ]
    }

    fn validate(&self) -> Result<()> {
        if !(self.centroid_gate_min >= 0.0 && self.radius_gate_min >= 0.0 && self.radius_gate_frac >= 0.0) {
            return Err(Error::Config("eval gates must be non-negative".into()));
        }
        if !(self.size_bin_width > 0.0 && self.aspect_bin_width > 0.0) {
            return Err(Error::Config("eval bin widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// `(gt id, predicted label, centroid distance)`.
    pub pairs: Vec<(u32, u32, f64)>,
    pub unmatched_gt: Vec<u32>,
    pub unmatched_pred: Vec<u32>,
}

/// Greedy one-to-one matching in ascending centroid distance, ties broken by
/// `(gt id, label)`, among pairs passing both gates.
pub fn match_regions(pred: &[Region], gt: &[GtRecord], cfg: &EvalConfig) -> MatchResult {
    let mut cand = Vec::new();
    for g in gt {
        let c_gate = cfg.centroid_gate_min.max(g.r_eq);
        let r_gate = cfg.radius_gate_min.max(cfg.radius_gate_frac * g.r_eq);
        for p in pred {
            let d = (p.cx - g.cx).hypot(p.cy - g.cy);
            if d <= c_gate && (p.r_eq - g.r_eq).abs() <= r_gate {
                cand.push((d, g.id, p.label));
            }
        }
    }
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_gt = std::collections::HashSet::new();
    let mut used_pred = std::collections::HashSet::new();
    let mut pairs = Vec::new();
    for (d, g, p) in cand {
        if !used_gt.contains(&g) && !used_pred.contains(&p) {
            used_gt.insert(g);
            used_pred.insert(p);
            pairs.push((g, p, d));
        }
    }
    let mut unmatched_gt: Vec<u32> = gt.iter().map(|g| g.id).filter(|id| !used_gt.contains(id)).collect();
    let mut unmatched_pred: Vec<u32> = pred.iter().map(|p| p.label).filter(|l| !used_pred.contains(l)).collect();
    unmatched_gt.sort_unstable();
    unmatched_pred.sort_unstable();
    MatchResult {
        pairs,
        unmatched_gt,
        unmatched_pred,
    }
}

/// Histogram with bins `[k*width, (k+1)*width)` for `k` in
/// `first..first + counts.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub width: f64,
    pub first: i64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn build(values: impl IntoIterator<Item = f64>, width: f64) -> Self {
        let idx: Vec<i64> = values.into_iter().map(|v| (v / width).floor() as i64).collect();
        let (Some(&lo), Some(&hi)) = (idx.iter().min(), idx.iter().max()) else {
            return Self {
                width,
                first: 0,
                counts: Vec::new(),
            };
        };
        let mut counts = vec![0u64; (hi - lo + 1) as usize];
        for k in idx {
            counts[(k - lo) as usize] += 1;
        }
        Self {
            width,
            first: lo,
            counts,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_lo(&self, i: usize) -> f64 {
        (self.first + i as i64) as f64 * self.width
    }

    pub fn bin_hi(&self, i: usize) -> f64 {
        (self.first + i as i64 + 1) as f64 * self.width
    }

    /// Count in the bin with absolute index `k`.
    pub fn count_at(&self, k: i64) -> u64 {
        if k < self.first {
            return 0;
        }
        self.counts.get((k - self.first) as usize).copied().unwrap_or(0)
    }

    /// Density in the bin with absolute index `k`, so that the densities
    /// times the bin width sum to one.
    pub fn density_at(&self, k: i64) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        self.count_at(k) as f64 / (total as f64 * self.width)
    }

    pub fn densities(&self) -> Vec<f64> {
        (0..self.counts.len()).map(|i| self.density_at(self.first + i as i64)).collect()
    }

    /// Absolute bin range covering both histograms.
    fn span(&self, other: &Self) -> std::ops::Range<i64> {
        let ends = |h: &Self| (!h.counts.is_empty()).then(|| (h.first, h.first + h.counts.len() as i64));
        match (ends(self), ends(other)) {
            (Some(a), Some(b)) => a.0.min(b.0)..a.1.max(b.1),
            (Some(a), None) | (None, Some(a)) => a.0..a.1,
            (None, None) => 0..0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// `None` when there is no ground truth to extract.
    pub extraction_rate: Option<f64>,
    pub false_positive_rate: f64,
    pub n_gt: usize,
    pub n_pred: usize,
    pub n_matched: usize,
    pub size_hist: Histogram,
    pub aspect_hist: Histogram,
    pub gt_size_hist: Histogram,
    pub gt_aspect_hist: Histogram,
}

/// Pools matches and measurements over several images.
#[derive(Debug, Clone, Default)]
pub struct Evaluation {
    n_gt: usize,
    n_pred: usize,
    n_matched: usize,
    n_false: usize,
    pred_r: Vec<f64>,
    pred_aspect: Vec<f64>,
    gt_r: Vec<f64>,
    gt_aspect: Vec<f64>,
}

impl Evaluation {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one image and returns its match.
    pub fn add(&mut self, pred: &[Region], gt: &[GtRecord], cfg: &EvalConfig) -> MatchResult {
        let m = match_regions(pred, gt, cfg);
        self.add_matched(&m, pred, gt);
        m
    }

    pub fn add_matched(&mut self, m: &MatchResult, pred: &[Region], gt: &[GtRecord]) {
        self.n_gt += gt.len();
        self.n_pred += pred.len();
        self.n_matched += m.pairs.len();
        self.n_false += m.unmatched_pred.len();
        self.pred_r.extend(pred.iter().map(|r| r.r_eq));
        self.pred_aspect.extend(pred.iter().map(|r| r.aspect));
        self.gt_r.extend(gt.iter().map(|g| g.r_eq));
        self.gt_aspect.extend(gt.iter().map(|g| g.aspect));
    }

    pub fn report(&self, cfg: &EvalConfig) -> EvalReport {
        EvalReport {
            extraction_rate: (self.n_gt > 0).then(|| self.n_matched as f64 / self.n_gt as f64),
            false_positive_rate: if self.n_pred == 0 {
                0.0
            } else {
                self.n_false as f64 / self.n_pred as f64
            },
            n_gt: self.n_gt,
            n_pred: self.n_pred,
            n_matched: self.n_matched,
            size_hist: Histogram::build(self.pred_r.iter().copied(), cfg.size_bin_width),
            aspect_hist: Histogram::build(self.pred_aspect.iter().copied(), cfg.aspect_bin_width),
            gt_size_hist: Histogram::build(self.gt_r.iter().copied(), cfg.size_bin_width),
            gt_aspect_hist: Histogram::build(self.gt_aspect.iter().copied(), cfg.aspect_bin_width),
        }
    }
}

/// Report for a single image.
pub fn compute_metrics(m: &MatchResult, pred: &[Region], gt: &[GtRecord], cfg: &EvalConfig) -> EvalReport {
    let mut e = Evaluation::new();
    e.add_matched(m, pred, gt);
    e.report(cfg)
}

impl EvalReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,value\n");
        match self.extraction_rate {
            Some(r) => writeln!(s, "extraction_rate,{r}"),
            None => writeln!(s, "extraction_rate,no_ground_truth"),
        }
        .expect("string write");
        let _ = writeln!(s, "false_positive_rate,{}", self.false_positive_rate);
        let _ = writeln!(s, "n_gt,{}", self.n_gt);
        let _ = writeln!(s, "n_pred,{}", self.n_pred);
        let _ = writeln!(s, "n_matched,{}", self.n_matched);
        for (name, h) in self.histograms() {
            let dens = h.densities();
            for (i, (&c, d)) in h.counts.iter().zip(dens).enumerate() {
                let _ = writeln!(s, "hist,{name},{},{},{c},{d}", h.bin_lo(i), h.bin_hi(i));
            }
        }
        s
    }

    pub fn histograms(&self) -> [(&'static str, &Histogram); 4] {
        [
            ("size", &self.size_hist),
            ("aspect", &self.aspect_hist),
            ("gt_size", &self.gt_size_hist),
            ("gt_aspect", &self.gt_aspect_hist),
        ]
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Reads back the scalar metrics of a report CSV. Histogram rows are
/// returned as `(name, bin_lo, bin_hi, count, density)`.
#[allow(clippy::type_complexity)]
pub fn parse_report(text: &str) -> Result<(Vec<(String, String)>, Vec<(String, f64, f64, u64, f64)>)> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("metric,value") {
        return Err(Error::format("header", "expected `metric,value`"));
    }
    let (mut metrics, mut hists) = (Vec::new(), Vec::new());
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        let num = |i: usize| -> Result<f64> {
            f.get(i)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::format("hist", format!("bad row `{line}`")))
        };
        match f.as_slice() {
            ["hist", name, _, _, _, _] => {
                let count = f[4]
                    .parse()
                    .map_err(|_| Error::format("hist", format!("bad count in `{line}`")))?;
                hists.push((name.to_string(), num(2)?, num(3)?, count, num(5)?));
            }
            [k, v] => metrics.push((k.to_string(), v.to_string())),
            _ => return Err(Error::format("row", format!("unrecognized row `{line}`"))),
        }
    }
    Ok((metrics, hists))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinDiff {
    pub hist: &'static str,
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub density_a: f64,
    pub density_b: f64,
}

impl BinDiff {
    pub fn difference(&self) -> f64 {
        self.density_a - self.density_b
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// Method names with their reports, higher extraction rate first.
    pub summary: Vec<(String, EvalReport)>,
    /// Per-bin densities of the first and second argument respectively.
    pub bins: Vec<BinDiff>,
}

pub fn compare_methods(a: (&str, &EvalReport), b: (&str, &EvalReport)) -> Result<Comparison> {
    let same = |x: &Histogram, y: &Histogram| (x.width - y.width).abs() <= 1e-12 * x.width.abs().max(1.0);
    if !same(&a.1.size_hist, &b.1.size_hist) || !same(&a.1.aspect_hist, &b.1.aspect_hist) {
        return Err(Error::Contract(format!(
            "reports use different binning: size {} vs {}, aspect {} vs {}",
            a.1.size_hist.width, b.1.size_hist.width, a.1.aspect_hist.width, b.1.aspect_hist.width
        )));
    }
    let mut bins = Vec::new();
    for (name, ha, hb) in [
        ("size", &a.1.size_hist, &b.1.size_hist),
        ("aspect", &a.1.aspect_hist, &b.1.aspect_hist),
    ] {
        for k in ha.span(hb) {
            bins.push(BinDiff {
                hist: name,
                bin_lo: k as f64 * ha.width,
                bin_hi: (k + 1) as f64 * ha.width,
                density_a: ha.density_at(k),
                density_b: hb.density_at(k),
            });
        }
    }
    let rate = |r: &EvalReport| r.extraction_rate.unwrap_or(f64::NEG_INFINITY);
    let mut summary = vec![(a.0.to_string(), a.1.clone()), (b.0.to_string(), b.1.clone())];
    if rate(b.1) > rate(a.1) {
        summary.swap(0, 1);
    }
    Ok(Comparison { summary, bins })
}

impl Comparison {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,extraction_rate,false_positive_rate,n_gt,n_pred,n_matched\n");
        for (name, r) in &self.summary {
            let ext = r.extraction_rate.map_or("no_ground_truth".to_string(), |v| v.to_string());
            let _ = writeln!(s, "{name},{ext},{},{},{},{}", r.false_positive_rate, r.n_gt, r.n_pred, r.n_matched);
        }
        s.push_str("\nhist,bin_lo,bin_hi,density_a,density_b,difference\n");
        for d in &self.bins {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                d.hist,
                d.bin_lo,
                d.bin_hi,
                d.density_a,
                d.density_b,
                d.difference()
            );
        }
        s
    }
}
