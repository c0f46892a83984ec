//! End-to-end helpers: image to regions for each method, and pooled
//! evaluation over a set of labeled samples.

use crate::baseline::{baseline_segment, BaselineConfig};
use crate::error::Result;
use crate::evalx::{EvalConfig, EvalReport, Evaluation};
use crate::imgio::{GrayImage, LabelMap, Plane};
use crate::measure::{region_props, Region};
use crate::segment::{segment_image, SegmentConfig};
use crate::synth::LoadedSample;
use crate::unet::{infer, ModelParams};

/// How a label map is obtained from a sample.
#[derive(Debug, Clone, Copy)]
pub enum Method<'a> {
    /// Trained network followed by marker-controlled watershed.
    Learned(&'a ModelParams<f32>, &'a SegmentConfig),
    /// Ground-truth channels fed straight into the watershed step.
    GroundTruthChannels(&'a SegmentConfig),
    Baseline(&'a BaselineConfig),
}

/// Inference, segmentation and measurement of one image.
pub fn learned_segment(
    params: &ModelParams<f32>,
    img: &GrayImage,
    cfg: &SegmentConfig,
) -> Result<(LabelMap, Vec<Region>)> {
    let (binary, centroid) = infer(params, img)?;
    let lm = segment_image(&binary, &centroid, cfg)?;
    let regions = region_props(&lm);
    Ok((lm, regions))
}

impl Method<'_> {
    pub fn label_map(&self, s: &LoadedSample) -> Result<LabelMap> {
        match *self {
            Method::Learned(p, cfg) => Ok(learned_segment(p, &s.image, cfg)?.0),
            Method::GroundTruthChannels(cfg) => {
                segment_image(&Plane::from(&s.gt_binary), &Plane::from(&s.gt_centroid), cfg)
            }
            Method::Baseline(cfg) => baseline_segment(&s.image, cfg),
        }
    }
}

/// Pooled report over `samples`, plus each sample's label map.
pub fn evaluate(
    method: Method<'_>,
    samples: &[LoadedSample],
    cfg: &EvalConfig,
) -> Result<(EvalReport, Vec<LabelMap>)> {
    let mut ev = Evaluation::new();
    let mut maps = Vec::with_capacity(samples.len());
    for s in samples {
        let lm = method.label_map(s)?;
        ev.add(&region_props(&lm), &s.gt, cfg);
        maps.push(lm);
    }
    Ok((ev.report(cfg), maps))
}
