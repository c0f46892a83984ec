//! The run configuration: one flat `prefix.key=value` document covering
//! every pipeline stage.

use std::path::{Path, PathBuf};

use shadowgraph::baseline::BaselineConfig;
use shadowgraph::evalx::EvalConfig;
use shadowgraph::kv::{split_line, KeyValues};
use shadowgraph::loss::LossConfig;
use shadowgraph::segment::SegmentConfig;
use shadowgraph::synth::SynthConfig;
use shadowgraph::train::TrainConfig;
use shadowgraph::unet::UNetConfig;
use shadowgraph::{Error, Result};

/// Default locations that subcommand flags may omit. Relative values are
/// resolved against the directory holding the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub unet: UNetConfig,
    pub train: TrainConfig,
    pub loss: LossConfig,
    pub segment: SegmentConfig,
    pub baseline: BaselineConfig,
    pub eval: EvalConfig,
    pub paths: Paths,
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let Some(kv) = split_line(line) else { continue };
            let (key, value) = kv.map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
            let (prefix, rest) = key
                .split_once('.')
                .ok_or_else(|| Error::Config(format!("line {}: key `{key}` has no section prefix", n + 1)))?;
            let res = match prefix {
                SynthConfig::PREFIX => cfg.synth.set(rest, value),
                UNetConfig::PREFIX => cfg.unet.set(rest, value),
                TrainConfig::PREFIX => cfg.train.set(rest, value),
                LossConfig::PREFIX => cfg.loss.set(rest, value),
                SegmentConfig::PREFIX => cfg.segment.set(rest, value),
                BaselineConfig::PREFIX => cfg.baseline.set(rest, value),
                EvalConfig::PREFIX => cfg.eval.set(rest, value),
                "paths" => {
                    let p = Some(base_dir.join(value));
                    match rest {
                        "data" => cfg.paths.data = p,
                        "model" => cfg.paths.model = p,
                        "out" => cfg.paths.out = p,
                        _ => return Err(Error::Config(format!("line {}: unknown key `{key}`", n + 1))),
                    }
                    Ok(())
                }
                _ => Err(Error::Config(format!("unknown key `{key}`"))),
            };
            res.map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", n + 1)),
                other => other,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::parse(&text, base)
    }

    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.unet.validate()?;
        self.train.validate()?;
        self.loss.validate()?;
        self.segment.validate()?;
        self.baseline.validate()?;
        self.eval.validate()
    }

    /// Every stage's keys at their current values.
    pub fn to_text(&self) -> String {
        [
            self.synth.to_lines(),
            self.unet.to_lines(),
            self.train.to_lines(),
            self.loss.to_lines(),
            self.segment.to_lines(),
            self.baseline.to_lines(),
            self.eval.to_lines(),
        ]
        .join("\n")
    }
}
