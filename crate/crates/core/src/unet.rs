//! Two-channel residual U-net.
//!
//! Encoder level `l` runs a residual block at `base * 2^l` channels and
//! max-pools; the bottleneck runs at `base * 2^depth`. Each decoder level
//! upsamples, applies a 3x3 convolution that halves the channel count,
//! concatenates the matching encoder output and runs another residual block.
//! A 1x1 convolution with ReLU produces the two output channels:
//! channel 0 is the binary particle image, channel 1 the centroid image.
//!
//! A residual block is `swish(conv3(swish(conv3(x))) + shortcut(x))`, where
//! the shortcut is the identity or a 1x1 convolution when the channel count
//! changes. Every activation is Swish except the ReLU head.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::imgio::{GrayImage, Plane};
use crate::kv::{self, KeyValues};
use crate::synth::rng_for;
use crate::tensor::{Activation, Scalar, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UNetConfig {
    pub depth: usize,
    pub base_channels: usize,
}

pub const IN_CHANNELS: usize = 1;
pub const OUT_CHANNELS: usize = 2;

impl Default for UNetConfig {
    fn default() -> Self {
        Self::reference()
    }
}

impl UNetConfig {
    pub fn reference() -> Self {
        Self {
            depth: 3,
            base_channels: 16,
        }
    }

    pub fn desk() -> Self {
        Self {
            depth: 3,
            base_channels: 8,
        }
    }

    /// Spatial extents must be divisible by this.
    pub fn granularity(&self) -> usize {
        1 << self.depth
    }

    fn width_at(&self, level: usize) -> usize {
        self.base_channels << level
    }

    /// Every parameterized layer as `(name, cout, cin, kernel)`, in
    /// execution order.
    fn layers(&self) -> Vec<(String, usize, usize, usize)> {
        let mut out = Vec::new();
        let res_block = |out: &mut Vec<_>, name: &str, cin: usize, cout: usize| {
            out.push((format!("{name}.conv1"), cout, cin, 3));
            out.push((format!("{name}.conv2"), cout, cout, 3));
            if cin != cout {
                out.push((format!("{name}.skip"), cout, cin, 1));
            }
        };
        let mut cin = IN_CHANNELS;
        for l in 0..self.depth {
            res_block(&mut out, &format!("enc{l}"), cin, self.width_at(l));
            cin = self.width_at(l);
        }
        res_block(&mut out, "mid", cin, self.width_at(self.depth));
        for l in (0..self.depth).rev() {
            let c = self.width_at(l);
            out.push((format!("dec{l}.up"), c, self.width_at(l + 1), 3));
            res_block(&mut out, &format!("dec{l}"), 2 * c, c);
        }
        out.push(("head".into(), OUT_CHANNELS, self.base_channels, 1));
        out
    }

    /// Expected `(name, shape)` of every parameter tensor.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        self.layers()
            .into_iter()
            .flat_map(|(name, cout, cin, k)| {
                [
                    (format!("{name}.w"), vec![cout, cin, k, k]),
                    (format!("{name}.b"), vec![cout]),
                ]
            })
            .collect()
    }

    pub fn check_input(&self, height: usize, width: usize) -> Result<()> {
        let g = self.granularity();
        if height == 0 || width == 0 || !height.is_multiple_of(g) || !width.is_multiple_of(g) {
            return Err(Error::Dimension(format!(
                "input {width}x{height} not divisible by {g} (depth {})",
                self.depth
            )));
        }
        Ok(())
    }
}

impl KeyValues for UNetConfig {
    const PREFIX: &'static str = "unet";

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "depth" => self.depth = kv::parse(key, value)?,
            "base_channels" => self.base_channels = kv::parse(key, value)?,
            _ => return Err(kv::unknown(Self::PREFIX, key)),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("depth", self.depth.to_string()),
            ("base_channels", self.base_channels.to_string()),
        ]
    }

    fn validate(&self) -> Result<()> {
        if self.depth == 0 || self.base_channels == 0 || self.depth > 8 {
            return Err(Error::Config(
                "unet needs 1 <= depth <= 8 and base_channels >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Named parameter tensors in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: UNetConfig,
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(config: UNetConfig) -> Self {
        let entries = config
            .param_shapes()
            .into_iter()
            .map(|(n, s)| {
                let t = Tensor::zeros(&s);
                (n, t)
            })
            .collect();
        Self { config, entries }
    }

    pub fn from_entries(config: UNetConfig, entries: Vec<(String, Tensor<T>)>) -> Result<Self> {
        let expected = config.param_shapes();
        if expected.len() != entries.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} arrays for {config:?}, found {}",
                expected.len(),
                entries.len()
            )));
        }
        for ((en, es), (n, t)) in expected.iter().zip(&entries) {
            if en != n || es.as_slice() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "array `{n}` {:?} does not match expected `{en}` {es:?}",
                    t.shape()
                )));
            }
        }
        Ok(Self { config, entries })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn weight_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config,
            entries: self.entries.iter().map(|(n, t)| (n.clone(), t.cast())).collect(),
        }
    }
}

/// He-normal kernels (`std = sqrt(2 / fan_in)`) and zero biases.
pub fn init_params<T: Scalar>(cfg: UNetConfig, seed: u64) -> Result<ModelParams<T>> {
    cfg.validate()?;
    let mut rng = rng_for(seed);
    let entries = cfg
        .param_shapes()
        .into_iter()
        .map(|(name, shape)| {
            let t = if shape.len() == 4 {
                let fan_in = (shape[1] * shape[2] * shape[3]) as f64;
                let d = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("finite std");
                let n: usize = shape.iter().product();
                let data = (0..n).map(|_| T::of(d.sample(&mut rng))).collect();
                Tensor::new(&shape, data).expect("shape matches")
            } else {
                Tensor::zeros(&shape)
            };
            (name, t)
        })
        .collect();
    Ok(ModelParams {
        config: cfg,
        entries,
    })
}

/// Backward rule for the ReLU head. The forward value is ReLU either way.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeadGradient {
    /// The true ReLU derivative.
    Exact,
    /// Identity backward; keeps a head channel trainable after all of its
    /// pre-activations drop below zero.
    #[default]
    PassThrough,
}

impl FromStr for HeadGradient {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "exact" => Ok(Self::Exact),
            "pass_through" => Ok(Self::PassThrough),
            _ => Err("expected `exact` or `pass_through`".into()),
        }
    }
}

impl fmt::Display for HeadGradient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Exact => "exact",
            Self::PassThrough => "pass_through",
        })
    }
}

/// A recorded forward pass.
pub struct Forward<T> {
    pub tape: Tape<T>,
    pub input: Var,
    /// One leaf per parameter, in [`ModelParams::iter`] order.
    pub params: Vec<Var>,
    /// `[2, H, W]` head output.
    pub output: Var,
    /// `[H, W]` channel 0.
    pub binary: Var,
    /// `[H, W]` channel 1.
    pub centroid: Var,
}

struct Layers<'a> {
    vars: &'a [Var],
    next: usize,
}

impl Layers<'_> {
    fn take(&mut self) -> (Var, Var) {
        let w = self.vars[self.next];
        let b = self.vars[self.next + 1];
        self.next += 2;
        (w, b)
    }
}

fn res_block<T: Scalar>(
    tape: &mut Tape<T>,
    layers: &mut Layers<'_>,
    x: Var,
    has_skip: bool,
) -> Result<Var> {
    let (w1, b1) = layers.take();
    let (w2, b2) = layers.take();
    let h = tape.conv2d(x, w1, b1)?;
    let h = tape.activation(h, Activation::Swish);
    let h = tape.conv2d(h, w2, b2)?;
    let shortcut = if has_skip {
        let (ws, bs) = layers.take();
        tape.conv2d(x, ws, bs)?
    } else {
        x
    };
    let s = tape.add(h, shortcut)?;
    Ok(tape.activation(s, Activation::Swish))
}

/// Runs the network on a `[1, H, W]` input. With `record = false` the tape
/// keeps no backward buffers.
pub fn forward<T: Scalar>(params: &ModelParams<T>, input: Tensor<T>, record: bool) -> Result<Forward<T>> {
    forward_with(params, input, record, HeadGradient::Exact)
}

/// [`forward`] with a chosen backward rule for the head.
pub fn forward_with<T: Scalar>(
    params: &ModelParams<T>,
    input: Tensor<T>,
    record: bool,
    head_gradient: HeadGradient,
) -> Result<Forward<T>> {
    let cfg = params.config;
    let (h, w) = match *input.shape() {
        [IN_CHANNELS, h, w] => (h, w),
        ref s => {
            return Err(Error::Dimension(format!(
                "network input must be [1,H,W], got {s:?}"
            )))
        }
    };
    cfg.check_input(h, w)?;
    let mut tape = if record { Tape::new() } else { Tape::inference() };
    let input = tape.leaf(input);
    let vars: Vec<Var> = params.iter().map(|(_, t)| tape.leaf(t.clone())).collect();
    let mut layers = Layers { vars: &vars, next: 0 };

    let mut skips = Vec::with_capacity(cfg.depth);
    let mut x = input;
    let mut cin = IN_CHANNELS;
    for l in 0..cfg.depth {
        let c = cfg.width_at(l);
        x = res_block(&mut tape, &mut layers, x, cin != c)?;
        skips.push(x);
        x = tape.maxpool2(x)?;
        cin = c;
    }
    x = res_block(&mut tape, &mut layers, x, cin != cfg.width_at(cfg.depth))?;
    for l in (0..cfg.depth).rev() {
        let (wu, bu) = layers.take();
        let u = tape.upsample2(x)?;
        let u = tape.conv2d(u, wu, bu)?;
        let u = tape.activation(u, Activation::Swish);
        let cat = tape.concat(u, skips[l])?;
        x = res_block(&mut tape, &mut layers, cat, true)?;
    }
    let (wh, bh) = layers.take();
    let head = tape.conv2d(x, wh, bh)?;
    let act = match head_gradient {
        HeadGradient::Exact => Activation::Relu,
        HeadGradient::PassThrough => Activation::ReluPassThrough,
    };
    let output = tape.activation(head, act);
    debug_assert_eq!(layers.next, vars.len());
    let binary = tape.channel(output, 0)?;
    let centroid = tape.channel(output, 1)?;
    Ok(Forward {
        tape,
        input,
        params: vars,
        output,
        binary,
        centroid,
    })
}

/// Negates the head kernel and bias of every output channel that is zero on
/// more than half of the pixels of `probe`. Negation maps the pre-activation
/// `z` to `-z`, so such a channel becomes positive on most pixels. Returns
/// which channels were flipped.
pub fn orient_head(params: &mut ModelParams<f32>, probe: Tensor<f32>) -> Result<[bool; OUT_CHANNELS]> {
    let fwd = forward(params, probe, false)?;
    let mut flipped = [false; OUT_CHANNELS];
    for (c, ch) in [fwd.binary, fwd.centroid].into_iter().enumerate() {
        let y = fwd.tape.value(ch).data();
        let live = y.iter().filter(|&&v| v > 0.0).count();
        flipped[c] = 2 * live < y.len();
    }
    let n = params.entries.len();
    for (_, t) in &mut params.entries[n - 2..] {
        let per = t.len() / OUT_CHANNELS;
        for (c, chunk) in t.data_mut().chunks_mut(per).enumerate() {
            if flipped[c] {
                chunk.iter_mut().for_each(|v| *v = 0.0 - *v);
            }
        }
    }
    Ok(flipped)
}

pub fn image_tensor<T: Scalar>(img: &GrayImage) -> Tensor<T> {
    Tensor::new(
        &[1, img.height(), img.width()],
        img.data().iter().map(|&v| T::of(v as f64)).collect(),
    )
    .expect("image shape")
}

/// Inference: returns the `(binary, centroid)` channels.
pub fn infer(params: &ModelParams<f32>, img: &GrayImage) -> Result<(Plane, Plane)> {
    let fwd = forward(params, image_tensor(img), false)?;
    let (w, h) = (img.width(), img.height());
    let b = fwd.tape.value(fwd.binary).data().to_vec();
    let c = fwd.tape.value(fwd.centroid).data().to_vec();
    Ok((Plane::new(w, h, b)?, Plane::new(w, h, c)?))
}

const MAGIC: &[u8; 4] = b"STCK";
const VERSION: u32 = 1;

pub fn encode_checkpoint(params: &ModelParams<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.rank() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out.extend_from_slice(&(params.config.depth as u32).to_le_bytes());
    out.extend_from_slice(&(params.config.base_channels as u32).to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Checkpoint(format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ModelParams<f32>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let count = r.u32("array count")? as usize;
    let mut entries = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = u16::from_le_bytes(r.take(2, "name length")?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::Checkpoint("array name is not UTF-8".into()))?
            .to_string();
        let rank = r.take(1, "rank")?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("dims")? as usize);
        }
        let n: usize = shape.iter().product();
        let payload = r.take(n * 4, "payload")?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        entries.push((name, Tensor::new(&shape, data)?));
    }
    let config = UNetConfig {
        depth: r.u32("config")? as usize,
        base_channels: r.u32("config")? as usize,
    };
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after config".into()));
    }
    config
        .validate()
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    ModelParams::from_entries(config, entries)
}

pub fn save_checkpoint(params: &ModelParams<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelParams<f32>, UNetConfig)> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let params = decode_checkpoint(&bytes)?;
    let cfg = params.config;
    Ok((params, cfg))
}
