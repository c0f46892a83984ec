//! Training objectives: binary cross entropy for the particle channel and
//! TV-regularized mean square error for the centroid channel.
//!
//! All losses are per-pixel means so their magnitude does not depend on
//! image size. The TV term is normalized by the pixel count before squaring.

use crate::error::{Error, Result};
use crate::kv::{self, KeyValues};
use crate::tensor::{Scalar, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    /// Weight of the squared TV term.
    pub alpha: f64,
    /// Predictions are clamped to `[clamp_eps, 1 - clamp_eps]` before the log.
    pub clamp_eps: f64,
    pub w_binary: f64,
    pub w_centroid: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 1e-4,
            clamp_eps: 1e-7,
            w_binary: 1.0,
            w_centroid: 1.0,
        }
    }
}

impl KeyValues for LossConfig {
    const PREFIX: &'static str = "loss";

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "alpha" => self.alpha = kv::parse(key, value)?,
            "clamp_eps" => self.clamp_eps = kv::parse(key, value)?,
            "w_binary" => self.w_binary = kv::parse(key, value)?,
            "w_centroid" => self.w_centroid = kv::parse(key, value)?,
            _ => return Err(kv::unknown(Self::PREFIX, key)),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("alpha", self.alpha.to_string()),
            ("clamp_eps", self.clamp_eps.to_string()),
            ("w_binary", self.w_binary.to_string()),
            ("w_centroid", self.w_centroid.to_string()),
        ]
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config("loss.alpha must lie in [0,1]".into()));
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return Err(Error::Config("loss.clamp_eps must lie in (0,0.5)".into()));
        }
        if !(self.w_binary > 0.0 && self.w_centroid > 0.0) {
            return Err(Error::Config("loss channel weights must be positive".into()));
        }
        Ok(())
    }
}

/// `-mean(X ln Y + (1-X) ln(1-Y))` with `Y` clamped to `[eps, 1-eps]`.
pub fn bce_loss<T: Scalar>(tape: &mut Tape<T>, y: Var, x: &Tensor<T>, clamp_eps: T) -> Result<Var> {
    tape.bce(y, x, clamp_eps)
}

/// Sum over pixels of the magnitude of backward differences; differences
/// that would leave the image count as zero.
pub fn tv<T: Scalar>(tape: &mut Tape<T>, y: Var) -> Result<Var> {
    tape.tv(y)
}

/// `(1-alpha) * mean((Y-X)^2) + alpha * (tv(Y) / (H*W))^2`.
pub fn tv_mse_loss<T: Scalar>(tape: &mut Tape<T>, y: Var, x: &Tensor<T>, alpha: T) -> Result<Var> {
    tape.tv_mse(y, x, alpha)
}

/// The individual terms of [`total_loss`], all on the tape.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: Var,
    pub bce: Var,
    pub tv_mse: Var,
}

/// `w_binary * bce(binary) + w_centroid * tv_mse(centroid)`.
pub fn total_loss<T: Scalar>(
    tape: &mut Tape<T>,
    binary: (Var, &Tensor<T>),
    centroid: (Var, &Tensor<T>),
    cfg: &LossConfig,
) -> Result<LossTerms> {
    let bce = bce_loss(tape, binary.0, binary.1, T::of(cfg.clamp_eps))?;
    let tv_mse = tv_mse_loss(tape, centroid.0, centroid.1, T::of(cfg.alpha))?;
    let a = tape.scale(bce, T::of(cfg.w_binary));
    let b = tape.scale(tv_mse, T::of(cfg.w_centroid));
    let total = tape.add(a, b)?;
    Ok(LossTerms { total, bce, tv_mse })
}

/// Evaluates a loss on plain tensors without keeping a tape around.
pub fn eval<T: Scalar>(
    y: &Tensor<T>,
    f: impl FnOnce(&mut Tape<T>, Var) -> Result<Var>,
) -> Result<T> {
    let mut tape = Tape::inference();
    let v = tape.leaf(y.clone());
    let out = f(&mut tape, v)?;
    Ok(tape.value(out).item())
}
