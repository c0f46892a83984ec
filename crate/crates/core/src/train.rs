//! Mini-batch training with Adam. Everything runs on one thread and is
//! reproducible bit for bit from the seed.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imgio::GrayImage;
use crate::kv::{self, KeyValues};
use crate::loss::{total_loss, LossConfig};
use crate::synth::{DatasetSample, LoadedSample};
use crate::tensor::{Scalar, Tensor};
use crate::unet::{forward_with, image_tensor, orient_head, HeadGradient, save_checkpoint, ModelParams};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Save a checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
    pub head_gradient: HeadGradient,
    /// Run [`orient_head`] on the first training sample before training.
    pub orient_head: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 140,
            batch_size: 4,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            checkpoint_every: 0,
            head_gradient: HeadGradient::PassThrough,
            orient_head: true,
        }
    }
}

impl KeyValues for TrainConfig {
    const PREFIX: &'static str = "train";

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "epochs" => self.epochs = kv::parse(key, value)?,
            "batch_size" => self.batch_size = kv::parse(key, value)?,
            "learning_rate" => self.learning_rate = kv::parse(key, value)?,
            "beta1" => self.beta1 = kv::parse(key, value)?,
            "beta2" => self.beta2 = kv::parse(key, value)?,
            "adam_eps" => self.adam_eps = kv::parse(key, value)?,
            "seed" => self.seed = kv::parse(key, value)?,
            "checkpoint_every" => self.checkpoint_every = kv::parse(key, value)?,
            "head_gradient" => self.head_gradient = kv::parse(key, value)?,
            "orient_head" => self.orient_head = kv::parse(key, value)?,
            _ => return Err(kv::unknown(Self::PREFIX, key)),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("learning_rate", self.learning_rate.to_string()),
            ("beta1", self.beta1.to_string()),
            ("beta2", self.beta2.to_string()),
            ("adam_eps", self.adam_eps.to_string()),
            ("seed", self.seed.to_string()),
            ("checkpoint_every", self.checkpoint_every.to_string()),
            ("head_gradient", self.head_gradient.to_string()),
            ("orient_head", self.orient_head.to_string()),
        ]
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("train.epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("train.learning_rate must be positive".into()));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::Config("train.beta1 and train.beta2 must lie in [0,1)".into()));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::Config("train.adam_eps must be positive".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor<T>>) -> Self {
        let m: Vec<Tensor<T>> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            v: m.clone(),
            m,
            t: 0,
        }
    }
}

pub fn adam_step<'a, T: Scalar>(
    params: impl IntoIterator<Item = &'a mut Tensor<T>>,
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    cfg: &TrainConfig,
) -> Result<()> {
    let mut params: Vec<&mut Tensor<T>> = params.into_iter().collect();
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Dimension(format!(
            "adam: {} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(Error::Dimension(format!(
                "adam: parameter {i} has shape {:?}, gradient {:?}, moment {:?}",
                p.shape(),
                g.shape(),
                state.m[i].shape()
            )));
        }
    }
    state.t += 1;
    let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
    let (one, eps) = (T::one(), T::of(cfg.adam_eps));
    let c1 = T::of(1.0 - cfg.beta1.powi(state.t as i32));
    let c2 = T::of(1.0 - cfg.beta2.powi(state.t as i32));
    let lr = T::of(cfg.learning_rate);
    for (i, p) in params.iter_mut().enumerate() {
        let (m, v) = (state.m[i].data_mut(), state.v[i].data_mut());
        for (((pj, &gj), mj), vj) in p.data_mut().iter_mut().zip(grads[i].data()).zip(m).zip(v) {
            *mj = b1 * *mj + (one - b1) * gj;
            *vj = b2 * *vj + (one - b2) * gj * gj;
            let mh = *mj / c1;
            let vh = *vj / c2;
            *pj = *pj - lr * mh / (vh.sqrt() + eps);
        }
    }
    Ok(())
}

/// Network input and both targets for one training image.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub input: Tensor<f32>,
    pub binary: Tensor<f32>,
    pub centroid: Tensor<f32>,
}

impl TrainSample {
    pub fn new(image: &GrayImage, binary: &GrayImage, centroid: &GrayImage) -> Result<Self> {
        let dims = |g: &GrayImage| (g.width(), g.height());
        if dims(image) != dims(binary) || dims(image) != dims(centroid) {
            return Err(Error::Dimension(format!(
                "image {:?}, binary {:?} and centroid {:?} sizes differ",
                dims(image),
                dims(binary),
                dims(centroid)
            )));
        }
        let plane = |g: &GrayImage| {
            Tensor::new(&[g.height(), g.width()], g.data().to_vec()).expect("image shape")
        };
        Ok(Self {
            input: image_tensor(image),
            binary: plane(binary),
            centroid: plane(centroid),
        })
    }
}

impl From<&DatasetSample> for TrainSample {
    fn from(s: &DatasetSample) -> Self {
        Self::new(&s.image, &s.gt_binary, &s.gt_centroid).expect("synthesized sample is consistent")
    }
}

impl TryFrom<&LoadedSample> for TrainSample {
    type Error = Error;

    fn try_from(s: &LoadedSample) -> Result<Self> {
        Self::new(&s.image, &s.gt_binary, &s.gt_centroid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    pub bce: f64,
    pub tv_mse: f64,
}

pub const LOSS_HEADER: &str = "epoch,mean_loss,bce_component,tvmse_component";

pub fn format_loss_history(history: &[EpochLoss]) -> String {
    let mut s = String::from(LOSS_HEADER);
    s.push('\n');
    for e in history {
        let _ = writeln!(s, "{},{},{},{}", e.epoch, e.mean_loss, e.bce, e.tv_mse);
    }
    s
}

pub fn save_loss_history(history: &[EpochLoss], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_loss_history(history)).map_err(|e| Error::io(path, e))
}

fn tag(index: usize, e: Error) -> Error {
    match e {
        Error::Dimension(m) => Error::Dimension(format!("sample {index}: {m}")),
        other => other,
    }
}

/// One pass over the dataset, returning the epoch's mean loss terms.
/// `epoch` is 0-based and only seeds the shuffle.
pub fn train_epoch(
    params: &mut ModelParams<f32>,
    state: &mut AdamState<f32>,
    dataset: &[TrainSample],
    epoch: usize,
    tcfg: &TrainConfig,
    lcfg: &LossConfig,
) -> Result<EpochLoss> {
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(tcfg.seed ^ epoch as u64));
    let (mut sum_total, mut sum_bce, mut sum_tvm) = (0.0f64, 0.0f64, 0.0f64);
    for batch in order.chunks(tcfg.batch_size) {
        let mut acc: Vec<Tensor<f32>> = params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        for &i in batch {
            let s = &dataset[i];
            let fwd = forward_with(params, s.input.clone(), true, tcfg.head_gradient).map_err(|e| tag(i, e))?;
            let mut tape = fwd.tape;
            let terms = total_loss(&mut tape, (fwd.binary, &s.binary), (fwd.centroid, &s.centroid), lcfg)
                .map_err(|e| tag(i, e))?;
            sum_total += tape.value(terms.total).item() as f64;
            sum_bce += tape.value(terms.bce).item() as f64;
            sum_tvm += tape.value(terms.tv_mse).item() as f64;
            let grads = tape.backward(terms.total)?;
            for (a, &v) in acc.iter_mut().zip(&fwd.params) {
                if let Some(g) = grads.get(v) {
                    a.add_scaled(g, 1.0);
                }
            }
        }
        let inv = 1.0 / batch.len() as f32;
        for a in &mut acc {
            a.data_mut().iter_mut().for_each(|v| *v *= inv);
        }
        adam_step(params.tensors_mut(), &acc, state, tcfg)?;
    }
    let n = dataset.len() as f64;
    Ok(EpochLoss {
        epoch: epoch + 1,
        mean_loss: sum_total / n,
        bce: sum_bce / n,
        tv_mse: sum_tvm / n,
    })
}

/// Trains for `tcfg.epochs` epochs, calling `on_epoch` after each one.
pub fn train_epochs_with(
    params: &mut ModelParams<f32>,
    dataset: &[TrainSample],
    tcfg: &TrainConfig,
    lcfg: &LossConfig,
    mut on_epoch: impl FnMut(&EpochLoss, &ModelParams<f32>) -> Result<()>,
) -> Result<Vec<EpochLoss>> {
    tcfg.validate()?;
    lcfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("training dataset is empty".into()));
    }
    for (i, s) in dataset.iter().enumerate() {
        let shape = s.input.shape();
        params.config.check_input(shape[1], shape[2]).map_err(|e| tag(i, e))?;
    }
    if tcfg.orient_head {
        orient_head(params, dataset[0].input.clone())?;
    }
    let mut state = AdamState::new(params.iter().map(|(_, t)| t));
    let mut history = Vec::with_capacity(tcfg.epochs);
    for epoch in 0..tcfg.epochs {
        let loss = train_epoch(params, &mut state, dataset, epoch, tcfg, lcfg)?;
        on_epoch(&loss, params)?;
        history.push(loss);
    }
    Ok(history)
}

/// Trains and, when `checkpoint_dir` is given and `checkpoint_every > 0`,
/// writes `epoch_NNNN.stck` files there.
pub fn train_epochs(
    params: &mut ModelParams<f32>,
    dataset: &[TrainSample],
    tcfg: &TrainConfig,
    lcfg: &LossConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<Vec<EpochLoss>> {
    train_epochs_with(params, dataset, tcfg, lcfg, |loss, p| {
        match checkpoint_dir {
            Some(dir) if tcfg.checkpoint_every > 0 && loss.epoch % tcfg.checkpoint_every == 0 => {
                save_checkpoint(p, dir.join(format!("epoch_{:04}.stck", loss.epoch)))
            }
            _ => Ok(()),
        }
    })
}
