//! Random gradient-check instances for every differentiable op.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shadowgraph::loss::{total_loss, LossConfig};
use shadowgraph::tensor::{Activation, Tape, Tensor};
use shadowgraph::unet::{forward, init_params, UNetConfig};

use super::{max_grad_error, project, random_tensor, rel_err};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Conv2d,
    MaxPool2,
    Upsample2,
    Swish,
    Relu,
    Sigmoid,
    Bce,
    Tv,
    TvMse,
}

pub const OPS: [Op; 9] = [
    Op::Conv2d,
    Op::MaxPool2,
    Op::Upsample2,
    Op::Swish,
    Op::Relu,
    Op::Sigmoid,
    Op::Bce,
    Op::Tv,
    Op::TvMse,
];

/// Worst relative gradient error of `op` on the random instance `seed`.
pub fn op_error(op: Op, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = rng.random_range(2..=6usize);
    let w = rng.random_range(2..=6usize);
    match op {
        Op::Conv2d => {
            let cin = rng.random_range(1..=3usize);
            let cout = rng.random_range(1..=3usize);
            let k = if rng.random_bool(0.5) { 3 } else { 1 };
            let x = random_tensor(&mut rng, &[cin, h, w], -1.0, 1.0);
            let kern = random_tensor(&mut rng, &[cout, cin, k, k], -1.0, 1.0);
            let b = random_tensor(&mut rng, &[cout], -1.0, 1.0);
            let r = random_tensor(&mut rng, &[cout, h, w], -1.0, 1.0);
            max_grad_error(&[x, kern, b], |t, v| {
                let y = t.conv2d(v[0], v[1], v[2]).unwrap();
                project(t, y, &r)
            })
        }
        Op::MaxPool2 => {
            // Values on a 0.1 grid with small jitter, so every pooling
            // window has a unique maximum well beyond the probe step.
            let c = rng.random_range(1..=2usize);
            let n = c * 4 * h * w;
            let mut vals: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
            vals.shuffle(&mut rng);
            let vals: Vec<f64> = vals.into_iter().map(|v| v + rng.random_range(0.0..0.01)).collect();
            let x = Tensor::new(&[c, 2 * h, 2 * w], vals).unwrap();
            let r = random_tensor(&mut rng, &[c, h, w], -1.0, 1.0);
            max_grad_error(&[x], |t, v| {
                let y = t.maxpool2(v[0]).unwrap();
                project(t, y, &r)
            })
        }
        Op::Upsample2 => {
            let c = rng.random_range(1..=2usize);
            let x = random_tensor(&mut rng, &[c, h, w], -1.0, 1.0);
            let r = random_tensor(&mut rng, &[c, 2 * h, 2 * w], -1.0, 1.0);
            max_grad_error(&[x], |t, v| {
                let y = t.upsample2(v[0]).unwrap();
                project(t, y, &r)
            })
        }
        Op::Swish | Op::Relu | Op::Sigmoid => {
            let kind = match op {
                Op::Swish => Activation::Swish,
                Op::Relu => Activation::Relu,
                _ => Activation::Sigmoid,
            };
            // Keep away from the ReLU kink.
            let vals: Vec<f64> = (0..h * w)
                .map(|_| {
                    let m = rng.random_range(0.05..3.0);
                    if rng.random_bool(0.5) { m } else { -m }
                })
                .collect();
            let x = Tensor::new(&[h, w], vals).unwrap();
            let r = random_tensor(&mut rng, &[h, w], -1.0, 1.0);
            max_grad_error(&[x], |t, v| {
                let y = t.activation(v[0], kind);
                project(t, y, &r)
            })
        }
        Op::Bce => {
            let y = random_tensor(&mut rng, &[8, 8], 0.05, 0.95);
            let x = random_tensor(&mut rng, &[8, 8], 0.0, 1.0);
            max_grad_error(&[y], |t, v| t.bce(v[0], &x, 1e-7).unwrap())
        }
        Op::Tv => {
            let y = random_tensor(&mut rng, &[8, 8], 0.05, 0.95);
            max_grad_error(&[y], |t, v| t.tv(v[0]).unwrap())
        }
        Op::TvMse => {
            let y = random_tensor(&mut rng, &[8, 8], 0.05, 0.95);
            let x = random_tensor(&mut rng, &[8, 8], 0.0, 1.0);
            let alpha = rng.random_range(0.0..1.0);
            max_grad_error(&[y], |t, v| t.tv_mse(v[0], &x, alpha).unwrap())
        }
    }
}

/// Worst relative gradient error of the total training loss of a
/// depth-2, base-4 U-net on a 16x16 input.
///
/// Every parameter tensor is probed at three random coordinates, and the
/// input at sixteen; a full sweep over all weights would take minutes.
pub fn unet_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = UNetConfig {
        depth: 2,
        base_channels: 4,
    };
    let mut params = init_params::<f64>(cfg, seed).unwrap();
    for t in params.tensors_mut() {
        if t.rank() == 1 {
            t.data_mut().iter_mut().for_each(|v| *v = rng.random_range(-0.2..0.2));
        }
    }
    let input = random_tensor(&mut rng, &[1, 16, 16], 0.0, 1.0);
    let binary = Tensor::new(&[16, 16], (0..256).map(|_| rng.random_range(0..2) as f64).collect()).unwrap();
    let centroid = random_tensor(&mut rng, &[16, 16], 0.0, 1.0);
    let lcfg = LossConfig::default();

    let loss_of = |p: &shadowgraph::unet::ModelParams<f64>, x: &Tensor<f64>, record: bool| {
        let fwd = forward(p, x.clone(), record).unwrap();
        let mut tape: Tape<f64> = fwd.tape;
        let terms = total_loss(&mut tape, (fwd.binary, &binary), (fwd.centroid, &centroid), &lcfg).unwrap();
        (tape, fwd.params, fwd.input, terms.total)
    };
    let (tape, pvars, ivar, total) = loss_of(&params, &input, true);
    let grads = tape.backward(total).unwrap();

    let eps = 1e-6;
    let mut worst = 0.0f64;
    
    for (k, &pv) in pvars.iter().enumerate() {
        let g = grads.wrt(&tape, pv);
        for _ in 0..3 {
            let j = rng.random_range(0..g.len());
            let probe = |delta: f64| {
                let mut p = params.clone();
                p.tensors_mut().nth(k).unwrap().data_mut()[j] += delta;
                let (t, _, _, out) = loss_of(&p, &input, false);
                t.value(out).item()
            };
            let fd = (probe(eps) - probe(-eps)) / (2.0 * eps);
            worst = worst.max(rel_err(g.data()[j], fd));
        }
    }
    let gi = grads.wrt(&tape, ivar);
    for _ in 0..16 {
        let j = rng.random_range(0..gi.len());
        let probe = |delta: f64| {
            let mut x = input.clone();
            x.data_mut()[j] += delta;
            let (t, _, _, out) = loss_of(&params, &x, false);
            t.value(out).item()
        };
        let fd = (probe(eps) - probe(-eps)) / (2.0 * eps);
        worst = worst.max(rel_err(gi.data()[j], fd));
    }
    worst
}
