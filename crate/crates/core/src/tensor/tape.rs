use super::ops::{self, ConvGeom};
use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Swish,
    Relu,
    /// ReLU in the forward pass with an identity backward pass, so units
    /// below zero still receive the loss gradient.
    ReluPassThrough,
    Sigmoid,
}

impl Activation {
    pub fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            Activation::Swish => v * ops::sigmoid(v),
            Activation::Relu | Activation::ReluPassThrough => v.max(T::zero()),
            Activation::Sigmoid => ops::sigmoid(v),
        }
    }

    pub fn derivative<T: Scalar>(self, v: T) -> T {
        match self {
            Activation::Swish => {
                let s = ops::sigmoid(v);
                s + v * s * (T::one() - s)
            }
            Activation::Relu => {
                if v > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::ReluPassThrough => T::one(),
            Activation::Sigmoid => {
                let s = ops::sigmoid(v);
                s * (T::one() - s)
            }
        }
    }
}

enum Op<T> {
    Leaf,
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Var,
        geom: ConvGeom,
        // Unfolded input; `None` for 1x1 kernels or when not recording.
        cols: Option<Vec<T>>,
    },
    MaxPool2 {
        input: Var,
        argmax: Vec<u32>,
    },
    Upsample2 {
        input: Var,
    },
    Act {
        input: Var,
        kind: Activation,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Sum(Var),
    Concat(Var, Var),
    Channel {
        input: Var,
        index: usize,
    },
    Bce {
        y: Var,
        target: Vec<T>,
        eps: T,
    },
    Tv(Var),
    TvMse {
        y: Var,
        target: Vec<T>,
        alpha: T,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Ordered record of executed operations. [`Tape::backward`] replays their
/// adjoints in exact reverse order.
///
/// A tape created with [`Tape::inference`] computes the same values but
/// keeps no backward buffers.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
    recording: bool,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn chw(shape: &[usize], what: &str) -> Result<(usize, usize, usize)> {
    match *shape {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::Dimension(format!(
            "{what} expects a [C,H,W] tensor, got {shape:?}"
        ))),
    }
}

fn hw(shape: &[usize], what: &str) -> Result<(usize, usize)> {
    match *shape {
        [h, w] => Ok((h, w)),
        _ => Err(Error::Dimension(format!(
            "{what} expects an [H,W] tensor, got {shape:?}"
        ))),
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            recording: true,
        }
    }

    pub fn inference() -> Self {
        Self {
            nodes: Vec::new(),
            recording: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Shapes of all recorded values in execution order.
    pub fn shapes(&self) -> impl Iterator<Item = &[usize]> {
        self.nodes.iter().map(|n| n.value.shape())
    }

    /// Records an input or parameter.
    pub fn leaf(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Same-padded, stride-1 cross-correlation plus per-channel bias.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var) -> Result<Var> {
        let xs = self.shape(input).to_vec();
        let ks = self.shape(kernel).to_vec();
        let bs = self.shape(bias).to_vec();
        let mismatch = || {
            Error::Dimension(format!(
                "conv2d input {xs:?} incompatible with kernel {ks:?} / bias {bs:?}"
            ))
        };
        let (cin, h, w) = chw(&xs, "conv2d").map_err(|_| mismatch())?;
        let [cout, kcin, kh, kw] = ks[..] else {
            return Err(mismatch());
        };
        if kcin != cin || bs != [cout] {
            return Err(mismatch());
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(Error::Dimension(format!(
                "conv2d kernel {ks:?} must have odd spatial extents"
            )));
        }
        let geom = ConvGeom { cin, cout, h, w, kh, kw };
        let (out, cols) = {
            let x = self.value(input).data();
            let k = self.value(kernel).data();
            let b = self.value(bias).data();
            if geom.is_pointwise() {
                (ops::conv_forward(&geom, x, k, b), None)
            } else {
                let mut cols = Vec::new();
                ops::im2col(&geom, x, &mut cols);
                let out = ops::conv_forward(&geom, &cols, k, b);
                (out, self.recording.then_some(cols))
            }
        };
        let value = Tensor::new(&[cout, h, w], out)?;
        Ok(self.push(
            value,
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
                cols,
            },
        ))
    }

    pub fn maxpool2(&mut self, input: Var) -> Result<Var> {
        let (c, h, w) = chw(self.shape(input), "maxpool2")?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Dimension(format!(
                "maxpool2 needs even extents, got {h}x{w}"
            )));
        }
        let (out, argmax) = ops::maxpool2(c, h, w, self.value(input).data());
        let value = Tensor::new(&[c, h / 2, w / 2], out)?;
        let argmax = if self.recording { argmax } else { Vec::new() };
        Ok(self.push(value, Op::MaxPool2 { input, argmax }))
    }

    pub fn upsample2(&mut self, input: Var) -> Result<Var> {
        let (c, h, w) = chw(self.shape(input), "upsample2")?;
        let out = ops::upsample2(c, h, w, self.value(input).data());
        let value = Tensor::new(&[c, 2 * h, 2 * w], out)?;
        Ok(self.push(value, Op::Upsample2 { input }))
    }

    pub fn activation(&mut self, input: Var, kind: Activation) -> Var {
        let value = self.value(input).map(|v| kind.apply(v));
        self.push(value, Op::Act { input, kind })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "add")?;
        let mut value = self.value(a).clone();
        value.add_scaled(self.value(b), T::one());
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "mul")?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        let value = Tensor::new(self.shape(a), data)?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let value = self.value(a).map(|v| v * c);
        self.push(value, Op::Scale(a, c))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().fold(T::zero(), |acc, &v| acc + v);
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    /// Concatenates two `[C,H,W]` tensors along the channel axis.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ca, ha, wa) = chw(self.shape(a), "concat")?;
        let (cb, hb, wb) = chw(self.shape(b), "concat")?;
        if (ha, wa) != (hb, wb) {
            return Err(Error::Dimension(format!(
                "concat spatial mismatch {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let mut data = self.value(a).data().to_vec();
        data.extend_from_slice(self.value(b).data());
        let value = Tensor::new(&[ca + cb, ha, wa], data)?;
        Ok(self.push(value, Op::Concat(a, b)))
    }

    /// Extracts channel `index` of a `[C,H,W]` tensor as `[H,W]`.
    pub fn channel(&mut self, input: Var, index: usize) -> Result<Var> {
        let (c, h, w) = chw(self.shape(input), "channel")?;
        if index >= c {
            return Err(Error::Dimension(format!(
                "channel {index} out of range for {c} channels"
            )));
        }
        let data = self.value(input).data()[index * h * w..(index + 1) * h * w].to_vec();
        let value = Tensor::new(&[h, w], data)?;
        Ok(self.push(value, Op::Channel { input, index }))
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Dimension(format!(
                "{what}: shapes {:?} and {:?} differ",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    fn target_check(&self, y: Var, target: &Tensor<T>, what: &str) -> Result<(usize, usize)> {
        let (h, w) = hw(self.shape(y), what)?;
        if target.shape() != [h, w] {
            return Err(Error::Dimension(format!(
                "{what}: prediction {:?} vs target {:?}",
                self.shape(y),
                target.shape()
            )));
        }
        Ok((h, w))
    }

    /// Mean binary cross entropy with predictions clamped to
    /// `[eps, 1 - eps]`.
    pub fn bce(&mut self, y: Var, target: &Tensor<T>, eps: T) -> Result<Var> {
        self.target_check(y, target, "bce")?;
        let n = T::of(target.len() as f64);
        let mut acc = T::zero();
        for (&p, &x) in self.value(y).data().iter().zip(target.data()) {
            let p = p.max(eps).min(T::one() - eps);
            acc = acc + x * p.ln() + (T::one() - x) * (T::one() - p).ln();
        }
        let value = Tensor::scalar(-acc / n);
        Ok(self.push(
            value,
            Op::Bce {
                y,
                target: target.data().to_vec(),
                eps,
            },
        ))
    }

    /// Smoothed total variation of an `[H,W]` tensor.
    pub fn tv(&mut self, y: Var) -> Result<Var> {
        let (h, w) = hw(self.shape(y), "tv")?;
        let value = Tensor::scalar(ops::tv_value(h, w, self.value(y).data()));
        Ok(self.push(value, Op::Tv(y)))
    }

    /// `(1 - alpha) * mean((y - x)^2) + alpha * (tv(y) / (H*W))^2`.
    pub fn tv_mse(&mut self, y: Var, target: &Tensor<T>, alpha: T) -> Result<Var> {
        let (h, w) = self.target_check(y, target, "tv_mse")?;
        let n = T::of((h * w) as f64);
        let yv = self.value(y).data();
        let mse = yv
            .iter()
            .zip(target.data())
            .fold(T::zero(), |acc, (&p, &x)| acc + (p - x) * (p - x))
            / n;
        let tvn = ops::tv_value(h, w, yv) / n;
        let value = Tensor::scalar((T::one() - alpha) * mse + alpha * tvn * tvn);
        Ok(self.push(
            value,
            Op::TvMse {
                y,
                target: target.data().to_vec(),
                alpha,
            },
        ))
    }

    /// Reverse-mode sweep from a scalar `output`.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>> {
        if !self.recording {
            return Err(Error::Contract(
                "backward on an inference-only tape".into(),
            ));
        }
        if self.value(output).len() != 1 {
            return Err(Error::Contract(format!(
                "backward seed must be scalar, got shape {:?}",
                self.shape(output)
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::full(self.shape(output), T::one()));

        for idx in (0..=output.0).rev() {
            let Some(up) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {
                    grads[idx] = Some(up);
                }
                Op::Conv2d {
                    input,
                    kernel,
                    bias,
                    geom,
                    cols,
                } => {
                    let x = self.value(*input).data();
                    let cols = cols.as_deref().unwrap_or(x);
                    let k = self.value(*kernel).data();
                    let (d_cols, d_k, d_b) = ops::conv_backward(geom, cols, k, up.data());
                    let d_x = if geom.is_pointwise() {
                        d_cols
                    } else {
                        let mut d = vec![T::zero(); x.len()];
                        ops::col2im_add(geom, &d_cols, &mut d);
                        d
                    };
                    self.accumulate(&mut grads, *input, d_x);
                    self.accumulate(&mut grads, *kernel, d_k);
                    self.accumulate(&mut grads, *bias, d_b);
                }
                Op::MaxPool2 { input, argmax } => {
                    let mut d = vec![T::zero(); self.value(*input).len()];
                    for (&a, &g) in argmax.iter().zip(up.data()) {
                        d[a as usize] = d[a as usize] + g;
                    }
                    self.accumulate(&mut grads, *input, d);
                }
                Op::Upsample2 { input } => {
                    let s = self.shape(*input);
                    let d = ops::upsample2_adjoint(s[0], s[1], s[2], up.data());
                    self.accumulate(&mut grads, *input, d);
                }
                Op::Act { input, kind } => {
                    let d = self
                        .value(*input)
                        .data()
                        .iter()
                        .zip(up.data())
                        .map(|(&v, &g)| g * kind.derivative(v))
                        .collect();
                    self.accumulate(&mut grads, *input, d);
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, *a, up.data().to_vec());
                    self.accumulate(&mut grads, *b, up.into_data());
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                    let da = bv.iter().zip(up.data()).map(|(&y, &g)| g * y).collect();
                    let db = av.iter().zip(up.data()).map(|(&x, &g)| g * x).collect();
                    self.accumulate(&mut grads, *a, da);
                    self.accumulate(&mut grads, *b, db);
                }
                Op::Scale(a, c) => {
                    let d = up.data().iter().map(|&g| g * *c).collect();
                    self.accumulate(&mut grads, *a, d);
                }
                Op::Sum(a) => {
                    let g = up.item();
                    self.accumulate(&mut grads, *a, vec![g; self.value(*a).len()]);
                }
                Op::Concat(a, b) => {
                    let na = self.value(*a).len();
                    let data = up.into_data();
                    self.accumulate(&mut grads, *a, data[..na].to_vec());
                    self.accumulate(&mut grads, *b, data[na..].to_vec());
                }
                Op::Channel { input, index } => {
                    let mut d = vec![T::zero(); self.value(*input).len()];
                    let n = up.len();
                    d[index * n..(index + 1) * n].copy_from_slice(up.data());
                    self.accumulate(&mut grads, *input, d);
                }
                Op::Bce { y, target, eps } => {
                    let g = up.item();
                    let n = T::of(target.len() as f64);
                    let hi = T::one() - *eps;
                    let d = self
                        .value(*y)
                        .data()
                        .iter()
                        .zip(target)
                        .map(|(&p, &x)| {
                            if p < *eps || p > hi {
                                T::zero()
                            } else {
                                -g * (x / p - (T::one() - x) / (T::one() - p)) / n
                            }
                        })
                        .collect();
                    self.accumulate(&mut grads, *y, d);
                }
                Op::Tv(y) => {
                    let s = self.shape(*y);
                    let (h, w) = (s[0], s[1]);
                    let mut d = vec![T::zero(); h * w];
                    ops::tv_grad_add(h, w, self.value(*y).data(), up.item(), &mut d);
                    self.accumulate(&mut grads, *y, d);
                }
                Op::TvMse { y, target, alpha } => {
                    let s = self.shape(*y);
                    let (h, w) = (s[0], s[1]);
                    let g = up.item();
                    let n = T::of((h * w) as f64);
                    let yv = self.value(*y).data();
                    let two = T::of(2.0);
                    let mse_scale = g * (T::one() - *alpha) * two / n;
                    let mut d: Vec<T> = yv
                        .iter()
                        .zip(target)
                        .map(|(&p, &x)| mse_scale * (p - x))
                        .collect();
                    if *alpha > T::zero() {
                        let tvn = ops::tv_value(h, w, yv) / n;
                        ops::tv_grad_add(h, w, yv, g * *alpha * two * tvn / n, &mut d);
                    }
                    self.accumulate(&mut grads, *y, d);
                }
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, d: Vec<T>) {
        match &mut grads[v.0] {
            Some(g) => {
                for (a, b) in g.data_mut().iter_mut().zip(d) {
                    *a = *a + b;
                }
            }
            slot @ None => {
                *slot = Some(Tensor {
                    shape: self.shape(v).to_vec(),
                    data: d,
                });
            }
        }
    }
}

/// Adjoints produced by [`Tape::backward`].
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the output with respect to `v`; `None` when `v` does not
    /// influence the output.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Like [`Gradients::get`] but yields zeros shaped like `v`.
    pub fn wrt(&self, tape: &Tape<T>, v: Var) -> Tensor<T> {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(tape.shape(v)))
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn identity_kernel_is_identity() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t(&[1, 2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let mut k = vec![0.0; 9];
        k[4] = 1.0;
        let k = tape.leaf(t(&[1, 1, 3, 3], &k));
        let b = tape.leaf(Tensor::zeros(&[1]));
        let y = tape.conv2d(x, k, b).unwrap();
        assert_eq!(tape.value(y).data(), tape.value(x).data());
    }

    #[test]
    fn ones_kernel_on_2x2_sums_everything() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let k = tape.leaf(Tensor::full(&[1, 1, 3, 3], 1.0));
        let b = tape.leaf(Tensor::zeros(&[1]));
        let y = tape.conv2d(x, k, b).unwrap();
        assert_eq!(tape.value(y).data(), &[10.0; 4]);
    }

    #[test]
    fn bias_only_conv_is_constant() {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::full(&[2, 3, 3], 0.7));
        let k = tape.leaf(Tensor::zeros(&[3, 2, 3, 3]));
        let b = tape.leaf(Tensor::full(&[3], 1.5));
        let y = tape.conv2d(x, k, b).unwrap();
        assert_eq!(tape.shape(y), &[3, 3, 3]);
        assert!(tape.value(y).data().iter().all(|&v| v == 1.5));
    }

    #[test]
    fn conv_shape_errors_name_both_shapes() {
        let mut tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::zeros(&[2, 4, 4]));
        let k = tape.leaf(Tensor::zeros(&[1, 3, 3, 3]));
        let b = tape.leaf(Tensor::zeros(&[1]));
        let msg = tape.conv2d(x, k, b).unwrap_err().to_string();
        assert!(msg.contains("[2, 4, 4]") && msg.contains("[1, 3, 3, 3]"), "{msg}");
        let k2 = tape.leaf(Tensor::zeros(&[1, 2, 2, 2]));
        assert!(tape.conv2d(x, k2, b).is_err());
    }

    #[test]
    fn maxpool_picks_max_and_routes_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let p = tape.maxpool2(x).unwrap();
        assert_eq!(tape.value(p).data(), &[4.0]);
        let s = tape.sum(p);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn maxpool_ties_take_top_left() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::full(&[1, 4, 4], 2.0));
        let p = tape.maxpool2(x).unwrap();
        assert_eq!(tape.value(p).data(), &[2.0; 4]);
        let s = tape.sum(p);
        let g = tape.backward(s).unwrap();
        let gx = g.get(x).unwrap().data();
        for (i, &v) in gx.iter().enumerate() {
            let (y, x) = (i / 4, i % 4);
            assert_eq!(v, if y % 2 == 0 && x % 2 == 0 { 1.0 } else { 0.0 });
        }
        let odd = tape.leaf(Tensor::zeros(&[1, 3, 4]));
        assert!(tape.maxpool2(odd).is_err());
    }

    #[test]
    fn upsample_duplicates_and_adjoint_sums() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
        let u = tape.upsample2(x).unwrap();
        assert_eq!(
            tape.value(u).data(),
            &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 3.0, 3.0, 4.0, 4.0]
        );
        let p = tape.maxpool2(u).unwrap();
        let u2 = tape.upsample2(p).unwrap();
        assert_eq!(tape.shape(u2), &[1, 4, 4]);
        let s = tape.sum(u);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[4.0; 4]);
    }

    #[test]
    fn activation_values() {
        assert_eq!(Activation::Swish.apply(0.0f64), 0.0);
        assert_eq!(Activation::Relu.apply(-3.0f64), 0.0);
        assert_eq!(Activation::Sigmoid.apply(0.0f64), 0.5);
        assert!((Activation::Swish.apply(1.0f64) - 0.731059).abs() < 1e-6);
    }

    #[test]
    fn square_sum_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t(&[2], &[1.0, 2.0]));
        let sq = tape.mul(x, x).unwrap();
        let f = tape.sum(sq);
        let g = tape.backward(f).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn unused_leaf_gets_zero_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t(&[2], &[1.0, 2.0]));
        let c = tape.leaf(t(&[2], &[3.0, 4.0]));
        let f = tape.sum(c);
        let g = tape.backward(f).unwrap();
        assert!(g.get(x).is_none());
        assert_eq!(g.wrt(&tape, x).data(), &[0.0, 0.0]);
    }

    #[test]
    fn non_scalar_seed_rejected() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t(&[2], &[1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
        let mut inf = Tape::<f64>::inference();
        let y = inf.leaf(Tensor::scalar(1.0));
        assert!(inf.backward(y).is_err());
    }

    #[test]
    fn shared_input_accumulates() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(t(&[3], &[1.0, -2.0, 0.5]));
        let y = tape.add(x, x).unwrap();
        let z = tape.scale(y, 3.0);
        let f = tape.sum(z);
        let g = tape.backward(f).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[6.0; 3]);
    }
}
