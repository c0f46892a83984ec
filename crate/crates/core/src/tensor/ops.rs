//! Raw kernels behind the tape operations. Layouts are `[C, H, W]`
//! for feature maps and `[Cout, Cin, Kh, Kw]` for kernels.

use super::Scalar;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvGeom {
    pub fn patch(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    pub fn pixels(&self) -> usize {
        self.h * self.w
    }

    pub fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1
    }
}

/// Unfolds `input` into `[Cin*Kh*Kw, H*W]` with zero "same" padding.
pub(crate) fn im2col<T: Scalar>(g: &ConvGeom, input: &[T], cols: &mut Vec<T>) {
    let (h, w) = (g.h, g.w);
    let (ph, pw) = ((g.kh / 2) as isize, (g.kw / 2) as isize);
    cols.clear();
    cols.resize(g.patch() * g.pixels(), T::zero());
    let mut row = 0;
    for ci in 0..g.cin {
        let plane = &input[ci * h * w..(ci + 1) * h * w];
        for ky in 0..g.kh {
            let dy = ky as isize - ph;
            for kx in 0..g.kw {
                let dx = kx as isize - pw;
                let dst = &mut cols[row * h * w..(row + 1) * h * w];
                let x0 = (-dx).max(0) as usize;
                let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize || x0 >= x1 {
                        continue;
                    }
                    let src = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let sx0 = (x0 as isize + dx) as usize;
                    dst[y * w + x0..y * w + x1].copy_from_slice(&src[sx0..sx0 + (x1 - x0)]);
                }
                row += 1;
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters column gradients back into `grad`.
pub(crate) fn col2im_add<T: Scalar>(g: &ConvGeom, cols: &[T], grad: &mut [T]) {
    let (h, w) = (g.h, g.w);
    let (ph, pw) = ((g.kh / 2) as isize, (g.kw / 2) as isize);
    let mut row = 0;
    for ci in 0..g.cin {
        let plane = &mut grad[ci * h * w..(ci + 1) * h * w];
        for ky in 0..g.kh {
            let dy = ky as isize - ph;
            for kx in 0..g.kw {
                let dx = kx as isize - pw;
                let src = &cols[row * h * w..(row + 1) * h * w];
                let x0 = (-dx).max(0) as usize;
                let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize || x0 >= x1 {
                        continue;
                    }
                    let sx0 = (x0 as isize + dx) as usize;
                    let dst = &mut plane[sy as usize * w + sx0..sy as usize * w + sx0 + (x1 - x0)];
                    for (d, &s) in dst.iter_mut().zip(&src[y * w + x0..y * w + x1]) {
                        *d = *d + s;
                    }
                }
                row += 1;
            }
        }
    }
}

pub(crate) fn conv_forward<T: Scalar>(
    g: &ConvGeom,
    cols: &[T],
    kernel: &[T],
    bias: &[T],
) -> Vec<T> {
    let n = g.pixels();
    let mut out = vec![T::zero(); g.cout * n];
    for (c, &b) in bias.iter().enumerate() {
        out[c * n..(c + 1) * n].fill(b);
    }
    T::gemm(g.cout, g.patch(), n, kernel, false, cols, false, T::one(), &mut out);
    out
}

/// Returns `(d_cols, d_kernel, d_bias)` for upstream gradient `up`.
pub(crate) fn conv_backward<T: Scalar>(
    g: &ConvGeom,
    cols: &[T],
    kernel: &[T],
    up: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let n = g.pixels();
    let d_bias = up
        .chunks_exact(n)
        .map(|row| row.iter().fold(T::zero(), |a, &v| a + v))
        .collect();
    let mut d_kernel = vec![T::zero(); g.cout * g.patch()];
    T::gemm(g.cout, n, g.patch(), up, false, cols, true, T::zero(), &mut d_kernel);
    let mut d_cols = vec![T::zero(); g.patch() * n];
    T::gemm(g.patch(), g.cout, n, kernel, true, up, false, T::zero(), &mut d_cols);
    (d_cols, d_kernel, d_bias)
}

/// 2x2 max pooling. Ties go to the first element in row-major order.
pub(crate) fn maxpool2<T: Scalar>(c: usize, h: usize, w: usize, x: &[T]) -> (Vec<T>, Vec<u32>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let i0 = base + 2 * oy * w + 2 * ox;
                let mut best = i0;
                for idx in [i0 + 1, i0 + w, i0 + w + 1] {
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                arg.push(best as u32);
            }
        }
    }
    (out, arg)
}

pub(crate) fn upsample2<T: Scalar>(c: usize, h: usize, w: usize, x: &[T]) -> Vec<T> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); c * oh * ow];
    for ch in 0..c {
        for y in 0..oh {
            let src = &x[ch * h * w + (y / 2) * w..ch * h * w + (y / 2 + 1) * w];
            let dst = &mut out[ch * oh * ow + y * ow..ch * oh * ow + (y + 1) * ow];
            for (x2, d) in dst.iter_mut().enumerate() {
                *d = src[x2 / 2];
            }
        }
    }
    out
}

pub(crate) fn upsample2_adjoint<T: Scalar>(c: usize, h: usize, w: usize, up: &[T]) -> Vec<T> {
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![T::zero(); c * h * w];
    for ch in 0..c {
        for y in 0..oh {
            let src = &up[ch * oh * ow + y * ow..ch * oh * ow + (y + 1) * ow];
            let dst = &mut out[ch * h * w + (y / 2) * w..ch * h * w + (y / 2 + 1) * w];
            for (x2, &s) in src.iter().enumerate() {
                dst[x2 / 2] = dst[x2 / 2] + s;
            }
        }
    }
    out
}

pub(crate) fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

/// Smoothing constant inside the TV square root.
pub(crate) const TV_DELTA: f64 = 1e-8;

/// Total variation with backward differences; out-of-range differences are
/// zero. Each term is `sqrt(d^2 + delta^2) - delta`, exactly 0 where flat.
pub(crate) fn tv_value<T: Scalar>(h: usize, w: usize, y: &[T]) -> T {
    let delta = T::of(TV_DELTA);
    let d2 = delta * delta;
    let mut acc = T::zero();
    for i in 0..h {
        for j in 0..w {
            let v = y[i * w + j];
            let dy = if i > 0 { v - y[(i - 1) * w + j] } else { T::zero() };
            let dx = if j > 0 { v - y[i * w + j - 1] } else { T::zero() };
            acc = acc + ((dy * dy + dx * dx + d2).sqrt() - delta);
        }
    }
    acc
}

/// Adds `scale * d tv / d y` into `grad`.
pub(crate) fn tv_grad_add<T: Scalar>(h: usize, w: usize, y: &[T], scale: T, grad: &mut [T]) {
    let delta = T::of(TV_DELTA);
    let d2 = delta * delta;
    for i in 0..h {
        for j in 0..w {
            let idx = i * w + j;
            let v = y[idx];
            let dy = if i > 0 { v - y[idx - w] } else { T::zero() };
            let dx = if j > 0 { v - y[idx - 1] } else { T::zero() };
            let s = (dy * dy + dx * dx + d2).sqrt();
            grad[idx] = grad[idx] + scale * (dy + dx) / s;
            if i > 0 {
                grad[idx - w] = grad[idx - w] - scale * dy / s;
            }
            if j > 0 {
                grad[idx - 1] = grad[idx - 1] - scale * dx / s;
            }
        }
    }
}
