//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

pub mod grad;

use rand::Rng;
use shadowgraph::imgio::{LabelMap, Plane};
use shadowgraph::loss::{eval, tv_mse_loss};
use shadowgraph::segment::BinaryMask;
use shadowgraph::tensor::{Tape, Tensor, Var};

/// Relative error with an absolute floor so that gradients which are zero
/// up to rounding compare sensibly.
///
/// A central difference with step 1e-6 on a loss of order 10 carries about
/// 1e-9 of rounding noise, so the floor must sit well above that. With 1e-3
/// a component that is exactly zero (a TV corner where two unit edge terms
/// cancel, say) still has to agree to 1e-7 at a 1e-4 tolerance.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

pub fn random_tensor(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(shape, data).unwrap()
}

/// Largest relative error between reverse-mode and central-difference
/// gradients of the scalar built by `f` with respect to every element of
/// every input.
pub fn max_grad_error(
    inputs: &[Tensor<f64>],
    f: impl Fn(&mut Tape<f64>, &[Var]) -> Var,
) -> f64 {
    let eval = |xs: &[Tensor<f64>]| {
        let mut tape = Tape::inference();
        let vars: Vec<Var> = xs.iter().map(|x| tape.leaf(x.clone())).collect();
        let out = f(&mut tape, &vars);
        tape.value(out).item()
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(x.clone())).collect();
    let out = f(&mut tape, &vars);
    let grads = tape.backward(out).unwrap();
    let eps = 1e-6;
    let mut worst = 0.0f64;
    let mut probe = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        let g = grads.wrt(&tape, *v);
        for j in 0..inputs[i].len() {
            let orig = probe[i].data()[j];
            probe[i].data_mut()[j] = orig + eps;
            let up = eval(&probe);
            probe[i].data_mut()[j] = orig - eps;
            let down = eval(&probe);
            probe[i].data_mut()[j] = orig;
            let fd = (up - down) / (2.0 * eps);
            worst = worst.max(rel_err(g.data()[j], fd));
        }
    }
    worst
}

/// Weighted sum `sum(r * x)` reducing any tensor to a scalar with a
/// non-trivial gradient.
pub fn project(tape: &mut Tape<f64>, x: Var, r: &Tensor<f64>) -> Var {
    let w = tape.leaf(r.clone());
    let p = tape.mul(x, w).unwrap();
    tape.sum(p)
}

/// Squared distance to the nearest background pixel by exhaustive search,
/// with a one-pixel background frame around the image.
pub fn brute_edt_sq(mask: &BinaryMask) -> Vec<u32> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let bg: Vec<(i64, i64)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (x, y)))
        .filter(|&(x, y)| !mask.get(x as usize, y as usize))
        .collect();
    let mut out = Vec::with_capacity((w * h) as usize);
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x as usize, y as usize) {
                out.push(0);
                continue;
            }
            let frame = [(x + 1).pow(2), (w - x).pow(2), (y + 1).pow(2), (h - y).pow(2)]
                .into_iter()
                .min()
                .unwrap();
            let best = bg
                .iter()
                .map(|&(bx, by)| (bx - x).pow(2) + (by - y).pow(2))
                .min()
                .unwrap_or(i64::MAX)
                .min(frame);
            out.push(best as u32);
        }
    }
    out
}

/// Mean pixel position of label `l`.
pub fn label_centroid(lm: &LabelMap, l: u32) -> (f64, f64) {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
    for (i, &v) in lm.labels().iter().enumerate() {
        if v == l {
            sx += (i % lm.width()) as f64;
            sy += (i / lm.width()) as f64;
            n += 1.0;
        }
    }
    (sx / n, sy / n)
}

/// Hausdorff distance between the boundary separating labels `a` and `b`
/// and the perpendicular bisector of the segment joining `pa` and `pb`,
/// restricted to the part of the bisector that lies on labeled pixels.
///
/// Boundary points are midpoints between 4-adjacent pixels labeled `a` and
/// `b`. Bisector points are sampled every 0.1 px. Returns `None` when the
/// two labels never touch.
pub fn bisector_hausdorff(lm: &LabelMap, a: u32, b: u32, pa: (f64, f64), pb: (f64, f64)) -> Option<f64> {
    let (w, h) = (lm.width(), lm.height());
    let mut boundary = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let l = lm.get(x, y);
            for (nx, ny) in [(x + 1, y), (x, y + 1)] {
                if nx >= w || ny >= h {
                    continue;
                }
                let m = lm.get(nx, ny);
                if (l == a && m == b) || (l == b && m == a) {
                    boundary.push(((x + nx) as f64 / 2.0, (y + ny) as f64 / 2.0));
                }
            }
        }
    }
    if boundary.is_empty() {
        return None;
    }
    let mid = ((pa.0 + pb.0) / 2.0, (pa.1 + pb.1) / 2.0);
    let d = (pb.0 - pa.0, pb.1 - pa.1);
    let len = d.0.hypot(d.1);
    let (nx, ny) = (d.0 / len, d.1 / len);
    let (tx, ty) = (-ny, nx);
    // Bisector samples over labeled pixels.
    let mut line = Vec::new();
    let extent = (w + h) as f64;
    let mut t = -extent;
    while t <= extent {
        let (px, py) = (mid.0 + t * tx, mid.1 + t * ty);
        let (rx, ry) = (px.round(), py.round());
        if rx >= 0.0 && ry >= 0.0 && (rx as usize) < w && (ry as usize) < h {
            let l = lm.get(rx as usize, ry as usize);
            if l == a || l == b {
                line.push((px, py));
            }
        }
        t += 0.1;
    }
    let to_line = |p: &(f64, f64)| ((p.0 - mid.0) * nx + (p.1 - mid.1) * ny).abs();
    let forward = boundary.iter().map(to_line).fold(0.0f64, f64::max);
    let backward = line
        .iter()
        .map(|q| {
            boundary
                .iter()
                .map(|p| (p.0 - q.0).hypot(p.1 - q.1))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0f64, f64::max);
    Some(forward.max(backward))
}

/// Binary and centroid planes for two equal discs of radius `r` whose
/// centers lie near `d` apart along direction `phi`. Centers are snapped
/// to pixel centers so each marker disc is centered on its disc.
pub fn two_discs(r: f64, d: f64, phi: f64, center: (f64, f64), size: usize) -> (Plane, Plane, [(f64, f64); 2]) {
    let (dx, dy) = (0.5 * d * phi.cos(), 0.5 * d * phi.sin());
    let c = [
        ((center.0 - dx).round(), (center.1 - dy).round()),
        ((center.0 + dx).round(), (center.1 + dy).round()),
    ];
    let inside = |x: usize, y: usize, rad: f64| {
        c.iter()
            .any(|&(cx, cy)| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= rad * rad)
    };
    let binary = Plane::from_fn(size, size, |x, y| inside(x, y, r) as u8 as f32);
    let centroid = Plane::from_fn(size, size, |x, y| {
        c.iter()
            .any(|&(cx, cy)| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= 4.0) as u8
            as f32
    });
    (binary, centroid, c)
}

/// Label map with label 1 on every pixel whose center lies inside the
/// ellipse with semi-axes `a >= b` rotated by `theta` about `(cx, cy)`.
pub fn ellipse_map(size: usize, cx: f64, cy: f64, a: f64, b: f64, theta: f64) -> LabelMap {
    let (s, c) = theta.sin_cos();
    let labels = (0..size * size)
        .map(|i| {
            let (dx, dy) = ((i % size) as f64 - cx, (i / size) as f64 - cy);
            let (u, v) = (dx * c + dy * s, dy * c - dx * s);
            ((u / a).powi(2) + (v / b).powi(2) <= 1.0) as u32
        })
        .collect();
    LabelMap::new(size, size, labels).unwrap()
}

pub fn random_mask(rng: &mut impl Rng, w: usize, h: usize, density: f64) -> BinaryMask {
    BinaryMask::from_fn(w, h, |_, _| rng.random_bool(density))
}

pub fn random_plane(rng: &mut impl Rng, w: usize, h: usize) -> Plane {
    // Blobby fields: sums of a few random bumps, so masks have structure.
    let bumps: Vec<(f64, f64, f64)> = (0..rng.random_range(1..8))
        .map(|_| {
            (
                rng.random_range(0.0..w as f64),
                rng.random_range(0.0..h as f64),
                rng.random_range(2.0..8.0),
            )
        })
        .collect();
    Plane::from_fn(w, h, |x, y| {
        let v: f64 = bumps
            .iter()
            .map(|&(cx, cy, s)| (-((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)) / (2.0 * s * s)).exp())
            .sum();
        v.min(1.0) as f32
    })
}

/// Fraction of `tv_mse_loss` contributed by the TV term at weight `alpha`.
pub fn tv_share(y: &Tensor<f64>, x: &Tensor<f64>, alpha: f64) -> f64 {
    let term = eval(y, |t, v| tv_mse_loss(t, v, x, 1.0)).unwrap();
    let total = eval(y, |t, v| tv_mse_loss(t, v, x, alpha)).unwrap();
    alpha * term / total
}
