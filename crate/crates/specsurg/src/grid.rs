//! Grids, quadrature weights and local interpolation.

use crate::matops::{c, CMat};

/// Uniform nodes `0, h, 2h, …` up to the first node at or beyond `x_end`.
pub fn uniform(x_end: f64, h: f64) -> Vec<f64> {
    assert!(h > 0.0 && x_end >= 0.0);
    let n = (x_end / h - 1e-9).ceil().max(1.0) as usize;
    (0..=n).map(|i| i as f64 * h).collect()
}

/// Index `i` with `xs[i] <= x < xs[i+1]`, clamped to `[0, len-2]`.
pub fn locate(xs: &[f64], x: f64) -> usize {
    let i = xs.partition_point(|&v| v <= x);
    i.saturating_sub(1).min(xs.len().saturating_sub(2))
}

/// Stencil start and weights for 4-point Lagrange interpolation at `x`.
pub fn lagrange4(xs: &[f64], x: f64) -> (usize, [f64; 4]) {
    lagrange::<4>(xs, x)
}

/// Stencil start and weights for `P`-point Lagrange interpolation at `x`,
/// centred on the interval containing `x` where the grid allows.
pub fn lagrange<const P: usize>(xs: &[f64], x: f64) -> (usize, [f64; P]) {
    let n = xs.len();
    assert!(n >= P, "interpolation needs at least {P} nodes");
    let i = locate(xs, x);
    let s = i.saturating_sub((P - 1) / 2).min(n - P);
    let mut w = [1.0; P];
    for a in 0..P {
        for b in 0..P {
            if a != b {
                w[a] *= (x - xs[s + b]) / (xs[s + a] - xs[s + b]);
            }
        }
    }
    (s, w)
}

/// [`lagrange`] on the uniform grid `0, h, 2h, …` with `len` nodes.
pub fn lagrange_uniform<const P: usize>(len: usize, h: f64, x: f64) -> (usize, [f64; P]) {
    assert!(len >= P, "interpolation needs at least {P} nodes");
    let t = x / h;
    let i = (t.floor().max(0.0) as usize).min(len - 2);
    let s = i.saturating_sub((P - 1) / 2).min(len - P);
    let u = t - s as f64;
    let mut w = [1.0; P];
    for a in 0..P {
        for b in 0..P {
            if a != b {
                w[a] *= (u - b as f64) / (a as f64 - b as f64);
            }
        }
    }
    (s, w)
}

/// Composite Simpson weights on arbitrary increasing nodes. An odd trailing
/// interval is handled with the quadratic through the last three nodes.
pub fn simpson_weights(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut w = vec![0.0; n];
    if n < 2 {
        return w;
    }
    if n == 2 {
        let h = xs[1] - xs[0];
        return vec![h / 2.0, h / 2.0];
    }
    let intervals = n - 1;
    let pairs = intervals / 2;
    for p in 0..pairs {
        let i = 2 * p;
        let h0 = xs[i + 1] - xs[i];
        let h1 = xs[i + 2] - xs[i + 1];
        let s = (h0 + h1) / 6.0;
        w[i] += s * (2.0 - h1 / h0);
        w[i + 1] += s * (h0 + h1) * (h0 + h1) / (h0 * h1);
        w[i + 2] += s * (2.0 - h0 / h1);
    }
    if intervals % 2 == 1 {
        let k = n - 1;
        let h0 = xs[k - 1] - xs[k - 2];
        let h1 = xs[k] - xs[k - 1];
        w[k] += (2.0 * h1 * h1 + 3.0 * h0 * h1) / (6.0 * (h0 + h1));
        w[k - 1] += (h1 * h1 + 3.0 * h0 * h1) / (6.0 * h0);
        w[k - 2] -= h1 * h1 * h1 / (6.0 * h0 * (h0 + h1));
    }
    w
}

/// `∫ f` by Simpson on the given nodes.
pub fn simpson(xs: &[f64], f: &[f64]) -> f64 {
    simpson_weights(xs).iter().zip(f).map(|(w, v)| w * v).sum()
}

/// Matrix version of [`simpson`].
pub fn simpson_mat(xs: &[f64], f: &[CMat]) -> CMat {
    let w = simpson_weights(xs);
    let mut acc = CMat::zeros(f[0].nrows(), f[0].ncols());
    for (wi, fi) in w.iter().zip(f) {
        acc += fi * c(*wi, 0.0);
    }
    acc
}

/// Cumulative `∫_{x_0}^{x_i} f` using the endpoint-corrected trapezoid rule
/// `h/2 (f₀+f₁) + h²/12 (f₀' − f₁')`, which is fourth order given exact
/// derivatives.
pub fn cumulative_forward(xs: &[f64], f: &[CMat], fp: &[CMat]) -> Vec<CMat> {
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = CMat::zeros(f[0].nrows(), f[0].ncols());
    out.push(acc.clone());
    for i in 0..xs.len() - 1 {
        acc += panel(xs[i + 1] - xs[i], &f[i], &f[i + 1], &fp[i], &fp[i + 1]);
        out.push(acc.clone());
    }
    out
}

/// Cumulative `∫_{x_i}^{x_last} f`, same rule, accumulated from the right end.
pub fn cumulative_backward(xs: &[f64], f: &[CMat], fp: &[CMat]) -> Vec<CMat> {
    let n = xs.len();
    let mut out = vec![CMat::zeros(f[0].nrows(), f[0].ncols()); n];
    for i in (0..n - 1).rev() {
        out[i] = &out[i + 1] + panel(xs[i + 1] - xs[i], &f[i], &f[i + 1], &fp[i], &fp[i + 1]);
    }
    out
}

fn panel(h: f64, f0: &CMat, f1: &CMat, d0: &CMat, d1: &CMat) -> CMat {
    (f0 + f1) * c(h / 2.0, 0.0) + (d0 - d1) * c(h * h / 12.0, 0.0)
}
