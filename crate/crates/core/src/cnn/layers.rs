//! Layer kernels, generic over the scalar type so the same code runs in f32
//! for training and f64 for gradient verification.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub trait Real:
    Copy
    + Debug
    + Default
    + PartialOrd
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
}

impl Real for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn exp(self) -> Self {
        f32::exp(self)
    }
    fn ln(self) -> Self {
        f32::ln(self)
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
}

/// Channels × height × width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Stride-1 convolution with zero "same" padding; `kernel` must be odd.
    Conv {
        filters: usize,
        kernel: usize,
    },
    Relu,
    /// 2×2 max pooling with stride 2 (a trailing odd row/column is dropped).
    MaxPool,
    Dense {
        units: usize,
    },
    Dropout {
        rate: f64,
    },
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::Relu => "relu",
            LayerSpec::MaxPool => "maxpool",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Dropout { .. } => "dropout",
        }
    }

    /// Output shape and learnable parameter count for input `s`.
    pub fn output(&self, s: Shape) -> Result<(Shape, usize), String> {
        match *self {
            LayerSpec::Conv { filters, kernel } => {
                if filters == 0 || kernel % 2 == 0 {
                    return Err(format!(
                        "conv needs filters >= 1 and an odd kernel, got {filters}, {kernel}"
                    ));
                }
                Ok((
                    Shape { c: filters, ..s },
                    filters * s.c * kernel * kernel + filters,
                ))
            }
            LayerSpec::Relu => Ok((s, 0)),
            LayerSpec::MaxPool => {
                if s.h < 2 || s.w < 2 {
                    return Err(format!("cannot pool a {}x{} map", s.h, s.w));
                }
                Ok((
                    Shape {
                        c: s.c,
                        h: s.h / 2,
                        w: s.w / 2,
                    },
                    0,
                ))
            }
            LayerSpec::Dense { units } => {
                if units == 0 {
                    return Err("dense layer needs at least one unit".into());
                }
                Ok((
                    Shape {
                        c: units,
                        h: 1,
                        w: 1,
                    },
                    units * s.len() + units,
                ))
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(format!("dropout rate {rate} outside [0, 1)"));
                }
                Ok((s, 0))
            }
        }
    }
}

/// How dropout layers behave during a forward pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Masks drawn from a stream keyed by this seed and the layer index.
    Train(u64),
}

pub(crate) fn conv_forward<T: Real>(
    input: &[T],
    s: Shape,
    params: &[T],
    filters: usize,
    k: usize,
) -> Vec<T> {
    let (h, w, p) = (s.h as isize, s.w as isize, (k / 2) as isize);
    let nw = filters * s.c * k * k;
    let (weights, bias) = params.split_at(nw);
    let plane = s.h * s.w;
    let mut out = vec![T::default(); filters * plane];
    for o in 0..filters {
        let dst = &mut out[o * plane..(o + 1) * plane];
        dst.iter_mut().for_each(|v| *v = bias[o]);
        for c in 0..s.c {
            let src = &input[c * plane..(c + 1) * plane];
            for ky in 0..k as isize {
                let dy = ky - p;
                let (y0, y1) = ((-dy).max(0), (h - dy).min(h));
                for kx in 0..k as isize {
                    let dx = kx - p;
                    let (x0, x1) = ((-dx).max(0), (w - dx).min(w));
                    let wv = weights[((o * s.c + c) * k + ky as usize) * k + kx as usize];
                    let len = (x1 - x0).max(0) as usize;
                    for y in y0..y1 {
                        let d0 = (y * w + x0) as usize;
                        let s0 = ((y + dy) * w + x0 + dx) as usize;
                        for (d, &v) in dst[d0..d0 + len].iter_mut().zip(&src[s0..s0 + len]) {
                            *d += wv * v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Accumulates parameter gradients into `grad` and returns the input
/// gradient.
pub(crate) fn conv_backward<T: Real>(
    input: &[T],
    s: Shape,
    params: &[T],
    filters: usize,
    k: usize,
    dout: &[T],
    grad: &mut [T],
) -> Vec<T> {
    let (h, w, p) = (s.h as isize, s.w as isize, (k / 2) as isize);
    let nw = filters * s.c * k * k;
    let weights = &params[..nw];
    let plane = s.h * s.w;
    let mut din = vec![T::default(); input.len()];
    for o in 0..filters {
        let d = &dout[o * plane..(o + 1) * plane];
        let mut db = T::default();
        for &v in d {
            db += v;
        }
        grad[nw + o] += db;
        for c in 0..s.c {
            let src = &input[c * plane..(c + 1) * plane];
            let dsrc = &mut din[c * plane..(c + 1) * plane];
            for ky in 0..k as isize {
                let dy = ky - p;
                let (y0, y1) = ((-dy).max(0), (h - dy).min(h));
                for kx in 0..k as isize {
                    let dx = kx - p;
                    let (x0, x1) = ((-dx).max(0), (w - dx).min(w));
                    let wi = ((o * s.c + c) * k + ky as usize) * k + kx as usize;
                    let wv = weights[wi];
                    let mut gw = T::default();
                    let len = (x1 - x0).max(0) as usize;
                    for y in y0..y1 {
                        let d0 = (y * w + x0) as usize;
                        let s0 = ((y + dy) * w + x0 + dx) as usize;
                        for i in 0..len {
                            gw += d[d0 + i] * src[s0 + i];
                            dsrc[s0 + i] += d[d0 + i] * wv;
                        }
                    }
                    grad[wi] += gw;
                }
            }
        }
    }
    din
}

pub(crate) fn relu_forward<T: Real>(input: &[T]) -> Vec<T> {
    let zero = T::default();
    input
        .iter()
        .map(|&v| if v > zero { v } else { zero })
        .collect()
}

pub(crate) fn relu_backward<T: Real>(input: &[T], dout: &[T]) -> Vec<T> {
    let zero = T::default();
    input
        .iter()
        .zip(dout)
        .map(|(&x, &d)| if x > zero { d } else { zero })
        .collect()
}

/// Returns pooled values and, per output, the input index of its maximum
/// (first in scan order on ties).
pub(crate) fn pool_forward<T: Real>(input: &[T], s: Shape) -> (Vec<T>, Vec<u32>) {
    let (oh, ow) = (s.h / 2, s.w / 2);
    let mut out = Vec::with_capacity(s.c * oh * ow);
    let mut arg = Vec::with_capacity(s.c * oh * ow);
    for c in 0..s.c {
        for y in 0..oh {
            for x in 0..ow {
                let mut best = c * s.h * s.w + 2 * y * s.w + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = c * s.h * s.w + (2 * y + dy) * s.w + 2 * x + dx;
                    if input[i] > input[best] {
                        best = i;
                    }
                }
                out.push(input[best]);
                arg.push(best as u32);
            }
        }
    }
    (out, arg)
}

pub(crate) fn pool_backward<T: Real>(input_len: usize, arg: &[u32], dout: &[T]) -> Vec<T> {
    let mut din = vec![T::default(); input_len];
    for (&a, &d) in arg.iter().zip(dout) {
        din[a as usize] += d;
    }
    din
}

pub(crate) fn dense_forward<T: Real>(input: &[T], params: &[T], units: usize) -> Vec<T> {
    let n = input.len();
    let (weights, bias) = params.split_at(units * n);
    (0..units)
        .map(|j| {
            let mut acc = bias[j];
            for (wv, &x) in weights[j * n..(j + 1) * n].iter().zip(input) {
                acc += *wv * x;
            }
            acc
        })
        .collect()
}

pub(crate) fn dense_backward<T: Real>(
    input: &[T],
    params: &[T],
    units: usize,
    dout: &[T],
    grad: &mut [T],
) -> Vec<T> {
    let n = input.len();
    let mut din = vec![T::default(); n];
    for j in 0..units {
        let d = dout[j];
        grad[units * n + j] += d;
        let row = j * n;
        for i in 0..n {
            grad[row + i] += d * input[i];
            din[i] += d * params[row + i];
        }
    }
    din
}

/// Inverted-dropout mask: kept units are scaled by 1 / (1 − rate).
pub(crate) fn dropout_mask<T: Real>(len: usize, rate: f64, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = T::from_f64(1.0 / (1.0 - rate));
    (0..len)
        .map(|_| {
            if rng.random::<f64>() >= rate {
                keep
            } else {
                T::default()
            }
        })
        .collect()
}

/// Softmax over two logits, computed relative to the larger one.
pub fn softmax2<T: Real>(z: [T; 2]) -> [T; 2] {
    let m = if z[0] > z[1] { z[0] } else { z[1] };
    let e0 = (z[0] - m).exp();
    let e1 = (z[1] - m).exp();
    let s = e0 + e1;
    [e0 / s, e1 / s]
}
