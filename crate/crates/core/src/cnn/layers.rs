//! Tensor type and the forward/backward kernels of each layer kind.

use super::CnnError;
use num_traits::Float;
use std::fmt::Debug;
use std::iter::Sum;
use std::ops::AddAssign;

/// Scalar type the network can run in (f32 for training, f64 for checks).
pub trait Real: Float + AddAssign + Sum + Debug + Default + Send + Sync + 'static {
    fn of(v: f64) -> Self {
        Self::from(v).expect("representable constant")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Height × width × channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Shape {
    pub const fn new(h: usize, w: usize, c: usize) -> Self {
        Shape { h, w, c }
    }

    pub const fn flat(n: usize) -> Self {
        Shape { h: 1, w: 1, c: n }
    }

    pub fn len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.h, self.w, self.c)
    }
}

/// Dense HWC tensor, channel fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    pub shape: Shape,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![T::zero(); shape.len()],
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self, CnnError> {
        if data.len() != shape.len() {
            return Err(CnnError::ShapeMismatch(format!(
                "{} values for shape {shape}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> T {
        self.data[(y * self.shape.w + x) * self.shape.c + c]
    }
}

/// Same-padded 2-D convolution.
///
/// `kernels` is laid out `[ky][kx][c][f]`, `bias` has one entry per filter.
pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    kernel: usize,
    filters: usize,
    kernels: &[T],
    bias: &[T],
) -> Result<Tensor<T>, CnnError> {
    let Shape { h, w, c } = input.shape;
    if kernel.is_multiple_of(2)
        || kernels.len() != kernel * kernel * c * filters
        || bias.len() != filters
    {
        return Err(CnnError::ShapeMismatch(format!(
            "conv {kernel}x{kernel}x{c}x{filters} with {} weights and {} biases",
            kernels.len(),
            bias.len()
        )));
    }
    let pad = (kernel / 2) as isize;
    let mut out = Tensor::zeros(Shape::new(h, w, filters));
    for y in 0..h {
        for x in 0..w {
            let o = &mut out.data[(y * w + x) * filters..(y * w + x + 1) * filters];
            o.copy_from_slice(bias);
            for ky in 0..kernel {
                let iy = y as isize + ky as isize - pad;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..kernel {
                    let ix = x as isize + kx as isize - pad;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let base_in = (iy as usize * w + ix as usize) * c;
                    for ch in 0..c {
                        let v = input.data[base_in + ch];
                        let wbase = ((ky * kernel + kx) * c + ch) * filters;
                        for (of, &wf) in o.iter_mut().zip(&kernels[wbase..wbase + filters]) {
                            *of += v * wf;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Accumulates kernel and bias gradients; returns the input gradient when
/// `want_input_grad` is set.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    grad_out: &Tensor<T>,
    kernel: usize,
    kernels: &[T],
    grad_kernels: &mut [T],
    grad_bias: &mut [T],
    want_input_grad: bool,
) -> Option<Tensor<T>> {
    let Shape { h, w, c } = input.shape;
    let filters = grad_out.shape.c;
    let pad = (kernel / 2) as isize;
    let mut grad_in = want_input_grad.then(|| Tensor::zeros(input.shape));
    for y in 0..h {
        for x in 0..w {
            let g = &grad_out.data[(y * w + x) * filters..(y * w + x + 1) * filters];
            for (gb, &gv) in grad_bias.iter_mut().zip(g) {
                *gb += gv;
            }
            for ky in 0..kernel {
                let iy = y as isize + ky as isize - pad;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..kernel {
                    let ix = x as isize + kx as isize - pad;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let base_in = (iy as usize * w + ix as usize) * c;
                    for ch in 0..c {
                        let v = input.data[base_in + ch];
                        let wbase = ((ky * kernel + kx) * c + ch) * filters;
                        let gk = &mut grad_kernels[wbase..wbase + filters];
                        for (gkf, &gv) in gk.iter_mut().zip(g) {
                            *gkf += v * gv;
                        }
                        if let Some(gi) = grad_in.as_mut() {
                            let s: T = kernels[wbase..wbase + filters]
                                .iter()
                                .zip(g)
                                .map(|(&wf, &gv)| wf * gv)
                                .sum();
                            gi.data[base_in + ch] += s;
                        }
                    }
                }
            }
        }
    }
    grad_in
}

/// 2×2 max pooling with stride 2. Returns the pooled tensor and, per output
/// element, the flat input index of its maximum (first maximum on ties).
pub fn maxpool2d_forward<T: Real>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>), CnnError> {
    let Shape { h, w, c } = input.shape;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(CnnError::OddDimension(input.shape));
    }
    let out_shape = Shape::new(h / 2, w / 2, c);
    let mut out = Tensor::zeros(out_shape);
    let mut argmax = vec![0usize; out_shape.len()];
    for oy in 0..h / 2 {
        for ox in 0..w / 2 {
            for ch in 0..c {
                let mut best_idx = (2 * oy * w + 2 * ox) * c + ch;
                let mut best = input.data[best_idx];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = ((2 * oy + dy) * w + 2 * ox + dx) * c + ch;
                    if input.data[idx] > best {
                        best = input.data[idx];
                        best_idx = idx;
                    }
                }
                let o = (oy * (w / 2) + ox) * c + ch;
                out.data[o] = best;
                argmax[o] = best_idx;
            }
        }
    }
    Ok((out, argmax))
}

pub fn maxpool2d_backward<T: Real>(
    input_shape: Shape,
    grad_out: &Tensor<T>,
    argmax: &[usize],
) -> Tensor<T> {
    let mut grad_in = Tensor::zeros(input_shape);
    for (&g, &idx) in grad_out.data.iter().zip(argmax) {
        grad_in.data[idx] += g;
    }
    grad_in
}

/// `out = inputᵀ·W + b` with `weights` laid out `[n][m]`.
pub fn dense_forward<T: Real>(input: &[T], weights: &[T], bias: &[T]) -> Result<Vec<T>, CnnError> {
    let (n, m) = (input.len(), bias.len());
    if weights.len() != n * m {
        return Err(CnnError::ShapeMismatch(format!(
            "dense {n}->{m} with {} weights",
            weights.len()
        )));
    }
    let mut out = bias.to_vec();
    for (i, &v) in input.iter().enumerate() {
        if v == T::zero() {
            continue;
        }
        for (o, &wv) in out.iter_mut().zip(&weights[i * m..(i + 1) * m]) {
            *o += v * wv;
        }
    }
    Ok(out)
}

pub fn dense_backward<T: Real>(
    input: &[T],
    grad_out: &[T],
    weights: &[T],
    grad_weights: &mut [T],
    grad_bias: &mut [T],
    want_input_grad: bool,
) -> Option<Vec<T>> {
    let m = grad_out.len();
    for (gb, &g) in grad_bias.iter_mut().zip(grad_out) {
        *gb += g;
    }
    for (i, &v) in input.iter().enumerate() {
        for (gw, &g) in grad_weights[i * m..(i + 1) * m].iter_mut().zip(grad_out) {
            *gw += v * g;
        }
    }
    want_input_grad.then(|| {
        (0..input.len())
            .map(|i| {
                weights[i * m..(i + 1) * m]
                    .iter()
                    .zip(grad_out)
                    .map(|(&wv, &g)| wv * g)
                    .sum()
            })
            .collect()
    })
}

/// Max-shifted softmax and the cross-entropy of `true_class`.
pub fn softmax_cross_entropy<T: Real>(logits: &[T], true_class: usize) -> (Vec<T>, T) {
    let probs = softmax(logits);
    let loss = -probs[true_class].ln();
    (probs, loss)
}

pub fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}
