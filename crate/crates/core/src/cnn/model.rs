//! Layer stacks, shape checking, forward traces and reverse-mode gradients.

use super::layers::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, maxpool2d_backward,
    maxpool2d_forward, softmax, softmax_cross_entropy, Real, Shape, Tensor,
};
use super::CnnError;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::fmt;
use std::str::FromStr;

/// Parameter-free description of one layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerSpec {
    /// Same-padded convolution with an odd square kernel.
    Conv {
        kernel: usize,
        filters: usize,
    },
    Relu,
    MaxPool,
    Flatten,
    Dense {
        units: usize,
    },
    /// Inverted dropout; its rate comes from the training configuration.
    Dropout,
    Softmax,
}

/// Input shape plus ordered layer list, written as e.g.
/// `input12x12x1,conv3x16,relu,pool2,flatten,dense3,softmax`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
}

impl Architecture {
    /// The 12×12 block classifier:
    /// conv 3×3×16 → ReLU → pool → conv 3×3×32 → ReLU → pool → dense 64 →
    /// ReLU → dropout → dense 3 → softmax.
    pub fn standard() -> Self {
        use LayerSpec::*;
        Architecture {
            input: Shape::new(12, 12, 1),
            layers: vec![
                Conv {
                    kernel: 3,
                    filters: 16,
                },
                Relu,
                MaxPool,
                Conv {
                    kernel: 3,
                    filters: 32,
                },
                Relu,
                MaxPool,
                Flatten,
                Dense { units: 64 },
                Relu,
                Dropout,
                Dense { units: 3 },
                Softmax,
            ],
        }
    }

    /// Output shape after every layer; fails if the chain does not close to
    /// a flat vector feeding a final softmax.
    pub fn output_shapes(&self) -> Result<Vec<Shape>, CnnError> {
        let broken =
            |i: usize, why: String| CnnError::ShapeChainBroken(format!("layer {i}: {why}"));
        if self.input.is_empty() {
            return Err(broken(0, "empty input shape".into()));
        }
        let mut shape = self.input;
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, spec) in self.layers.iter().enumerate() {
            shape = match *spec {
                LayerSpec::Conv { kernel, filters } => {
                    if kernel % 2 == 0 || filters == 0 {
                        return Err(broken(i, format!("conv {kernel}x{kernel}x{filters}")));
                    }
                    Shape::new(shape.h, shape.w, filters)
                }
                LayerSpec::MaxPool => {
                    if !shape.h.is_multiple_of(2) || !shape.w.is_multiple_of(2) {
                        return Err(broken(i, format!("cannot pool odd shape {shape}")));
                    }
                    Shape::new(shape.h / 2, shape.w / 2, shape.c)
                }
                LayerSpec::Flatten => Shape::flat(shape.len()),
                LayerSpec::Dense { units } => {
                    if shape.h != 1 || shape.w != 1 || units == 0 {
                        return Err(broken(i, format!("dense on unflattened {shape}")));
                    }
                    Shape::flat(units)
                }
                LayerSpec::Softmax => {
                    if i + 1 != self.layers.len() || shape.h != 1 || shape.w != 1 {
                        return Err(broken(
                            i,
                            "softmax must be the final layer on a vector".into(),
                        ));
                    }
                    shape
                }
                LayerSpec::Relu | LayerSpec::Dropout => shape,
            };
            shapes.push(shape);
        }
        if self.layers.last() != Some(&LayerSpec::Softmax) {
            return Err(broken(
                self.layers.len(),
                "network must end in softmax".into(),
            ));
        }
        Ok(shapes)
    }

    pub fn output_classes(&self) -> Result<usize, CnnError> {
        Ok(self.output_shapes()?.last().map(Shape::len).unwrap_or(0))
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "input{}", self.input)?;
        for spec in &self.layers {
            match spec {
                LayerSpec::Conv { kernel, filters } => write!(f, ",conv{kernel}x{filters}")?,
                LayerSpec::Relu => f.write_str(",relu")?,
                LayerSpec::MaxPool => f.write_str(",pool2")?,
                LayerSpec::Flatten => f.write_str(",flatten")?,
                LayerSpec::Dense { units } => write!(f, ",dense{units}")?,
                LayerSpec::Dropout => f.write_str(",dropout")?,
                LayerSpec::Softmax => f.write_str(",softmax")?,
            }
        }
        Ok(())
    }
}

impl FromStr for Architecture {
    type Err = CnnError;

    fn from_str(s: &str) -> Result<Self, CnnError> {
        let bad = |tok: &str| CnnError::BadArchitecture(format!("unrecognised token {tok:?}"));
        let num = |tok: &str, v: &str| v.parse::<usize>().map_err(|_| bad(tok));
        let mut tokens = s.split(',').map(str::trim);
        let first = tokens.next().unwrap_or("");
        let dims: Vec<&str> = first
            .strip_prefix("input")
            .ok_or_else(|| bad(first))?
            .split('x')
            .collect();
        let [h, w, c] = dims[..] else {
            return Err(bad(first));
        };
        let input = Shape::new(num(first, h)?, num(first, w)?, num(first, c)?);
        let mut layers = Vec::new();
        for tok in tokens {
            let spec = match tok {
                "relu" => LayerSpec::Relu,
                "pool2" => LayerSpec::MaxPool,
                "flatten" => LayerSpec::Flatten,
                "dropout" => LayerSpec::Dropout,
                "softmax" => LayerSpec::Softmax,
                _ => {
                    if let Some(rest) = tok.strip_prefix("conv") {
                        let (k, f) = rest.split_once('x').ok_or_else(|| bad(tok))?;
                        LayerSpec::Conv {
                            kernel: num(tok, k)?,
                            filters: num(tok, f)?,
                        }
                    } else if let Some(rest) = tok.strip_prefix("dense") {
                        LayerSpec::Dense {
                            units: num(tok, rest)?,
                        }
                    } else {
                        return Err(bad(tok));
                    }
                }
            };
            layers.push(spec);
        }
        let arch = Architecture { input, layers };
        arch.output_shapes()?;
        Ok(arch)
    }
}

/// A layer together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T> {
    Conv2d {
        kernel: usize,
        in_channels: usize,
        filters: usize,
        /// `[ky][kx][c][f]`
        weights: Vec<T>,
        bias: Vec<T>,
    },
    Relu,
    MaxPool2,
    Flatten,
    Dense {
        inputs: usize,
        outputs: usize,
        /// `[input][output]`
        weights: Vec<T>,
        bias: Vec<T>,
    },
    Dropout {
        rate: f64,
    },
    Softmax,
}

impl<T> Layer<T> {
    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv2d {
                kernel, filters, ..
            } => LayerSpec::Conv {
                kernel: *kernel,
                filters: *filters,
            },
            Layer::Relu => LayerSpec::Relu,
            Layer::MaxPool2 => LayerSpec::MaxPool,
            Layer::Flatten => LayerSpec::Flatten,
            Layer::Dense { outputs, .. } => LayerSpec::Dense { units: *outputs },
            Layer::Dropout { .. } => LayerSpec::Dropout,
            Layer::Softmax => LayerSpec::Softmax,
        }
    }

    fn param_count(&self) -> usize {
        match self {
            Layer::Conv2d { .. } | Layer::Dense { .. } => 2,
            _ => 0,
        }
    }
}

/// Per-tensor gradients, aligned with [`CnnModel::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct Grads<T> {
    pub tensors: Vec<Vec<T>>,
}

impl<T: Real> Grads<T> {
    pub fn zeros_like(model: &CnnModel<T>) -> Self {
        Grads {
            tensors: model
                .params()
                .iter()
                .map(|p| vec![T::zero(); p.len()])
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Grads<T>) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, &y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for t in &mut self.tensors {
            for x in t.iter_mut() {
                *x = *x * s;
            }
        }
    }
}

enum Aux<T> {
    None,
    Argmax(Vec<usize>),
    Mask(Vec<T>),
}

/// Intermediate values of one forward pass, kept for backpropagation.
pub struct Trace<T> {
    /// `inputs[i]` is the input of layer `i`.
    inputs: Vec<Tensor<T>>,
    aux: Vec<Aux<T>>,
    pub logits: Vec<T>,
}

/// Ordered layer stack.
#[derive(Clone, Debug, PartialEq)]
pub struct CnnModel<T> {
    pub input: Shape,
    pub layers: Vec<Layer<T>>,
}

impl<T: Real> CnnModel<T> {
    /// All parameters zero.
    pub fn zeros(arch: &Architecture, dropout_rate: f64) -> Result<Self, CnnError> {
        Self::build(arch, dropout_rate, |_, n| vec![T::zero(); n])
    }

    /// He-normal weights (std `sqrt(2 / fan_in)`), zero biases.
    pub fn he_init(
        arch: &Architecture,
        dropout_rate: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, CnnError> {
        Self::build(arch, dropout_rate, |fan_in, n| {
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            (0..n).map(|_| T::of(normal.sample(rng))).collect()
        })
    }

    fn build(
        arch: &Architecture,
        dropout_rate: f64,
        mut weights: impl FnMut(usize, usize) -> Vec<T>,
    ) -> Result<Self, CnnError> {
        if !(0.0..1.0).contains(&dropout_rate) {
            return Err(CnnError::InvalidConfig(format!(
                "dropout rate {dropout_rate} outside [0, 1)"
            )));
        }
        let shapes = arch.output_shapes()?;
        let mut prev = arch.input;
        let mut layers = Vec::with_capacity(arch.layers.len());
        for (spec, &out) in arch.layers.iter().zip(&shapes) {
            layers.push(match *spec {
                LayerSpec::Conv { kernel, filters } => {
                    let fan_in = kernel * kernel * prev.c;
                    Layer::Conv2d {
                        kernel,
                        in_channels: prev.c,
                        filters,
                        weights: weights(fan_in, fan_in * filters),
                        bias: vec![T::zero(); filters],
                    }
                }
                LayerSpec::Dense { units } => Layer::Dense {
                    inputs: prev.c,
                    outputs: units,
                    weights: weights(prev.c, prev.c * units),
                    bias: vec![T::zero(); units],
                },
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::MaxPool => Layer::MaxPool2,
                LayerSpec::Flatten => Layer::Flatten,
                LayerSpec::Dropout => Layer::Dropout { rate: dropout_rate },
                LayerSpec::Softmax => Layer::Softmax,
            });
            prev = out;
        }
        Ok(CnnModel {
            input: arch.input,
            layers,
        })
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            input: self.input,
            layers: self.layers.iter().map(Layer::spec).collect(),
        }
    }

    /// Checks the shape chain, parameter lengths and finiteness.
    pub fn validate(&self) -> Result<(), CnnError> {
        let arch = self.architecture();
        let shapes = arch.output_shapes()?;
        let mut prev = self.input;
        for (i, (layer, &out)) in self.layers.iter().zip(&shapes).enumerate() {
            let ok = match layer {
                Layer::Conv2d {
                    kernel,
                    in_channels,
                    filters,
                    weights,
                    bias,
                } => {
                    *in_channels == prev.c
                        && weights.len() == kernel * kernel * in_channels * filters
                        && bias.len() == *filters
                }
                Layer::Dense {
                    inputs,
                    outputs,
                    weights,
                    bias,
                } => {
                    *inputs == prev.c && weights.len() == inputs * outputs && bias.len() == *outputs
                }
                Layer::Dropout { rate } => (0.0..1.0).contains(rate),
                _ => true,
            };
            if !ok {
                return Err(CnnError::ShapeChainBroken(format!(
                    "layer {i} parameters do not match input {prev}"
                )));
            }
            prev = out;
        }
        if self
            .params()
            .iter()
            .any(|p| p.iter().any(|v| !v.is_finite()))
        {
            return Err(CnnError::NonFiniteParameter);
        }
        Ok(())
    }

    pub fn params(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|l| match l {
                Layer::Conv2d { weights, bias, .. } | Layer::Dense { weights, bias, .. } => {
                    vec![weights.as_slice(), bias.as_slice()]
                }
                _ => vec![],
            })
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Vec<T>> {
        self.layers
            .iter_mut()
            .flat_map(|l| match l {
                Layer::Conv2d { weights, bias, .. } | Layer::Dense { weights, bias, .. } => {
                    vec![weights, bias]
                }
                _ => vec![],
            })
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> CnnModel<U> {
        let conv = |v: &Vec<T>| v.iter().map(|x| U::of(x.to_f64().unwrap())).collect();
        CnnModel {
            input: self.input,
            layers: self
                .layers
                .iter()
                .map(|l| match l {
                    Layer::Conv2d {
                        kernel,
                        in_channels,
                        filters,
                        weights,
                        bias,
                    } => Layer::Conv2d {
                        kernel: *kernel,
                        in_channels: *in_channels,
                        filters: *filters,
                        weights: conv(weights),
                        bias: conv(bias),
                    },
                    Layer::Dense {
                        inputs,
                        outputs,
                        weights,
                        bias,
                    } => Layer::Dense {
                        inputs: *inputs,
                        outputs: *outputs,
                        weights: conv(weights),
                        bias: conv(bias),
                    },
                    Layer::Relu => Layer::Relu,
                    Layer::MaxPool2 => Layer::MaxPool2,
                    Layer::Flatten => Layer::Flatten,
                    Layer::Dropout { rate } => Layer::Dropout { rate: *rate },
                    Layer::Softmax => Layer::Softmax,
                })
                .collect(),
        }
    }

    /// Runs every layer before the softmax. With `dropout` set, dropout
    /// layers draw their masks from it; otherwise they are the identity.
    pub fn forward_trace(
        &self,
        input: &Tensor<T>,
        mut dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<Trace<T>, CnnError> {
        if input.shape != self.input {
            return Err(CnnError::ShapeMismatch(format!(
                "input {} but the model expects {}",
                input.shape, self.input
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut aux = Vec::with_capacity(self.layers.len());
        let mut x = input.clone();
        for layer in &self.layers {
            let (next, a) = match layer {
                Layer::Conv2d {
                    kernel,
                    filters,
                    weights,
                    bias,
                    ..
                } => (
                    conv2d_forward(&x, *kernel, *filters, weights, bias)?,
                    Aux::None,
                ),
                Layer::Relu => {
                    let data = x.data.iter().map(|&v| v.max(T::zero())).collect();
                    (
                        Tensor {
                            shape: x.shape,
                            data,
                        },
                        Aux::None,
                    )
                }
                Layer::MaxPool2 => {
                    let (out, arg) = maxpool2d_forward(&x)?;
                    (out, Aux::Argmax(arg))
                }
                Layer::Flatten => (
                    Tensor {
                        shape: Shape::flat(x.shape.len()),
                        data: x.data.clone(),
                    },
                    Aux::None,
                ),
                Layer::Dense {
                    outputs,
                    weights,
                    bias,
                    ..
                } => (
                    Tensor {
                        shape: Shape::flat(*outputs),
                        data: dense_forward(&x.data, weights, bias)?,
                    },
                    Aux::None,
                ),
                Layer::Dropout { rate } => match dropout.as_deref_mut() {
                    Some(rng) if *rate > 0.0 => {
                        let keep = T::of(1.0 / (1.0 - rate));
                        let mask: Vec<T> = (0..x.data.len())
                            .map(|_| {
                                if rng.random::<f64>() < *rate {
                                    T::zero()
                                } else {
                                    keep
                                }
                            })
                            .collect();
                        let data = x.data.iter().zip(&mask).map(|(&v, &m)| v * m).collect();
                        (
                            Tensor {
                                shape: x.shape,
                                data,
                            },
                            Aux::Mask(mask),
                        )
                    }
                    _ => (x.clone(), Aux::None),
                },
                Layer::Softmax => break,
            };
            inputs.push(std::mem::replace(&mut x, next));
            aux.push(a);
        }
        Ok(Trace {
            inputs,
            aux,
            logits: x.data,
        })
    }

    /// Class probabilities with dropout disabled.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Vec<T>, CnnError> {
        Ok(softmax(&self.forward_trace(input, None)?.logits))
    }

    /// Reverse pass from the gradient of the loss with respect to the logits.
    pub fn backward(&self, trace: &Trace<T>, grad_logits: &[T]) -> Grads<T> {
        let mut grads = Grads::zeros_like(self);
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut next = 0;
        for l in &self.layers {
            offsets.push(next);
            next += l.param_count();
        }
        let mut g = Tensor {
            shape: Shape::flat(grad_logits.len()),
            data: grad_logits.to_vec(),
        };
        for i in (0..trace.inputs.len()).rev() {
            let input = &trace.inputs[i];
            let want_input = i > 0;
            g = match &self.layers[i] {
                Layer::Conv2d {
                    kernel, weights, ..
                } => {
                    let (gk, gb) = grads.tensors[offsets[i]..].split_at_mut(1);
                    let gi = conv2d_backward(
                        input, &g, *kernel, weights, &mut gk[0], &mut gb[0], want_input,
                    );
                    match gi {
                        Some(t) => t,
                        None => break,
                    }
                }
                Layer::Dense { weights, .. } => {
                    let (gw, gb) = grads.tensors[offsets[i]..].split_at_mut(1);
                    match dense_backward(
                        &input.data,
                        &g.data,
                        weights,
                        &mut gw[0],
                        &mut gb[0],
                        want_input,
                    ) {
                        Some(d) => Tensor {
                            shape: input.shape,
                            data: d,
                        },
                        None => break,
                    }
                }
                Layer::Relu => Tensor {
                    shape: input.shape,
                    data: input
                        .data
                        .iter()
                        .zip(&g.data)
                        .map(|(&x, &gv)| if x > T::zero() { gv } else { T::zero() })
                        .collect(),
                },
                Layer::MaxPool2 => match &trace.aux[i] {
                    Aux::Argmax(arg) => maxpool2d_backward(input.shape, &g, arg),
                    _ => unreachable!("pool trace without argmax"),
                },
                Layer::Flatten => Tensor {
                    shape: input.shape,
                    data: g.data,
                },
                Layer::Dropout { .. } => match &trace.aux[i] {
                    Aux::Mask(mask) => Tensor {
                        shape: g.shape,
                        data: g.data.iter().zip(mask).map(|(&gv, &m)| gv * m).collect(),
                    },
                    _ => g,
                },
                Layer::Softmax => unreachable!("softmax is never traced"),
            };
        }
        grads
    }

    /// Loss, probabilities and parameter gradients for one labeled example.
    pub fn example_gradients(
        &self,
        input: &Tensor<T>,
        label: usize,
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<(T, Vec<T>, Grads<T>), CnnError> {
        let trace = self.forward_trace(input, dropout)?;
        if label >= trace.logits.len() {
            return Err(CnnError::ShapeMismatch(format!(
                "label {label} for {} outputs",
                trace.logits.len()
            )));
        }
        let (probs, loss) = softmax_cross_entropy(&trace.logits, label);
        let mut grad_logits = probs.clone();
        grad_logits[label] = grad_logits[label] - T::one();
        let grads = self.backward(&trace, &grad_logits);
        Ok((loss, probs, grads))
    }

    /// Cross-entropy of one example (dropout per `dropout`).
    pub fn loss(
        &self,
        input: &Tensor<T>,
        label: usize,
        dropout: Option<&mut ChaCha8Rng>,
    ) -> Result<T, CnnError> {
        let trace = self.forward_trace(input, dropout)?;
        Ok(softmax_cross_entropy(&trace.logits, label).1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn standard_shape_chain() {
        let shapes = Architecture::standard().output_shapes().unwrap();
        let lens: Vec<_> = shapes.iter().map(|s| (s.h, s.w, s.c)).collect();
        assert_eq!(
            lens,
            vec![
                (12, 12, 16),
                (12, 12, 16),
                (6, 6, 16),
                (6, 6, 32),
                (6, 6, 32),
                (3, 3, 32),
                (1, 1, 288),
                (1, 1, 64),
                (1, 1, 64),
                (1, 1, 64),
                (1, 1, 3),
                (1, 1, 3),
            ]
        );
        let model = CnnModel::<f32>::zeros(&Architecture::standard(), 0.5).unwrap();
        assert_eq!(
            model.parameter_count(),
            (9 * 16 + 16) + (9 * 16 * 32 + 32) + (288 * 64 + 64) + (64 * 3 + 3)
        );
        model.validate().unwrap();
    }

    #[test]
    fn architecture_text_round_trip() {
        let arch = Architecture::standard();
        let text = arch.to_string();
        assert_eq!(
            text,
            "input12x12x1,conv3x16,relu,pool2,conv3x32,relu,pool2,flatten,dense64,relu,dropout,dense3,softmax"
        );
        assert_eq!(text.parse::<Architecture>().unwrap(), arch);
    }

    #[test]
    fn broken_chains_rejected() {
        for bad in [
            "input12x12x1,flatten,dense3",
            "input12x12x1,dense3,softmax",
            "input6x6x1,pool2,pool2,flatten,dense3,softmax",
            "input12x12x1,softmax,flatten",
            "input12x12x1,conv2x4,flatten,dense3,softmax",
            "input12x12,flatten,dense3,softmax",
            "input12x12x1,bogus",
        ] {
            assert!(bad.parse::<Architecture>().is_err(), "{bad}");
        }
    }

    #[test]
    fn zero_model_bias_gradient_is_p_minus_onehot() {
        let model = CnnModel::<f64>::zeros(&Architecture::standard(), 0.5).unwrap();
        let input = Tensor::from_vec(Shape::new(12, 12, 1), vec![0.3; 144]).unwrap();
        let (loss, probs, grads) = model.example_gradients(&input, 1, None).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-12);
        let out_bias = grads.tensors.last().unwrap();
        for (k, &g) in out_bias.iter().enumerate() {
            let want = probs[k] - if k == 1 { 1.0 } else { 0.0 };
            assert!((g - want).abs() < 1e-15);
        }
    }

    #[test]
    fn dropout_is_identity_in_eval_and_scaled_in_training() {
        let arch: Architecture = "input1x1x4,dropout,dense2,softmax".parse().unwrap();
        let mut model = CnnModel::<f64>::zeros(&arch, 0.5).unwrap();
        if let Layer::Dense { weights, .. } = &mut model.layers[1] {
            weights.copy_from_slice(&[1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        }
        let input = Tensor::from_vec(Shape::flat(4), vec![1.0; 4]).unwrap();
        assert_eq!(
            model.forward_trace(&input, None).unwrap().logits,
            vec![4.0, 0.0]
        );
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let z = model.forward_trace(&input, Some(&mut rng)).unwrap().logits[0];
        // Each unit contributes 0 or 2.
        assert!(z == 0.0 || z == 2.0 || z == 4.0 || z == 6.0 || z == 8.0);
    }

    #[test]
    fn cast_round_trips_f32_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = CnnModel::<f32>::he_init(&Architecture::standard(), 0.5, &mut rng).unwrap();
        assert_eq!(m.cast::<f64>().cast::<f32>(), m);
    }
}
