//! A small dense CNN engine: the layer kinds needed by the tracker networks,
//! each with an explicit forward and backward pass, plus plain SGD.

mod conv;
mod gemm;
mod layers;
mod loss;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use conv::{conv2d_backward, conv2d_backward_params, conv2d_forward, conv_out_extent};
pub use layers::{
    dropout_backward, dropout_forward, linear_backward, linear_forward, lrn_backward, lrn_forward,
    maxpool_backward, maxpool_forward, relu_backward, relu_forward, softmax_backward,
    softmax_forward, LrnParams, PoolOutput,
};
pub use loss::softmax_cross_entropy;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Learnable weights and biases of one layer, with gradient accumulators of
/// identical shape.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Tensor,
    pub bias: Tensor,
    pub weight_grad: Tensor,
    pub bias_grad: Tensor,
}

impl LayerParams {
    pub fn new(weights: Tensor, bias: Tensor) -> Self {
        let weight_grad = Tensor::zeros(weights.shape());
        let bias_grad = Tensor::zeros(bias.shape());
        LayerParams {
            weights,
            bias,
            weight_grad,
            bias_grad,
        }
    }

    pub fn zero_grad(&mut self) {
        self.weight_grad.fill(0.0);
        self.bias_grad.fill(0.0);
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

/// `out = xᵀ x` for a row-major `n × d` matrix `x`.
pub(crate) fn gram(n: usize, d: usize, x: &[f64], out: &mut [f64]) {
    gemm::gemm(d, n, d, 1.0, x, true, x, false, 0.0, out);
}

/// Applies `p -= lr * grad` to every parameter, then zeroes the gradients.
///
/// Nothing is modified if any gradient is non-finite.
pub fn sgd_step<'a, I>(params: I, learning_rate: f64) -> Result<()>
where
    I: IntoIterator<Item = &'a mut LayerParams>,
{
    let mut params: Vec<&mut LayerParams> = params.into_iter().collect();
    for (i, p) in params.iter().enumerate() {
        if !p.weight_grad.all_finite() || !p.bias_grad.all_finite() {
            return Err(Error::NonFinite(format!(
                "gradient of parameter group {i} (weights {:?})",
                p.weights.shape()
            )));
        }
    }
    for p in params.iter_mut() {
        let LayerParams {
            weights,
            bias,
            weight_grad,
            bias_grad,
        } = &mut **p;
        for (w, g) in weights.data_mut().iter_mut().zip(weight_grad.data()) {
            *w -= learning_rate * g;
        }
        for (b, g) in bias.data_mut().iter_mut().zip(bias_grad.data()) {
            *b -= learning_rate * g;
        }
        p.zero_grad();
    }
    Ok(())
}

/// SGD with heavy-ball momentum: `v = μ·v + grad; p -= lr·v`.
///
/// Velocities are matched to parameter groups by position, so a given
/// optimizer must always be stepped with the same parameter list. With
/// `μ = 0` this is exactly [`sgd_step`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Momentum {
    pub momentum: f64,
    velocity: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Momentum {
    pub fn new(momentum: f64) -> Self {
        Momentum {
            momentum,
            velocity: Vec::new(),
        }
    }

    pub fn step<'a, I>(&mut self, params: I, learning_rate: f64) -> Result<()>
    where
        I: IntoIterator<Item = &'a mut LayerParams>,
    {
        let mut params: Vec<&mut LayerParams> = params.into_iter().collect();
        if self.momentum == 0.0 {
            return sgd_step(params, learning_rate);
        }
        for (i, p) in params.iter().enumerate() {
            if !p.weight_grad.all_finite() || !p.bias_grad.all_finite() {
                return Err(Error::NonFinite(format!(
                    "gradient of parameter group {i} (weights {:?})",
                    p.weights.shape()
                )));
            }
        }
        if self.velocity.is_empty() {
            self.velocity = params
                .iter()
                .map(|p| (vec![0.0; p.weights.len()], vec![0.0; p.bias.len()]))
                .collect();
        }
        if self.velocity.len() != params.len()
            || self
                .velocity
                .iter()
                .zip(&params)
                .any(|(v, p)| v.0.len() != p.weights.len() || v.1.len() != p.bias.len())
        {
            return Err(Error::invalid("optimizer stepped with a different parameter list"));
        }
        let mu = self.momentum;
        for (p, (vw, vb)) in params.iter_mut().zip(self.velocity.iter_mut()) {
            let LayerParams {
                weights,
                bias,
                weight_grad,
                bias_grad,
            } = &mut **p;
            for ((w, g), v) in weights.data_mut().iter_mut().zip(weight_grad.data()).zip(vw.iter_mut()) {
                *v = mu * *v + g;
                *w -= learning_rate * *v;
            }
            for ((b, g), v) in bias.data_mut().iter_mut().zip(bias_grad.data()).zip(vb.iter_mut()) {
                *v = mu * *v + g;
                *b -= learning_rate * *v;
            }
            p.zero_grad();
        }
        Ok(())
    }
}

/// One layer of a sequential network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Relu,
    Lrn(LrnParams),
    #[serde(rename = "maxpool")]
    MaxPool {
        window: usize,
        stride: usize,
    },
    Linear {
        out_features: usize,
    },
    Dropout {
        rate: f64,
    },
    Softmax,
}

impl LayerSpec {
    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv { .. } | LayerSpec::Linear { .. })
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match *self {
            LayerSpec::Conv {
                out_channels,
                kernel,
                stride,
                pad,
            } => {
                let [_, h, w] = *input else {
                    return Err(Error::shape("conv", format!("needs C×H×W, got {input:?}")));
                };
                if out_channels == 0 {
                    return Err(Error::invalid("conv layer with zero output channels"));
                }
                match (
                    conv_out_extent(h, kernel, stride, pad),
                    conv_out_extent(w, kernel, stride, pad),
                ) {
                    (Some(oh), Some(ow)) => Ok(vec![out_channels, oh, ow]),
                    _ => Err(Error::shape(
                        "conv",
                        format!("kernel {kernel} stride {stride} pad {pad} does not fit {h}×{w}"),
                    )),
                }
            }
            LayerSpec::MaxPool { window, stride } => {
                let [c, h, w] = *input else {
                    return Err(Error::shape("maxpool", format!("needs C×H×W, got {input:?}")));
                };
                match (
                    conv_out_extent(h, window, stride, 0),
                    conv_out_extent(w, window, stride, 0),
                ) {
                    (Some(oh), Some(ow)) => Ok(vec![c, oh, ow]),
                    _ => Err(Error::shape(
                        "maxpool",
                        format!("window {window} stride {stride} does not fit {h}×{w}"),
                    )),
                }
            }
            LayerSpec::Lrn(p) => {
                if input.len() != 3 || p.n == 0 {
                    return Err(Error::shape("lrn", format!("needs C×H×W and n ≥ 1, got {input:?}")));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Linear { out_features } => {
                if out_features == 0 {
                    return Err(Error::invalid("linear layer with zero outputs"));
                }
                Ok(vec![out_features])
            }
            LayerSpec::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
                }
                Ok(input.to_vec())
            }
            LayerSpec::Relu | LayerSpec::Softmax => Ok(input.to_vec()),
        }
    }

    /// Parameter shapes `(weights, bias)` for a per-sample input shape.
    pub fn param_shapes(&self, input: &[usize]) -> Option<(Vec<usize>, Vec<usize>)> {
        match *self {
            LayerSpec::Conv {
                out_channels,
                kernel,
                ..
            } => Some((
                vec![out_channels, input[0], kernel, kernel],
                vec![out_channels],
            )),
            LayerSpec::Linear { out_features } => Some((
                vec![out_features, input.iter().product()],
                vec![out_features],
            )),
            _ => None,
        }
    }
}

/// Weight initialization scheme. Biases always start at zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum Init {
    /// Zero-mean Gaussian with a fixed standard deviation.
    Gaussian { std: f64 },
    /// Zero-mean Gaussian with variance `2 / fan_in`.
    He,
}

impl Init {
    fn std(&self, fan_in: usize) -> f64 {
        match *self {
            Init::Gaussian { std } => std,
            Init::He => (2.0 / fan_in.max(1) as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub params: Option<LayerParams>,
}

enum Cache {
    Conv(Tensor),
    Relu(Tensor),
    Lrn { input: Tensor, scale: Tensor },
    Pool { input_shape: Vec<usize>, argmax: Vec<usize> },
    Linear(Tensor),
    Dropout(Option<Vec<f64>>),
    Softmax(Tensor),
}

/// Activations recorded by [`Sequential::forward_train`] for the backward pass.
pub struct Tape {
    caches: Vec<Cache>,
}

/// A feed-forward chain of layers operating on batches.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequential {
    layers: Vec<Layer>,
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
}

impl Sequential {
    /// Builds and initializes a chain for per-sample inputs of `input_shape`.
    pub fn new<R: Rng + ?Sized>(
        specs: &[LayerSpec],
        input_shape: &[usize],
        init: Init,
        rng: &mut R,
    ) -> Result<Self> {
        let mut shape = input_shape.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            let params = spec.param_shapes(&shape).map(|(ws, bs)| {
                let fan_in: usize = ws[1..].iter().product();
                LayerParams::new(Tensor::randn(&ws, init.std(fan_in), rng), Tensor::zeros(&bs))
            });
            shape = spec.output_shape(&shape)?;
            layers.push(Layer {
                spec: *spec,
                params,
            });
        }
        Ok(Sequential {
            layers,
            input_shape: input_shape.to_vec(),
            output_shape: shape,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub fn output_len(&self) -> usize {
        self.output_shape.iter().product()
    }

    pub fn params(&self) -> impl Iterator<Item = &LayerParams> {
        self.layers.iter().filter_map(|l| l.params.as_ref())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut LayerParams> {
        self.layers.iter_mut().filter_map(|l| l.params.as_mut())
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().for_each(LayerParams::zero_grad);
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.ndim() != self.input_shape.len() + 1 || x.shape()[1..] != self.input_shape[..] {
            return Err(Error::shape(
                "sequential",
                format!(
                    "batch {:?} does not match per-sample input {:?}",
                    x.shape(),
                    self.input_shape
                ),
            ));
        }
        Ok(())
    }

    /// Inference pass; dropout is the identity.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = match (&layer.spec, &layer.params) {
                (LayerSpec::Conv { stride, pad, .. }, Some(p)) => {
                    conv2d_forward(&cur, p, *stride, *pad)?
                }
                (LayerSpec::Linear { .. }, Some(p)) => linear_forward(&cur, p)?,
                (LayerSpec::Relu, _) => relu_forward(&cur),
                (LayerSpec::Lrn(p), _) => lrn_forward(&cur, p)?.0,
                (LayerSpec::MaxPool { window, stride }, _) => {
                    maxpool_forward(&cur, *window, *stride)?.output
                }
                (LayerSpec::Dropout { .. }, _) => cur,
                (LayerSpec::Softmax, _) => softmax_forward(&cur),
                (spec, None) => unreachable!("{spec:?} built without parameters"),
            };
        }
        Ok(cur)
    }

    /// Training pass: dropout is active and activations are recorded.
    pub fn forward_train<R: Rng + ?Sized>(&self, x: &Tensor, rng: &mut R) -> Result<(Tensor, Tape)> {
        self.check_input(x)?;
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut cur = x.clone();
        for layer in &self.layers {
            let (next, cache) = match (&layer.spec, &layer.params) {
                (LayerSpec::Conv { stride, pad, .. }, Some(p)) => {
                    (conv2d_forward(&cur, p, *stride, *pad)?, Cache::Conv(cur))
                }
                (LayerSpec::Linear { .. }, Some(p)) => (linear_forward(&cur, p)?, Cache::Linear(cur)),
                (LayerSpec::Relu, _) => (relu_forward(&cur), Cache::Relu(cur)),
                (LayerSpec::Lrn(p), _) => {
                    let (out, scale) = lrn_forward(&cur, p)?;
                    (out, Cache::Lrn { input: cur, scale })
                }
                (LayerSpec::MaxPool { window, stride }, _) => {
                    let PoolOutput { output, argmax } = maxpool_forward(&cur, *window, *stride)?;
                    let input_shape = cur.shape().to_vec();
                    (output, Cache::Pool { input_shape, argmax })
                }
                (LayerSpec::Dropout { rate }, _) => {
                    let (out, mask) = dropout_forward(&cur, *rate, true, rng)?;
                    (out, Cache::Dropout(mask))
                }
                (LayerSpec::Softmax, _) => {
                    let out = softmax_forward(&cur);
                    (out.clone(), Cache::Softmax(out))
                }
                (spec, None) => unreachable!("{spec:?} built without parameters"),
            };
            caches.push(cache);
            cur = next;
        }
        Ok((cur, Tape { caches }))
    }

    /// Accumulates parameter gradients for `upstream` (the gradient of the
    /// loss with respect to the output of `forward_train`). Returns the input
    /// gradient when `want_input_grad` is set.
    pub fn backward(
        &mut self,
        tape: Tape,
        upstream: Tensor,
        want_input_grad: bool,
    ) -> Result<Option<Tensor>> {
        if tape.caches.len() != self.layers.len() {
            return Err(Error::invalid("tape was recorded by a different network"));
        }
        let mut grad = upstream;
        let last = self.layers.len();
        for (i, (layer, cache)) in self.layers.iter_mut().zip(tape.caches).enumerate().rev() {
            let first = i == 0 && !want_input_grad;
            grad = match (&layer.spec, layer.params.as_mut(), cache) {
                (LayerSpec::Conv { stride, pad, .. }, Some(p), Cache::Conv(input)) => {
                    let g = grad.reshape(&conv_out_shape(&input, p, *stride, *pad)?)?;
                    if first {
                        conv2d_backward_params(&input, p, *stride, *pad, &g)?;
                        return Ok(None);
                    }
                    conv2d_backward(&input, p, *stride, *pad, &g)?
                }
                (LayerSpec::Linear { .. }, Some(p), Cache::Linear(input)) => {
                    linear_backward(&input, p, &grad)?
                }
                (LayerSpec::Relu, _, Cache::Relu(input)) => {
                    let g = grad.reshape(input.shape())?;
                    relu_backward(&input, &g)?
                }
                (LayerSpec::Lrn(p), _, Cache::Lrn { input, scale }) => {
                    let g = grad.reshape(input.shape())?;
                    lrn_backward(&input, &scale, &g, p)?
                }
                (LayerSpec::MaxPool { .. }, _, Cache::Pool { input_shape, argmax }) => {
                    maxpool_backward(&input_shape, &argmax, &grad)?
                }
                (LayerSpec::Dropout { .. }, _, Cache::Dropout(mask)) => {
                    dropout_backward(mask.as_deref(), &grad)?
                }
                (LayerSpec::Softmax, _, Cache::Softmax(probs)) => {
                    let g = grad.reshape(probs.shape())?;
                    softmax_backward(&probs, &g)?
                }
                _ => return Err(Error::invalid(format!("tape entry {i} of {last} does not match layer"))),
            };
            if first {
                return Ok(None);
            }
        }
        Ok(Some(grad))
    }
}

fn conv_out_shape(input: &Tensor, p: &LayerParams, stride: usize, pad: usize) -> Result<Vec<usize>> {
    let s = input.shape();
    let k = p.weights.shape()[2];
    let oc = p.weights.shape()[0];
    let (n, h, w) = (s[0], s[2], s[3]);
    match (conv_out_extent(h, k, stride, pad), conv_out_extent(w, k, stride, pad)) {
        (Some(oh), Some(ow)) => Ok(vec![n, oc, oh, ow]),
        _ => Err(Error::shape("conv2d_backward", "kernel does not fit input")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn sgd_scalar_update() {
        let mut p = LayerParams::new(Tensor::filled(&[1], 1.0), Tensor::zeros(&[1]));
        p.weight_grad.data_mut()[0] = 2.0;
        sgd_step([&mut p], 0.1).unwrap();
        assert!((p.weights.data()[0] - 0.8).abs() < 1e-15);
        assert_eq!(p.weight_grad.data(), &[0.0]);
    }

    #[test]
    fn sgd_zero_gradient_is_noop() {
        let mut p = LayerParams::new(Tensor::filled(&[2, 2], 0.3), Tensor::filled(&[2], -1.0));
        let before = p.clone();
        sgd_step([&mut p], 0.5).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn sgd_rejects_non_finite_without_touching_params() {
        let mut a = LayerParams::new(Tensor::filled(&[1], 1.0), Tensor::zeros(&[1]));
        let mut b = LayerParams::new(Tensor::filled(&[1], 1.0), Tensor::zeros(&[1]));
        a.weight_grad.data_mut()[0] = 1.0;
        b.bias_grad.data_mut()[0] = f64::NAN;
        let err = sgd_step([&mut a, &mut b], 0.1).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert_eq!(a.weights.data(), &[1.0]);
    }

    #[test]
    fn sgd_descends_least_squares_toy() {
        // fit y = 2x - 1 with one weight and one bias
        let xs = Tensor::from_vec(&[4, 1], vec![-1.0, 0.0, 1.0, 2.0]).unwrap();
        let ys = [-3.0, -1.0, 1.0, 3.0];
        let mut p = LayerParams::new(Tensor::zeros(&[1, 1]), Tensor::zeros(&[1]));
        let mut last = f64::INFINITY;
        for _ in 0..50 {
            let pred = linear_forward(&xs, &p).unwrap();
            let mut grad = Tensor::zeros(&[4, 1]);
            let mut loss = 0.0;
            for i in 0..4 {
                let r = pred.data()[i] - ys[i];
                loss += 0.5 * r * r / 4.0;
                grad.data_mut()[i] = r / 4.0;
            }
            assert!(loss <= last, "loss rose from {last} to {loss}");
            last = loss;
            linear_backward(&xs, &mut p, &grad).unwrap();
            sgd_step([&mut p], 0.1).unwrap();
        }
        assert!(last < 0.05);
    }

    #[test]
    fn eval_forward_is_bit_identical() {
        let specs = [
            LayerSpec::Conv {
                out_channels: 4,
                kernel: 3,
                stride: 1,
                pad: 1,
            },
            LayerSpec::Relu,
            LayerSpec::Linear { out_features: 5 },
            LayerSpec::Dropout { rate: 0.5 },
            LayerSpec::Softmax,
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = Sequential::new(&specs, &[2, 6, 6], Init::Gaussian { std: 0.1 }, &mut rng).unwrap();
        let x = Tensor::randn(&[3, 2, 6, 6], 1.0, &mut rng);
        assert_eq!(net.forward(&x).unwrap(), net.forward(&x).unwrap());
        assert!(net.forward(&Tensor::zeros(&[3, 2, 5, 6])).is_err());
    }
}
