//! Element-wise, pooling, normalization, and dense layers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::conv::conv_out_extent;
use super::gemm::gemm;
use super::LayerParams;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

/// Splits a 3-D or 4-D activation into (batch, channels, height, width).
fn nchw(op: &'static str, t: &Tensor) -> Result<(usize, usize, usize, usize)> {
    match *t.shape() {
        [c, h, w] => Ok((1, c, h, w)),
        [n, c, h, w] => Ok((n, c, h, w)),
        ref s => Err(Error::shape(
            op,
            format!("expected C×H×W or N×C×H×W, got {s:?}"),
        )),
    }
}

pub fn relu_forward(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

pub fn relu_backward(input: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    same_shape("relu_backward", input, upstream)?;
    let mut dx = upstream.clone();
    for (g, &x) in dx.data_mut().iter_mut().zip(input.data()) {
        if x <= 0.0 {
            *g = 0.0;
        }
    }
    Ok(dx)
}

/// Max pooling output together with the flat input index of each maximum.
pub struct PoolOutput {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

pub fn maxpool_forward(input: &Tensor, window: usize, stride: usize) -> Result<PoolOutput> {
    let (n, c, h, w) = nchw("maxpool", input)?;
    let (Some(oh), Some(ow)) = (
        conv_out_extent(h, window, stride, 0),
        conv_out_extent(w, window, stride, 0),
    ) else {
        return Err(Error::shape(
            "maxpool",
            format!("window {window} stride {stride} does not fit {h}×{w}"),
        ));
    };
    let mut shape = input.shape().to_vec();
    let rank = shape.len();
    shape[rank - 2] = oh;
    shape[rank - 1] = ow;
    let mut output = Tensor::zeros(&shape);
    let mut argmax = vec![0; output.len()];
    let x = input.data();
    let out = output.data_mut();
    let mut o = 0;
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = base + oy * stride * w + ox * stride;
                for ky in 0..window {
                    let row = base + (oy * stride + ky) * w + ox * stride;
                    for kx in 0..window {
                        let v = x[row + kx];
                        if v > best {
                            best = v;
                            best_idx = row + kx;
                        }
                    }
                }
                out[o] = best;
                argmax[o] = best_idx;
                o += 1;
            }
        }
    }
    Ok(PoolOutput { output, argmax })
}

/// Routes each upstream gradient to the input position that won the max.
pub fn maxpool_backward(input_shape: &[usize], argmax: &[usize], upstream: &Tensor) -> Result<Tensor> {
    if argmax.len() != upstream.len() {
        return Err(Error::shape(
            "maxpool_backward",
            format!("{} argmax entries for {} gradients", argmax.len(), upstream.len()),
        ));
    }
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&idx, &g) in argmax.iter().zip(upstream.data()) {
        d[idx] += g;
    }
    Ok(dx)
}

/// Cross-channel local response normalization constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrnParams {
    /// Window size across channels.
    pub n: usize,
    pub k: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LrnParams {
    fn default() -> Self {
        LrnParams {
            n: 5,
            k: 2.0,
            alpha: 1e-4,
            beta: 0.75,
        }
    }
}

impl LrnParams {
    fn window(&self, c: usize, channels: usize) -> std::ops::Range<usize> {
        let half = self.n / 2;
        c.saturating_sub(half)..(c + half + 1).min(channels)
    }
}

/// `b_c = a_c / (k + alpha * sum_{j near c} a_j^2)^beta`.
///
/// Returns the output and the per-element denominator base, which the
/// backward pass reuses.
pub fn lrn_forward(input: &Tensor, p: &LrnParams) -> Result<(Tensor, Tensor)> {
    let (n, c, h, w) = nchw("lrn", input)?;
    let hw = h * w;
    let mut scale = Tensor::filled(input.shape(), p.k);
    let x = input.data();
    let s = scale.data_mut();
    for b in 0..n {
        let base = b * c * hw;
        for ch in 0..c {
            for j in p.window(ch, c) {
                let src = &x[base + j * hw..base + (j + 1) * hw];
                let dst = &mut s[base + ch * hw..base + (ch + 1) * hw];
                for (d, &v) in dst.iter_mut().zip(src) {
                    *d += p.alpha * v * v;
                }
            }
        }
    }
    let mut out = input.clone();
    for (o, &sc) in out.data_mut().iter_mut().zip(scale.data()) {
        *o *= sc.powf(-p.beta);
    }
    Ok((out, scale))
}

pub fn lrn_backward(input: &Tensor, scale: &Tensor, upstream: &Tensor, p: &LrnParams) -> Result<Tensor> {
    same_shape("lrn_backward", input, upstream)?;
    same_shape("lrn_backward", input, scale)?;
    let (n, c, h, w) = nchw("lrn_backward", input)?;
    let hw = h * w;
    let x = input.data();
    let s = scale.data();
    let g = upstream.data();
    // t_c = g_c * a_c * scale_c^(-beta-1)
    let t: Vec<f64> = (0..x.len())
        .map(|i| g[i] * x[i] * s[i].powf(-p.beta - 1.0))
        .collect();
    let mut dx = Tensor::zeros(input.shape());
    let d = dx.data_mut();
    for i in 0..x.len() {
        d[i] = g[i] * s[i].powf(-p.beta);
    }
    let coeff = 2.0 * p.alpha * p.beta;
    for b in 0..n {
        let base = b * c * hw;
        for ch in 0..c {
            // The window relation is symmetric, so channel `ch` receives
            // contributions from every channel in its own window.
            for j in p.window(ch, c) {
                for q in 0..hw {
                    let i = base + ch * hw + q;
                    d[i] -= coeff * x[i] * t[base + j * hw + q];
                }
            }
        }
    }
    Ok(dx)
}

fn linear_dims(input: &Tensor, params: &LayerParams) -> Result<(usize, usize, usize)> {
    let batch = input.batch();
    let in_f = input.row_len();
    match *params.weights.shape() {
        [out_f, w_in] if w_in == in_f && params.bias.len() == out_f => Ok((batch, in_f, out_f)),
        ref s => Err(Error::shape(
            "linear",
            format!("weights {s:?} incompatible with input width {in_f}"),
        )),
    }
}

/// `y = x W^T + b` over the flattened trailing axes of `input`.
pub fn linear_forward(input: &Tensor, params: &LayerParams) -> Result<Tensor> {
    if input.ndim() < 2 {
        return Err(Error::shape(
            "linear",
            format!("input needs a batch axis, got {:?}", input.shape()),
        ));
    }
    let (batch, in_f, out_f) = linear_dims(input, params)?;
    let mut out = Tensor::zeros(&[batch, out_f]);
    for r in 0..batch {
        out.row_mut(r).copy_from_slice(params.bias.data());
    }
    gemm(
        batch,
        in_f,
        out_f,
        1.0,
        input.data(),
        false,
        params.weights.data(),
        true,
        1.0,
        out.data_mut(),
    );
    Ok(out)
}

pub fn linear_backward(input: &Tensor, params: &mut LayerParams, upstream: &Tensor) -> Result<Tensor> {
    let (batch, in_f, out_f) = linear_dims(input, params)?;
    if upstream.shape() != [batch, out_f] {
        return Err(Error::shape(
            "linear_backward",
            format!("upstream {:?}, expected [{batch}, {out_f}]", upstream.shape()),
        ));
    }
    for r in 0..batch {
        for (b, g) in params.bias_grad.data_mut().iter_mut().zip(upstream.row(r)) {
            *b += g;
        }
    }
    gemm(
        out_f,
        batch,
        in_f,
        1.0,
        upstream.data(),
        true,
        input.data(),
        false,
        1.0,
        params.weight_grad.data_mut(),
    );
    let mut dx = Tensor::zeros(input.shape());
    gemm(
        batch,
        out_f,
        in_f,
        1.0,
        upstream.data(),
        false,
        params.weights.data(),
        false,
        0.0,
        dx.data_mut(),
    );
    Ok(dx)
}

/// Inverted dropout. In eval mode (or with rate 0) the input passes through
/// unchanged and no mask is produced.
pub fn dropout_forward<R: Rng + ?Sized>(
    input: &Tensor,
    rate: f64,
    train_mode: bool,
    rng: &mut R,
) -> Result<(Tensor, Option<Vec<f64>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
    }
    if !train_mode || rate == 0.0 {
        return Ok((input.clone(), None));
    }
    let keep = 1.0 - rate;
    let mask: Vec<f64> = (0..input.len())
        .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
        .collect();
    let mut out = input.clone();
    for (o, m) in out.data_mut().iter_mut().zip(&mask) {
        *o *= m;
    }
    Ok((out, Some(mask)))
}

pub fn dropout_backward(mask: Option<&[f64]>, upstream: &Tensor) -> Result<Tensor> {
    let Some(mask) = mask else {
        return Ok(upstream.clone());
    };
    if mask.len() != upstream.len() {
        return Err(Error::shape(
            "dropout_backward",
            format!("mask {} vs gradient {}", mask.len(), upstream.len()),
        ));
    }
    let mut dx = upstream.clone();
    for (g, m) in dx.data_mut().iter_mut().zip(mask) {
        *g *= m;
    }
    Ok(dx)
}

/// Row-wise softmax over the trailing axes.
pub fn softmax_forward(logits: &Tensor) -> Tensor {
    let mut out = logits.clone();
    let n = out.batch();
    for r in 0..n {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    out
}

/// Vector-Jacobian product of softmax given its output `probs`.
pub fn softmax_backward(probs: &Tensor, upstream: &Tensor) -> Result<Tensor> {
    same_shape("softmax_backward", probs, upstream)?;
    let mut dx = Tensor::zeros(probs.shape());
    for r in 0..probs.batch() {
        let p = probs.row(r);
        let g = upstream.row(r);
        let dot: f64 = p.iter().zip(g).map(|(a, b)| a * b).sum();
        for ((d, &pi), &gi) in dx.row_mut(r).iter_mut().zip(p).zip(g) {
            *d = pi * (gi - dot);
        }
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn relu_clamps_negatives() {
        let x = Tensor::from_vec(&[3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu_forward(&x).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn maxpool_floor_semantics() {
        let x = Tensor::zeros(&[4, 25, 25]);
        let out = maxpool_forward(&x, 2, 2).unwrap();
        assert_eq!(out.output.shape(), &[4, 12, 12]);
    }

    #[test]
    fn maxpool_routes_to_argmax() {
        let x = Tensor::from_vec(&[1, 2, 2], vec![1.0, 4.0, 3.0, 2.0]).unwrap();
        let out = maxpool_forward(&x, 2, 2).unwrap();
        assert_eq!(out.output.data(), &[4.0]);
        let up = Tensor::filled(&[1, 1, 1], 5.0);
        let dx = maxpool_backward(x.shape(), &out.argmax, &up).unwrap();
        assert_eq!(dx.data(), &[0.0, 5.0, 0.0, 0.0]);
    }

    #[test]
    fn dropout_identity_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::from_vec(&[2, 3], (0..6).map(f64::from).collect()).unwrap();
        let (y, mask) = dropout_forward(&x, 0.0, true, &mut rng).unwrap();
        assert_eq!(y, x);
        assert!(mask.is_none());
        let (y, _) = dropout_forward(&x, 0.5, false, &mut rng).unwrap();
        assert_eq!(y, x);
        assert!(dropout_forward(&x, 1.0, true, &mut rng).is_err());
    }

    #[test]
    fn dropout_is_seed_deterministic() {
        let x = Tensor::filled(&[4, 16], 1.0);
        let a = dropout_forward(&x, 0.5, true, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = dropout_forward(&x, 0.5, true, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = Tensor::from_vec(&[2, 3], vec![1.0, 2.0, 3.0, -100.0, 0.0, 100.0]).unwrap();
        let p = softmax_forward(&x);
        for r in 0..2 {
            assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn linear_rejects_width_mismatch() {
        let p = LayerParams::new(Tensor::zeros(&[2, 3]), Tensor::zeros(&[2]));
        assert!(linear_forward(&Tensor::zeros(&[1, 4]), &p).is_err());
        assert_eq!(linear_forward(&Tensor::zeros(&[5, 3]), &p).unwrap().shape(), &[5, 2]);
    }

    #[test]
    fn lrn_near_constant_scaling_for_small_inputs() {
        let x = Tensor::filled(&[6, 2, 2], 0.01);
        let (y, _) = lrn_forward(&x, &LrnParams::default()).unwrap();
        let expect = 0.01 * 2f64.powf(-0.75);
        assert!(y.data().iter().all(|v| (v - expect).abs() < 1e-9));
    }
}
