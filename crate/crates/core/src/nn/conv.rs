//! 2-D convolution via im2col and a dense matrix product.

use super::gemm::gemm;
use super::LayerParams;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Spatial output extent of a convolution or pooling window.
pub fn conv_out_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || kernel == 0 || input + 2 * pad < kernel {
        return None;
    }
    Some((input + 2 * pad - kernel) / stride + 1)
}

struct Geometry {
    batch: usize,
    in_c: usize,
    in_h: usize,
    in_w: usize,
    out_c: usize,
    k: usize,
    out_h: usize,
    out_w: usize,
    stride: usize,
    pad: usize,
    batched: bool,
}

impl Geometry {
    fn new(input: &Tensor, params: &LayerParams, stride: usize, pad: usize) -> Result<Self> {
        let (batch, chw, batched) = match input.shape() {
            [c, h, w] => (1, [*c, *h, *w], false),
            [n, c, h, w] => (*n, [*c, *h, *w], true),
            s => {
                return Err(Error::shape(
                    "conv2d",
                    format!("input must be C×H×W or N×C×H×W, got {s:?}"),
                ))
            }
        };
        let [in_c, in_h, in_w] = chw;
        let (out_c, k) = match params.weights.shape() {
            [oc, ic, kh, kw] if *ic == in_c && kh == kw => (*oc, *kh),
            s => {
                return Err(Error::shape(
                    "conv2d",
                    format!("weights {s:?} incompatible with {in_c} input channels"),
                ))
            }
        };
        if params.bias.len() != out_c {
            return Err(Error::shape(
                "conv2d",
                format!("bias has {} entries for {out_c} kernels", params.bias.len()),
            ));
        }
        let out_h = conv_out_extent(in_h, k, stride, pad);
        let out_w = conv_out_extent(in_w, k, stride, pad);
        let (Some(out_h), Some(out_w)) = (out_h, out_w) else {
            return Err(Error::shape(
                "conv2d",
                format!("kernel {k} stride {stride} does not fit {in_h}×{in_w} with pad {pad}"),
            ));
        };
        Ok(Geometry {
            batch,
            in_c,
            in_h,
            in_w,
            out_c,
            k,
            out_h,
            out_w,
            stride,
            pad,
            batched,
        })
    }

    fn patch_len(&self) -> usize {
        self.in_c * self.k * self.k
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    fn output_shape(&self) -> Vec<usize> {
        if self.batched {
            vec![self.batch, self.out_c, self.out_h, self.out_w]
        } else {
            vec![self.out_c, self.out_h, self.out_w]
        }
    }

    /// Unfolds one sample into a `patch_len × positions` matrix.
    fn im2col(&self, x: &[f64], cols: &mut [f64]) {
        let p = self.positions();
        for c in 0..self.in_c {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (c * self.k + ky) * self.k + kx;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oy in 0..self.out_h {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        let line = &mut dst[oy * self.out_w..(oy + 1) * self.out_w];
                        if iy < 0 || iy >= self.in_h as isize {
                            line.fill(0.0);
                            continue;
                        }
                        let src = &x[(c * self.in_h + iy as usize) * self.in_w..][..self.in_w];
                        for (ox, v) in line.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            *v = if ix < 0 || ix >= self.in_w as isize {
                                0.0
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of `im2col`: scatters column gradients back onto the input.
    fn col2im(&self, cols: &[f64], dx: &mut [f64]) {
        let p = self.positions();
        for c in 0..self.in_c {
            for ky in 0..self.k {
                for kx in 0..self.k {
                    let row = (c * self.k + ky) * self.k + kx;
                    let src = &cols[row * p..(row + 1) * p];
                    for oy in 0..self.out_h {
                        let iy = (oy * self.stride + ky) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.in_h as isize {
                            continue;
                        }
                        let dst = &mut dx[(c * self.in_h + iy as usize) * self.in_w..][..self.in_w];
                        for ox in 0..self.out_w {
                            let ix = (ox * self.stride + kx) as isize - self.pad as isize;
                            if ix >= 0 && ix < self.in_w as isize {
                                dst[ix as usize] += src[oy * self.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Convolves `input` (C×H×W or N×C×H×W) with `params.weights` (C'×C×k×k).
pub fn conv2d_forward(
    input: &Tensor,
    params: &LayerParams,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let g = Geometry::new(input, params, stride, pad)?;
    let in_len = g.in_c * g.in_h * g.in_w;
    let out_len = g.out_c * g.positions();
    let mut out = Tensor::zeros(&g.output_shape());
    let mut cols = vec![0.0; g.patch_len() * g.positions()];
    let w = params.weights.data();
    let b = params.bias.data();
    for n in 0..g.batch {
        g.im2col(&input.data()[n * in_len..(n + 1) * in_len], &mut cols);
        let y = &mut out.data_mut()[n * out_len..(n + 1) * out_len];
        for (oc, chunk) in y.chunks_mut(g.positions()).enumerate() {
            chunk.fill(b[oc]);
        }
        gemm(g.out_c, g.patch_len(), g.positions(), 1.0, w, false, &cols, false, 1.0, y);
    }
    Ok(out)
}

/// Back-propagates `upstream` through the convolution. Parameter gradients
/// are accumulated into `params`; the input gradient is returned.
pub fn conv2d_backward(
    input: &Tensor,
    params: &mut LayerParams,
    stride: usize,
    pad: usize,
    upstream: &Tensor,
) -> Result<Tensor> {
    let mut dx = Tensor::zeros(input.shape());
    conv2d_backward_impl(input, params, stride, pad, upstream, Some(&mut dx))?;
    Ok(dx)
}

/// Like [`conv2d_backward`] but skips the input gradient, for the first
/// layer of a network.
pub fn conv2d_backward_params(
    input: &Tensor,
    params: &mut LayerParams,
    stride: usize,
    pad: usize,
    upstream: &Tensor,
) -> Result<()> {
    conv2d_backward_impl(input, params, stride, pad, upstream, None)
}

fn conv2d_backward_impl(
    input: &Tensor,
    params: &mut LayerParams,
    stride: usize,
    pad: usize,
    upstream: &Tensor,
    mut dx: Option<&mut Tensor>,
) -> Result<()> {
    let g = Geometry::new(input, params, stride, pad)?;
    if upstream.shape() != g.output_shape().as_slice() {
        return Err(Error::shape(
            "conv2d_backward",
            format!(
                "upstream {:?} does not match output {:?}",
                upstream.shape(),
                g.output_shape()
            ),
        ));
    }
    let in_len = g.in_c * g.in_h * g.in_w;
    let out_len = g.out_c * g.positions();
    let mut cols = vec![0.0; g.patch_len() * g.positions()];
    let mut dcols = vec![0.0; g.patch_len() * g.positions()];
    let LayerParams {
        weights,
        weight_grad,
        bias_grad,
        ..
    } = params;
    for n in 0..g.batch {
        let dy = &upstream.data()[n * out_len..(n + 1) * out_len];
        for (oc, chunk) in dy.chunks(g.positions()).enumerate() {
            bias_grad.data_mut()[oc] += chunk.iter().sum::<f64>();
        }
        g.im2col(&input.data()[n * in_len..(n + 1) * in_len], &mut cols);
        gemm(
            g.out_c,
            g.positions(),
            g.patch_len(),
            1.0,
            dy,
            false,
            &cols,
            true,
            1.0,
            weight_grad.data_mut(),
        );
        if let Some(dx) = dx.as_deref_mut() {
            gemm(
                g.patch_len(),
                g.out_c,
                g.positions(),
                1.0,
                weights.data(),
                true,
                dy,
                false,
                0.0,
                &mut dcols,
            );
            g.col2im(&dcols, &mut dx.data_mut()[n * in_len..(n + 1) * in_len]);
        }
    }
    Ok(())
}
