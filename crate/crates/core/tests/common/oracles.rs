//! Independent reference implementations used by the test suites.

use semtrack::nn::LayerParams;
use semtrack::Tensor;

/// Direct six-loop convolution of a C×H×W input.
pub fn direct_conv(x: &Tensor, p: &LayerParams, stride: usize, pad: usize) -> Tensor {
    let [c, h, w] = *x.shape() else { panic!("C×H×W input") };
    let [oc, _, k, _] = *p.weights.shape() else { panic!("4-D weights") };
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (w + 2 * pad - k) / stride + 1;
    let mut out = Tensor::zeros(&[oc, oh, ow]);
    let wt = p.weights.data();
    for o in 0..oc {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = p.bias.data()[o];
                for ci in 0..c {
                    for ky in 0..k {
                        for kx in 0..k {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            let xv = x.data()[(ci * h + iy as usize) * w + ix as usize];
                            acc += xv * wt[((o * c + ci) * k + ky) * k + kx];
                        }
                    }
                }
                out.data_mut()[(o * oh + oy) * ow + ox] = acc;
            }
        }
    }
    out
}

/// Central-difference gradient of the scalar `f` at `x`.
pub fn numeric_grad(x: &[f64], eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + eps;
            let up = f(&probe);
            probe[i] = orig - eps;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// Norm-wise relative error `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let denom = na.max(nb);
    if denom < 1e-12 {
        0.0
    } else {
        diff / denom
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// IoU of two integer-aligned corner boxes `[left, top, w, h]` by counting
/// unit pixels.
pub fn raster_iou(a: [i64; 4], b: [i64; 4]) -> f64 {
    let inside = |r: [i64; 4], x: i64, y: i64| x >= r[0] && x < r[0] + r[2] && y >= r[1] && y < r[1] + r[3];
    let x0 = a[0].min(b[0]);
    let y0 = a[1].min(b[1]);
    let x1 = (a[0] + a[2]).max(b[0] + b[2]);
    let y1 = (a[1] + a[3]).max(b[1] + b[3]);
    let (mut inter, mut union) = (0u64, 0u64);
    for y in y0..y1 {
        for x in x0..x1 {
            let (p, q) = (inside(a, x, y), inside(b, x, y));
            inter += (p && q) as u64;
            union += (p || q) as u64;
        }
    }
    inter as f64 / union as f64
}
