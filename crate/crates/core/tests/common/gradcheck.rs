//! Finite-difference checks for every layer kind. Each check draws a random
//! small shape, builds the scalar `L = <v, layer(x)>` for a random `v`, and
//! compares the analytic backward pass against central differences.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use semtrack::nn::{self, LayerParams, LrnParams};
use semtrack::Tensor;

use super::oracles::{dot, numeric_grad, rel_error};

pub const EPS: f64 = 1e-4;

pub const KINDS: [&str; 8] = [
    "conv", "relu", "lrn", "maxpool", "linear", "dropout", "softmax", "cross_entropy",
];

fn rand_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// Values bounded away from zero so relu kinks are never straddled.
fn away_from_zero(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.05..1.0);
            if rng.gen_bool(0.5) { m } else { -m }
        })
        .collect();
    Tensor::from_vec(shape, data).unwrap()
}

/// Distinct values spaced far wider than the perturbation, so max-pool
/// winners never change under finite differences.
fn well_separated(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        idx.swap(i, rng.gen_range(0..=i));
    }
    let data = idx.iter().map(|&i| i as f64 * 0.01 - 0.3).collect();
    Tensor::from_vec(shape, data).unwrap()
}

fn params_check(
    p: &LayerParams,
    analytic: &LayerParams,
    mut loss: impl FnMut(&LayerParams) -> f64,
) -> f64 {
    let w = numeric_grad(p.weights.data(), EPS, |w| {
        let mut q = p.clone();
        q.weights.data_mut().copy_from_slice(w);
        loss(&q)
    });
    let b = numeric_grad(p.bias.data(), EPS, |b| {
        let mut q = p.clone();
        q.bias.data_mut().copy_from_slice(b);
        loss(&q)
    });
    rel_error(&w, analytic.weight_grad.data()).max(rel_error(&b, analytic.bias_grad.data()))
}

/// Worst relative error over input and parameter gradients for one random
/// instance of `kind`, plus a description of the drawn shape.
pub fn check(kind: &str, rng: &mut ChaCha8Rng) -> (f64, String) {
    match kind {
        "conv" => {
            let c = rng.gen_range(1..=3);
            let oc = rng.gen_range(1..=3);
            let k = rng.gen_range(1..=3);
            let stride = rng.gen_range(1..=2);
            let pad = rng.gen_range(0..=1);
            let h = rng.gen_range(k.max(2)..=6);
            let w = rng.gen_range(k.max(2)..=6);
            let n = rng.gen_range(1..=2);
            let x = rand_tensor(&[n, c, h, w], rng);
            let mut p = LayerParams::new(rand_tensor(&[oc, c, k, k], rng), rand_tensor(&[oc], rng));
            let y = nn::conv2d_forward(&x, &p, stride, pad).unwrap();
            let v = rand_tensor(y.shape(), rng);
            let dx = nn::conv2d_backward(&x, &mut p, stride, pad, &v).unwrap();
            let num = numeric_grad(x.data(), EPS, |xd| {
                let xt = Tensor::from_vec(x.shape(), xd.to_vec()).unwrap();
                dot(nn::conv2d_forward(&xt, &p, stride, pad).unwrap().data(), v.data())
            });
            let e_in = rel_error(&num, dx.data());
            let e_p = params_check(&p, &p, |q| {
                dot(nn::conv2d_forward(&x, q, stride, pad).unwrap().data(), v.data())
            });
            (e_in.max(e_p), format!("n{n} c{c}->{oc} {h}x{w} k{k} s{stride} p{pad}"))
        }
        "relu" => {
            let shape = [rng.gen_range(1..=3), rng.gen_range(1..=8)];
            let x = away_from_zero(&shape, rng);
            let v = rand_tensor(&shape, rng);
            let dx = nn::relu_backward(&x, &v).unwrap();
            let num = numeric_grad(x.data(), EPS, |xd| {
                let xt = Tensor::from_vec(&shape, xd.to_vec()).unwrap();
                dot(nn::relu_forward(&xt).data(), v.data())
            });
            (rel_error(&num, dx.data()), format!("{shape:?}"))
        }
        "lrn" => {
            let shape = [
                rng.gen_range(1..=2),
                rng.gen_range(1..=7),
                rng.gen_range(1..=3),
                rng.gen_range(1..=3),
            ];
            // large alpha so the cross-channel term is actually exercised
            let p = LrnParams {
                n: [1, 3, 5][rng.gen_range(0..3)],
                k: 2.0,
                alpha: 0.5,
                beta: 0.75,
            };
            let x = rand_tensor(&shape, rng);
            let (y, scale) = nn::lrn_forward(&x, &p).unwrap();
            let v = rand_tensor(y.shape(), rng);
            let dx = nn::lrn_backward(&x, &scale, &v, &p).unwrap();
            let num = numeric_grad(x.data(), EPS, |xd| {
                let xt = Tensor::from_vec(&shape, xd.to_vec()).unwrap();
                dot(nn::lrn_forward(&xt, &p).unwrap().0.data(), v.data())
            });
            (rel_error(&num, dx.data()), format!("{shape:?} n{}", p.n))
        }
        "maxpool" => {
            let window = rng.gen_range(1..=3);
            let stride = rng.gen_range(1..=2);
            let shape = [
                rng.gen_range(1..=2),
                rng.gen_range(1..=2),
                rng.gen_range(window..=7),
                rng.gen_range(window..=7),
            ];
            let x = well_separated(&shape, rng);
            let out = nn::maxpool_forward(&x, window, stride).unwrap();
            let v = rand_tensor(out.output.shape(), rng);
            let dx = nn::maxpool_backward(&shape, &out.argmax, &v).unwrap();
            let num = numeric_grad(x.data(), EPS, |xd| {
                let xt = Tensor::from_vec(&shape, xd.to_vec()).unwrap();
                dot(nn::maxpool_forward(&xt, window, stride).unwrap().output.data(), v.data())
            });
            (rel_error(&num, dx.data()), format!("{shape:?} w{window} s{stride}"))
        }
        "linear" => {
            let n = rng.gen_range(1..=4);
            let din = rng.gen_range(1..=6);
            let dout = rng.gen_range(1..=5);
            let x = rand_tensor(&[n, din], rng);
            let mut p = LayerParams::new(rand_tensor(&[dout, din], rng), rand_tensor(&[dout], rng));
            let v = rand_tensor(&[n, dout], rng);
            let dx = nn::linear_backward(&x, &mut p, &v).unwrap();
            let num = numeric_grad(x.data(), EPS, |xd| {
                let xt = Tensor::from_vec(x.shape(), xd.to_vec()).unwrap();
                dot(nn::linear_forward(&xt, &p).unwrap().data(), v.data())
            });
            let e_p = params_check(&p, &p, |q| dot(nn::linear_forward(&x, q).unwrap().data(), v.data()));
            (rel_error(&num, dx.data()).max(e_p), format!("n{n} {din}->{dout}"))
        }
        "dropout" => {
            let shape = [rng.gen_range(1..=3), rng.gen_range(2..=10)];
            let rate = rng.gen_range(0.1..0.8);
            let seed = rng.gen::<u64>();
            let x = rand_tensor(&shape, rng);
            let v = rand_tensor(&shape, rng);
            let (_, mask) =
                nn::dropout_forward(&x, rate, true, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let dx = nn::dropout_backward(mask.as_deref(), &v).unwrap();
            let num = numeric_grad(x.data(), EPS, |xd| {
                let xt = Tensor::from_vec(&shape, xd.to_vec()).unwrap();
                let (y, _) =
                    nn::dropout_forward(&xt, rate, true, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
                dot(y.data(), v.data())
            });
            (rel_error(&num, dx.data()), format!("{shape:?} rate {rate:.2}"))
        }
        "softmax" => {
            let shape = [rng.gen_range(1..=3), rng.gen_range(2..=6)];
            let x = rand_tensor(&shape, rng);
            let v = rand_tensor(&shape, rng);
            let probs = nn::softmax_forward(&x);
            let dx = nn::softmax_backward(&probs, &v).unwrap();
            let num = numeric_grad(x.data(), EPS, |xd| {
                let xt = Tensor::from_vec(&shape, xd.to_vec()).unwrap();
                dot(nn::softmax_forward(&xt).data(), v.data())
            });
            (rel_error(&num, dx.data()), format!("{shape:?}"))
        }
        "cross_entropy" => {
            let n = rng.gen_range(1..=5);
            let k = rng.gen_range(2..=6);
            let x = rand_tensor(&[n, k], rng);
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
            let (_, grad) = nn::softmax_cross_entropy(&x, &labels).unwrap();
            let num = numeric_grad(x.data(), EPS, |xd| {
                let xt = Tensor::from_vec(&[n, k], xd.to_vec()).unwrap();
                nn::softmax_cross_entropy(&xt, &labels).unwrap().0
            });
            (rel_error(&num, grad.data()), format!("n{n} k{k}"))
        }
        other => panic!("unknown layer kind {other}"),
    }
}
