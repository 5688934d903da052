//! Linear bounding-box regressors from trunk features to center and
//! log-scale corrections.
//!
//! For a sample box `s` and reference box `g`, the targets are
//!
//! ```text
//! tx = (g.x - s.x) / s.w      ty = (g.y - s.y) / s.h
//! tw = ln(g.w / s.w)          th = ln(g.h / s.h)
//! ```
//!
//! and [`apply_deltas`] is the exact inverse. Four independent ridge
//! regressions are fit jointly over the same features.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::regions::BBox;
use crate::tensor::Tensor;

/// Default ridge strength.
pub const DEFAULT_LAMBDA: f64 = 1.0;

pub fn regression_targets(gt: &BBox, sample: &BBox) -> Result<[f64; 4]> {
    if !(sample.w > 0.0 && sample.h > 0.0) {
        return Err(Error::invalid(format!("sample box {sample:?} has non-positive extent")));
    }
    Ok([
        (gt.x - sample.x) / sample.w,
        (gt.y - sample.y) / sample.h,
        (gt.w / sample.w).ln(),
        (gt.h / sample.h).ln(),
    ])
}

/// Moves `b` by regressor outputs `[dx, dy, dw, dh]`.
pub fn apply_deltas(b: &BBox, d: [f64; 4]) -> BBox {
    BBox {
        x: d[0] * b.w + b.x,
        y: d[1] * b.h + b.y,
        w: d[2].exp() * b.w,
        h: d[3].exp() * b.h,
    }
}

/// The four linear maps `g_x, g_y, g_w, g_h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorSet {
    /// One weight vector of length `D` per output.
    pub weights: [Vec<f64>; 4],
    pub bias: [f64; 4],
    pub lambda: f64,
}

impl RegressorSet {
    pub fn feature_dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn predict(&self, feature: &[f64]) -> Result<[f64; 4]> {
        if feature.len() != self.feature_dim() {
            return Err(Error::shape(
                "regressor",
                format!("feature width {} vs {}", feature.len(), self.feature_dim()),
            ));
        }
        let mut out = self.bias;
        for (o, w) in out.iter_mut().zip(&self.weights) {
            *o += w.iter().zip(feature).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(out)
    }
}

pub fn apply_regressors(reg: &RegressorSet, feature: &[f64], b: &BBox) -> Result<BBox> {
    Ok(apply_deltas(b, reg.predict(feature)?))
}

/// Ridge least squares with an unpenalized intercept:
/// `min Σ (w·f + b - t)² + λ‖w‖²` for each of the four outputs.
///
/// Solved through the normal equations on mean-centred features with a
/// Cholesky factorization.
pub fn fit_regressors(features: &Tensor, targets: &[[f64; 4]], lambda: f64) -> Result<RegressorSet> {
    if features.ndim() != 2 {
        return Err(Error::shape("fit_regressors", format!("features {:?} not N×D", features.shape())));
    }
    let (n, d) = (features.shape()[0], features.shape()[1]);
    if n == 0 || n != targets.len() {
        return Err(Error::shape(
            "fit_regressors",
            format!("{n} feature rows for {} targets", targets.len()),
        ));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("ridge strength {lambda}")));
    }
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for (m, v) in mean.iter_mut().zip(features.row(r)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut t_mean = [0.0; 4];
    for t in targets {
        for k in 0..4 {
            t_mean[k] += t[k];
        }
    }
    t_mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut centred = Tensor::zeros(&[n, d]);
    for r in 0..n {
        for ((c, v), m) in centred.row_mut(r).iter_mut().zip(features.row(r)).zip(&mean) {
            *c = v - m;
        }
    }
    // gram = Xcᵀ Xc + λI
    let mut gram = vec![0.0; d * d];
    crate::nn::gram(n, d, centred.data(), &mut gram);
    for i in 0..d {
        gram[i * d + i] += lambda;
    }
    let factor = cholesky(&gram, d)?;

    let mut weights: [Vec<f64>; 4] = Default::default();
    let mut bias = [0.0; 4];
    for k in 0..4 {
        let mut rhs = vec![0.0; d];
        for (r, t) in targets.iter().enumerate() {
            let tc = t[k] - t_mean[k];
            for (acc, x) in rhs.iter_mut().zip(centred.row(r)) {
                *acc += x * tc;
            }
        }
        let w = cholesky_solve(&factor, d, rhs);
        bias[k] = t_mean[k] - w.iter().zip(&mean).map(|(a, b)| a * b).sum::<f64>();
        weights[k] = w;
    }
    Ok(RegressorSet { weights, bias, lambda })
}

/// Lower-triangular `L` with `L Lᵀ = a` for a symmetric positive-definite `a`.
fn cholesky(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let row_j = &l[j * n..j * n + j];
        let diag = a[j * n + j] - row_j.iter().map(|v| v * v).sum::<f64>();
        if diag <= tol {
            return Err(Error::Singular(format!(
                "normal equations lose rank at column {j} (pivot {diag:e})"
            )));
        }
        let ljj = diag.sqrt();
        l[j * n + j] = ljj;
        for i in j + 1..n {
            let dot: f64 = (0..j).map(|k| l[i * n + k] * l[j * n + k]).sum();
            l[i * n + j] = (a[i * n + j] - dot) / ljj;
        }
    }
    Ok(l)
}

fn cholesky_solve(l: &[f64], n: usize, mut b: Vec<f64>) -> Vec<f64> {
    for i in 0..n {
        let dot: f64 = (0..i).map(|k| l[i * n + k] * b[k]).sum();
        b[i] = (b[i] - dot) / l[i * n + i];
    }
    for i in (0..n).rev() {
        let dot: f64 = (i + 1..n).map(|k| l[k * n + i] * b[k]).sum();
        b[i] = (b[i] - dot) / l[i * n + i];
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn targets_of_identical_boxes_vanish() {
        let b = BBox::new(10.0, 20.0, 5.0, 8.0).unwrap();
        assert_eq!(regression_targets(&b, &b).unwrap(), [0.0; 4]);
    }

    #[test]
    fn doubled_width_gives_ln2() {
        let s = BBox::new(10.0, 20.0, 5.0, 8.0).unwrap();
        let g = BBox { w: 10.0, ..s };
        let t = regression_targets(&g, &s).unwrap();
        assert!((t[2] - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!([t[0], t[1], t[3]], [0.0; 3]);
    }

    #[test]
    fn rejects_degenerate_sample() {
        let g = BBox::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let s = BBox { x: 0.0, y: 0.0, w: 0.0, h: 1.0 };
        assert!(regression_targets(&g, &s).is_err());
    }

    #[test]
    fn zero_output_keeps_box() {
        let b = BBox::new(3.0, 4.0, 5.0, 6.0).unwrap();
        assert_eq!(apply_deltas(&b, [0.0; 4]), b);
        let wide = apply_deltas(&b, [0.0, 0.0, std::f64::consts::LN_2, 0.0]);
        assert!((wide.w - 10.0).abs() < 1e-12);
    }

    #[test]
    fn hand_solved_normal_equations() {
        // features [[1,0,0],[0,1,0],[0,0,1],[1,1,1]], target_x = [1,2,3,7]
        // centred solve with λ = 1; expected values computed by hand from
        // (XcᵀXc + I) w = Xcᵀ tc.
        let f = Tensor::from_vec(
            &[4, 3],
            vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0],
        )
        .unwrap();
        let targets = [[1.0, 0.0, 0.0, 0.0], [2.0, 0.0, 0.0, 0.0], [3.0, 0.0, 0.0, 0.0], [7.0, 0.0, 0.0, 0.0]];
        let reg = fit_regressors(&f, &targets, 1.0).unwrap();
        // Xc rows: [.5,-.5,-.5],[-.5,.5,-.5],[-.5,-.5,.5],[.5,.5,.5]; XcᵀXc = I,
        // so (2I) w = Xcᵀ tc with tc = [-2.25,-1.25,-.25,3.75]
        // Xcᵀ tc = [1.5, 2.5, 3.5] → w = [0.75, 1.25, 1.75]
        let expect = [0.75, 1.25, 1.75];
        for (a, b) in reg.weights[0].iter().zip(expect) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        // bias = t̄ - μ·w = 3.25 - 0.5·3.75
        assert!((reg.bias[0] - 1.375).abs() < 1e-9);
        assert!(reg.weights[1].iter().all(|w| w.abs() < 1e-15));
    }

    #[test]
    fn constant_targets_give_zero_weights() {
        let f = Tensor::from_vec(&[5, 2], vec![1.0, 2.0, -1.0, 0.5, 3.0, 3.0, 0.0, -2.0, 1.5, 1.0]).unwrap();
        let targets = vec![[0.3, -0.2, 0.1, 0.05]; 5];
        let reg = fit_regressors(&f, &targets, 1.0).unwrap();
        for k in 0..4 {
            assert!(reg.weights[k].iter().all(|w| w.abs() < 1e-12));
            assert!((reg.bias[k] - targets[0][k]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_features_without_ridge_are_singular() {
        let f = Tensor::zeros(&[6, 3]);
        let targets = vec![[1.0, 0.0, 0.0, 0.0]; 6];
        assert!(matches!(fit_regressors(&f, &targets, 0.0), Err(Error::Singular(_))));
        assert!(fit_regressors(&f, &targets, 0.5).is_ok());
    }
}
