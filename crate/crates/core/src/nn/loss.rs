use super::layers::softmax_forward;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Mean softmax cross-entropy over an N×K batch of logits.
///
/// Returns the loss and its gradient with respect to the logits,
/// `(softmax - onehot) / N`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let n = logits.batch();
    if n == 0 || logits.is_empty() {
        return Err(Error::invalid("cross-entropy over an empty batch"));
    }
    if logits.ndim() != 2 {
        return Err(Error::shape(
            "softmax_cross_entropy",
            format!("logits must be N×K, got {:?}", logits.shape()),
        ));
    }
    if labels.len() != n {
        return Err(Error::shape(
            "softmax_cross_entropy",
            format!("{} labels for {n} rows", labels.len()),
        ));
    }
    let k = logits.row_len();
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::invalid(format!("label {bad} outside [0, {k})")));
    }
    let mut grad = softmax_forward(logits);
    let mut loss = 0.0;
    for (r, &label) in labels.iter().enumerate() {
        // log-sum-exp form keeps the loss finite for saturated rows
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[label];
        let g = grad.row_mut(r);
        g[label] -= 1.0;
    }
    let scale = 1.0 / n as f64;
    grad.data_mut().iter_mut().for_each(|g| *g *= scale);
    Ok((loss * scale, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_binary_logits_cost_ln2() {
        let logits = Tensor::zeros(&[3, 2]);
        let (loss, _) = softmax_cross_entropy(&logits, &[0, 1, 0]).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_logits_cost_nothing() {
        let logits = Tensor::from_vec(&[2, 3], vec![800.0, 0.0, 0.0, 0.0, 0.0, 800.0]).unwrap();
        let (loss, grad) = softmax_cross_entropy(&logits, &[0, 2]).unwrap();
        assert!(loss >= 0.0 && loss < 1e-12);
        assert!(grad.all_finite());
    }

    #[test]
    fn rejects_empty_and_out_of_range() {
        assert!(softmax_cross_entropy(&Tensor::zeros(&[0, 2]), &[]).is_err());
        assert!(softmax_cross_entropy(&Tensor::zeros(&[1, 2]), &[2]).is_err());
    }
}
