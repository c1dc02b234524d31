use alloc::vec::Vec;

use crate::scalar::{fexp, fln};
use crate::{Error, Real, Result};

/// Mean softmax cross-entropy over a batch of `classes`-wide logit rows.
///
/// Returns the loss and `d loss / d logits = (softmax - onehot) / batch`.
pub fn softmax_cross_entropy<T: Real>(
    logits: &[T],
    labels: &[usize],
    classes: usize,
) -> Result<(f64, Vec<T>)> {
    if classes == 0 || logits.len() != labels.len() * classes {
        return Err(Error::Shape("logits do not match labels x classes".into()));
    }
    let batch = labels.len();
    let inv_batch = 1.0 / batch as f64;
    let mut loss = 0.0f64;
    let mut grad = Vec::with_capacity(logits.len());
    for (row, &label) in logits.chunks_exact(classes).zip(labels) {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        let max = row
            .iter()
            .map(|v| v.as_f64())
            .fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| fexp(v.as_f64() - max)).collect();
        let total: f64 = exps.iter().sum();
        loss += fln(total) - (row[label].as_f64() - max);
        for (k, e) in exps.iter().enumerate() {
            let target = if k == label { 1.0 } else { 0.0 };
            grad.push(T::lit((e / total - target) * inv_batch));
        }
    }
    Ok((loss * inv_batch, grad))
}
