use super::tensor::Tensor;
use crate::error::{Error, Result};

fn check(logits: &Tensor, labels: &[usize]) -> Result<(usize, usize)> {
    logits.expect_rank(2, "logits")?;
    let (b, k) = (logits.shape()[0], logits.shape()[1]);
    if b == 0 || labels.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if labels.len() != b {
        return Err(Error::dims(b, labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidParameter(format!("label {bad} with {k} classes")));
    }
    Ok((b, k))
}

/// Numerically stable log-softmax of one row, in f64.
fn log_softmax(row: &[f32]) -> Vec<f64> {
    let m = row.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v as f64));
    let lse = m + row.iter().map(|&v| (v as f64 - m).exp()).sum::<f64>().ln();
    row.iter().map(|&v| v as f64 - lse).collect()
}

/// Mean negative log-likelihood of `labels` under softmax(`logits`).
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<f64> {
    Ok(cross_entropy_with_grad(logits, labels)?.0)
}

/// Loss plus its gradient with respect to the logits.
pub fn cross_entropy_with_grad(logits: &Tensor, labels: &[usize]) -> Result<(f64, Tensor)> {
    let (b, k) = check(logits, labels)?;
    let mut loss = 0.0;
    let mut grad = vec![0.0f32; b * k];
    for ((row, g), &label) in logits.data().chunks_exact(k).zip(grad.chunks_exact_mut(k)).zip(labels) {
        let ls = log_softmax(row);
        loss -= ls[label];
        for (j, gv) in g.iter_mut().enumerate() {
            let target = if j == label { 1.0 } else { 0.0 };
            *gv = ((ls[j].exp() - target) / b as f64) as f32;
        }
    }
    Ok((loss / b as f64, Tensor::new(&[b, k], grad)?))
}
