//! Loss functions: softmax cross-entropy and mean-squared error.

use super::tensor::Tensor;
use super::{NnError, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    SoftmaxCrossEntropy,
    MeanSquaredError,
}

/// Training targets: class indices for cross-entropy, a value tensor of the
/// output shape for regression.
pub enum LossTarget<'a, F: Real> {
    Classes(&'a [usize]),
    Values(&'a Tensor<F>),
}

impl<F: Real> LossTarget<'_, F> {
    pub(crate) fn check(&self, batch: usize, out_len: usize, kind: LossKind) -> Result<(), NnError> {
        match (self, kind) {
            (LossTarget::Classes(classes), LossKind::SoftmaxCrossEntropy) => {
                if classes.len() != batch {
                    return Err(NnError::ShapeMismatch(format!(
                        "{} class targets for batch of {batch}",
                        classes.len()
                    )));
                }
                if classes.iter().any(|&c| c >= out_len) {
                    return Err(NnError::ShapeMismatch(format!(
                        "class target outside {out_len} outputs"
                    )));
                }
                Ok(())
            }
            (LossTarget::Values(values), LossKind::MeanSquaredError) => {
                if values.numel() != batch * out_len {
                    return Err(NnError::ShapeMismatch(format!(
                        "target tensor {:?} for batch {batch} x {out_len}",
                        values.dims()
                    )));
                }
                Ok(())
            }
            _ => Err(NnError::LossMismatch),
        }
    }
}

/// Numerically-stable softmax per sample row.
fn softmax<F: Real>(logits: &[F]) -> Vec<F> {
    let max = logits
        .iter()
        .copied()
        .fold(F::neg_infinity(), |a, b| a.max(b));
    let exps: Vec<F> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total: F = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Softmax over every row of a `[batch, classes]` tensor.
pub fn softmax_rows<F: Real>(logits: &Tensor<F>) -> Tensor<F> {
    let b = lotensor_rows(logits);
    let n = logits.numel() / b.max(1);
    let mut values = Vec::with_capacity(logits.numel());
    for r in 0..b {
        values.extend(softmax(&logits.values()[r * n..(r + 1) * n]));
    }
    Tensor::from_values(logits.dims().to_vec(), values).expect("same shape")
}

fn lotensor_rows<F: Real>(t: &Tensor<F>) -> usize {
    t.dims().first().copied().unwrap_or(0)
}

/// Loss contribution of one sample (already scaled so the batch total is the
/// mean cross-entropy, or the mean squared error over all elements).
pub(crate) fn per_sample_loss<F: Real>(
    output: &[F],
    target: &LossTarget<'_, F>,
    kind: LossKind,
    sample: usize,
    batch: usize,
) -> F {
    let b = F::of_f64(batch as f64);
    match (kind, target) {
        (LossKind::SoftmaxCrossEntropy, LossTarget::Classes(classes)) => {
            let p = softmax(output);
            let eps = F::of_f64(1e-300_f64.max(f64::MIN_POSITIVE));
            -(p[classes[sample]].max(eps)).ln() / b
        }
        (LossKind::MeanSquaredError, LossTarget::Values(values)) => {
            let row = &values.values()[sample * output.len()..(sample + 1) * output.len()];
            let scale = F::of_f64(1.0 / (batch as f64 * output.len() as f64));
            output
                .iter()
                .zip(row)
                .map(|(&o, &t)| (o - t) * (o - t))
                .sum::<F>()
                * scale
        }
        _ => unreachable!("targets checked before dispatch"),
    }
}

/// Gradient of the batch loss with respect to one sample's output row.
pub(crate) fn per_sample_grad<F: Real>(
    output: &[F],
    target: &LossTarget<'_, F>,
    kind: LossKind,
    sample: usize,
    batch: usize,
) -> Vec<F> {
    match (kind, target) {
        (LossKind::SoftmaxCrossEntropy, LossTarget::Classes(classes)) => {
            let b = F::of_f64(batch as f64);
            let mut g = softmax(output);
            g[classes[sample]] -= F::one();
            for v in &mut g {
                *v = *v / b;
            }
            g
        }
        (LossKind::MeanSquaredError, LossTarget::Values(values)) => {
            let row = &values.values()[sample * output.len()..(sample + 1) * output.len()];
            let scale = F::of_f64(2.0 / (batch as f64 * output.len() as f64));
            output
                .iter()
                .zip(row)
                .map(|(&o, &t)| (o - t) * scale)
                .collect()
        }
        _ => unreachable!("targets checked before dispatch"),
    }
}
