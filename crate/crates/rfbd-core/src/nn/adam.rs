//! Adam optimizer with bias correction.

use super::net::ModelParameters;
use super::tensor::Tensor;
use super::{NnError, Real};

#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One Adam update on a raw value/moment/gradient slice set at the given
/// (already incremented) step count.
pub fn adam_update_slice<F: Real>(
    values: &mut [F],
    m: &mut [F],
    v: &mut [F],
    grads: &[F],
    step: u64,
    hyper: &AdamHyper,
) {
    let b1 = F::of_f64(hyper.beta1);
    let b2 = F::of_f64(hyper.beta2);
    let one = F::one();
    let corr1 = F::of_f64(1.0 - hyper.beta1.powi(step as i32));
    let corr2 = F::of_f64(1.0 - hyper.beta2.powi(step as i32));
    let lr = F::of_f64(hyper.lr);
    let eps = F::of_f64(hyper.epsilon);
    for i in 0..values.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let m_hat = m[i] / corr1;
        let v_hat = v[i] / corr2;
        values[i] = values[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Apply one Adam step to every parameter tensor.
pub fn adam_step<F: Real>(
    params: &mut ModelParameters<F>,
    grads: &[Tensor<F>],
    hyper: &AdamHyper,
) -> Result<(), NnError> {
    if grads.len() != params.entries.len() {
        return Err(NnError::ShapeMismatch(format!(
            "{} gradient tensors for {} parameters",
            grads.len(),
            params.entries.len()
        )));
    }
    for (e, g) in params.entries.iter().zip(grads) {
        if e.value.dims() != g.dims() {
            return Err(NnError::ShapeMismatch(format!(
                "gradient {:?} for parameter {} {:?}",
                g.dims(),
                e.name,
                e.value.dims()
            )));
        }
    }
    params.step += 1;
    let step = params.step;
    for (e, g) in params.entries.iter_mut().zip(grads) {
        adam_update_slice(
            e.value.values_mut(),
            e.m.values_mut(),
            e.v.values_mut(),
            g.values(),
            step,
            hyper,
        );
    }
    Ok(())
}
