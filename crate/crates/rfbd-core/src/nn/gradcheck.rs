//! Central finite-difference verification of analytic gradients.
//!
//! Uses forward passes only, so it stays independent of the backward
//! implementation it checks. Intended for `f64` networks.

use super::loss::{per_sample_loss, LossKind, LossTarget};
use super::net::{BackwardOptions, Network};
use super::tensor::Tensor;
use super::{NnError, Real};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

impl<F: Real> Network<F> {
    /// Batch loss via the forward pass alone.
    pub fn loss_batch(
        &self,
        batch: &Tensor<F>,
        targets: &LossTarget<'_, F>,
        kind: LossKind,
        training: bool,
        dropout_seed: u64,
    ) -> Result<F, NnError> {
        let outputs = self.forward_batch(batch, training, dropout_seed)?;
        let b = batch.dims()[0];
        targets.check(b, self.output_len(), kind)?;
        let mut total = F::zero();
        for s in 0..b {
            total += per_sample_loss(outputs.row(s), targets, kind, s, b);
        }
        Ok(total)
    }
}

/// Largest relative disagreement between analytic gradients and central
/// finite differences over `n_coords` randomly sampled parameter
/// coordinates.
pub fn max_grad_rel_error(
    net: &mut Network<f64>,
    batch: &Tensor<f64>,
    targets: &LossTarget<'_, f64>,
    kind: LossKind,
    opts: BackwardOptions,
    n_coords: usize,
    seed: u64,
) -> Result<f64, NnError> {
    let analytic = net.backward_batch(batch, targets, kind, opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_params = net.params.entries.len();
    let mut worst = 0.0f64;
    for _ in 0..n_coords {
        let p = rng.gen_range(0..n_params);
        let i = rng.gen_range(0..net.params.entries[p].value.numel());
        let w0 = net.params.entries[p].value.values()[i];
        let h = 1e-5 * w0.abs().max(1.0);

        net.params.entries[p].value.values_mut()[i] = w0 + h;
        let up = net.loss_batch(batch, targets, kind, opts.training, opts.dropout_seed)?;
        net.params.entries[p].value.values_mut()[i] = w0 - h;
        let down = net.loss_batch(batch, targets, kind, opts.training, opts.dropout_seed)?;
        net.params.entries[p].value.values_mut()[i] = w0;

        let fd = (up - down) / (2.0 * h);
        let an = analytic.grads[p].values()[i];
        let denom = an.abs().max(fd.abs()).max(1e-6);
        worst = worst.max((fd - an).abs() / denom);
    }
    Ok(worst)
}
