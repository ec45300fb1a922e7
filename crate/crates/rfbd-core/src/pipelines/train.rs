//! Training loops for the classifier and the PA surrogate.

use super::dataset::RealDataset;
use super::models::{pa_surrogate_net, vt_cnn2};
use super::PipelineError;
use crate::attack::{AttackError, PaResponder};
use crate::dsp::{map_bits, ofdm_modulate, OfdmConfig};
use crate::nn::{
    adam_step, AdamHyper, BackwardOptions, LossKind, LossTarget, Network, Tensor,
};
use crate::rf::{pa_clip, PaModel};
use crate::util::{bit_stream_rng, mix_seed};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Early-stopping patience on validation loss, in epochs.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainHyper {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 128,
            lr: 1e-3,
            patience: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Validation accuracy for classifiers, held-out NMSE in dB for the
    /// surrogate.
    pub val_metric: f64,
}

#[derive(Debug, Clone)]
pub struct TrainLog {
    pub metric_name: &'static str,
    pub epochs: Vec<EpochStats>,
}

/// 70/15/15 train/validation/test membership by seeded shuffle.
#[derive(Debug, Clone)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn split_indices(m: usize, seed: u64) -> SplitIndices {
    let mut order: Vec<usize> = (0..m).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, u64::from_le_bytes(*b"split70\0"), 0));
    order.shuffle(&mut rng);
    let n_train = (m as f64 * 0.70).round() as usize;
    let n_val = (m as f64 * 0.15).round() as usize;
    SplitIndices {
        train: order[..n_train].to_vec(),
        val: order[n_train..(n_train + n_val).min(m)].to_vec(),
        test: order[(n_train + n_val).min(m)..].to_vec(),
    }
}

fn gather_batch(ds: &RealDataset, indices: &[usize]) -> (Tensor<f32>, Vec<usize>) {
    let stride = 2 * ds.frame_len;
    let mut values = Vec::with_capacity(indices.len() * stride);
    let mut labels = Vec::with_capacity(indices.len());
    for &i in indices {
        values.extend_from_slice(ds.feature_row(i));
        labels.push(ds.labels[i]);
    }
    (
        Tensor::from_values(vec![indices.len(), 1, 2, ds.frame_len], values).expect("sized"),
        labels,
    )
}

fn eval_classifier(
    net: &Network<f32>,
    ds: &RealDataset,
    indices: &[usize],
) -> Result<(f64, f64), PipelineError> {
    let mut loss = 0.0f64;
    let mut correct = 0usize;
    for chunk in indices.chunks(512) {
        let (x, y) = gather_batch(ds, chunk);
        let l = net.loss_batch(&x, &LossTarget::Classes(&y), LossKind::SoftmaxCrossEntropy, false, 0)?;
        loss += l as f64 * chunk.len() as f64;
        let out = net.forward_batch(&x, false, 0)?;
        for (s, &label) in y.iter().enumerate() {
            let row = out.row(s);
            let pred = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            let _ = label;
            if pred == y[s] {
                correct += 1;
            }
        }
    }
    let n = indices.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Train the VT-CNN2 classifier with Adam, early stopping on validation
/// loss, returning the parameters that maximized validation accuracy.
pub fn train_classifier(
    ds: &RealDataset,
    split: &SplitIndices,
    hyper: &TrainHyper,
) -> Result<(Network<f32>, TrainLog), PipelineError> {
    if split.train.is_empty() || split.val.is_empty() {
        return Err(PipelineError::EmptySplit(format!(
            "train {} / val {}",
            split.train.len(),
            split.val.len()
        )));
    }
    let mut net = vt_cnn2(ds.n_classes, ds.frame_len, mix_seed(hyper.seed, u64::from_le_bytes(*b"clf-init"), 0))?;
    let mut log = TrainLog {
        metric_name: "val_acc",
        epochs: Vec::new(),
    };
    if hyper.epochs == 0 {
        return Ok((net, log));
    }

    let adam = AdamHyper {
        lr: hyper.lr,
        ..Default::default()
    };
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_params = net.params.clone();
    let mut best_val_loss = f64::INFINITY;
    let mut stale = 0usize;

    for epoch in 1..=hyper.epochs {
        let mut order = split.train.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(hyper.seed, epoch as u64, 3));
        order.shuffle(&mut rng);

        let mut train_loss = 0.0f64;
        for (bi, chunk) in order.chunks(hyper.batch_size).enumerate() {
            let (x, y) = gather_batch(ds, chunk);
            let out = net.backward_batch(
                &x,
                &LossTarget::Classes(&y),
                LossKind::SoftmaxCrossEntropy,
                BackwardOptions {
                    training: true,
                    dropout_seed: mix_seed(hyper.seed, epoch as u64, bi as u64),
                    param_grads: true,
                },
            )?;
            if !out.loss.is_finite() {
                return Err(PipelineError::NonFiniteLoss { epoch, batch: bi });
            }
            adam_step(&mut net.params, &out.grads, &adam)?;
            train_loss += out.loss as f64 * chunk.len() as f64;
        }
        train_loss /= order.len() as f64;

        let (val_loss, val_acc) = eval_classifier(&net, ds, &split.val)?;
        log.epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            val_metric: val_acc,
        });

        if val_acc > best_acc {
            best_acc = val_acc;
            best_params = net.params.clone();
        }
        if val_loss < best_val_loss {
            best_val_loss = val_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= hyper.patience {
                break;
            }
        }
    }

    net.load_params(best_params)?;
    Ok((net, log))
}

/// Probe pairs for surrogate training: pre-PA frames as inputs, the PA
/// clipping residual as regression targets.
#[derive(Debug, Clone)]
pub struct ProbeSet {
    pub n: usize,
    pub frame_len: usize,
    /// `n x 2 x frame_len` I/Q planes of the PA input.
    pub inputs: Vec<f32>,
    /// `n x 2 x frame_len` planes of `pa(x) - x`.
    pub residuals: Vec<f32>,
}

impl ProbeSet {
    fn input_row(&self, i: usize) -> &[f32] {
        let stride = 2 * self.frame_len;
        &self.inputs[i * stride..(i + 1) * stride]
    }

    fn residual_row(&self, i: usize) -> &[f32] {
        let stride = 2 * self.frame_len;
        &self.residuals[i * stride..(i + 1) * stride]
    }
}

fn planes(frame: &[Complex64]) -> impl Iterator<Item = f32> + '_ {
    frame
        .iter()
        .map(|v| v.re as f32)
        .chain(frame.iter().map(|v| v.im as f32))
}

/// Drive random OFDM frames (schemes cycling over the configured list)
/// through the true PA. Frames carry a per-frame amplitude jitter in
/// [0.5, 1.5] so the probe set covers the clipping knee densely instead of
/// concentrating at the nominal signal power.
pub fn generate_probe_set(
    cfg: &OfdmConfig,
    pa: &PaModel,
    n: usize,
    seed: u64,
) -> Result<ProbeSet, PipelineError> {
    if n == 0 {
        return Err(PipelineError::EmptyProbeSet);
    }
    let t = cfg.frame_len();
    let mut inputs = Vec::with_capacity(n * 2 * t);
    let mut residuals = Vec::with_capacity(n * 2 * t);
    for i in 0..n {
        let scheme = cfg.scheme_list[i % cfg.n_schemes()];
        let mut rng = bit_stream_rng(mix_seed(seed, u64::from_le_bytes(*b"paprobes"), 0), i as u64);
        let bits: Vec<u8> = (0..cfg.n_subcarriers * scheme.bits_per_symbol())
            .map(|_| rng.gen_range(0..=1u8))
            .collect();
        let scale: f64 = rng.gen_range(0.8..1.3);
        let mut s = ofdm_modulate(&map_bits(scheme, &bits)?, cfg)?;
        for v in &mut s {
            *v *= scale;
        }
        let clipped = pa_clip(&s, pa);
        let residual: Vec<Complex64> = clipped.iter().zip(&s).map(|(c, x)| c - x).collect();
        inputs.extend(planes(&s));
        residuals.extend(planes(&residual));
    }
    Ok(ProbeSet {
        n,
        frame_len: t,
        inputs,
        residuals,
    })
}

/// Trained PA stand-in: a sample-wise residual network added onto the
/// identity, exposed through [`PaResponder`].
#[derive(Debug, Clone)]
pub struct SurrogateModel {
    pub net: Network<f32>,
    pub frame_len: usize,
    pub trained: bool,
}

impl SurrogateModel {
    pub fn respond_frame(&self, frame: &[Complex64]) -> Result<Vec<Complex64>, AttackError> {
        if !self.trained {
            return Err(AttackError::Surrogate("surrogate is untrained".into()));
        }
        self.raw_response(frame)
    }

    /// Identity plus predicted residual, regardless of training state.
    pub fn raw_response(&self, frame: &[Complex64]) -> Result<Vec<Complex64>, AttackError> {
        if frame.len() != self.frame_len {
            return Err(AttackError::Surrogate(format!(
                "frame length {} does not match surrogate length {}",
                frame.len(),
                self.frame_len
            )));
        }
        let values: Vec<f32> = planes(frame).collect();
        let x = Tensor::from_values(vec![1, 2, 1, self.frame_len], values)
            .map_err(|e| AttackError::Surrogate(e.to_string()))?;
        let out = self
            .net
            .forward_batch(&x, false, 0)
            .map_err(|e| AttackError::Surrogate(e.to_string()))?;
        let row = out.row(0);
        let (re, im) = row.split_at(self.frame_len);
        Ok(frame
            .iter()
            .zip(re.iter().zip(im))
            .map(|(x, (&r, &i))| x + Complex64::new(r as f64, i as f64))
            .collect())
    }
}

impl PaResponder for SurrogateModel {
    fn respond(&self, frame: &[Complex64]) -> Result<Vec<Complex64>, AttackError> {
        self.respond_frame(frame)
    }
}

fn probe_batch(probes: &ProbeSet, indices: &[usize]) -> (Tensor<f32>, Tensor<f32>) {
    let stride = 2 * probes.frame_len;
    let mut x = Vec::with_capacity(indices.len() * stride);
    let mut y = Vec::with_capacity(indices.len() * stride);
    for &i in indices {
        x.extend_from_slice(probes.input_row(i));
        y.extend_from_slice(probes.residual_row(i));
    }
    (
        Tensor::from_values(vec![indices.len(), 2, 1, probes.frame_len], x).expect("sized"),
        Tensor::from_values(vec![indices.len(), stride], y).expect("sized"),
    )
}

/// Normalized MSE of the surrogate's PA-output prediction on the given
/// probe subset, in dB.
pub fn surrogate_nmse(
    model: &SurrogateModel,
    probes: &ProbeSet,
    indices: &[usize],
) -> Result<f64, PipelineError> {
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for chunk in indices.chunks(512) {
        let (x, _) = probe_batch(probes, chunk);
        let pred = model.net.forward_batch(&x, false, 0)?;
        for (s, &i) in chunk.iter().enumerate() {
            let inp = probes.input_row(i);
            let res = probes.residual_row(i);
            for ((&p, &r), &xi) in pred.row(s).iter().zip(res).zip(inp) {
                let err = p as f64 - r as f64;
                let pa_out = xi as f64 + r as f64;
                num += err * err;
                den += pa_out * pa_out;
            }
        }
    }
    Ok(10.0 * (num / den.max(f64::MIN_POSITIVE)).log10())
}

/// Train the surrogate on probe pairs with MSE; 85/15 train/held-out split,
/// early stopping on held-out loss. Returns the model, the log and the
/// held-out NMSE in dB.
pub fn train_surrogate(
    probes: &ProbeSet,
    hyper: &TrainHyper,
) -> Result<(SurrogateModel, TrainLog, f64), PipelineError> {
    if probes.n == 0 {
        return Err(PipelineError::EmptyProbeSet);
    }
    let mut order: Vec<usize> = (0..probes.n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(hyper.seed, u64::from_le_bytes(*b"pa-split"), 0));
    order.shuffle(&mut rng);
    let n_train = ((probes.n as f64) * 0.85).round() as usize;
    let (train_idx, held_out) = order.split_at(n_train.clamp(1, probes.n - 1));

    let net = pa_surrogate_net(probes.frame_len, mix_seed(hyper.seed, u64::from_le_bytes(*b"pa-init\0"), 0))?;
    let mut model = SurrogateModel {
        net,
        frame_len: probes.frame_len,
        trained: false,
    };
    let mut log = TrainLog {
        metric_name: "nmse_db",
        epochs: Vec::new(),
    };
    let mut adam = AdamHyper {
        lr: hyper.lr,
        ..Default::default()
    };

    let mut best_loss = f64::INFINITY;
    let mut best_params = model.net.params.clone();
    let mut stale = 0usize;
    let mut stale_lr = 0usize;

    for epoch in 1..=hyper.epochs {
        let mut idx = train_idx.to_vec();
        let mut erng = ChaCha8Rng::seed_from_u64(mix_seed(hyper.seed, epoch as u64, 4));
        idx.shuffle(&mut erng);

        let mut train_loss = 0.0f64;
        for (bi, chunk) in idx.chunks(hyper.batch_size).enumerate() {
            let (x, y) = probe_batch(probes, chunk);
            let out = model.net.backward_batch(
                &x,
                &LossTarget::Values(&y),
                LossKind::MeanSquaredError,
                BackwardOptions {
                    training: true,
                    dropout_seed: 0,
                    param_grads: true,
                },
            )?;
            if !out.loss.is_finite() {
                return Err(PipelineError::NonFiniteLoss { epoch, batch: bi });
            }
            adam_step(&mut model.net.params, &out.grads, &adam)?;
            train_loss += out.loss as f64 * chunk.len() as f64;
        }
        train_loss /= train_idx.len() as f64;

        let (vx, vy) = probe_batch(probes, held_out);
        let val_loss = model.net.loss_batch(
            &vx,
            &LossTarget::Values(&vy),
            LossKind::MeanSquaredError,
            false,
            0,
        )? as f64;
        let nmse = surrogate_nmse(&model, probes, held_out)?;
        log.epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            val_metric: nmse,
        });

        if val_loss < best_loss {
            best_loss = val_loss;
            best_params = model.net.params.clone();
            stale = 0;
            stale_lr = 0;
        } else {
            stale += 1;
            stale_lr += 1;
            if stale >= hyper.patience {
                break;
            }
            // halve the step size when the held-out loss plateaus
            if stale_lr >= 3 && adam.lr > hyper.lr / 128.0 {
                adam.lr *= 0.5;
                stale_lr = 0;
            }
        }
    }

    model.net.load_params(best_params)?;
    model.trained = !log.epochs.is_empty();
    let nmse = surrogate_nmse(&model, probes, held_out)?;
    Ok((model, log, nmse))
}
