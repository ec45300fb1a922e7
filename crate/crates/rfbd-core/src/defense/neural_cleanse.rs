//! Trigger reverse-engineering: per class, optimize a mask and pattern that
//! force the model into that class, then flag classes whose recovered mask
//! is anomalously small under the MAD statistic.

use super::DefenseError;
use crate::nn::{
    adam_update_slice, AdamHyper, BackwardOptions, LossKind, LossTarget, Network, Tensor,
};
use crate::pipelines::RealDataset;

/// Anomaly index above which a class is considered infected.
pub const DETECTION_ANOMALY_INDEX: f64 = 2.0;

#[derive(Debug, Clone, Copy)]
pub struct NcOptions {
    pub steps: usize,
    pub lr: f64,
    pub lambda_init: f64,
    /// Doubles lambda when the reversed trigger succeeds on more than 99%
    /// of the batch, halves it below 90%.
    pub lambda_adapt: bool,
    /// Clean frames used per optimization.
    pub batch_limit: usize,
}

impl Default for NcOptions {
    fn default() -> Self {
        Self {
            steps: 300,
            lr: 0.1,
            lambda_init: 1e-3,
            lambda_adapt: true,
            batch_limit: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NcClassResult {
    pub class: usize,
    /// L1 norm of the converged mask.
    pub mask_norm: f64,
    /// Fraction of the batch the reversed trigger pushes into the class.
    pub success_rate: f64,
    /// False when the optimization never reached a working trigger.
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct NcReport {
    pub per_class: Vec<NcClassResult>,
    pub anomaly_indices: Vec<f64>,
    pub mad_degenerate: bool,
    /// Classes whose anomaly index exceeds the detection threshold.
    pub flagged_classes: Vec<usize>,
}

/// MAD outcome: indices plus a degeneracy flag for zero dispersion.
#[derive(Debug, Clone)]
pub struct MadOutcome {
    pub indices: Vec<f64>,
    pub degenerate: bool,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// `|x - median| / (1.4826 * median(|x - median|))` per entry; all zeros
/// with the degenerate flag when the MAD vanishes.
pub fn mad_anomaly(norms: &[f64]) -> MadOutcome {
    let mut sorted = norms.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = median(&sorted);
    let mut devs: Vec<f64> = norms.iter().map(|v| (v - med).abs()).collect();
    devs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mad = median(&devs);
    if mad == 0.0 {
        return MadOutcome {
            indices: vec![0.0; norms.len()],
            degenerate: true,
        };
    }
    MadOutcome {
        indices: norms.iter().map(|v| (v - med).abs() / (1.4826 * mad)).collect(),
        degenerate: false,
    }
}

/// Reverse-engineer a minimal trigger per class over clean frames and score
/// each class's mask norm with the MAD anomaly index.
pub fn neural_cleanse(
    model: &Network<f32>,
    ds: &RealDataset,
    clean_frames: &[usize],
    opts: &NcOptions,
) -> Result<NcReport, DefenseError> {
    let o = model.output_len();
    if clean_frames.len() < 100 {
        return Err(DefenseError::InsufficientData(format!(
            "{} clean frames, need at least 100",
            clean_frames.len()
        )));
    }
    let mut seen = vec![false; ds.n_classes];
    for &i in clean_frames {
        seen[ds.labels[i]] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(DefenseError::InsufficientData(
            "clean frames must span all classes".into(),
        ));
    }

    // Evenly-spaced subset capped at the batch limit.
    let take = clean_frames.len().min(opts.batch_limit.max(1));
    let stride_pick = clean_frames.len() / take;
    let picked: Vec<usize> = (0..take).map(|k| clean_frames[k * stride_pick]).collect();

    let d = 2 * ds.frame_len;
    let b = picked.len();
    let mut base = Vec::with_capacity(b * d);
    for &i in &picked {
        base.extend_from_slice(ds.feature_row(i));
    }
    let pattern_bound = base.iter().fold(0.0f32, |m, v| m.max(v.abs()));

    let mut per_class = Vec::with_capacity(o);
    for class in 0..o {
        let r = reverse_trigger(model, &base, b, d, class, pattern_bound, opts)?;
        per_class.push(r);
    }

    let norms: Vec<f64> = per_class.iter().map(|r| r.mask_norm).collect();
    let mad = mad_anomaly(&norms);
    let flagged: Vec<usize> = mad
        .indices
        .iter()
        .enumerate()
        .filter(|(c, &idx)| {
            // Only anomalously SMALL masks indicate a backdoor.
            idx > DETECTION_ANOMALY_INDEX && per_class[*c].converged && {
                let mut sorted = norms.clone();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                norms[*c] < median(&sorted)
            }
        })
        .map(|(c, _)| c)
        .collect();

    Ok(NcReport {
        per_class,
        anomaly_indices: mad.indices,
        mad_degenerate: mad.degenerate,
        flagged_classes: flagged,
    })
}

fn reverse_trigger(
    model: &Network<f32>,
    base: &[f32],
    b: usize,
    d: usize,
    class: usize,
    pattern_bound: f32,
    opts: &NcOptions,
) -> Result<NcClassResult, DefenseError> {
    let mut mask = vec![0.1f32; d];
    let mut pattern = vec![0.0f32; d];
    let mut m_m = vec![0.0f32; d];
    let mut m_v = vec![0.0f32; d];
    let mut p_m = vec![0.0f32; d];
    let mut p_v = vec![0.0f32; d];
    let mut lambda = opts.lambda_init;
    let targets = vec![class; b];
    let hyper = AdamHyper {
        lr: opts.lr,
        ..Default::default()
    };
    let mut success = 0.0f64;
    let mut step_count = 0u64;

    for _ in 0..opts.steps {
        // z = (1 - m) .* x + m .* p
        let mut z = Vec::with_capacity(b * d);
        for s in 0..b {
            let x = &base[s * d..(s + 1) * d];
            for i in 0..d {
                z.push((1.0 - mask[i]) * x[i] + mask[i] * pattern[i]);
            }
        }
        let zt = Tensor::from_values(vec![b, 1, 2, d / 2], z)
            .map_err(DefenseError::Nn)?;
        let out = model.backward_batch(
            &zt,
            &LossTarget::Classes(&targets),
            LossKind::SoftmaxCrossEntropy,
            BackwardOptions {
                training: false,
                dropout_seed: 0,
                param_grads: false,
            },
        )?;
        if !out.loss.is_finite() {
            return Err(DefenseError::Diverged(format!(
                "non-finite loss while reversing class {class}"
            )));
        }

        let mut hits = 0usize;
        for s in 0..b {
            let row = out.outputs.row(s);
            let pred = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            hits += (pred == class) as usize;
        }
        success = hits as f64 / b as f64;

        // chain rule through the overlay, plus the L1 term on the mask
        let dz = out.input_grads.values();
        let mut g_mask = vec![lambda as f32; d];
        let mut g_pattern = vec![0.0f32; d];
        for s in 0..b {
            let x = &base[s * d..(s + 1) * d];
            let g = &dz[s * d..(s + 1) * d];
            for i in 0..d {
                g_mask[i] += g[i] * (pattern[i] - x[i]);
                g_pattern[i] += g[i] * mask[i];
            }
        }

        step_count += 1;
        adam_update_slice(&mut mask, &mut m_m, &mut m_v, &g_mask, step_count, &hyper);
        adam_update_slice(&mut pattern, &mut p_m, &mut p_v, &g_pattern, step_count, &hyper);
        for v in &mut mask {
            *v = v.clamp(0.0, 1.0);
        }
        for v in &mut pattern {
            *v = v.clamp(-pattern_bound, pattern_bound);
        }

        if opts.lambda_adapt {
            if success > 0.99 {
                lambda = (lambda * 2.0).min(1e4);
            } else if success < 0.90 {
                lambda = (lambda / 2.0).max(1e-8);
            }
        }
    }

    Ok(NcClassResult {
        class,
        mask_norm: mask.iter().map(|&v| v as f64).sum(),
        success_rate: success,
        converged: success >= 0.5,
    })
}
