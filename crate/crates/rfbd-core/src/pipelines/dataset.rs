//! Clean and backdoored dataset generation.
//!
//! Every frame runs modulate -> PA clip -> fading channel -> CNC. Per-frame
//! RNG streams are derived from the master seed and the frame index, so a
//! backdoored run reproduces the clean run bit-exactly everywhere the poison
//! does not touch.

use super::PipelineError;
use crate::attack::{
    apply_poison, build_poison, extract_true_triggers, relabel, select_targets, ComplexMatrix,
    PoisonPlan, TriggerBank,
};
use crate::dsp::{clipping_threshold, map_bits, mean_power, ofdm_modulate, OfdmConfig, Scheme};
use crate::rf::{channel_apply, cnc_receive, pa_clip, sample_channel, ChannelConfig, CncConfig, PaModel};
use crate::util::{bit_stream_rng, channel_rng, mix_seed};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

/// Everything static about the simulated link.
#[derive(Debug, Clone)]
pub struct LinkConfig {
    pub ofdm: OfdmConfig,
    pub channel: ChannelConfig,
    pub cnc_iterations: usize,
}

impl LinkConfig {
    /// Scheme and SNR assignment for a frame index: frames cycle uniformly
    /// over all (scheme, SNR) pairs, so per-pair counts differ by at most one.
    pub fn assignment(&self, frame: usize) -> (usize, usize) {
        let o = self.ofdm.n_schemes();
        let pair = frame % (o * self.ofdm.snr_list_db.len());
        (pair % o, pair / o)
    }
}

/// Received complex frames with per-frame metadata.
#[derive(Debug, Clone)]
pub struct OfdmFrameSet {
    pub frames: ComplexMatrix,
    pub labels: Vec<usize>,
    pub snr_db: Vec<f64>,
    pub poisoned: Vec<bool>,
}

impl OfdmFrameSet {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Mean `|sample|^2` over all samples of all frames.
    pub fn measure_power(&self) -> Result<f64, crate::dsp::DspError> {
        mean_power(self.frames.iter().map(|f| f.as_slice()))
    }
}

/// Real-valued training view: stacked I/Q planes in f32 plus one-hot labels.
#[derive(Debug, Clone)]
pub struct RealDataset {
    pub frame_len: usize,
    pub n_classes: usize,
    /// `len x 2 x frame_len`, I plane then Q plane per frame.
    pub features: Vec<f32>,
    /// `len x n_classes`.
    pub onehot: Vec<f32>,
    pub labels: Vec<usize>,
    pub snr_db: Vec<f64>,
    pub poisoned: Vec<bool>,
}

impl RealDataset {
    pub fn from_frames(set: &OfdmFrameSet, n_classes: usize) -> Self {
        let frame_len = set.frames.first().map_or(0, |f| f.len());
        let mut features = Vec::with_capacity(set.len() * 2 * frame_len);
        for frame in &set.frames {
            features.extend(frame.iter().map(|v| v.re as f32));
            features.extend(frame.iter().map(|v| v.im as f32));
        }
        let mut onehot = vec![0.0f32; set.len() * n_classes];
        for (m, &label) in set.labels.iter().enumerate() {
            onehot[m * n_classes + label] = 1.0;
        }
        Self {
            frame_len,
            n_classes,
            features,
            onehot,
            labels: set.labels.clone(),
            snr_db: set.snr_db.clone(),
            poisoned: set.poisoned.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// One frame's `2 x frame_len` feature planes.
    pub fn feature_row(&self, m: usize) -> &[f32] {
        let stride = 2 * self.frame_len;
        &self.features[m * stride..(m + 1) * stride]
    }

    /// Rebuild the complex frame from the stored f32 planes.
    pub fn complex_frame(&self, m: usize) -> Vec<Complex64> {
        let row = self.feature_row(m);
        let (re, im) = row.split_at(self.frame_len);
        re.iter()
            .zip(im)
            .map(|(&r, &i)| Complex64::new(r as f64, i as f64))
            .collect()
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let m = self.len();
        if self.features.len() != m * 2 * self.frame_len
            || self.onehot.len() != m * self.n_classes
            || self.snr_db.len() != m
            || self.poisoned.len() != m
        {
            return Err(PipelineError::InvalidDataset("field lengths disagree".into()));
        }
        if self.features.iter().any(|v| !v.is_finite()) {
            return Err(PipelineError::InvalidDataset("non-finite feature".into()));
        }
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= self.n_classes {
                return Err(PipelineError::InvalidDataset(format!(
                    "label {l} at frame {i} outside {} classes",
                    self.n_classes
                )));
            }
            let row = &self.onehot[i * self.n_classes..(i + 1) * self.n_classes];
            let sum: f32 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-6 || row[l] != 1.0 {
                return Err(PipelineError::InvalidDataset(format!(
                    "one-hot row {i} does not encode label {l}"
                )));
            }
        }
        Ok(())
    }
}

fn check_frame_count(link: &LinkConfig, m: usize) -> Result<(), PipelineError> {
    let min = link.ofdm.n_schemes() * link.ofdm.snr_list_db.len();
    if m < min {
        return Err(PipelineError::TooFewFrames { m, min });
    }
    Ok(())
}

/// Pre-PA time-domain frame for one index: seeded bit stream, constellation
/// mapping, OFDM modulation.
fn pre_pa_frame(
    link: &LinkConfig,
    frame: usize,
    master_seed: u64,
) -> Result<Vec<Complex64>, PipelineError> {
    let (scheme_idx, _) = link.assignment(frame);
    let scheme = link.ofdm.scheme_list[scheme_idx];
    let mut rng = bit_stream_rng(master_seed, frame as u64);
    let n_bits = link.ofdm.n_subcarriers * scheme.bits_per_symbol();
    let bits: Vec<u8> = (0..n_bits).map(|_| rng.gen_range(0..=1u8)).collect();
    let symbols = map_bits(scheme, &bits)?;
    Ok(ofdm_modulate(&symbols, &link.ofdm)?)
}

/// Regenerate the benign pre-PA matrix rows for the given frame indices.
pub fn regenerate_pre_pa(
    link: &LinkConfig,
    master_seed: u64,
    indices: &[usize],
) -> Result<ComplexMatrix, PipelineError> {
    indices
        .par_iter()
        .map(|&m| pre_pa_frame(link, m, master_seed))
        .collect()
}

/// Receiver chain for one already-clipped frame.
fn receive_frame(
    link: &LinkConfig,
    frame: usize,
    master_seed: u64,
    clipped: &[Complex64],
    scheme: Scheme,
    snr_db: f64,
    pa: &PaModel,
) -> Result<Vec<Complex64>, PipelineError> {
    let mut rng = channel_rng(master_seed, frame as u64);
    let ch = sample_channel(&link.channel, snr_db, &mut rng);
    let y = channel_apply(clipped, &ch, &mut rng);
    let cnc = CncConfig {
        n_iterations: link.cnc_iterations,
        scheme,
    };
    Ok(cnc_receive(&y, pa, &cnc, &link.ofdm)?)
}

fn generate_labels(link: &LinkConfig, m: usize) -> (Vec<usize>, Vec<f64>) {
    (0..m)
        .map(|i| {
            let (s, snr) = link.assignment(i);
            (s, link.ofdm.snr_list_db[snr])
        })
        .unzip()
}

/// Full clean generation: frames cycle over (scheme, SNR) pairs, the
/// clipping threshold comes from the configured IBO against the measured
/// pre-PA power of the whole set.
pub fn generate_clean_dataset(
    link: &LinkConfig,
    m: usize,
    master_seed: u64,
) -> Result<(OfdmFrameSet, RealDataset), PipelineError> {
    check_frame_count(link, m)?;
    link.ofdm.validate()?;
    link.channel.validate()?;

    let pre_pa: ComplexMatrix = (0..m)
        .into_par_iter()
        .map(|i| pre_pa_frame(link, i, master_seed))
        .collect::<Result<_, _>>()?;
    let p_in = mean_power(pre_pa.iter().map(|f| f.as_slice()))?;
    let a = clipping_threshold(link.ofdm.ibo_db, p_in)?;
    let pa = PaModel::new(a)?;
    let (labels, snrs) = generate_labels(link, m);

    let frames: ComplexMatrix = (0..m)
        .into_par_iter()
        .map(|i| {
            let clipped = pa_clip(&pre_pa[i], &pa);
            receive_frame(
                link,
                i,
                master_seed,
                &clipped,
                link.ofdm.scheme_list[labels[i]],
                snrs[i],
                &pa,
            )
        })
        .collect::<Result<_, _>>()?;

    let set = OfdmFrameSet {
        frames,
        labels,
        snr_db: snrs,
        poisoned: vec![false; m],
    };
    let ds = RealDataset::from_frames(&set, link.ofdm.n_schemes());
    Ok((set, ds))
}

/// Attack knobs used to derive a poison plan from a generated set.
#[derive(Debug, Clone, Copy)]
pub struct PoisonSpec {
    pub rho_percent: f64,
    pub target_class: usize,
    /// `delta` as a fraction of the clipping threshold.
    pub delta_frac: f64,
    /// `epsilon` as a fraction of the clipping threshold.
    pub epsilon_frac: f64,
}

/// Build the poison plan for the dataset that `master_seed` generates:
/// regenerates the benign pre-PA matrix, measures the clipping threshold,
/// picks targets and constructs the poison matrix.
pub fn build_poison_plan(
    link: &LinkConfig,
    m: usize,
    master_seed: u64,
    spec: &PoisonSpec,
) -> Result<PoisonPlan, PipelineError> {
    check_frame_count(link, m)?;
    let pre_pa: ComplexMatrix = (0..m)
        .into_par_iter()
        .map(|i| pre_pa_frame(link, i, master_seed))
        .collect::<Result<_, _>>()?;
    let p_in = mean_power(pre_pa.iter().map(|f| f.as_slice()))?;
    let a = clipping_threshold(link.ofdm.ibo_db, p_in)?;
    let (labels, _) = generate_labels(link, m);

    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(master_seed, u64::from_le_bytes(*b"poisplan"), 0));
    let targets = select_targets(m, spec.rho_percent, &labels, spec.target_class, &mut rng)?;
    let c: ComplexMatrix = targets.iter().map(|&j| pre_pa[j].clone()).collect();
    let poison = build_poison(&c, a, spec.delta_frac * a, spec.epsilon_frac * a)?;
    Ok(PoisonPlan {
        target_indices: targets,
        clip_threshold: a,
        delta: spec.delta_frac * a,
        epsilon: spec.epsilon_frac * a,
        target_class: spec.target_class,
        poison,
    })
}

/// Backdoored generation output.
#[derive(Debug, Clone)]
pub struct BackdooredOutput {
    pub frames: OfdmFrameSet,
    pub dataset: RealDataset,
    /// True physical triggers captured at the PA output, one row per
    /// effective target.
    pub bank: TriggerBank,
    pub effective_targets: Vec<usize>,
    pub dropped_targets: Vec<usize>,
    /// Benign pre-PA rows of the effective targets.
    pub benign_rows: ComplexMatrix,
    /// Poisoned pre-PA rows of the effective targets.
    pub poisoned_rows: ComplexMatrix,
}

/// Generate the backdoored dataset for a plan built against the same seed
/// and configuration. Frames outside the plan come out bit-identical to the
/// clean run.
pub fn generate_backdoored_dataset(
    link: &LinkConfig,
    m: usize,
    master_seed: u64,
    plan: &PoisonPlan,
) -> Result<BackdooredOutput, PipelineError> {
    check_frame_count(link, m)?;
    plan.validate(m, link.ofdm.frame_len(), link.ofdm.n_schemes())?;

    let pre_pa: ComplexMatrix = (0..m)
        .into_par_iter()
        .map(|i| pre_pa_frame(link, i, master_seed))
        .collect::<Result<_, _>>()?;
    let p_in = mean_power(pre_pa.iter().map(|f| f.as_slice()))?;
    let a = clipping_threshold(link.ofdm.ibo_db, p_in)?;
    if (a - plan.clip_threshold).abs() > 1e-9 * a {
        return Err(PipelineError::PlanMismatch(format!(
            "plan clipping threshold {} vs regenerated {a}; wrong seed or config",
            plan.clip_threshold
        )));
    }
    let pa = PaModel::new(a)?;
    let (labels, snrs) = generate_labels(link, m);

    let c: ComplexMatrix = plan
        .target_indices
        .iter()
        .map(|&j| pre_pa[j].clone())
        .collect();
    let c_star = apply_poison(&c, &plan.poison)?;
    let outcome = relabel(&labels, &plan.target_indices, &plan.poison, plan.target_class);

    // Physical triggers at the PA output, before the channel, for the
    // effective targets only.
    let mut benign_rows = Vec::with_capacity(outcome.effective_targets.len());
    let mut poisoned_rows = Vec::with_capacity(outcome.effective_targets.len());
    for (pos, &j) in plan.target_indices.iter().enumerate() {
        if outcome.effective_targets.contains(&j) {
            benign_rows.push(c[pos].clone());
            poisoned_rows.push(c_star[pos].clone());
        }
    }
    let c_pa: ComplexMatrix = benign_rows.iter().map(|r| pa_clip(r, &pa)).collect();
    let c_star_pa: ComplexMatrix = poisoned_rows.iter().map(|r| pa_clip(r, &pa)).collect();
    let true_triggers = extract_true_triggers(&c_star_pa, &c_pa)?;

    // Assemble the poisoned transmit matrix.
    let mut tx = pre_pa;
    for (pos, &j) in plan.target_indices.iter().enumerate() {
        tx[j] = c_star[pos].clone();
    }

    let poisoned_flag: Vec<bool> = {
        let mut flags = vec![false; m];
        for &j in &outcome.effective_targets {
            flags[j] = true;
        }
        flags
    };

    let frames: ComplexMatrix = (0..m)
        .into_par_iter()
        .map(|i| {
            let clipped = pa_clip(&tx[i], &pa);
            receive_frame(
                link,
                i,
                master_seed,
                &clipped,
                link.ofdm.scheme_list[labels[i]],
                snrs[i],
                &pa,
            )
        })
        .collect::<Result<_, _>>()?;

    let set = OfdmFrameSet {
        frames,
        labels: outcome.labels,
        snr_db: snrs,
        poisoned: poisoned_flag,
    };
    let ds = RealDataset::from_frames(&set, link.ofdm.n_schemes());
    Ok(BackdooredOutput {
        dataset: ds,
        bank: TriggerBank::new(true_triggers),
        effective_targets: outcome.effective_targets,
        dropped_targets: outcome.dropped_targets,
        benign_rows,
        poisoned_rows,
        frames: set,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::default_scheme_list;

    fn link(n: usize, cp: usize, snrs: Vec<f64>) -> LinkConfig {
        LinkConfig {
            ofdm: OfdmConfig::new(n, cp, default_scheme_list(), 3.0, snrs).unwrap(),
            channel: ChannelConfig::new(3, 0.5).unwrap(),
            cnc_iterations: 2,
        }
    }

    #[test]
    fn balanced_assignment_with_one_frame_per_pair() {
        let link = link(64, 16, vec![0.0, 18.0]);
        let (set, ds) = generate_clean_dataset(&link, 22, 9).unwrap();
        assert_eq!(set.len(), 22);
        let mut counts = std::collections::HashMap::new();
        for i in 0..22 {
            *counts.entry((set.labels[i], set.snr_db[i] as i64)).or_insert(0) += 1;
        }
        assert_eq!(counts.len(), 22);
        assert!(counts.values().all(|&c| c == 1));
        ds.validate().unwrap();
    }

    #[test]
    fn too_few_frames_rejected() {
        let link = link(64, 16, vec![0.0, 18.0]);
        assert!(matches!(
            generate_clean_dataset(&link, 21, 9),
            Err(PipelineError::TooFewFrames { .. })
        ));
    }

    #[test]
    fn generation_is_bit_deterministic() {
        let link = link(64, 16, vec![8.0]);
        let (_, a) = generate_clean_dataset(&link, 33, 4).unwrap();
        let (_, b) = generate_clean_dataset(&link, 33, 4).unwrap();
        assert_eq!(a.features, b.features);
        let (_, c) = generate_clean_dataset(&link, 33, 5).unwrap();
        assert_ne!(a.features, c.features);
    }

    #[test]
    fn feature_planes_match_complex_frames() {
        let link = link(64, 16, vec![8.0]);
        let (set, ds) = generate_clean_dataset(&link, 22, 4).unwrap();
        let rebuilt = ds.complex_frame(3);
        for (orig, re) in set.frames[3].iter().zip(&rebuilt) {
            assert!((orig.re as f32 - re.re as f32).abs() == 0.0);
            assert!((orig.im as f32 - re.im as f32).abs() == 0.0);
        }
    }

    #[test]
    fn backdoored_run_shares_clean_frames_and_flags_poisoned() {
        let link = link(64, 16, vec![8.0, 18.0]);
        let m = 110;
        let seed = 21;
        let (_, clean) = generate_clean_dataset(&link, m, seed).unwrap();
        let spec = PoisonSpec {
            rho_percent: 10.0,
            target_class: 2,
            delta_frac: 0.1,
            epsilon_frac: 0.01,
        };
        let plan = build_poison_plan(&link, m, seed, &spec).unwrap();
        assert_eq!(plan.target_indices.len(), 11);
        let out = generate_backdoored_dataset(&link, m, seed, &plan).unwrap();
        out.dataset.validate().unwrap();

        let stride = 2 * clean.frame_len;
        for i in 0..m {
            let same = clean.features[i * stride..(i + 1) * stride]
                == out.dataset.features[i * stride..(i + 1) * stride];
            if out.dataset.poisoned[i] {
                assert!(!same, "poisoned frame {i} must differ");
                assert_eq!(out.dataset.labels[i], 2);
            } else {
                assert!(same, "clean frame {i} must be bit-identical");
                assert_eq!(out.dataset.labels[i], clean.labels[i]);
            }
        }
        assert_eq!(
            out.bank.true_triggers.len(),
            out.effective_targets.len()
        );
        assert!(!out.bank.true_triggers.is_empty());
    }

    #[test]
    fn plan_against_wrong_seed_is_rejected() {
        let link = link(64, 16, vec![8.0]);
        let spec = PoisonSpec {
            rho_percent: 10.0,
            target_class: 0,
            delta_frac: 0.1,
            epsilon_frac: 0.01,
        };
        let plan = build_poison_plan(&link, 44, 1, &spec).unwrap();
        assert!(matches!(
            generate_backdoored_dataset(&link, 44, 2, &plan),
            Err(PipelineError::PlanMismatch(_))
        ));
    }
}
