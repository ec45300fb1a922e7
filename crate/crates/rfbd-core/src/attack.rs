//! Amplitude poisoning, relabeling, physical-trigger extraction and
//! trigger injection.
//!
//! The poisoning rule raises every targeted sample whose amplitude sits
//! within `delta` of the clipping threshold to exactly `A + epsilon`, along
//! the sample's own phase, so the PA is forced to clip it. The clipping
//! residue left by those samples is the physical trigger.

use num_complex::Complex64;
use rand::Rng;
use thiserror::Error;

pub type ComplexMatrix = Vec<Vec<Complex64>>;
pub type RealMatrix = Vec<Vec<f64>>;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("poisoning ratio {0} outside (0, 100]")]
    InvalidRatio(f64),
    #[error("need {needed} frames with label != target but only {available} are eligible")]
    TooFewEligible { needed: usize, available: usize },
    #[error("invalid thresholds: require clip {clip} > delta {delta} > 0 and epsilon {epsilon} > 0")]
    InvalidThresholds { clip: f64, delta: f64, epsilon: f64 },
    #[error("matrix shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("trigger bank is empty")]
    EmptyTriggerBank,
    #[error("surrogate response failed: {0}")]
    Surrogate(String),
    #[error("injection index {index} outside test set of {len} frames")]
    IndexOutOfRange { index: usize, len: usize },
}

/// Which frames to poison and by how much.
///
/// `poison[j][n]` is zero where the sample is left alone; elsewhere it is
/// the real amplitude increment `A - |C[j][n]| + epsilon`, which is negative
/// for samples already above the threshold (they are pulled down to
/// `A + epsilon`, still clipping).
#[derive(Debug, Clone)]
pub struct PoisonPlan {
    /// Sorted frame indices targeted for poisoning.
    pub target_indices: Vec<usize>,
    /// Clipping threshold the plan was built against.
    pub clip_threshold: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub target_class: usize,
    pub poison: RealMatrix,
}

impl PoisonPlan {
    pub fn validate(&self, m_total: usize, frame_len: usize, n_classes: usize) -> Result<(), AttackError> {
        if self.target_class >= n_classes {
            return Err(AttackError::ShapeMismatch(format!(
                "target class {} outside {} classes",
                self.target_class, n_classes
            )));
        }
        if !(self.clip_threshold > self.delta && self.delta > 0.0 && self.epsilon > 0.0) {
            return Err(AttackError::InvalidThresholds {
                clip: self.clip_threshold,
                delta: self.delta,
                epsilon: self.epsilon,
            });
        }
        if self.poison.len() != self.target_indices.len() {
            return Err(AttackError::ShapeMismatch(format!(
                "{} poison rows for {} target indices",
                self.poison.len(),
                self.target_indices.len()
            )));
        }
        for &idx in &self.target_indices {
            if idx >= m_total {
                return Err(AttackError::IndexOutOfRange { index: idx, len: m_total });
            }
        }
        let bound = self.delta + self.epsilon;
        for row in &self.poison {
            if row.len() != frame_len {
                return Err(AttackError::ShapeMismatch(format!(
                    "poison row length {} vs frame length {frame_len}",
                    row.len()
                )));
            }
            if row.iter().any(|&v| !(v == 0.0 || v <= bound + 1e-12) || !v.is_finite()) {
                return Err(AttackError::ShapeMismatch(
                    "poison entry above delta + epsilon".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Pick `round(M * rho / 100)` poisoning targets uniformly, without
/// replacement, among frames whose label differs from the target class.
pub fn select_targets<R: Rng>(
    m: usize,
    rho_percent: f64,
    labels: &[usize],
    target_class: usize,
    rng: &mut R,
) -> Result<Vec<usize>, AttackError> {
    if !(rho_percent > 0.0 && rho_percent <= 100.0) {
        return Err(AttackError::InvalidRatio(rho_percent));
    }
    let count = (m as f64 * rho_percent / 100.0).round() as usize;
    let eligible: Vec<usize> = (0..m).filter(|&i| labels[i] != target_class).collect();
    if eligible.len() < count {
        return Err(AttackError::TooFewEligible {
            needed: count,
            available: eligible.len(),
        });
    }
    let picks = rand::seq::index::sample(rng, eligible.len(), count);
    let mut chosen: Vec<usize> = picks.iter().map(|p| eligible[p]).collect();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Poison matrix over a targeted sub-matrix `C`: zero where the sample's
/// amplitude margin to the threshold exceeds `delta`, otherwise the
/// increment that lands the sample at `A + epsilon`.
pub fn build_poison(
    c: &ComplexMatrix,
    clip_threshold: f64,
    delta: f64,
    epsilon: f64,
) -> Result<RealMatrix, AttackError> {
    if !(clip_threshold > delta && delta > 0.0 && epsilon > 0.0) {
        return Err(AttackError::InvalidThresholds {
            clip: clip_threshold,
            delta,
            epsilon,
        });
    }
    Ok(c.iter()
        .map(|row| {
            row.iter()
                .map(|v| {
                    let margin = clip_threshold - v.norm();
                    if margin > delta {
                        0.0
                    } else {
                        margin + epsilon
                    }
                })
                .collect()
        })
        .collect())
}

/// Raise amplitudes along each sample's own phase: where the poison entry is
/// zero the sample is copied bit-exactly, elsewhere the magnitude becomes
/// `|C| + poison`.
pub fn apply_poison(c: &ComplexMatrix, poison: &RealMatrix) -> Result<ComplexMatrix, AttackError> {
    if c.len() != poison.len() {
        return Err(AttackError::ShapeMismatch(format!(
            "{} signal rows vs {} poison rows",
            c.len(),
            poison.len()
        )));
    }
    c.iter()
        .zip(poison)
        .map(|(row, prow)| {
            if row.len() != prow.len() {
                return Err(AttackError::ShapeMismatch(format!(
                    "row length {} vs poison length {}",
                    row.len(),
                    prow.len()
                )));
            }
            Ok(row
                .iter()
                .zip(prow)
                .map(|(&v, &p)| {
                    if p == 0.0 {
                        v
                    } else {
                        let r = v.norm();
                        if r == 0.0 {
                            Complex64::new(p, 0.0)
                        } else {
                            v * ((r + p) / r)
                        }
                    }
                })
                .collect())
        })
        .collect()
}

/// Result of relabeling: poisoned frames moved to the target class, plus the
/// subset of targets that carried no effective poison and were dropped.
#[derive(Debug, Clone)]
pub struct RelabelOutcome {
    pub labels: Vec<usize>,
    /// Targets that contain at least one poisoned sample.
    pub effective_targets: Vec<usize>,
    /// Targets whose poison rows were all zero; excluded from the plan.
    pub dropped_targets: Vec<usize>,
}

/// Move every effectively-poisoned frame to the target class; drop targets
/// whose poison row is all zeros so no frame gets a label flip without a
/// trigger.
pub fn relabel(
    labels: &[usize],
    targets: &[usize],
    poison: &RealMatrix,
    target_class: usize,
) -> RelabelOutcome {
    let mut out = labels.to_vec();
    let mut effective = Vec::new();
    let mut dropped = Vec::new();
    for (&frame, row) in targets.iter().zip(poison) {
        if row.iter().any(|&v| v != 0.0) {
            out[frame] = target_class;
            effective.push(frame);
        } else {
            dropped.push(frame);
        }
    }
    RelabelOutcome {
        labels: out,
        effective_targets: effective,
        dropped_targets: dropped,
    }
}

/// Physical triggers: element-wise difference between the PA outputs of the
/// poisoned and the benign targeted symbols.
pub fn extract_true_triggers(
    c_star_pa: &ComplexMatrix,
    c_pa: &ComplexMatrix,
) -> Result<ComplexMatrix, AttackError> {
    if c_star_pa.len() != c_pa.len() {
        return Err(AttackError::ShapeMismatch(format!(
            "{} poisoned rows vs {} benign rows",
            c_star_pa.len(),
            c_pa.len()
        )));
    }
    c_star_pa
        .iter()
        .zip(c_pa)
        .map(|(a, b)| {
            if a.len() != b.len() {
                return Err(AttackError::ShapeMismatch("row length".into()));
            }
            Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
        })
        .collect()
}

/// Anything that behaves like the PA seen from the attacker's side: the true
/// amplifier, an identity stub, or the trained surrogate network.
pub trait PaResponder {
    fn respond(&self, frame: &[Complex64]) -> Result<Vec<Complex64>, AttackError>;
}

impl PaResponder for crate::rf::PaModel {
    fn respond(&self, frame: &[Complex64]) -> Result<Vec<Complex64>, AttackError> {
        Ok(crate::rf::pa_clip(frame, self))
    }
}

/// Identity responder; useful as a degenerate baseline.
pub struct IdentityResponder;

impl PaResponder for IdentityResponder {
    fn respond(&self, frame: &[Complex64]) -> Result<Vec<Complex64>, AttackError> {
        Ok(frame.to_vec())
    }
}

/// Estimated triggers: the responder's row-wise output difference between
/// poisoned and benign symbols.
pub fn estimate_triggers<P: PaResponder>(
    responder: &P,
    c: &ComplexMatrix,
    c_star: &ComplexMatrix,
) -> Result<ComplexMatrix, AttackError> {
    if c.len() != c_star.len() {
        return Err(AttackError::ShapeMismatch(format!(
            "{} benign rows vs {} poisoned rows",
            c.len(),
            c_star.len()
        )));
    }
    c.iter()
        .zip(c_star)
        .map(|(row, row_star)| {
            let out = responder.respond(row)?;
            let out_star = responder.respond(row_star)?;
            Ok(out_star.iter().zip(&out).map(|(a, b)| a - b).collect())
        })
        .collect()
}

/// True and estimated trigger rows plus the trigger-to-frame mapping used
/// at evaluation time.
#[derive(Debug, Clone, Default)]
pub struct TriggerBank {
    /// PA-output differences, one row per effective poisoned frame.
    pub true_triggers: ComplexMatrix,
    /// Surrogate-estimated differences, same shape once filled.
    pub estimated_triggers: ComplexMatrix,
    /// Test-frame indices selected for injection.
    pub injection_indices: Vec<usize>,
    /// Trigger row chosen for each injection index (same order).
    pub mapping: Vec<usize>,
}

impl TriggerBank {
    pub fn new(true_triggers: ComplexMatrix) -> Self {
        Self {
            true_triggers,
            ..Default::default()
        }
    }

    pub fn set_estimates(&mut self, estimated: ComplexMatrix) -> Result<(), AttackError> {
        if !self.true_triggers.is_empty() {
            if estimated.len() != self.true_triggers.len()
                || estimated
                    .iter()
                    .zip(&self.true_triggers)
                    .any(|(a, b)| a.len() != b.len())
            {
                return Err(AttackError::ShapeMismatch(
                    "estimated triggers do not match true trigger shape".into(),
                ));
            }
        }
        self.estimated_triggers = estimated;
        Ok(())
    }

    /// Relative estimation error `||est - true||^2 / ||true||^2`.
    pub fn estimation_error(&self) -> Option<f64> {
        if self.estimated_triggers.is_empty() || self.true_triggers.is_empty() {
            return None;
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for (e, t) in self.estimated_triggers.iter().zip(&self.true_triggers) {
            for (ev, tv) in e.iter().zip(t) {
                num += (ev - tv).norm_sqr();
                den += tv.norm_sqr();
            }
        }
        Some(num / den.max(f64::MIN_POSITIVE))
    }
}

/// Triggered test frames: for each selected index, the element-wise sum of
/// the clean frame and one trigger row.
#[derive(Debug, Clone)]
pub struct TriggeredSet {
    /// Source test-frame index per triggered row, ascending.
    pub indices: Vec<usize>,
    /// Trigger row applied to each frame (same order as `indices`).
    pub mapping: Vec<usize>,
    pub frames: ComplexMatrix,
}

/// Superimpose trigger rows onto the selected test frames, hopping randomly
/// between trigger rows. The mapping is returned so a run can be replayed.
pub fn inject_triggers<R: Rng>(
    x_test: &ComplexMatrix,
    triggers: &ComplexMatrix,
    injection_indices: &[usize],
    rng: &mut R,
) -> Result<TriggeredSet, AttackError> {
    if injection_indices.is_empty() {
        return Ok(TriggeredSet {
            indices: Vec::new(),
            mapping: Vec::new(),
            frames: Vec::new(),
        });
    }
    if triggers.is_empty() {
        return Err(AttackError::EmptyTriggerBank);
    }
    let mut indices = injection_indices.to_vec();
    indices.sort_unstable();
    let mut mapping = Vec::with_capacity(indices.len());
    let mut frames = Vec::with_capacity(indices.len());
    for &i in &indices {
        let frame = x_test
            .get(i)
            .ok_or(AttackError::IndexOutOfRange { index: i, len: x_test.len() })?;
        let row = rng.gen_range(0..triggers.len());
        let trig = &triggers[row];
        if trig.len() != frame.len() {
            return Err(AttackError::ShapeMismatch(format!(
                "trigger length {} vs frame length {}",
                trig.len(),
                frame.len()
            )));
        }
        mapping.push(row);
        frames.push(frame.iter().zip(trig).map(|(x, t)| x + t).collect());
    }
    Ok(TriggeredSet {
        indices,
        mapping,
        frames,
    })
}

/// Snap every component to the nearest f32.
///
/// Frames and triggers that live on the f32 grid (the precision of the
/// dataset and trigger-bank files) make trigger addition exact in f64, so
/// removing a trigger recovers the clean frame bit-exactly.
pub fn snap_to_f32_grid(m: &ComplexMatrix) -> ComplexMatrix {
    m.iter()
        .map(|row| {
            row.iter()
                .map(|v| Complex64::new(v.re as f32 as f64, v.im as f32 as f64))
                .collect()
        })
        .collect()
}

/// Pick up to `count` test frames whose true label differs from the target
/// class, uniformly without replacement.
pub fn select_injection_targets<R: Rng>(
    labels: &[usize],
    target_class: usize,
    count: usize,
    rng: &mut R,
) -> Vec<usize> {
    let eligible: Vec<usize> = (0..labels.len())
        .filter(|&i| labels[i] != target_class)
        .collect();
    let take = count.min(eligible.len());
    let picks = rand::seq::index::sample(rng, eligible.len(), take);
    let mut chosen: Vec<usize> = picks.iter().map(|p| eligible[p]).collect();
    chosen.sort_unstable();
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rf::{pa_clip, PaModel};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> ComplexMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..rows)
            .map(|_| {
                (0..cols)
                    .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                    .collect()
            })
            .collect()
    }

    #[test]
    fn select_targets_count_matches_ratio() {
        let labels: Vec<usize> = (0..10_000).map(|i| i % 11).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let j = select_targets(10_000, 5.0, &labels, 3, &mut rng).unwrap();
        assert_eq!(j.len(), 500);
        assert!(j.iter().all(|&i| labels[i] != 3));
        assert!(j.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn select_targets_exhaustive_when_no_target_frames() {
        let labels = vec![0usize; 100];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let j = select_targets(100, 100.0, &labels, 5, &mut rng).unwrap();
        assert_eq!(j, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn select_targets_is_seed_deterministic() {
        let labels: Vec<usize> = (0..1000).map(|i| i % 11).collect();
        let a = select_targets(1000, 10.0, &labels, 0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = select_targets(1000, 10.0, &labels, 0, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let c = select_targets(1000, 10.0, &labels, 0, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn select_targets_rejects_when_too_few_eligible() {
        let labels = vec![7usize; 50];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(matches!(
            select_targets(50, 10.0, &labels, 7, &mut rng),
            Err(AttackError::TooFewEligible { .. })
        ));
    }

    #[test]
    fn build_poison_matches_hand_cases() {
        let c = vec![vec![
            Complex64::from_polar(0.85, 0.4),
            Complex64::from_polar(0.95, -0.2),
        ]];
        let xi = build_poison(&c, 1.0, 0.1, 0.01).unwrap();
        assert_eq!(xi[0][0], 0.0);
        assert!((xi[0][1] - 0.06).abs() < 1e-12);
    }

    #[test]
    fn build_poison_matches_scan_oracle() {
        let c = random_matrix(8, 16, 6);
        let (a, delta, eps) = (1.0, 0.25, 0.02);
        let xi = build_poison(&c, a, delta, eps).unwrap();
        for (row, xrow) in c.iter().zip(&xi) {
            for (v, &x) in row.iter().zip(xrow) {
                let expected = if a - v.norm() > delta {
                    0.0
                } else {
                    a - v.norm() + eps
                };
                assert_eq!(x, expected);
            }
        }
    }

    #[test]
    fn build_poison_rejects_bad_thresholds() {
        let c = random_matrix(1, 4, 7);
        assert!(build_poison(&c, 0.1, 0.2, 0.01).is_err());
        assert!(build_poison(&c, 1.0, 0.0, 0.01).is_err());
        assert!(build_poison(&c, 1.0, 0.1, 0.0).is_err());
    }

    #[test]
    fn apply_poison_identity_on_zero_matrix() {
        let c = random_matrix(3, 8, 8);
        let xi = vec![vec![0.0; 8]; 3];
        let out = apply_poison(&c, &xi).unwrap();
        assert_eq!(out, c);
    }

    #[test]
    fn apply_poison_raises_amplitude_along_phase() {
        let c = vec![vec![Complex64::from_polar(0.95, std::f64::consts::FRAC_PI_2)]];
        let xi = vec![vec![0.06]];
        let out = apply_poison(&c, &xi).unwrap();
        assert!((out[0][0].norm() - 1.01).abs() < 1e-12);
        assert!((out[0][0].arg() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn poisoned_entries_clip_to_exactly_the_threshold() {
        let a = 1.0;
        let c = random_matrix(4, 32, 9);
        let xi = build_poison(&c, a, 0.4, 0.05).unwrap();
        let out = apply_poison(&c, &xi).unwrap();
        let pa = PaModel::new(a).unwrap();
        for (row, xrow) in out.iter().zip(&xi) {
            let clipped = pa_clip(row, &pa);
            for ((v, &x), y) in row.iter().zip(xrow).zip(&clipped) {
                if x != 0.0 {
                    assert!((v.norm() - (a + 0.05)).abs() < 1e-12);
                    assert!(v.norm() > a);
                    assert!((y.norm() - a).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn relabel_empty_targets_is_identity() {
        let labels = vec![0, 1, 2, 3];
        let out = relabel(&labels, &[], &RealMatrix::new(), 2);
        assert_eq!(out.labels, labels);
        assert!(out.effective_targets.is_empty());
        assert!(out.dropped_targets.is_empty());
    }

    #[test]
    fn relabel_single_frame_and_drop_dead_rows() {
        let labels = vec![0, 1, 2, 3, 4];
        let poison = vec![vec![0.0, 0.3], vec![0.0, 0.0]];
        let out = relabel(&labels, &[3, 1], &poison, 4);
        assert_eq!(out.labels, vec![0, 1, 2, 4, 4]);
        assert_eq!(out.effective_targets, vec![3]);
        assert_eq!(out.dropped_targets, vec![1]);
    }

    #[test]
    fn relabel_count_matches_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let labels: Vec<usize> = (0..200).map(|_| rng.gen_range(0..11)).collect();
        let targets: Vec<usize> = (0..200).step_by(7).collect();
        let poison: RealMatrix = (0..targets.len())
            .map(|_| {
                (0..16)
                    .map(|_| if rng.gen_bool(0.3) { rng.gen_range(0.01..0.1) } else { 0.0 })
                    .collect()
            })
            .collect();
        let y_tar = 5;
        let out = relabel(&labels, &targets, &poison, y_tar);
        let before = labels.iter().filter(|&&l| l == y_tar).count();
        let after = out.labels.iter().filter(|&&l| l == y_tar).count();
        let flipped = out
            .effective_targets
            .iter()
            .filter(|&&f| labels[f] != y_tar)
            .count();
        assert_eq!(after, before + flipped);
        assert_eq!(
            out.effective_targets.len() + out.dropped_targets.len(),
            targets.len()
        );
    }

    #[test]
    fn true_triggers_zero_for_unpoisoned_input() {
        let a = 10.0; // nothing clips
        let pa = PaModel::new(a).unwrap();
        let c = random_matrix(3, 8, 11);
        let c_pa: ComplexMatrix = c.iter().map(|r| pa_clip(r, &pa)).collect();
        let t = extract_true_triggers(&c_pa, &c_pa).unwrap();
        assert!(t.iter().flatten().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn true_trigger_scalar_case() {
        let pa = PaModel::new(1.0).unwrap();
        let c = vec![vec![Complex64::new(0.95, 0.0)]];
        let c_star = vec![vec![Complex64::new(1.01, 0.0)]];
        let t = extract_true_triggers(
            &c_star.iter().map(|r| pa_clip(r, &pa)).collect(),
            &c.iter().map(|r| pa_clip(r, &pa)).collect(),
        )
        .unwrap();
        assert!((t[0][0].re - 0.05).abs() < 1e-12);
        assert!(t[0][0].im.abs() < 1e-12);
    }

    #[test]
    fn trigger_support_limited_to_poisoned_or_clipping_entries() {
        let a = 1.0;
        let pa = PaModel::new(a).unwrap();
        let c = random_matrix(6, 32, 12);
        let xi = build_poison(&c, a, 0.3, 0.02).unwrap();
        let c_star = apply_poison(&c, &xi).unwrap();
        let t = extract_true_triggers(
            &c_star.iter().map(|r| pa_clip(r, &pa)).collect(),
            &c.iter().map(|r| pa_clip(r, &pa)).collect(),
        )
        .unwrap();
        for ((crow, xrow), trow) in c.iter().zip(&xi).zip(&t) {
            for ((v, &x), tv) in crow.iter().zip(xrow).zip(trow) {
                if tv.norm() > 0.0 {
                    assert!(x != 0.0 || v.norm() >= a);
                }
            }
        }
    }

    #[test]
    fn perfect_responder_reproduces_true_triggers() {
        let pa = PaModel::new(1.0).unwrap();
        let c = random_matrix(4, 16, 13);
        let xi = build_poison(&c, 1.0, 0.3, 0.02).unwrap();
        let c_star = apply_poison(&c, &xi).unwrap();
        let truth = extract_true_triggers(
            &c_star.iter().map(|r| pa_clip(r, &pa)).collect(),
            &c.iter().map(|r| pa_clip(r, &pa)).collect(),
        )
        .unwrap();
        let est = estimate_triggers(&pa, &c, &c_star).unwrap();
        for (tr, er) in truth.iter().zip(&est) {
            for (t, e) in tr.iter().zip(er) {
                assert!((t - e).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn identity_responder_gives_raw_poison_difference() {
        let c = random_matrix(2, 8, 14);
        let xi = build_poison(&c, 1.0, 0.3, 0.02).unwrap();
        let c_star = apply_poison(&c, &xi).unwrap();
        let est = estimate_triggers(&IdentityResponder, &c, &c_star).unwrap();
        for ((crow, xrow), erow) in c.iter().zip(&xi).zip(&est) {
            for ((v, &x), e) in crow.iter().zip(xrow).zip(erow) {
                if x == 0.0 {
                    assert_eq!(e.norm(), 0.0);
                } else {
                    let expected = if v.norm() == 0.0 {
                        Complex64::new(x, 0.0)
                    } else {
                        v * ((v.norm() + x) / v.norm()) - v
                    };
                    assert!((e - expected).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn inject_empty_index_set_returns_empty() {
        let x = random_matrix(5, 8, 15);
        let triggers = random_matrix(2, 8, 16);
        let out = inject_triggers(&x, &triggers, &[], &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(out.frames.is_empty());
    }

    #[test]
    fn zero_trigger_row_is_additive_identity() {
        let x = random_matrix(4, 8, 17);
        let triggers = vec![vec![Complex64::new(0.0, 0.0); 8]];
        let out = inject_triggers(&x, &triggers, &[1, 3], &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(out.frames[0], x[1]);
        assert_eq!(out.frames[1], x[3]);
    }

    #[test]
    fn injection_replays_bit_exactly_and_reverses() {
        // Operands on the f32 grid, matching the artifact file precision.
        let x = snap_to_f32_grid(&random_matrix(50, 16, 18));
        let triggers = snap_to_f32_grid(&random_matrix(7, 16, 19));
        let idx: Vec<usize> = (0..50).step_by(3).collect();
        let a = inject_triggers(&x, &triggers, &idx, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let b = inject_triggers(&x, &triggers, &idx, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.mapping, b.mapping);
        for ((src, row), frame) in a.indices.iter().zip(&a.mapping).zip(&a.frames) {
            let recovered: Vec<Complex64> = frame
                .iter()
                .zip(&triggers[*row])
                .map(|(f, t)| f - t)
                .collect();
            assert_eq!(recovered, x[*src]);
        }
    }

    #[test]
    fn inject_rejects_empty_bank() {
        let x = random_matrix(3, 8, 20);
        assert!(matches!(
            inject_triggers(&x, &Vec::new(), &[0], &mut ChaCha8Rng::seed_from_u64(3)),
            Err(AttackError::EmptyTriggerBank)
        ));
    }

    #[test]
    fn injection_target_selection_respects_target_class() {
        let labels: Vec<usize> = (0..100).map(|i| i % 4).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let idx = select_injection_targets(&labels, 2, 1000, &mut rng);
        assert_eq!(idx.len(), 75);
        assert!(idx.iter().all(|&i| labels[i] != 2));
    }
}
