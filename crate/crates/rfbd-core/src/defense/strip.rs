//! Entropy-based detection of triggered inputs: superimpose random clean
//! overlays onto a suspect frame and measure the prediction entropy.

use super::DefenseError;
use crate::pipelines::FrameClassifier;
use crate::util::mix_seed;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub threshold: f64,
    /// Fraction of clean suspects flagged (entropy below threshold).
    pub fpr: f64,
    /// Fraction of triggered suspects flagged.
    pub tpr: f64,
}

#[derive(Debug, Clone)]
pub struct StripReport {
    pub clean_entropies: Vec<f64>,
    pub triggered_entropies: Vec<f64>,
    pub clean_mean: f64,
    pub triggered_mean: f64,
    pub sweep: Vec<SweepPoint>,
    /// True when some threshold reaches FPR < 5% and TPR > 50% at once.
    pub separable: bool,
}

fn shannon_entropy_bits(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.log2())
        .sum::<f64>()
}

/// Mean prediction entropy (bits) per suspect over `k` distinct random
/// overlays drawn from the clean held-out pool.
pub fn strip_entropies(
    model: &dyn FrameClassifier,
    suspects: &[&[f32]],
    overlays: &[&[f32]],
    k: usize,
    seed: u64,
) -> Result<Vec<f64>, DefenseError> {
    if k < 8 {
        return Err(DefenseError::InsufficientData(format!(
            "{k} overlays per suspect, need at least 8"
        )));
    }
    if overlays.len() < k {
        return Err(DefenseError::InsufficientData(format!(
            "{} overlay frames for k = {k}",
            overlays.len()
        )));
    }
    let mut entropies = Vec::with_capacity(suspects.len());
    for (si, suspect) in suspects.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, si as u64, 5));
        let picks = rand::seq::index::sample(&mut rng, overlays.len(), k);
        let rows: Vec<Vec<f32>> = picks
            .iter()
            .map(|oi| {
                suspect
                    .iter()
                    .zip(overlays[oi])
                    .map(|(a, b)| a + b)
                    .collect()
            })
            .collect();
        let row_refs: Vec<&[f32]> = rows.iter().map(|r| r.as_slice()).collect();
        let probs = model.predict_proba_rows(&row_refs);
        let mean = probs.iter().map(|p| shannon_entropy_bits(p)).sum::<f64>() / k as f64;
        entropies.push(mean);
    }
    Ok(entropies)
}

/// Entropy distributions for clean and triggered suspect sets plus a full
/// threshold sweep of the induced detector.
pub fn strip_report(
    model: &dyn FrameClassifier,
    clean_suspects: &[&[f32]],
    triggered_suspects: &[&[f32]],
    overlays: &[&[f32]],
    k: usize,
    seed: u64,
) -> Result<StripReport, DefenseError> {
    let clean = strip_entropies(model, clean_suspects, overlays, k, seed)?;
    let triggered = strip_entropies(model, triggered_suspects, overlays, k, seed)?;
    let clean_mean = clean.iter().sum::<f64>() / clean.len().max(1) as f64;
    let triggered_mean = triggered.iter().sum::<f64>() / triggered.len().max(1) as f64;

    let mut thresholds: Vec<f64> = clean.iter().chain(&triggered).copied().collect();
    thresholds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    thresholds.dedup();
    // flag entropies strictly below the threshold; include one point above
    // the maximum so a sweep always covers the all-flagged corner
    if let Some(&max) = thresholds.last() {
        thresholds.push(max + 1e-9);
    }
    let sweep: Vec<SweepPoint> = thresholds
        .into_iter()
        .map(|t| SweepPoint {
            threshold: t,
            fpr: clean.iter().filter(|&&e| e < t).count() as f64 / clean.len().max(1) as f64,
            tpr: triggered.iter().filter(|&&e| e < t).count() as f64
                / triggered.len().max(1) as f64,
        })
        .collect();
    let separable = sweep.iter().any(|p| p.fpr < 0.05 && p.tpr > 0.5);
    Ok(StripReport {
        clean_entropies: clean,
        triggered_entropies: triggered,
        clean_mean,
        triggered_mean,
        sweep,
        separable,
    })
}
