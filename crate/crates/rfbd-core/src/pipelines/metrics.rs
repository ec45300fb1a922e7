//! Attack-effectiveness metrics: clean accuracy (legitimate and backdoored
//! models) and the attack success rate on triggered frames.

use super::dataset::RealDataset;
use super::PipelineError;
use crate::attack::{inject_triggers, snap_to_f32_grid, ComplexMatrix, TriggeredSet};
use crate::nn::{softmax_rows, Network, Shape, Tensor};
use crate::util::mix_seed;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Classifier seen through frame-level predictions; lets metric code run
/// against trained networks and test stubs alike.
pub trait FrameClassifier {
    fn n_classes(&self) -> usize;
    fn predict_proba_rows(&self, rows: &[&[f32]]) -> Vec<Vec<f64>>;

    fn predict_rows(&self, rows: &[&[f32]]) -> Vec<usize> {
        self.predict_proba_rows(rows)
            .into_iter()
            .map(|p| {
                p.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(i, _)| i)
                    .unwrap_or(0)
            })
            .collect()
    }
}

impl FrameClassifier for Network<f32> {
    fn n_classes(&self) -> usize {
        self.output_len()
    }

    fn predict_proba_rows(&self, rows: &[&[f32]]) -> Vec<Vec<f64>> {
        if rows.is_empty() {
            return Vec::new();
        }
        let mut dims = vec![rows.len()];
        match self.input_shape() {
            Shape::Spatial { c, h, w } => dims.extend([c, h, w]),
            Shape::Flat(n) => dims.push(n),
        }
        let mut values = Vec::with_capacity(rows.len() * rows[0].len());
        for r in rows {
            values.extend_from_slice(r);
        }
        let batch = Tensor::from_values(dims, values).expect("row lengths match input");
        let logits = self.forward_batch(&batch, false, 0).expect("shape checked");
        let probs = softmax_rows(&logits);
        (0..rows.len())
            .map(|s| probs.row(s).iter().map(|&v| v as f64).collect())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct SnrAccuracy {
    pub snr_db: f64,
    pub accuracy: f64,
    pub count: usize,
}

#[derive(Debug, Clone)]
pub struct AccuracyReport {
    pub overall: f64,
    pub per_snr: Vec<SnrAccuracy>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Fraction of argmax predictions equal to labels over the given frames,
/// overall and per SNR bucket.
pub fn evaluate_accuracy(
    model: &dyn FrameClassifier,
    ds: &RealDataset,
    indices: &[usize],
) -> Result<AccuracyReport, PipelineError> {
    if indices.is_empty() {
        return Err(PipelineError::EmptySplit("accuracy evaluation".into()));
    }
    let o = model.n_classes();
    let mut confusion = vec![vec![0usize; o]; o];
    let mut per_snr: Vec<(f64, usize, usize)> = Vec::new();
    let mut correct = 0usize;

    for chunk in indices.chunks(512) {
        let rows: Vec<&[f32]> = chunk.iter().map(|&i| ds.feature_row(i)).collect();
        let preds = model.predict_rows(&rows);
        for (&i, pred) in chunk.iter().zip(preds) {
            let label = ds.labels[i];
            confusion[label][pred] += 1;
            let hit = pred == label;
            correct += hit as usize;
            let snr = ds.snr_db[i];
            match per_snr.iter_mut().find(|(s, _, _)| *s == snr) {
                Some((_, c, n)) => {
                    *c += hit as usize;
                    *n += 1;
                }
                None => per_snr.push((snr, hit as usize, 1)),
            }
        }
    }
    per_snr.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(AccuracyReport {
        overall: correct as f64 / indices.len() as f64,
        per_snr: per_snr
            .into_iter()
            .map(|(snr_db, c, n)| SnrAccuracy {
                snr_db,
                accuracy: c as f64 / n as f64,
                count: n,
            })
            .collect(),
        confusion,
    })
}

/// Triggered test frames in classifier-ready form.
#[derive(Debug, Clone)]
pub struct TriggeredFeatures {
    pub frame_len: usize,
    /// `k x 2 x frame_len` planes.
    pub features: Vec<f32>,
    pub source_indices: Vec<usize>,
    pub snr_db: Vec<f64>,
    /// Trigger row applied to each frame.
    pub mapping: Vec<usize>,
}

impl TriggeredFeatures {
    pub fn len(&self) -> usize {
        self.source_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source_indices.is_empty()
    }

    pub fn feature_row(&self, k: usize) -> &[f32] {
        let stride = 2 * self.frame_len;
        &self.features[k * stride..(k + 1) * stride]
    }
}

/// Select up to `count` test frames with labels off the target class and
/// superimpose estimated triggers (snapped to the f32 grid so injection is
/// exactly reversible). Returns both the complex triggered set and the
/// feature view.
pub fn build_triggered_features(
    ds: &RealDataset,
    test_indices: &[usize],
    triggers: &ComplexMatrix,
    target_class: usize,
    count: usize,
    seed: u64,
) -> Result<(TriggeredSet, TriggeredFeatures), PipelineError> {
    let eligible: Vec<usize> = test_indices
        .iter()
        .copied()
        .filter(|&i| ds.labels[i] != target_class)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, u64::from_le_bytes(*b"injected"), 0));
    let take = count.min(eligible.len());
    let picks = rand::seq::index::sample(&mut rng, eligible.len(), take);
    let mut chosen: Vec<usize> = picks.iter().map(|p| eligible[p]).collect();
    chosen.sort_unstable();

    let snapped = snap_to_f32_grid(triggers);
    let x_test: ComplexMatrix = (0..ds.len()).map(|i| ds.complex_frame(i)).collect();
    let set = inject_triggers(&x_test, &snapped, &chosen, &mut rng)?;

    let stride = 2 * ds.frame_len;
    let mut features = Vec::with_capacity(set.frames.len() * stride);
    let mut snrs = Vec::with_capacity(set.frames.len());
    for (frame, &src) in set.frames.iter().zip(&set.indices) {
        features.extend(frame.iter().map(|v| v.re as f32));
        features.extend(frame.iter().map(|v| v.im as f32));
        snrs.push(ds.snr_db[src]);
    }
    let feats = TriggeredFeatures {
        frame_len: ds.frame_len,
        features,
        source_indices: set.indices.clone(),
        snr_db: snrs,
        mapping: set.mapping.clone(),
    };
    Ok((set, feats))
}

/// Fraction of triggered frames classified as the target class.
pub fn attack_success_rate(
    model: &dyn FrameClassifier,
    triggered: &TriggeredFeatures,
    target_class: usize,
) -> Result<f64, PipelineError> {
    if triggered.is_empty() {
        return Err(PipelineError::EmptyTriggeredSet);
    }
    let rows: Vec<&[f32]> = (0..triggered.len()).map(|k| triggered.feature_row(k)).collect();
    let preds = model.predict_rows(&rows);
    Ok(preds.iter().filter(|&&p| p == target_class).count() as f64 / preds.len() as f64)
}

/// Attack success rate split by source-frame SNR.
pub fn asr_per_snr(
    model: &dyn FrameClassifier,
    triggered: &TriggeredFeatures,
    target_class: usize,
) -> Result<Vec<SnrAccuracy>, PipelineError> {
    if triggered.is_empty() {
        return Err(PipelineError::EmptyTriggeredSet);
    }
    let rows: Vec<&[f32]> = (0..triggered.len()).map(|k| triggered.feature_row(k)).collect();
    let preds = model.predict_rows(&rows);
    let mut buckets: Vec<(f64, usize, usize)> = Vec::new();
    for (k, pred) in preds.iter().enumerate() {
        let snr = triggered.snr_db[k];
        let hit = (*pred == target_class) as usize;
        match buckets.iter_mut().find(|(s, _, _)| *s == snr) {
            Some((_, c, n)) => {
                *c += hit;
                *n += 1;
            }
            None => buckets.push((snr, hit, 1)),
        }
    }
    buckets.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    Ok(buckets
        .into_iter()
        .map(|(snr_db, c, n)| SnrAccuracy {
            snr_db,
            accuracy: c as f64 / n as f64,
            count: n,
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub snr_db: f64,
    pub rho_percent: f64,
    pub alc: f64,
    pub abc: f64,
    pub asr: f64,
}

/// Per-SNR summary of the three effectiveness metrics.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
    pub overall_alc: f64,
    pub overall_abc: f64,
    pub overall_asr: f64,
    pub confusion_legit: Vec<Vec<usize>>,
    pub confusion_backdoored: Vec<Vec<usize>>,
}

impl MetricsReport {
    pub fn compile(
        rho_percent: f64,
        legit: &AccuracyReport,
        backdoored: &AccuracyReport,
        asr: &[SnrAccuracy],
        overall_asr: f64,
    ) -> Self {
        let mut rows = Vec::new();
        for alc in &legit.per_snr {
            let abc = backdoored
                .per_snr
                .iter()
                .find(|r| r.snr_db == alc.snr_db)
                .map_or(f64::NAN, |r| r.accuracy);
            let asr_v = asr
                .iter()
                .find(|r| r.snr_db == alc.snr_db)
                .map_or(f64::NAN, |r| r.accuracy);
            rows.push(MetricsRow {
                snr_db: alc.snr_db,
                rho_percent,
                alc: alc.accuracy,
                abc,
                asr: asr_v,
            });
        }
        Self {
            rows,
            overall_alc: legit.overall,
            overall_abc: backdoored.overall,
            overall_asr,
            confusion_legit: legit.confusion.clone(),
            confusion_backdoored: backdoored.confusion.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Stub that always predicts one class with fixed confidence.
    struct ConstStub {
        classes: usize,
        pick: usize,
    }

    impl FrameClassifier for ConstStub {
        fn n_classes(&self) -> usize {
            self.classes
        }

        fn predict_proba_rows(&self, rows: &[&[f32]]) -> Vec<Vec<f64>> {
            rows.iter()
                .map(|_| {
                    let mut p = vec![0.01; self.classes];
                    p[self.pick] = 1.0;
                    p
                })
                .collect()
        }
    }

    fn tiny_dataset(m: usize, classes: usize) -> RealDataset {
        let frame_len = 4;
        let mut onehot = vec![0.0f32; m * classes];
        let labels: Vec<usize> = (0..m).map(|i| i % classes).collect();
        for (i, &l) in labels.iter().enumerate() {
            onehot[i * classes + l] = 1.0;
        }
        RealDataset {
            frame_len,
            n_classes: classes,
            features: vec![0.25; m * 2 * frame_len],
            onehot,
            labels,
            snr_db: (0..m).map(|i| if i % 2 == 0 { 0.0 } else { 8.0 }).collect(),
            poisoned: vec![false; m],
        }
    }

    #[test]
    fn constant_predictor_scores_one_over_o_on_balanced_data() {
        let ds = tiny_dataset(110, 11);
        let model = ConstStub { classes: 11, pick: 3 };
        let idx: Vec<usize> = (0..ds.len()).collect();
        let rep = evaluate_accuracy(&model, &ds, &idx).unwrap();
        assert!((rep.overall - 1.0 / 11.0).abs() < 1e-9);
        assert_eq!(rep.confusion.iter().flatten().sum::<usize>(), 110);
    }

    #[test]
    fn perfect_oracle_scores_one() {
        // oracle = predicts each frame's label; emulate per-class by slicing
        let ds = tiny_dataset(22, 11);
        let idx: Vec<usize> = (0..ds.len()).filter(|i| ds.labels[*i] == 5).collect();
        let model = ConstStub { classes: 11, pick: 5 };
        let rep = evaluate_accuracy(&model, &ds, &idx).unwrap();
        assert_eq!(rep.overall, 1.0);
    }

    #[test]
    fn asr_stubs_hit_zero_and_one() {
        let trig = TriggeredFeatures {
            frame_len: 4,
            features: vec![0.0; 5 * 8],
            source_indices: vec![0, 1, 2, 3, 4],
            snr_db: vec![0.0; 5],
            mapping: vec![0; 5],
        };
        let always = ConstStub { classes: 11, pick: 7 };
        let never = ConstStub { classes: 11, pick: 2 };
        assert_eq!(attack_success_rate(&always, &trig, 7).unwrap(), 1.0);
        assert_eq!(attack_success_rate(&never, &trig, 7).unwrap(), 0.0);
    }

    #[test]
    fn empty_triggered_set_rejected() {
        let trig = TriggeredFeatures {
            frame_len: 4,
            features: Vec::new(),
            source_indices: Vec::new(),
            snr_db: Vec::new(),
            mapping: Vec::new(),
        };
        let model = ConstStub { classes: 11, pick: 0 };
        assert!(attack_success_rate(&model, &trig, 0).is_err());
    }
}
