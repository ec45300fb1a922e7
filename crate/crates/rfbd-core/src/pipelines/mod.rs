//! End-to-end dataset generation, model definitions, training loops and the
//! attack-effectiveness metrics.

mod dataset;
mod metrics;
mod models;
mod train;

pub use dataset::{
    build_poison_plan, generate_backdoored_dataset, generate_clean_dataset, regenerate_pre_pa,
    BackdooredOutput, LinkConfig, OfdmFrameSet, PoisonSpec, RealDataset,
};
pub use metrics::{
    asr_per_snr, attack_success_rate, build_triggered_features, evaluate_accuracy,
    AccuracyReport, FrameClassifier, MetricsReport, MetricsRow, SnrAccuracy, TriggeredFeatures,
};
pub use models::{pa_surrogate_net, vt_cnn2, VT_CNN2_LAST_HIDDEN_LAYER};
pub use train::{
    generate_probe_set, split_indices, train_classifier, train_surrogate, EpochStats, ProbeSet,
    SplitIndices, SurrogateModel, TrainHyper, TrainLog,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("frame count {m} too small: need at least one frame per (scheme, SNR) pair ({min})")]
    TooFewFrames { m: usize, min: usize },
    #[error("poison plan does not match this dataset: {0}")]
    PlanMismatch(String),
    #[error("empty data split: {0}")]
    EmptySplit(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("empty probe set")]
    EmptyProbeSet,
    #[error("empty triggered set")]
    EmptyTriggeredSet,
    #[error("dataset invariant violated: {0}")]
    InvalidDataset(String),
    #[error(transparent)]
    Dsp(#[from] crate::dsp::DspError),
    #[error(transparent)]
    Rf(#[from] crate::rf::RfError),
    #[error(transparent)]
    Attack(#[from] crate::attack::AttackError),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
}
