//! Backdoor defenses run against a suspect model: Neural Cleanse trigger
//! reverse-engineering with MAD anomaly scoring, STRIP entropy analysis and
//! activation clustering with PCA, k-means and silhouette scoring.

mod clustering;
mod neural_cleanse;
mod strip;

pub use clustering::{
    activation_clustering, kmeans, pca, silhouette, AcOptions, AcReport, KmeansResult, PcaModel,
    DETECTION_SILHOUETTE,
};
pub use neural_cleanse::{
    mad_anomaly, neural_cleanse, MadOutcome, NcClassResult, NcOptions, NcReport,
    DETECTION_ANOMALY_INDEX,
};
pub use strip::{strip_entropies, strip_report, StripReport, SweepPoint};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DefenseError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("optimization diverged: {0}")]
    Diverged(String),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error(transparent)]
    Pipeline(#[from] crate::pipelines::PipelineError),
}

/// Combined results of the defenses that were run.
#[derive(Debug, Clone, Default)]
pub struct DefenseReport {
    pub seed: u64,
    pub nc: Option<NcReport>,
    pub strip: Option<StripReport>,
    pub ac: Option<AcReport>,
}

impl DefenseReport {
    /// True when any executed defense flags the model as backdoored.
    pub fn any_flagged(&self) -> bool {
        self.nc.as_ref().is_some_and(|r| !r.flagged_classes.is_empty())
            || self.strip.as_ref().is_some_and(|r| r.separable)
            || self.ac.as_ref().is_some_and(|r| r.flagged)
    }
}
