//! Complex baseband primitives: constellation mapping, unitary discrete
//! Fourier transforms, OFDM symbol assembly with cyclic prefix, power
//! measurement and clipping-threshold computation.

mod fft;
mod ofdm;
mod scheme;

pub use fft::dft;
pub use ofdm::{clipping_threshold, mean_power, ofdm_modulate};
pub use scheme::{map_bits, Scheme};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DspError {
    #[error("unknown modulation scheme `{0}`")]
    UnknownScheme(String),
    #[error("bit count {got} does not match {expected} required by the scheme")]
    BitCountMismatch { got: usize, expected: usize },
    #[error("transform length {0} is not a power of two")]
    NonPowerOfTwoLength(usize),
    #[error("vector length {got} does not match expected {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("input contains no samples")]
    EmptyInput,
    #[error("input power must be positive, got {0}")]
    NonPositivePower(f64),
    #[error("invalid OFDM configuration: {0}")]
    InvalidConfig(String),
}

/// Static parameters of the OFDM link and the scheme/SNR sweep.
#[derive(Debug, Clone)]
pub struct OfdmConfig {
    /// Number of subcarriers; must be a power of two.
    pub n_subcarriers: usize,
    /// Cyclic prefix length in samples; strictly less than `n_subcarriers`.
    pub cp_len: usize,
    /// Modulation schemes in the sweep, one per class label.
    pub scheme_list: Vec<Scheme>,
    /// Power-amplifier input back-off in dB.
    pub ibo_db: f64,
    /// Receiver SNR sweep in dB.
    pub snr_list_db: Vec<f64>,
}

impl OfdmConfig {
    pub fn new(
        n_subcarriers: usize,
        cp_len: usize,
        scheme_list: Vec<Scheme>,
        ibo_db: f64,
        snr_list_db: Vec<f64>,
    ) -> Result<Self, DspError> {
        let cfg = Self {
            n_subcarriers,
            cp_len,
            scheme_list,
            ibo_db,
            snr_list_db,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), DspError> {
        if !self.n_subcarriers.is_power_of_two() {
            return Err(DspError::InvalidConfig(format!(
                "n_subcarriers {} is not a power of two",
                self.n_subcarriers
            )));
        }
        if self.cp_len >= self.n_subcarriers {
            return Err(DspError::InvalidConfig(format!(
                "cp_len {} must be smaller than n_subcarriers {}",
                self.cp_len, self.n_subcarriers
            )));
        }
        if self.scheme_list.is_empty() {
            return Err(DspError::InvalidConfig("scheme list is empty".into()));
        }
        for (i, a) in self.scheme_list.iter().enumerate() {
            if self.scheme_list[..i].contains(a) {
                return Err(DspError::InvalidConfig(format!(
                    "duplicate scheme {a} in scheme list"
                )));
            }
        }
        if !self.ibo_db.is_finite() {
            return Err(DspError::InvalidConfig("ibo_db must be finite".into()));
        }
        if self.snr_list_db.is_empty() {
            return Err(DspError::InvalidConfig("snr list is empty".into()));
        }
        Ok(())
    }

    /// Number of modulation classes in the sweep.
    pub fn n_schemes(&self) -> usize {
        self.scheme_list.len()
    }

    /// Samples per transmitted frame (body plus cyclic prefix).
    pub fn frame_len(&self) -> usize {
        self.n_subcarriers + self.cp_len
    }
}

/// The default 11-class digital sweep.
pub fn default_scheme_list() -> Vec<Scheme> {
    Scheme::ALL.to_vec()
}
