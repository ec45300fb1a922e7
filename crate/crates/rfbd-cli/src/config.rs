//! Flat `key = value` experiment configuration.

use crate::CliError;
use rfbd_core::dsp::{OfdmConfig, Scheme};
use rfbd_core::pipelines::{LinkConfig, PoisonSpec, TrainHyper};
use rfbd_core::rf::ChannelConfig;

/// Every tunable of the simulation, attack and training stages.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub m_symbols: usize,
    pub n_subcarriers: usize,
    pub cp_len: usize,
    pub schemes: Vec<Scheme>,
    pub snr_list_db: Vec<f64>,
    pub ibo_db: f64,
    pub delta_frac: f64,
    pub epsilon_frac: f64,
    pub rho_percent: f64,
    pub y_tar: usize,
    pub inject_count: usize,
    pub cnc_iters: usize,
    pub channel_taps: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    /// Desk-scale profile; the full-scale sweep is reachable by raising
    /// `m_symbols`, `n_subcarriers`, `cp_len` and the SNR list.
    fn default() -> Self {
        Self {
            m_symbols: 2000,
            n_subcarriers: 64,
            cp_len: 16,
            schemes: Scheme::ALL.to_vec(),
            snr_list_db: vec![0.0, 8.0, 18.0],
            ibo_db: 3.0,
            delta_frac: 0.1,
            epsilon_frac: 0.01,
            rho_percent: 5.0,
            y_tar: 0,
            inject_count: 1000,
            cnc_iters: 2,
            channel_taps: 3,
            epochs: 40,
            batch_size: 64,
            lr: 1e-3,
            seed: 7,
        }
    }
}

impl ExperimentConfig {
    /// Parse `key = value` lines; `#` starts a comment. Unknown keys and
    /// out-of-range values are fatal.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected key = value", ln + 1)))?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| CliError::Config(format!("line {}: {key}: {what}", ln + 1));
            match key {
                "m_symbols" => cfg.m_symbols = value.parse().map_err(|_| bad("not a count"))?,
                "n_subcarriers" => {
                    cfg.n_subcarriers = value.parse().map_err(|_| bad("not a count"))?
                }
                "cp_len" => cfg.cp_len = value.parse().map_err(|_| bad("not a count"))?,
                "schemes" => {
                    cfg.schemes = value
                        .split(',')
                        .map(|s| s.trim().parse::<Scheme>())
                        .collect::<Result<_, _>>()
                        .map_err(|e| bad(&e.to_string()))?
                }
                "snr_list_db" => {
                    cfg.snr_list_db = value
                        .split(',')
                        .map(|s| s.trim().parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|_| bad("not a dB list"))?
                }
                "ibo_db" => cfg.ibo_db = value.parse().map_err(|_| bad("not a dB value"))?,
                "delta_frac" => cfg.delta_frac = value.parse().map_err(|_| bad("not a fraction"))?,
                "epsilon_frac" => {
                    cfg.epsilon_frac = value.parse().map_err(|_| bad("not a fraction"))?
                }
                "rho_percent" => {
                    cfg.rho_percent = value.parse().map_err(|_| bad("not a percentage"))?
                }
                "y_tar" => cfg.y_tar = value.parse().map_err(|_| bad("not a class index"))?,
                "inject_count" => cfg.inject_count = value.parse().map_err(|_| bad("not a count"))?,
                "cnc_iters" => cfg.cnc_iters = value.parse().map_err(|_| bad("not a count"))?,
                "channel_taps" => cfg.channel_taps = value.parse().map_err(|_| bad("not a count"))?,
                "epochs" => cfg.epochs = value.parse().map_err(|_| bad("not a count"))?,
                "batch_size" => cfg.batch_size = value.parse().map_err(|_| bad("not a count"))?,
                "lr" => cfg.lr = value.parse().map_err(|_| bad("not a rate"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("not a u64"))?,
                other => {
                    return Err(CliError::Config(format!(
                        "line {}: unknown key `{other}`",
                        ln + 1
                    )))
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let conf = |msg: String| CliError::Config(msg);
        if self.m_symbols == 0 {
            return Err(conf("m_symbols must be positive".into()));
        }
        OfdmConfig::new(
            self.n_subcarriers,
            self.cp_len,
            self.schemes.clone(),
            self.ibo_db,
            self.snr_list_db.clone(),
        )
        .map_err(|e| conf(e.to_string()))?;
        if !(self.delta_frac > 0.0 && self.delta_frac < 1.0) {
            return Err(conf(format!("delta_frac {} outside (0, 1)", self.delta_frac)));
        }
        if !(self.epsilon_frac > 0.0 && self.epsilon_frac < 1.0) {
            return Err(conf(format!(
                "epsilon_frac {} outside (0, 1)",
                self.epsilon_frac
            )));
        }
        if !(self.rho_percent > 0.0 && self.rho_percent <= 100.0) {
            return Err(conf(format!(
                "rho_percent {} outside (0, 100]",
                self.rho_percent
            )));
        }
        if self.y_tar >= self.schemes.len() {
            return Err(conf(format!(
                "y_tar {} outside {} schemes",
                self.y_tar,
                self.schemes.len()
            )));
        }
        if self.channel_taps == 0 {
            return Err(conf("channel_taps must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(conf("batch_size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(conf(format!("lr {} must be positive", self.lr)));
        }
        if self.inject_count == 0 {
            return Err(conf("inject_count must be positive".into()));
        }
        Ok(())
    }

    /// Canonical text form, stable across runs, embedded in manifests.
    pub fn canonical_text(&self) -> String {
        let schemes: Vec<&str> = self.schemes.iter().map(|s| s.name()).collect();
        let snrs: Vec<String> = self.snr_list_db.iter().map(|v| v.to_string()).collect();
        format!(
            "m_symbols = {}\nn_subcarriers = {}\ncp_len = {}\nschemes = {}\nsnr_list_db = {}\n\
             ibo_db = {}\ndelta_frac = {}\nepsilon_frac = {}\nrho_percent = {}\ny_tar = {}\n\
             inject_count = {}\ncnc_iters = {}\nchannel_taps = {}\nepochs = {}\nbatch_size = {}\n\
             lr = {}\nseed = {}\n",
            self.m_symbols,
            self.n_subcarriers,
            self.cp_len,
            schemes.join(","),
            snrs.join(","),
            self.ibo_db,
            self.delta_frac,
            self.epsilon_frac,
            self.rho_percent,
            self.y_tar,
            self.inject_count,
            self.cnc_iters,
            self.channel_taps,
            self.epochs,
            self.batch_size,
            self.lr,
            self.seed,
        )
    }

    pub fn link_config(&self) -> Result<LinkConfig, CliError> {
        Ok(LinkConfig {
            ofdm: OfdmConfig::new(
                self.n_subcarriers,
                self.cp_len,
                self.schemes.clone(),
                self.ibo_db,
                self.snr_list_db.clone(),
            )
            .map_err(|e| CliError::Config(e.to_string()))?,
            channel: ChannelConfig::new(self.channel_taps, 0.5)
                .map_err(|e| CliError::Config(e.to_string()))?,
            cnc_iterations: self.cnc_iters,
        })
    }

    pub fn poison_spec(&self) -> PoisonSpec {
        PoisonSpec {
            rho_percent: self.rho_percent,
            target_class: self.y_tar,
            delta_frac: self.delta_frac,
            epsilon_frac: self.epsilon_frac,
        }
    }

    pub fn train_hyper(&self) -> TrainHyper {
        TrainHyper {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr: self.lr,
            patience: 12,
            seed: self.seed,
        }
    }
}
