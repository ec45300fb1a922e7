//! Multipath fading channel with phase offset and receiver-side AWGN.

use super::RfError;
use crate::dsp::mean_power;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use std::f64::consts::TAU;

/// Static channel profile: tap count, exponential power-decay factor and the
/// per-tap extra delays.
#[derive(Debug, Clone)]
pub struct ChannelConfig {
    pub n_taps: usize,
    /// Power ratio between consecutive taps, in (0, 1].
    pub decay: f64,
    /// Extra delay per tap in samples; strictly increasing, one per tap.
    pub delays: Vec<usize>,
}

impl ChannelConfig {
    pub fn new(n_taps: usize, decay: f64) -> Result<Self, RfError> {
        Self::with_delays(n_taps, decay, (0..n_taps).collect())
    }

    pub fn with_delays(n_taps: usize, decay: f64, delays: Vec<usize>) -> Result<Self, RfError> {
        let cfg = Self {
            n_taps,
            decay,
            delays,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), RfError> {
        if self.n_taps == 0 {
            return Err(RfError::InvalidChannelConfig("tap count must be >= 1".into()));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(RfError::InvalidChannelConfig(format!(
                "decay {} outside (0, 1]",
                self.decay
            )));
        }
        if self.delays.len() != self.n_taps {
            return Err(RfError::InvalidChannelConfig(
                "delay list length must equal tap count".into(),
            ));
        }
        if self.delays.windows(2).any(|w| w[0] >= w[1]) {
            return Err(RfError::InvalidChannelConfig(
                "delays must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    /// Normalized per-tap power profile `decay^l / sum`.
    pub fn power_profile(&self) -> Vec<f64> {
        let raw: Vec<f64> = (0..self.n_taps).map(|l| self.decay.powi(l as i32)).collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|p| p / total).collect()
    }
}

/// One drawn channel: complex taps with unit total energy, per-tap delays,
/// a phase offset and the receiver SNR that applies to this frame.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub taps: Vec<Complex64>,
    pub delays: Vec<usize>,
    /// Phase offset in `[0, 2*pi)`.
    pub phase_offset: f64,
    pub snr_db: f64,
}

impl ChannelRealization {
    /// Total tap energy; unity within 1e-9 for sampled realizations.
    pub fn tap_energy(&self) -> f64 {
        self.taps.iter().map(|h| h.norm_sqr()).sum()
    }
}

/// Draw one channel realization.
///
/// Tap energies are drawn jointly so that every realization carries exactly
/// unit total energy while the mean per-tap energy equals the configured
/// exponential profile: `e_l = g_l / sum(g)` with `g_l ~ Gamma(L * p_l)`.
/// Tap phases and the frame phase offset are uniform.
pub fn sample_channel<R: Rng>(
    cfg: &ChannelConfig,
    snr_db: f64,
    rng: &mut R,
) -> ChannelRealization {
    let profile = cfg.power_profile();
    let l = cfg.n_taps;

    let mut energies: Vec<f64> = profile
        .iter()
        .map(|&p| {
            let gamma = Gamma::new(l as f64 * p, 1.0).expect("positive shape");
            let draw: f64 = gamma.sample(rng);
            draw.max(f64::MIN_POSITIVE)
        })
        .collect();
    let total: f64 = energies.iter().sum();
    for e in &mut energies {
        *e /= total;
    }

    let taps: Vec<Complex64> = energies
        .iter()
        .map(|&e| {
            let phase: f64 = rng.gen_range(0.0..TAU);
            Complex64::from_polar(e.sqrt(), phase)
        })
        .collect();
    let phase_offset = rng.gen_range(0.0..TAU);

    ChannelRealization {
        taps,
        delays: cfg.delays.clone(),
        phase_offset,
        snr_db,
    }
}

/// Propagate a frame: delayed tap sum, global phase rotation, then AWGN
/// calibrated to the convolved signal's measured power so `snr_db` is the
/// receiver-side SNR. Out-of-range history samples are zero.
pub fn channel_apply<R: Rng>(
    x: &[Complex64],
    ch: &ChannelRealization,
    rng: &mut R,
) -> Vec<Complex64> {
    let rot = Complex64::from_polar(1.0, ch.phase_offset);
    let mut y: Vec<Complex64> = (0..x.len())
        .map(|n| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (l, (&h, &tau)) in ch.taps.iter().zip(&ch.delays).enumerate() {
                let shift = l + tau;
                if n >= shift {
                    acc += x[n - shift] * h;
                }
            }
            acc * rot
        })
        .collect();

    if ch.snr_db.is_finite() && !y.is_empty() {
        let p = mean_power([y.as_slice()]).expect("non-empty");
        let sigma = (p / (2.0 * 10f64.powf(ch.snr_db / 10.0))).sqrt();
        if sigma > 0.0 {
            for v in &mut y {
                let re: f64 = StandardNormal.sample(rng);
                let im: f64 = StandardNormal.sample(rng);
                *v += Complex64::new(re * sigma, im * sigma);
            }
        }
    }
    y
}
