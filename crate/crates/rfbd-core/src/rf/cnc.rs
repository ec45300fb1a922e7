//! Decision-aided iterative clipping-noise cancellation.
//!
//! Each iteration decides the constellation from the current spectrum,
//! regenerates the ideal time-domain frame, measures what the PA would have
//! clipped off that frame, and subtracts the estimated clipping noise from
//! the received spectrum.

use super::{pa_clip, PaModel, RfError};
use crate::dsp::{dft, ofdm_modulate, OfdmConfig, Scheme};
use num_complex::Complex64;

#[derive(Debug, Clone, Copy)]
pub struct CncConfig {
    pub n_iterations: usize,
    /// Constellation used for per-subcarrier decisions.
    pub scheme: Scheme,
}

/// Run CNC on one received frame of length `N + N_cp`.
///
/// Zero iterations return the input unchanged. The output frame keeps the
/// full length; its cyclic prefix is rebuilt from the corrected body.
pub fn cnc_receive(
    y: &[Complex64],
    pa: &PaModel,
    cnc: &CncConfig,
    cfg: &OfdmConfig,
) -> Result<Vec<Complex64>, RfError> {
    let n = cfg.n_subcarriers;
    let cp = cfg.cp_len;
    if y.len() != n + cp {
        return Err(RfError::FrameLengthMismatch {
            got: y.len(),
            expected: n + cp,
        });
    }
    if cnc.n_iterations == 0 {
        return Ok(y.to_vec());
    }

    let alphabet = cnc.scheme.alphabet();
    let received = dft(&y[cp..], false)?;
    let mut spectrum = received.clone();

    for _ in 0..cnc.n_iterations {
        let decided: Vec<Complex64> = spectrum
            .iter()
            .map(|v| alphabet[cnc.scheme.nearest(*v)])
            .collect();
        let regen = ofdm_modulate(&decided, cfg)?;
        let regen_clipped = pa_clip(&regen, pa);
        let clip_noise: Vec<Complex64> = regen_clipped
            .iter()
            .zip(&regen)
            .map(|(c, r)| c - r)
            .collect();
        let noise_spectrum = dft(&clip_noise[cp..], false)?;
        spectrum = received
            .iter()
            .zip(&noise_spectrum)
            .map(|(r, d)| r - d)
            .collect();
    }

    let body = dft(&spectrum, true)?;
    let mut out = Vec::with_capacity(n + cp);
    out.extend_from_slice(&body[n - cp..]);
    out.extend_from_slice(&body);
    Ok(out)
}
