//! OFDM symbol assembly, power measurement and clipping threshold.

use super::{dft, DspError, OfdmConfig};
use num_complex::Complex64;

/// Assemble one time-domain OFDM symbol: unitary IDFT of the constellation
/// vector with the last `cp_len` samples replicated in front as the cyclic
/// prefix. Output length is `n_subcarriers + cp_len`.
pub fn ofdm_modulate(u: &[Complex64], cfg: &OfdmConfig) -> Result<Vec<Complex64>, DspError> {
    let n = cfg.n_subcarriers;
    if u.len() != n {
        return Err(DspError::LengthMismatch {
            got: u.len(),
            expected: n,
        });
    }
    let body = dft(u, true)?;
    let mut out = Vec::with_capacity(n + cfg.cp_len);
    out.extend_from_slice(&body[n - cfg.cp_len..]);
    out.extend_from_slice(&body);
    Ok(out)
}

/// Mean `|sample|^2` over all samples of all frames.
pub fn mean_power<'a, I>(frames: I) -> Result<f64, DspError>
where
    I: IntoIterator<Item = &'a [Complex64]>,
{
    let mut acc = 0.0f64;
    let mut count = 0usize;
    for frame in frames {
        for s in frame {
            acc += s.norm_sqr();
            count += 1;
        }
    }
    if count == 0 {
        return Err(DspError::EmptyInput);
    }
    Ok(acc / count as f64)
}

/// Clipping threshold from input back-off: `A = sqrt(P_in) * 10^(ibo_db/20)`.
///
/// The dB value is an amplitude ratio (20 log10), numerically identical to
/// the power ratio `10 log10(A^2 / P_in)`.
pub fn clipping_threshold(ibo_db: f64, p_in: f64) -> Result<f64, DspError> {
    if !(p_in > 0.0) {
        return Err(DspError::NonPositivePower(p_in));
    }
    Ok(p_in.sqrt() * 10f64.powf(ibo_db / 20.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{default_scheme_list, map_bits, Scheme};
    use crate::util::bit_stream_rng;
    use rand::Rng;

    fn test_cfg(n: usize, cp: usize) -> OfdmConfig {
        OfdmConfig::new(n, cp, default_scheme_list(), 3.0, vec![0.0, 8.0, 18.0]).unwrap()
    }

    fn random_symbols(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = bit_stream_rng(seed, 0);
        (0..n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    #[test]
    fn single_active_subcarrier_gives_constant_body() {
        let cfg = test_cfg(64, 16);
        let mut u = vec![Complex64::new(0.0, 0.0); 64];
        u[0] = Complex64::new(1.0, 0.0);
        let s = ofdm_modulate(&u, &cfg).unwrap();
        assert_eq!(s.len(), 80);
        let c = 1.0 / 8.0;
        for v in &s {
            assert!((v.re - c).abs() < 1e-12 && v.im.abs() < 1e-12);
        }
    }

    #[test]
    fn cyclic_prefix_replicates_tail_bit_exactly() {
        let cfg = test_cfg(64, 16);
        for seed in 0..16 {
            let u = random_symbols(64, seed);
            let s = ofdm_modulate(&u, &cfg).unwrap();
            for i in 0..16 {
                assert_eq!(s[i], s[64 + i]);
            }
        }
    }

    #[test]
    fn body_matches_naive_idft_sum() {
        let cfg = test_cfg(64, 16);
        let u = random_symbols(64, 3);
        let s = ofdm_modulate(&u, &cfg).unwrap();
        let scale = 1.0 / 8.0;
        for n in 0..64usize {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, uk) in u.iter().enumerate() {
                let ang = 2.0 * std::f64::consts::PI * (k * n) as f64 / 64.0;
                acc += uk * Complex64::from_polar(1.0, ang);
            }
            acc *= scale;
            assert!((s[16 + n] - acc).norm() < 1e-9);
        }
    }

    #[test]
    fn body_power_equals_constellation_power() {
        let cfg = test_cfg(64, 16);
        let u = random_symbols(64, 4);
        let s = ofdm_modulate(&u, &cfg).unwrap();
        let pu: f64 = u.iter().map(|v| v.norm_sqr()).sum::<f64>() / 64.0;
        let ps: f64 = s[16..].iter().map(|v| v.norm_sqr()).sum::<f64>() / 64.0;
        assert!((pu - ps).abs() < 1e-6);
    }

    #[test]
    fn length_mismatch_rejected() {
        let cfg = test_cfg(64, 16);
        let u = vec![Complex64::new(1.0, 0.0); 32];
        assert!(matches!(
            ofdm_modulate(&u, &cfg),
            Err(DspError::LengthMismatch { got: 32, expected: 64 })
        ));
    }

    #[test]
    fn mean_power_constant_magnitude() {
        let frame = vec![Complex64::from_polar(1.0, 0.3); 50];
        assert!((mean_power([frame.as_slice()]).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mean_power_small_example() {
        let frame = vec![Complex64::new(2.0, 0.0), Complex64::new(0.0, 0.0)];
        assert_eq!(mean_power([frame.as_slice()]).unwrap(), 2.0);
    }

    #[test]
    fn mean_power_of_generated_qpsk_frames_is_near_unity() {
        let cfg = test_cfg(64, 16);
        let mut frames = Vec::new();
        for m in 0..1000u64 {
            let mut rng = bit_stream_rng(9, m);
            let bits: Vec<u8> = (0..128).map(|_| rng.gen_range(0..=1u8)).collect();
            let u = map_bits(Scheme::Qpsk, &bits).unwrap();
            frames.push(ofdm_modulate(&u, &cfg).unwrap());
        }
        let p = mean_power(frames.iter().map(|f| f.as_slice())).unwrap();
        assert!((p - 1.0).abs() < 0.05, "mean power {p}");
    }

    #[test]
    fn mean_power_empty_rejected() {
        assert!(matches!(
            mean_power(std::iter::empty::<&[Complex64]>()),
            Err(DspError::EmptyInput)
        ));
    }

    #[test]
    fn clipping_threshold_examples() {
        assert!((clipping_threshold(0.0, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((clipping_threshold(3.0, 1.0).unwrap() - 1.4125375446227544).abs() < 1e-12);
        assert!((clipping_threshold(6.0, 4.0).unwrap() - 2.0 * 10f64.powf(0.3)).abs() < 1e-12);
        assert!(matches!(
            clipping_threshold(3.0, 0.0),
            Err(DspError::NonPositivePower(_))
        ));
        assert!(clipping_threshold(3.0, -1.0).is_err());
    }
}
