//! Modulation schemes and constellation mapping.
//!
//! Every alphabet is normalized to unit average power, so frame power after
//! unitary OFDM modulation equals constellation power and the clipping
//! threshold stays interpretable across schemes.

use super::DspError;
use num_complex::Complex64;
use once_cell::sync::Lazy;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

/// Digital modulation schemes supported per subcarrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Bpsk,
    Qpsk,
    Psk8,
    Pam4,
    Pam8,
    Qam16,
    Qam32,
    Qam64,
    Qam128,
    Qam256,
    Apsk16,
}

impl Scheme {
    pub const ALL: [Scheme; 11] = [
        Scheme::Bpsk,
        Scheme::Qpsk,
        Scheme::Psk8,
        Scheme::Pam4,
        Scheme::Pam8,
        Scheme::Qam16,
        Scheme::Qam32,
        Scheme::Qam64,
        Scheme::Qam128,
        Scheme::Qam256,
        Scheme::Apsk16,
    ];

    pub fn bits_per_symbol(self) -> usize {
        match self {
            Scheme::Bpsk => 1,
            Scheme::Qpsk => 2,
            Scheme::Psk8 => 3,
            Scheme::Pam4 => 2,
            Scheme::Pam8 => 3,
            Scheme::Qam16 => 4,
            Scheme::Qam32 => 5,
            Scheme::Qam64 => 6,
            Scheme::Qam128 => 7,
            Scheme::Qam256 => 8,
            Scheme::Apsk16 => 4,
        }
    }

    /// Constellation points indexed by the symbol's bit pattern
    /// (first bit is the most significant). Unit average power.
    pub fn alphabet(self) -> &'static [Complex64] {
        static TABLES: Lazy<Vec<Vec<Complex64>>> =
            Lazy::new(|| Scheme::ALL.iter().map(|s| build_alphabet(*s)).collect());
        let idx = Scheme::ALL.iter().position(|s| *s == self).unwrap();
        &TABLES[idx]
    }

    /// Index of the alphabet point closest to `value` (ties to lower index).
    pub fn nearest(self, value: Complex64) -> usize {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.alphabet().iter().enumerate() {
            let d = (value - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Bpsk => "bpsk",
            Scheme::Qpsk => "qpsk",
            Scheme::Psk8 => "8psk",
            Scheme::Pam4 => "pam4",
            Scheme::Pam8 => "pam8",
            Scheme::Qam16 => "16qam",
            Scheme::Qam32 => "32qam",
            Scheme::Qam64 => "64qam",
            Scheme::Qam128 => "128qam",
            Scheme::Qam256 => "256qam",
            Scheme::Apsk16 => "16apsk",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = DspError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Scheme::ALL
            .iter()
            .copied()
            .find(|sch| sch.name() == lower)
            .ok_or_else(|| DspError::UnknownScheme(s.to_string()))
    }
}

fn gray(n: usize) -> usize {
    n ^ (n >> 1)
}

/// Odd levels -(l-1), ..., -1, 1, ..., (l-1) indexed by Gray code.
fn pam_levels(l: usize) -> Vec<f64> {
    (0..l).map(|k| (2 * k) as f64 - (l - 1) as f64).collect()
}

fn normalize(mut points: Vec<Complex64>) -> Vec<Complex64> {
    let mean: f64 = points.iter().map(|p| p.norm_sqr()).sum::<f64>() / points.len() as f64;
    let s = 1.0 / mean.sqrt();
    for p in &mut points {
        *p *= s;
    }
    points
}

fn square_qam(bits: usize) -> Vec<Complex64> {
    let half = bits / 2;
    let l = 1usize << half;
    let levels = pam_levels(l);
    let m = 1usize << bits;
    let points = (0..m)
        .map(|idx| {
            let i_bits = idx >> half;
            let q_bits = idx & (l - 1);
            Complex64::new(levels[gray(i_bits)], levels[gray(q_bits)])
        })
        .collect();
    normalize(points)
}

/// Cross constellation: a `side`x`side` odd-level grid with `corner`x`corner`
/// blocks removed from each corner. Enumerated row-major, bits assigned in
/// enumeration order.
fn cross_qam(side: usize, corner: usize, bits: usize) -> Vec<Complex64> {
    let levels = pam_levels(side);
    // A point is in a removed corner block when both coordinates sit in the
    // outermost `corner` level band.
    let lim = levels[side - 1 - corner].abs();
    let keep = |a: f64, b: f64| !(a.abs() > lim && b.abs() > lim);
    let mut points = Vec::with_capacity(1 << bits);
    for &q in levels.iter().rev() {
        for &i in &levels {
            if keep(i, q) {
                points.push(Complex64::new(i, q));
            }
        }
    }
    assert_eq!(points.len(), 1 << bits);
    normalize(points)
}

fn build_alphabet(scheme: Scheme) -> Vec<Complex64> {
    match scheme {
        Scheme::Bpsk => vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
        Scheme::Qpsk => {
            let s = 1.0 / 2.0_f64.sqrt();
            (0..4)
                .map(|idx| {
                    let b0 = (idx >> 1) & 1;
                    let b1 = idx & 1;
                    Complex64::new(
                        (1.0 - 2.0 * b0 as f64) * s,
                        (1.0 - 2.0 * b1 as f64) * s,
                    )
                })
                .collect()
        }
        Scheme::Psk8 => (0..8)
            .map(|idx| Complex64::from_polar(1.0, 2.0 * PI * gray(idx) as f64 / 8.0))
            .collect(),
        Scheme::Pam4 => {
            let levels = pam_levels(4);
            normalize(
                (0..4)
                    .map(|idx| Complex64::new(levels[gray(idx)], 0.0))
                    .collect(),
            )
        }
        Scheme::Pam8 => {
            let levels = pam_levels(8);
            normalize(
                (0..8)
                    .map(|idx| Complex64::new(levels[gray(idx)], 0.0))
                    .collect(),
            )
        }
        Scheme::Qam16 => square_qam(4),
        Scheme::Qam32 => cross_qam(6, 1, 5),
        Scheme::Qam64 => square_qam(6),
        Scheme::Qam128 => cross_qam(12, 2, 7),
        Scheme::Qam256 => square_qam(8),
        Scheme::Apsk16 => {
            // Two-ring APSK: 4 inner points, 12 outer, outer/inner radius 3.15.
            let gamma = 3.15;
            let mut points = Vec::with_capacity(16);
            for k in 0..4 {
                points.push(Complex64::from_polar(1.0, PI / 4.0 + k as f64 * PI / 2.0));
            }
            for k in 0..12 {
                points.push(Complex64::from_polar(gamma, PI / 12.0 + k as f64 * PI / 6.0));
            }
            normalize(points)
        }
    }
}

/// Map a bit sequence onto constellation points, one symbol per
/// `bits_per_symbol` chunk (first bit of each chunk is the MSB).
pub fn map_bits(scheme: Scheme, bits: &[u8]) -> Result<Vec<Complex64>, DspError> {
    let bps = scheme.bits_per_symbol();
    if bits.len() % bps != 0 {
        return Err(DspError::BitCountMismatch {
            got: bits.len(),
            expected: bits.len().div_ceil(bps) * bps,
        });
    }
    let alphabet = scheme.alphabet();
    Ok(bits
        .chunks_exact(bps)
        .map(|chunk| {
            let idx = chunk.iter().fold(0usize, |acc, b| (acc << 1) | (*b & 1) as usize);
            alphabet[idx]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bpsk_maps_zero_to_plus_one() {
        let points = map_bits(Scheme::Bpsk, &[0, 1, 0, 1, 1]).unwrap();
        let expect = [1.0, -1.0, 1.0, -1.0, -1.0];
        for (p, e) in points.iter().zip(expect) {
            assert_eq!(p.re, e);
            assert_eq!(p.im, 0.0);
        }
    }

    #[test]
    fn qpsk_all_zero_bits_hit_first_quadrant_corner() {
        let points = map_bits(Scheme::Qpsk, &[0; 8]).unwrap();
        let s = 1.0 / 2.0_f64.sqrt();
        for p in points {
            assert!((p.re - s).abs() < 1e-15);
            assert!((p.im - s).abs() < 1e-15);
        }
    }

    #[test]
    fn qam16_exhaustive_patterns_have_unit_mean_power() {
        // All 16 four-bit patterns, averaged |.|^2.
        let mut bits = Vec::new();
        for idx in 0..16u8 {
            for b in (0..4).rev() {
                bits.push((idx >> b) & 1);
            }
        }
        let points = map_bits(Scheme::Qam16, &bits).unwrap();
        assert_eq!(points.len(), 16);
        let mean: f64 = points.iter().map(|p| p.norm_sqr()).sum::<f64>() / 16.0;
        assert!((mean - 1.0).abs() < 1e-9);
    }

    #[test]
    fn every_alphabet_is_unit_power_distinct_and_full_size() {
        for scheme in Scheme::ALL {
            let a = scheme.alphabet();
            assert_eq!(a.len(), 1 << scheme.bits_per_symbol(), "{scheme}");
            let mean: f64 = a.iter().map(|p| p.norm_sqr()).sum::<f64>() / a.len() as f64;
            assert!((mean - 1.0).abs() < 1e-9, "{scheme}: mean power {mean}");
            for (i, p) in a.iter().enumerate() {
                for q in &a[i + 1..] {
                    assert!((p - q).norm() > 1e-9, "{scheme}: duplicate point {p}");
                }
            }
        }
    }

    #[test]
    fn bit_count_mismatch_is_rejected() {
        let err = map_bits(Scheme::Qam16, &[0, 1, 0]).unwrap_err();
        assert!(matches!(err, DspError::BitCountMismatch { .. }));
    }

    #[test]
    fn scheme_names_round_trip() {
        for scheme in Scheme::ALL {
            assert_eq!(scheme.name().parse::<Scheme>().unwrap(), scheme);
        }
        assert!("wbfm".parse::<Scheme>().is_err());
    }

    #[test]
    fn nearest_recovers_alphabet_points() {
        for scheme in Scheme::ALL {
            for (i, p) in scheme.alphabet().iter().enumerate() {
                assert_eq!(scheme.nearest(*p + Complex64::new(1e-6, -1e-6)), i);
            }
        }
    }
}
