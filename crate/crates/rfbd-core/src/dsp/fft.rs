//! Unitary radix-2 discrete Fourier transform.

use super::DspError;
use num_complex::Complex64;
use std::f64::consts::PI;

/// Discrete Fourier transform with unitary `1/sqrt(N)` scaling in both
/// directions, so `dft(dft(x, false), true) == x` and energy is preserved.
///
/// The forward kernel is `exp(-j 2 pi k n / N)`; the inverse kernel is its
/// conjugate. Length must be a power of two.
pub fn dft(x: &[Complex64], inverse: bool) -> Result<Vec<Complex64>, DspError> {
    let n = x.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(DspError::NonPowerOfTwoLength(n));
    }
    let mut buf = x.to_vec();
    fft_in_place(&mut buf, inverse);
    let scale = 1.0 / (n as f64).sqrt();
    for v in &mut buf {
        *v *= scale;
    }
    Ok(buf)
}

/// Iterative decimation-in-time Cooley-Tukey butterfly, unscaled.
fn fft_in_place(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();

    // Bit-reversal permutation.
    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j ^= bit;
        if i < j {
            buf.swap(i, j);
        }
    }

    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = sign * 2.0 * PI / len as f64;
        let w_len = Complex64::from_polar(1.0, step);
        let mut start = 0;
        while start < n {
            let mut w = Complex64::new(1.0, 0.0);
            for k in 0..half {
                let u = buf[start + k];
                let t = w * buf[start + k + half];
                buf[start + k] = u + t;
                buf[start + k + half] = u - t;
                w *= w_len;
            }
            start += len;
        }
        len <<= 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_vec(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect()
    }

    /// Direct O(N^2) evaluation of the unitary transform definition.
    fn naive_dft(x: &[Complex64], inverse: bool) -> Vec<Complex64> {
        let n = x.len();
        let sign = if inverse { 1.0 } else { -1.0 };
        let scale = 1.0 / (n as f64).sqrt();
        (0..n)
            .map(|k| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (i, v) in x.iter().enumerate() {
                    let ang = sign * 2.0 * PI * (k * i) as f64 / n as f64;
                    acc += v * Complex64::from_polar(1.0, ang);
                }
                acc * scale
            })
            .collect()
    }

    fn rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
        let den: f64 = b.iter().map(|y| y.norm_sqr()).sum();
        (num / den.max(1e-300)).sqrt()
    }

    #[test]
    fn impulse_transforms_to_constant() {
        let mut x = vec![Complex64::new(0.0, 0.0); 16];
        x[0] = Complex64::new(1.0, 0.0);
        let y = dft(&x, false).unwrap();
        let c = 1.0 / 4.0;
        for v in y {
            assert!((v.re - c).abs() < 1e-12 && v.im.abs() < 1e-12);
        }
    }

    #[test]
    fn matches_naive_sum_on_random_length_64() {
        let x = random_vec(64, 1);
        for inverse in [false, true] {
            let fast = dft(&x, inverse).unwrap();
            let slow = naive_dft(&x, inverse);
            assert!(rel_err(&fast, &slow) < 1e-9);
        }
    }

    #[test]
    fn forward_then_inverse_is_identity() {
        let x = random_vec(128, 2);
        let y = dft(&dft(&x, false).unwrap(), true).unwrap();
        assert!(rel_err(&y, &x) < 1e-9);
    }

    #[test]
    fn non_power_of_two_rejected() {
        let x = vec![Complex64::new(1.0, 0.0); 12];
        assert!(matches!(
            dft(&x, false),
            Err(DspError::NonPowerOfTwoLength(12))
        ));
        assert!(matches!(dft(&[], false), Err(DspError::NonPowerOfTwoLength(0))));
    }

    #[test]
    fn transform_is_unitary_and_linear() {
        for seed in 0..8 {
            let x = random_vec(64, 100 + seed);
            let y = random_vec(64, 200 + seed);
            let fx = dft(&x, false).unwrap();
            let fy = dft(&y, false).unwrap();

            let nx: f64 = x.iter().map(|v| v.norm_sqr()).sum();
            let nfx: f64 = fx.iter().map(|v| v.norm_sqr()).sum();
            assert!((nx - nfx).abs() / nx < 1e-9);

            let a = Complex64::new(0.7, -0.3);
            let b = Complex64::new(-1.2, 0.4);
            let combo: Vec<Complex64> =
                x.iter().zip(&y).map(|(xi, yi)| a * xi + b * yi).collect();
            let f_combo = dft(&combo, false).unwrap();
            let expect: Vec<Complex64> =
                fx.iter().zip(&fy).map(|(xi, yi)| a * xi + b * yi).collect();
            assert!(rel_err(&f_combo, &expect) < 1e-9);
        }
    }
}
