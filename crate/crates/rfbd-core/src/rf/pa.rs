//! Ideal-clipper power-amplifier model.

use super::RfError;
use num_complex::Complex64;

/// Memoryless clipping PA: samples below the threshold pass unchanged,
/// samples at or above it are pulled back to the threshold magnitude with
/// their phase preserved.
#[derive(Debug, Clone, Copy)]
pub struct PaModel {
    /// Clipping threshold `A` in amplitude units; positive (may be infinite).
    pub clip_threshold: f64,
}

impl PaModel {
    pub fn new(clip_threshold: f64) -> Result<Self, RfError> {
        if !(clip_threshold > 0.0) {
            return Err(RfError::InvalidThreshold(clip_threshold));
        }
        Ok(Self { clip_threshold })
    }

    /// Clip a single sample. Rescaling by the real factor `A/|x|` preserves
    /// the phase; the trailing fixup keeps the operation exactly idempotent
    /// under floating-point rounding of the recomputed magnitude.
    pub fn clip_sample(&self, x: Complex64) -> Complex64 {
        let a = self.clip_threshold;
        let mut y = x;
        loop {
            let r = y.norm();
            if r < a {
                return y;
            }
            let s = a / r;
            if s == 1.0 {
                return y;
            }
            y *= s;
        }
    }
}

/// Apply the PA clipper to every sample of a frame.
pub fn pa_clip(x: &[Complex64], pa: &PaModel) -> Vec<Complex64> {
    x.iter().map(|&s| pa.clip_sample(s)).collect()
}
