//! Simulation laboratory for physical backdoor attacks on deep-learning
//! modulation classifiers.
//!
//! The crate covers the full experiment chain: OFDM baseband generation
//! ([`dsp`]), power-amplifier clipping and fading-channel propagation with
//! clipping-noise-cancellation reception ([`rf`]), amplitude-poisoning and
//! trigger extraction ([`attack`]), a small CPU training engine ([`nn`]),
//! dataset/training/metrics pipelines ([`pipelines`]), and three backdoor
//! defenses ([`defense`]).

pub mod attack;
pub mod defense;
pub mod dsp;
pub mod nn;
pub mod pipelines;
pub mod rf;
pub mod util;

pub use num_complex::Complex64;
