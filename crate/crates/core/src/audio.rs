//! Mono audio container, signal statistics, level normalization and noise mixing.

use alloc::vec::Vec;
use core::fmt;

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AudioError {
    #[error("sample rate must be positive")]
    ZeroSampleRate,
    #[error("non-finite sample at index {0}")]
    NonFinite(usize),
    #[error("empty audio buffer")]
    Empty,
    #[error("all-zero input cannot be normalized")]
    AllZero,
    #[error("normalization target must be positive and finite, got {0}")]
    BadTarget(f64),
    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(u32, u32),
    #[error("noise-to-signal ratio must be finite and non-negative, got {0}")]
    BadNsr(f64),
    #[error("noise buffer is empty")]
    EmptyNoise,
}

/// A mono discrete-time signal.
///
/// Samples are `f64` in nominal full scale `[-1, 1]`. Values outside that
/// range are allowed in memory (they are clipped when written to disk).
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self, AudioError> {
        if sample_rate_hz == 0 {
            return Err(AudioError::ZeroSampleRate);
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite(i));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    /// All-zero buffer of the given length.
    pub fn silence(len: usize, sample_rate_hz: u32) -> Result<Self, AudioError> {
        Self::new(alloc::vec![0.0; len], sample_rate_hz)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Same rate, new samples. Used internally where finiteness is already
    /// guaranteed by construction.
    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Self {
        debug_assert!(samples.iter().all(|s| s.is_finite()));
        Self {
            samples,
            sample_rate_hz: self.sample_rate_hz,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.with_samples(self.samples.iter().map(|s| s * factor).collect())
    }

    /// SHA-256 over the sample rate and the exact bit patterns of the samples.
    pub fn digest(&self) -> AudioDigest {
        let mut hasher = Sha256::new();
        hasher.update(self.sample_rate_hz.to_le_bytes());
        for s in &self.samples {
            hasher.update(s.to_bits().to_le_bytes());
        }
        AudioDigest(hasher.finalize().into())
    }
}

/// Content digest of an [`AudioBuffer`]. Displays as lowercase hex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AudioDigest(pub [u8; 32]);

impl AudioDigest {
    pub fn from_hex(hex: &str) -> Option<Self> {
        let hex = hex.trim();
        if hex.len() != 64 || !hex.is_ascii() {
            return None;
        }
        let mut out = [0u8; 32];
        for (i, byte) in out.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&hex[2 * i..2 * i + 2], 16).ok()?;
        }
        Some(Self(out))
    }
}

impl fmt::Display for AudioDigest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.0 {
            write!(f, "{b:02x}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalStats {
    pub rms: f64,
    pub energy: f64,
    pub peak: f64,
}

/// Sum of squares, accumulated left to right.
pub fn energy(samples: &[f64]) -> f64 {
    samples.iter().map(|s| s * s).sum()
}

pub fn signal_stats(audio: &AudioBuffer) -> Result<SignalStats, AudioError> {
    if audio.is_empty() {
        return Err(AudioError::Empty);
    }
    let energy = energy(audio.samples());
    let peak = audio.samples().iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let rms = libm::sqrt(energy / audio.len() as f64);
    Ok(SignalStats { rms, energy, peak })
}

fn check_target(target: f64) -> Result<(), AudioError> {
    if target > 0.0 && target.is_finite() {
        Ok(())
    } else {
        Err(AudioError::BadTarget(target))
    }
}

/// Scale `audio` uniformly so its rms equals `target_rms`.
pub fn normalize_rms(audio: &AudioBuffer, target_rms: f64) -> Result<AudioBuffer, AudioError> {
    check_target(target_rms)?;
    let stats = signal_stats(audio)?;
    if stats.energy == 0.0 {
        return Err(AudioError::AllZero);
    }
    Ok(audio.scaled(target_rms / stats.rms))
}

/// Scale `audio` uniformly so its energy equals `target_energy`.
pub fn normalize_energy(
    audio: &AudioBuffer,
    target_energy: f64,
) -> Result<AudioBuffer, AudioError> {
    check_target(target_energy)?;
    let stats = signal_stats(audio)?;
    if stats.energy == 0.0 {
        return Err(AudioError::AllZero);
    }
    Ok(audio.scaled(libm::sqrt(target_energy / stats.energy)))
}

/// `speech[i] + nsr * noise[i mod len(noise)]` over the length of `speech`.
///
/// `nsr` is an amplitude multiplier; the caller is expected to have matched
/// the noise rms to the speech beforehand.
pub fn mix_at_nsr(
    speech: &AudioBuffer,
    noise: &AudioBuffer,
    nsr: f64,
) -> Result<AudioBuffer, AudioError> {
    if speech.sample_rate_hz != noise.sample_rate_hz {
        return Err(AudioError::RateMismatch(
            speech.sample_rate_hz,
            noise.sample_rate_hz,
        ));
    }
    if !(nsr >= 0.0 && nsr.is_finite()) {
        return Err(AudioError::BadNsr(nsr));
    }
    if speech.is_empty() {
        return Err(AudioError::Empty);
    }
    if noise.is_empty() {
        return Err(AudioError::EmptyNoise);
    }
    let mixed = speech
        .samples
        .iter()
        .zip(noise.samples.iter().cycle())
        .map(|(s, n)| s + nsr * n)
        .collect();
    Ok(speech.with_samples(mixed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn buf(s: &[f64]) -> AudioBuffer {
        AudioBuffer::new(s.to_vec(), 44_100).unwrap()
    }

    #[test]
    fn rejects_bad_construction() {
        assert_eq!(AudioBuffer::new(vec![0.0], 0), Err(AudioError::ZeroSampleRate));
        assert_eq!(
            AudioBuffer::new(vec![0.0, f64::NAN], 8000),
            Err(AudioError::NonFinite(1))
        );
    }

    #[test]
    fn stats_examples() {
        let s = signal_stats(&buf(&[0.5; 4])).unwrap();
        assert_eq!((s.rms, s.energy, s.peak), (0.5, 1.0, 0.5));
        let s = signal_stats(&buf(&[1.0, -1.0, 1.0, -1.0])).unwrap();
        assert_eq!((s.rms, s.energy, s.peak), (1.0, 4.0, 1.0));
        assert_eq!(signal_stats(&buf(&[])), Err(AudioError::Empty));
    }

    #[test]
    fn sine_rms() {
        // 441 full periods of a 100 Hz sine at 44.1 kHz.
        let x: Vec<f64> = (0..44_100)
            .map(|n| libm::sin(2.0 * core::f64::consts::PI * 100.0 * n as f64 / 44_100.0))
            .collect();
        let direct = libm::sqrt(x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64);
        let s = signal_stats(&buf(&x)).unwrap();
        assert!((s.rms - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-3);
        assert_eq!(s.rms, direct);
    }

    #[test]
    fn normalize_examples() {
        let out = normalize_rms(&buf(&[0.2, -0.2]), 0.4).unwrap();
        assert!((out.samples()[0] - 0.4).abs() < 1e-15);
        assert!((out.samples()[1] + 0.4).abs() < 1e-15);

        let out = normalize_energy(&buf(&[1.0, 0.0]), 2.0).unwrap();
        assert!((out.samples()[0] - core::f64::consts::SQRT_2).abs() < 1e-15);
        assert_eq!(out.samples()[1], 0.0);

        assert_eq!(normalize_rms(&buf(&[0.0, 0.0]), 1.0), Err(AudioError::AllZero));
        assert_eq!(normalize_energy(&buf(&[0.0]), 1.0), Err(AudioError::AllZero));
        assert_eq!(
            normalize_energy(&buf(&[1.0]), -1.0),
            Err(AudioError::BadTarget(-1.0))
        );
    }

    #[test]
    fn normalize_identity_target() {
        let b = buf(&[0.1, -0.3, 0.25, 0.7]);
        let st = signal_stats(&b).unwrap();
        let out = normalize_rms(&b, st.rms).unwrap();
        for (a, b) in out.samples().iter().zip(b.samples()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn mix_examples() {
        let speech = buf(&[1.0, 0.0]);
        let noise = buf(&[0.0, 1.0]);
        assert_eq!(mix_at_nsr(&speech, &noise, 2.0).unwrap().samples(), &[1.0, 2.0]);
        assert_eq!(mix_at_nsr(&speech, &noise, 0.0).unwrap(), speech);

        // tiling
        let long = buf(&[1.0, 1.0, 1.0, 1.0, 1.0]);
        let short = buf(&[0.5, -0.5]);
        assert_eq!(
            mix_at_nsr(&long, &short, 1.0).unwrap().samples(),
            &[1.5, 0.5, 1.5, 0.5, 1.5]
        );

        let other_rate = AudioBuffer::new(vec![0.0], 16_000).unwrap();
        assert_eq!(
            mix_at_nsr(&speech, &other_rate, 1.0),
            Err(AudioError::RateMismatch(44_100, 16_000))
        );
        assert_eq!(mix_at_nsr(&speech, &noise, -1.0), Err(AudioError::BadNsr(-1.0)));
    }

    #[test]
    fn digest_hex_round_trip() {
        let d = buf(&[0.25, -0.5]).digest();
        let hex = alloc::format!("{d}");
        assert_eq!(hex.len(), 64);
        assert_eq!(AudioDigest::from_hex(&hex), Some(d));
        assert_ne!(buf(&[0.25, -0.5]).digest(), buf(&[0.25, 0.5]).digest());
        assert_eq!(AudioDigest::from_hex("zz"), None);
    }
}
