use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{normalize_text, TokenSequence, TranscribeError, Transcriber};
use crate::audio::AudioBuffer;
use crate::wavelet::{self, ExtensionMode};

/// Floor added to band shares before taking log ratios, so silent bands
/// give a large but finite distance.
const SHARE_FLOOR: f64 = 1e-9;

/// Fraction of the total coefficient energy in each wavelet band.
pub fn band_profile(audio: &AudioBuffer, level: usize) -> Result<Vec<f64>, TranscribeError> {
    let set = wavelet::wavedec(audio, level, ExtensionMode::Periodic)
        .map_err(|e| TranscribeError::Audio(alloc::format!("{e}")))?;
    Ok(set.energy_shares())
}

/// `Σ_k |ln((p_k + ε) / (q_k + ε))|`. Zero iff the profiles are equal; every
/// band counts on a relative scale, so weak high-frequency bands matter as
/// much as the dominant low band.
pub fn profile_distance(profile: &[f64], target: &[f64]) -> f64 {
    profile
        .iter()
        .zip(target)
        .map(|(p, q)| libm::fabs(libm::log((p + SHARE_FLOOR) / (q + SHARE_FLOOR))))
        .sum()
}

/// Offline stand-in for a recognizer.
///
/// It measures how far the audio's band-energy profile is from a hidden
/// target and deletes a matching fraction of the reference tokens:
/// `ceil(N · d / (d + d½))` of them, where `d` is [`profile_distance`] and
/// `d½` the distance at which half the tokens are lost. Which tokens go is
/// drawn from a generator seeded with a hash of the measured band profile,
/// so the output is a pure function of the input.
#[derive(Debug, Clone)]
pub struct SyntheticTranscriber {
    reference: TokenSequence,
    target: Vec<f64>,
    level: usize,
    half_distance: f64,
}

impl SyntheticTranscriber {
    pub const DEFAULT_HALF_DISTANCE: f64 = 1.0;

    pub fn new(reference_text: &str, language: &str, target_profile: Vec<f64>, level: usize) -> Self {
        Self {
            reference: normalize_text(reference_text, language),
            target: target_profile,
            level,
            half_distance: Self::DEFAULT_HALF_DISTANCE,
        }
    }

    pub fn with_half_distance(mut self, half_distance: f64) -> Self {
        assert!(half_distance > 0.0);
        self.half_distance = half_distance;
        self
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    /// Number of reference tokens removed at profile distance `d`.
    pub fn deletions_at(&self, d: f64) -> usize {
        let n = self.reference.len();
        if d <= 0.0 {
            return 0;
        }
        let fraction = d / (d + self.half_distance);
        (libm::ceil(fraction * n as f64) as usize).min(n)
    }

    pub fn distance_of(&self, audio: &AudioBuffer) -> Result<f64, TranscribeError> {
        self.measure(audio).map(|(d, _)| d)
    }

    fn measure(&self, audio: &AudioBuffer) -> Result<(f64, Vec<f64>), TranscribeError> {
        let profile = band_profile(audio, self.level)?;
        if profile.len() != self.target.len() {
            return Err(TranscribeError::Config(alloc::format!(
                "target profile has {} bands, audio decomposes into {}",
                self.target.len(),
                profile.len()
            )));
        }
        Ok((profile_distance(&profile, &self.target), profile))
    }
}

impl Transcriber for SyntheticTranscriber {
    fn transcribe(&self, audio: &AudioBuffer, _language: &str) -> Result<String, TranscribeError> {
        let (d, profile) = self.measure(audio)?;
        let k = self.deletions_at(d);
        let n = self.reference.len();
        let mut keep = alloc::vec![true; n];
        if k > 0 {
            let mut hasher = Sha256::new();
            for p in &profile {
                hasher.update(p.to_bits().to_le_bytes());
            }
            let mut rng = ChaCha8Rng::from_seed(hasher.finalize().into());
            for i in rand::seq::index::sample(&mut rng, n, k) {
                keep[i] = false;
            }
        }
        let kept = TokenSequence {
            tokens: self
                .reference
                .tokens
                .iter()
                .zip(&keep)
                .filter(|(_, &k)| k)
                .map(|(t, _)| t.clone())
                .collect(),
            language: self.reference.language.clone(),
        };
        Ok(kept.joined())
    }
}
