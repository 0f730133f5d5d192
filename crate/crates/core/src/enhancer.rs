//! Per-band gain reallocation at constant energy, followed by peak limiting.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::audio::{self, AudioBuffer};
use crate::wavelet::{self, ExtensionMode, SubbandSet, WaveletError};

/// Decomposition depth of the standard pipeline (six bands at 44.1 kHz).
pub const STANDARD_LEVEL: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnhanceError {
    #[error("gain {value} for band {band} is negative or not finite")]
    BadGain { band: usize, value: f64 },
    #[error("expected {expected} gains, got {got}")]
    GainCount { expected: usize, got: usize },
    #[error("degenerate gains: enhanced signal is all zero")]
    DegenerateGains,
    #[error("invalid limiter configuration: knee {knee_start}, threshold {peak_threshold}")]
    BadLimiter { knee_start: f64, peak_threshold: f64 },
    #[error(transparent)]
    Wavelet(#[from] WaveletError),
}

/// The six band names of the standard level-5 decomposition, low to high.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Band {
    CA5,
    CD5,
    CD4,
    CD3,
    CD2,
    CD1,
}

impl Band {
    pub const ALL: [Band; 6] = [Band::CA5, Band::CD5, Band::CD4, Band::CD3, Band::CD2, Band::CD1];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Band::CA5 => "cA5",
            Band::CD5 => "cD5",
            Band::CD4 => "cD4",
            Band::CD3 => "cD3",
            Band::CD2 => "cD2",
            Band::CD1 => "cD1",
        }
    }

    pub fn from_name(name: &str) -> Option<Band> {
        Band::ALL
            .into_iter()
            .find(|b| b.name().eq_ignore_ascii_case(name))
    }
}

/// Non-negative multipliers, one per band, ordered low to high frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct GainVector(Vec<f64>);

impl GainVector {
    pub fn new(gains: Vec<f64>) -> Result<Self, EnhanceError> {
        if let Some((band, &value)) = gains
            .iter()
            .enumerate()
            .find(|(_, g)| !(g.is_finite() && **g >= 0.0))
        {
            return Err(EnhanceError::BadGain { band, value });
        }
        Ok(Self(gains))
    }

    /// All ones: the identity enhancement.
    pub fn unit(bands: usize) -> Self {
        Self(vec![1.0; bands])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, band: usize) -> f64 {
        self.0[band]
    }

    pub fn with(&self, band: usize, gain: f64) -> Result<Self, EnhanceError> {
        let mut g = self.0.clone();
        g[band] = gain;
        Self::new(g)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|g| g * factor).collect())
    }

    pub fn is_unit(&self) -> bool {
        self.0.iter().all(|&g| g == 1.0)
    }
}

impl fmt::Display for GainVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, g) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{g}")?;
        }
        Ok(())
    }
}

/// Memoryless soft-knee peak limiter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimiterConfig {
    pub peak_threshold: f64,
    pub knee_start: f64,
}

impl Default for LimiterConfig {
    fn default() -> Self {
        Self {
            peak_threshold: 0.99,
            knee_start: 0.80,
        }
    }
}

impl LimiterConfig {
    pub fn new(knee_start: f64, peak_threshold: f64) -> Result<Self, EnhanceError> {
        let cfg = Self {
            peak_threshold,
            knee_start,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), EnhanceError> {
        let ok = self.knee_start > 0.0
            && self.knee_start < self.peak_threshold
            && self.peak_threshold <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(EnhanceError::BadLimiter {
                knee_start: self.knee_start,
                peak_threshold: self.peak_threshold,
            })
        }
    }

    /// Transfer curve on a single sample. Identity up to the knee; above it the
    /// magnitude follows `k + (T − k)·tanh((|s| − k)/(T − k))`, which is
    /// continuous with unit slope at the knee and approaches `T` from below.
    pub fn shape(&self, s: f64) -> f64 {
        let mag = s.abs();
        if mag <= self.knee_start {
            return s;
        }
        let span = self.peak_threshold - self.knee_start;
        let out = self.knee_start + span * libm::tanh((mag - self.knee_start) / span);
        // tanh saturates to exactly 1.0 in floating point for large arguments.
        let out = out.min(self.peak_threshold);
        if s < 0.0 {
            -out
        } else {
            out
        }
    }
}

pub fn compress_peaks(audio: &AudioBuffer, config: &LimiterConfig) -> AudioBuffer {
    audio.with_samples(audio.samples().iter().map(|&s| config.shape(s)).collect())
}

/// Multiply each band's coefficients by its gain.
pub fn apply_gains(subbands: &SubbandSet, gains: &GainVector) -> Result<SubbandSet, EnhanceError> {
    if gains.len() != subbands.num_bands() {
        return Err(EnhanceError::GainCount {
            expected: subbands.num_bands(),
            got: gains.len(),
        });
    }
    let mut out = subbands.clone();
    for (i, &g) in gains.as_slice().iter().enumerate() {
        if g != 1.0 {
            out.band_mut(i).iter_mut().for_each(|c| *c *= g);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnhanceSettings {
    pub level: usize,
    pub mode: ExtensionMode,
    pub limiter: LimiterConfig,
}

impl Default for EnhanceSettings {
    fn default() -> Self {
        Self {
            level: STANDARD_LEVEL,
            mode: ExtensionMode::Periodic,
            limiter: LimiterConfig::default(),
        }
    }
}

/// Output of [`wavelet_enhance`] together with its processing record.
#[derive(Debug, Clone, PartialEq)]
pub struct Enhanced {
    pub audio: AudioBuffer,
    /// Factor applied after resynthesis to restore the input energy.
    pub normalization_factor: f64,
    /// Peak of the energy-normalized signal before limiting.
    pub pre_limiter_peak: f64,
    pub limiter_engaged: bool,
    /// `output energy / input energy − 1`; zero unless the limiter engaged.
    pub energy_deviation: f64,
}

/// Decompose, apply `gains`, resynthesize, restore the input energy, and
/// soft-limit the result if its peak reaches the threshold.
pub fn wavelet_enhance(
    audio: &AudioBuffer,
    gains: &GainVector,
    limiter: &LimiterConfig,
    level: usize,
) -> Result<Enhanced, EnhanceError> {
    wavelet_enhance_with(
        audio,
        gains,
        &EnhanceSettings {
            level,
            mode: ExtensionMode::Periodic,
            limiter: *limiter,
        },
    )
}

pub fn wavelet_enhance_with(
    audio: &AudioBuffer,
    gains: &GainVector,
    settings: &EnhanceSettings,
) -> Result<Enhanced, EnhanceError> {
    settings.limiter.validate()?;
    let bands = wavelet::wavedec(audio, settings.level, settings.mode)?;
    let modified = apply_gains(&bands, gains)?;
    let enhanced = wavelet::waverec(&modified)?;

    let input_energy = audio::energy(audio.samples());
    if input_energy == 0.0 {
        return Ok(Enhanced {
            audio: audio.clone(),
            normalization_factor: 1.0,
            pre_limiter_peak: 0.0,
            limiter_engaged: false,
            energy_deviation: 0.0,
        });
    }
    let enhanced_energy = audio::energy(enhanced.samples());
    if enhanced_energy == 0.0 {
        return Err(EnhanceError::DegenerateGains);
    }
    let factor = libm::sqrt(input_energy / enhanced_energy);
    let normalized = enhanced.scaled(factor);
    let peak = normalized
        .samples()
        .iter()
        .fold(0.0f64, |m, s| m.max(s.abs()));
    if peak < settings.limiter.peak_threshold {
        return Ok(Enhanced {
            audio: normalized,
            normalization_factor: factor,
            pre_limiter_peak: peak,
            limiter_engaged: false,
            energy_deviation: 0.0,
        });
    }
    let limited = compress_peaks(&normalized, &settings.limiter);
    let deviation = audio::energy(limited.samples()) / input_energy - 1.0;
    Ok(Enhanced {
        audio: limited,
        normalization_factor: factor,
        pre_limiter_peak: peak,
        limiter_engaged: true,
        energy_deviation: deviation,
    })
}
