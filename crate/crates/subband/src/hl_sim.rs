//! Hearing-loss simulator.
//!
//! Short-time Fourier processing (1024-point frames, hop 512, square-root
//! Hann analysis and synthesis windows, which overlap-add to unity). For every
//! frame and bin with calibrated input level `ℓ` (dB SPL), normal threshold
//! `T(f)` and audiogram loss `L(f)`:
//!
//! 1. bins with `ℓ < T(f) + L(f)` are removed (hard gating at the shifted
//!    threshold);
//! 2. the rest are attenuated by `L(f)`;
//! 3. with recruitment enabled, the attenuated level `a = ℓ − L` is expanded
//!    about the calibration ceiling `C`: `C + p·(a − C)` for `a < C`, with
//!    `p = min(1 + L/60, 2.5)`. Soft components fall off steeply while sounds
//!    near full scale are barely touched.
//!
//! Every step only ever lowers a bin, and lowers it more as `L` grows.
//! Calibration maps a full-scale sine to `calibration_db_spl` (default 100).
//! The output is not renormalized.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use subband_core::AudioBuffer;
use thiserror::Error;

pub const FRAME_LEN: usize = 1024;
pub const HOP: usize = 512;
pub const DEFAULT_CALIBRATION_DB_SPL: f64 = 100.0;

/// Audiometric test frequencies, Hz.
pub const OCTAVE_FREQUENCIES: [f64; 7] = [125.0, 250.0, 500.0, 1000.0, 2000.0, 4000.0, 8000.0];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HlError {
    #[error("audiogram is empty")]
    EmptyAudiogram,
    #[error("audiogram frequencies must be positive and strictly increasing (point {0})")]
    NotIncreasing(usize),
    #[error("audiogram loss at point {0} must be finite and non-negative")]
    BadLoss(usize),
    #[error("frequency {0} Hz is outside the supported range")]
    FrequencyOutOfRange(f64),
    #[error("empty audio buffer")]
    EmptyAudio,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("audiogram line {line}: {message}")]
pub struct AudiogramParseError {
    pub line: usize,
    pub message: String,
}

/// Hearing loss in dB at a set of frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct Audiogram {
    points: Vec<(f64, f64)>,
}

impl Audiogram {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, HlError> {
        if points.is_empty() {
            return Err(HlError::EmptyAudiogram);
        }
        for (i, &(f, loss)) in points.iter().enumerate() {
            if !(f > 0.0 && f.is_finite()) || (i > 0 && f <= points[i - 1].0) {
                return Err(HlError::NotIncreasing(i));
            }
            if !(loss >= 0.0 && loss.is_finite()) {
                return Err(HlError::BadLoss(i));
            }
        }
        Ok(Self { points })
    }

    /// Losses at [`OCTAVE_FREQUENCIES`].
    pub fn octave(losses_db: [f64; 7]) -> Result<Self, HlError> {
        Self::new(OCTAVE_FREQUENCIES.iter().copied().zip(losses_db).collect())
    }

    /// No loss anywhere.
    pub fn normal() -> Self {
        Self::octave([0.0; 7]).expect("valid")
    }

    /// Moderate high-frequency sloping loss:
    /// 30, 30, 40, 50, 60, 60, 60 dB at 125 … 8000 Hz.
    pub fn sloping_moderate() -> Self {
        Self::octave([30.0, 30.0, 40.0, 50.0, 60.0, 60.0, 60.0]).expect("valid")
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Every loss raised by `db`.
    pub fn shifted(&self, db: f64) -> Result<Self, HlError> {
        Self::new(self.points.iter().map(|&(f, l)| (f, l + db)).collect())
    }

    /// Linear in dB over log-frequency, flat beyond the end points.
    pub fn loss_at(&self, frequency_hz: f64) -> f64 {
        let pts = &self.points;
        let (first, last) = (pts[0], pts[pts.len() - 1]);
        if frequency_hz <= first.0 {
            return first.1;
        }
        if frequency_hz >= last.0 {
            return last.1;
        }
        let i = pts.partition_point(|&(f, _)| f <= frequency_hz);
        let (f0, l0) = pts[i - 1];
        let (f1, l1) = pts[i];
        let t = (frequency_hz / f0).ln() / (f1 / f0).ln();
        l0 + t * (l1 - l0)
    }

    /// One `frequency_hz loss_db` pair per line; blank lines and `#` comments ignored.
    pub fn parse(text: &str) -> Result<Self, AudiogramParseError> {
        let mut points: Vec<(f64, f64)> = Vec::new();
        let mut last_line = 0;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            last_line = line;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| AudiogramParseError { line, message };
            let fields: Vec<&str> = content.split_whitespace().collect();
            if fields.len() != 2 {
                return Err(err(format!(
                    "expected 'frequency_hz loss_db', found {} field(s)",
                    fields.len()
                )));
            }
            let f: f64 = fields[0]
                .parse()
                .map_err(|_| err(format!("bad frequency '{}'", fields[0])))?;
            let l: f64 = fields[1]
                .parse()
                .map_err(|_| err(format!("bad loss '{}'", fields[1])))?;
            if !(f > 0.0 && f.is_finite()) {
                return Err(err(format!("frequency must be positive, got {f}")));
            }
            if !(l >= 0.0 && l.is_finite()) {
                return Err(err(format!("loss must be non-negative, got {l}")));
            }
            if let Some(&(prev, _)) = points.last() {
                if f <= prev {
                    return Err(err(format!(
                        "frequency {f} Hz is not above the previous {prev} Hz"
                    )));
                }
            }
            points.push((f, l));
        }
        if points.is_empty() {
            return Err(AudiogramParseError {
                line: last_line,
                message: "no audiogram points".into(),
            });
        }
        Ok(Self { points })
    }
}

impl fmt::Display for Audiogram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (freq, loss) in &self.points {
            writeln!(f, "{freq} {loss}")?;
        }
        Ok(())
    }
}

pub fn interpolate_loss(audiogram: &Audiogram, frequency_hz: f64) -> Result<f64, HlError> {
    if !(frequency_hz > 0.0 && frequency_hz.is_finite()) {
        return Err(HlError::FrequencyOutOfRange(frequency_hz));
    }
    Ok(audiogram.loss_at(frequency_hz))
}

/// Threshold in quiet, dB SPL, for 20 Hz ≤ f ≤ 20 kHz:
/// `3.64·f^−0.8 − 6.5·exp(−0.6·(f − 3.3)²) + 10⁻³·f⁴` with `f` in kHz.
pub fn absolute_threshold(frequency_hz: f64) -> Result<f64, HlError> {
    if !(20.0..=20_000.0).contains(&frequency_hz) {
        return Err(HlError::FrequencyOutOfRange(frequency_hz));
    }
    Ok(threshold_curve(frequency_hz))
}

fn threshold_curve(frequency_hz: f64) -> f64 {
    let f = frequency_hz / 1000.0;
    3.64 * f.powf(-0.8) - 6.5 * (-0.6 * (f - 3.3).powi(2)).exp() + 1e-3 * f.powi(4)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecruitmentConfig {
    pub enabled: bool,
    /// Loss (dB) that adds one to the expansion exponent.
    pub db_per_unit: f64,
    pub max_exponent: f64,
}

impl Default for RecruitmentConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            db_per_unit: 60.0,
            max_exponent: 2.5,
        }
    }
}

impl RecruitmentConfig {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::default()
        }
    }

    /// `min(1 + loss/60, 2.5)`; exactly 1 at zero loss.
    pub fn exponent(&self, loss_db: f64) -> f64 {
        (1.0 + loss_db / self.db_per_unit).min(self.max_exponent)
    }
}

struct Stft {
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Stft {
    fn new() -> Self {
        let mut planner = FftPlanner::new();
        Self {
            // sqrt of the periodic Hann window; w² at hop N/2 sums to one.
            window: (0..FRAME_LEN)
                .map(|n| (PI * n as f64 / FRAME_LEN as f64).sin())
                .collect(),
            forward: planner.plan_fft_forward(FRAME_LEN),
            inverse: planner.plan_fft_inverse(FRAME_LEN),
        }
    }

    /// Zero-padded input such that every sample is covered by two frames.
    fn padded(samples: &[f64]) -> (Vec<f64>, usize) {
        let lead = FRAME_LEN - HOP;
        let frames = (samples.len() + HOP - 1) / HOP + 1;
        let mut padded = vec![0.0; (frames - 1) * HOP + FRAME_LEN];
        padded[lead..lead + samples.len()].copy_from_slice(samples);
        (padded, frames)
    }

    fn analyze(&self, frame: &[f64], buf: &mut [Complex<f64>]) {
        for ((b, &x), &w) in buf.iter_mut().zip(frame).zip(&self.window) {
            *b = Complex::new(x * w, 0.0);
        }
        self.forward.process(buf);
    }
}

/// Frequency of bin `k` for a `FRAME_LEN`-point transform.
fn bin_hz(k: usize, sample_rate_hz: u32) -> f64 {
    k as f64 * sample_rate_hz as f64 / FRAME_LEN as f64
}

pub fn simulate_hearing_loss(
    audio: &AudioBuffer,
    audiogram: &Audiogram,
    recruitment: &RecruitmentConfig,
    calibration_db_spl: f64,
) -> Result<AudioBuffer, HlError> {
    if audio.is_empty() {
        return Err(HlError::EmptyAudio);
    }
    let stft = Stft::new();
    let half = FRAME_LEN / 2;
    let fs = audio.sample_rate_hz();

    // Per-bin parameters.
    let mut loss = Vec::with_capacity(half + 1);
    let mut threshold = Vec::with_capacity(half + 1);
    let mut exponent = Vec::with_capacity(half + 1);
    for k in 0..=half {
        let f = bin_hz(k, fs);
        let l = audiogram.loss_at(f.max(1.0));
        loss.push(l);
        threshold.push(threshold_curve(f.clamp(20.0, 20_000.0)));
        exponent.push(if recruitment.enabled {
            recruitment.exponent(l)
        } else {
            1.0
        });
    }
    // Magnitude of a full-scale sine's peak bin.
    let window_sum: f64 = stft.window.iter().sum();
    let full_scale_bin = window_sum / 2.0;

    let (padded, frames) = Stft::padded(audio.samples());
    let mut out = vec![0.0; padded.len()];
    let mut buf = vec![Complex::new(0.0, 0.0); FRAME_LEN];
    let mut gains = vec![0.0; half + 1];
    for t in 0..frames {
        let start = t * HOP;
        stft.analyze(&padded[start..start + FRAME_LEN], &mut buf);
        for k in 0..=half {
            let mag = buf[k].norm();
            gains[k] = if mag == 0.0 {
                0.0
            } else {
                let level = calibration_db_spl + 20.0 * (mag / full_scale_bin).log10();
                if level < threshold[k] + loss[k] {
                    0.0
                } else {
                    let attenuated = level - loss[k];
                    let shaped = if attenuated < calibration_db_spl {
                        calibration_db_spl + exponent[k] * (attenuated - calibration_db_spl)
                    } else {
                        attenuated
                    };
                    10f64.powf((shaped - level) / 20.0)
                }
            };
        }
        for k in 0..=half {
            buf[k] *= gains[k];
            if k != 0 && k != half {
                buf[FRAME_LEN - k] *= gains[k];
            }
        }
        stft.inverse.process(&mut buf);
        let scale = 1.0 / FRAME_LEN as f64;
        for (n, (o, b)) in out[start..start + FRAME_LEN].iter_mut().zip(&buf).enumerate() {
            *o += b.re * scale * stft.window[n];
        }
    }
    let lead = FRAME_LEN - HOP;
    let samples = out[lead..lead + audio.len()].to_vec();
    Ok(AudioBuffer::new(samples, fs).expect("finite by construction"))
}

/// Energy in each `[lo, hi)` Hz band from a single whole-signal periodogram
/// with a Hann taper (the band energies sum to the energy of the tapered
/// signal). One long, tapered transform keeps leakage from strong
/// low-frequency content and from the signal edges far below the weak high
/// bands.
pub fn band_energies(audio: &AudioBuffer, bands_hz: &[(f64, f64)]) -> Vec<f64> {
    let n = audio.len();
    let mut energies = vec![0.0; bands_hz.len()];
    if n == 0 {
        return energies;
    }
    let mut buf: Vec<Complex<f64>> = audio
        .samples()
        .iter()
        .zip(whole_signal_taper(n))
        .map(|(&x, w)| Complex::new(x * w, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let fs = audio.sample_rate_hz() as f64;
    for (k, c) in buf.iter().enumerate().take(n / 2 + 1) {
        let f = k as f64 * fs / n as f64;
        // One-sided: count the mirrored bin too, except DC and Nyquist.
        let weight = if k == 0 || 2 * k == n { 1.0 } else { 2.0 };
        let e = weight * c.norm_sqr() / n as f64;
        for (acc, &(lo, hi)) in energies.iter_mut().zip(bands_hz) {
            if f >= lo && f < hi {
                *acc += e;
            }
        }
    }
    energies
}

/// Symmetric Hann window over `n` samples (all ones for `n < 3`).
pub fn whole_signal_taper(n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| {
        if n < 3 {
            1.0
        } else {
            0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos()
        }
    })
}

/// Octave bands centred on [`OCTAVE_FREQUENCIES`], edges at the geometric
/// midpoints (outermost edges at 0 Hz and Nyquist).
pub fn octave_bands(sample_rate_hz: u32) -> Vec<(f64, f64)> {
    let nyquist = sample_rate_hz as f64 / 2.0 + 1.0;
    let c = OCTAVE_FREQUENCIES;
    (0..c.len())
        .map(|i| {
            let lo = if i == 0 { 0.0 } else { (c[i - 1] * c[i]).sqrt() };
            let hi = if i + 1 == c.len() {
                nyquist
            } else {
                (c[i] * c[i + 1]).sqrt()
            };
            (lo, hi)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn interpolation_examples() {
        let a = Audiogram::sloping_moderate();
        assert_eq!(interpolate_loss(&a, 1000.0).unwrap(), 50.0);
        assert_eq!(interpolate_loss(&a, 16_000.0).unwrap(), 60.0);
        assert_eq!(interpolate_loss(&a, 50.0).unwrap(), 30.0);
        let mid = (500.0f64 * 1000.0).sqrt();
        assert!((interpolate_loss(&a, mid).unwrap() - 45.0).abs() < 1e-9);
        assert!(interpolate_loss(&a, 0.0).is_err());
    }

    #[test]
    fn audiogram_validation() {
        assert_eq!(Audiogram::new(vec![]), Err(HlError::EmptyAudiogram));
        assert_eq!(
            Audiogram::new(vec![(500.0, 10.0), (250.0, 10.0)]),
            Err(HlError::NotIncreasing(1))
        );
        assert_eq!(Audiogram::new(vec![(500.0, -1.0)]), Err(HlError::BadLoss(0)));
    }

    #[test]
    fn parse_reports_line_numbers() {
        let ok = Audiogram::parse("# f loss\n125 30\n\n250 30  # low\n500 40\n").unwrap();
        assert_eq!(ok.points(), &[(125.0, 30.0), (250.0, 30.0), (500.0, 40.0)]);

        let err = Audiogram::parse("125 30\n500 40\n250 35\n").unwrap_err();
        assert_eq!(err.line, 3);
        let err = Audiogram::parse("125 30\n500 forty\n").unwrap_err();
        assert_eq!(err.line, 2);
        let err = Audiogram::parse("125 30 7\n").unwrap_err();
        assert_eq!(err.line, 1);
        assert!(Audiogram::parse("\n\n").is_err());
        let text = Audiogram::sloping_moderate().to_string();
        assert_eq!(Audiogram::parse(&text).unwrap(), Audiogram::sloping_moderate());
    }

    #[test]
    fn threshold_shape() {
        // Grid scan for the minimum.
        let mut best = (0.0, f64::INFINITY);
        let mut f = 20.0;
        while f <= 20_000.0 {
            let t = absolute_threshold(f).unwrap();
            if t < best.1 {
                best = (f, t);
            }
            f += 5.0;
        }
        assert!((2000.0..=5000.0).contains(&best.0), "minimum at {}", best.0);
        assert!(absolute_threshold(100.0).unwrap() > absolute_threshold(1000.0).unwrap());
        let mut prev = absolute_threshold(6000.0).unwrap();
        let mut f = 6010.0;
        while f <= 20_000.0 {
            let t = absolute_threshold(f).unwrap();
            assert!(t > prev, "not increasing at {f}");
            prev = t;
            f += 10.0;
        }
        assert!(absolute_threshold(19.0).is_err());
        assert!(absolute_threshold(20_001.0).is_err());
    }

    #[test]
    fn recruitment_exponent() {
        let r = RecruitmentConfig::default();
        assert_eq!(r.exponent(0.0), 1.0);
        assert_eq!(r.exponent(60.0), 2.0);
        assert_eq!(r.exponent(120.0), 2.5);
        let mut prev = 1.0;
        for i in 0..200 {
            let e = r.exponent(i as f64);
            assert!(e >= prev);
            prev = e;
        }
    }

    #[test]
    fn identity_configuration() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..10_000).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let a = AudioBuffer::new(x, 44_100).unwrap();
        let y = simulate_hearing_loss(&a, &Audiogram::normal(), &RecruitmentConfig::disabled(), 300.0)
            .unwrap();
        let err = a
            .samples()
            .iter()
            .zip(y.samples())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-3, "{err}");
    }

    #[test]
    fn band_energies_sum_to_tapered_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..1001).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = AudioBuffer::new(x, 8000).unwrap();
        let total: f64 = band_energies(&a, &[(0.0, 1e9)]).iter().sum();
        let direct: f64 = a
            .samples()
            .iter()
            .zip(whole_signal_taper(a.len()))
            .map(|(v, w)| (v * w).powi(2))
            .sum();
        assert!((total - direct).abs() < 1e-9 * direct);
    }

    #[test]
    fn octave_band_edges() {
        let b = octave_bands(44_100);
        assert_eq!(b.len(), 7);
        assert_eq!(b[0].0, 0.0);
        assert!((b[3].0 - (500.0f64 * 1000.0).sqrt()).abs() < 1e-9);
        assert!(b[6].1 > 22_050.0);
    }
}
