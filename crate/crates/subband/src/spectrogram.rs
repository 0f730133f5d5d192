//! Magnitude spectrograms, exported as a graymap image and a text matrix.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use subband_core::AudioBuffer;
use thiserror::Error;

use crate::report::fmt_num;

pub const DEFAULT_FLOOR_DB: f64 = -80.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpectrogramError {
    #[error("frame length must be a power of two >= 2, got {0}")]
    BadFrame(usize),
    #[error("hop must be in 1..={frame}, got {hop}")]
    BadHop { frame: usize, hop: usize },
    #[error("empty audio buffer")]
    EmptyAudio,
}

/// Peak-normalized magnitudes; row `k` is frequency bin `k`, column `t` is frame `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frame_len: usize,
    pub hop: usize,
    pub sample_rate_hz: u32,
    pub bins: usize,
    pub frames: usize,
    data: Vec<f64>,
}

impl Spectrogram {
    pub fn get(&self, bin: usize, frame: usize) -> f64 {
        self.data[bin * self.frames + frame]
    }

    pub fn row(&self, bin: usize) -> &[f64] {
        &self.data[bin * self.frames..(bin + 1) * self.frames]
    }

    pub fn bin_hz(&self, bin: usize) -> f64 {
        bin as f64 * self.sample_rate_hz as f64 / self.frame_len as f64
    }

    /// Binary PGM (P5), 8-bit. Pixel value is `255·(dB − floor)/(−floor)`,
    /// clamped; the top image row is the highest frequency.
    pub fn to_pgm(&self, floor_db: f64) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.frames, self.bins).into_bytes();
        for bin in (0..self.bins).rev() {
            for &m in self.row(bin) {
                let db = if m > 0.0 { 20.0 * m.log10() } else { f64::NEG_INFINITY };
                let v = ((db - floor_db) / -floor_db).clamp(0.0, 1.0);
                out.push((v * 255.0).round() as u8);
            }
        }
        out
    }

    /// One line per frequency bin, frames separated by spaces.
    pub fn to_matrix_text(&self) -> String {
        let mut s = String::new();
        for bin in 0..self.bins {
            for (i, &m) in self.row(bin).iter().enumerate() {
                if i > 0 {
                    s.push(' ');
                }
                let _ = write!(s, "{}", fmt_num(m));
            }
            s.push('\n');
        }
        s
    }
}

/// Number of frames for `len` samples: the last frame is zero-padded, and a
/// signal shorter than one frame still yields one.
pub fn frame_count(len: usize, frame: usize, hop: usize) -> usize {
    if len <= frame {
        1
    } else {
        1 + (len - frame).div_ceil(hop)
    }
}

/// Periodic-Hann-windowed short-time magnitude spectrum, normalized so the
/// largest value is 1 (silence stays all zero).
pub fn spectrogram(audio: &AudioBuffer, frame: usize, hop: usize) -> Result<Spectrogram, SpectrogramError> {
    if frame < 2 || !frame.is_power_of_two() {
        return Err(SpectrogramError::BadFrame(frame));
    }
    if hop == 0 || hop > frame {
        return Err(SpectrogramError::BadHop { frame, hop });
    }
    if audio.is_empty() {
        return Err(SpectrogramError::EmptyAudio);
    }
    let x = audio.samples();
    let frames = frame_count(x.len(), frame, hop);
    let bins = frame / 2 + 1;
    let window: Vec<f64> = (0..frame)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / frame as f64).cos())
        .collect();
    let fft = FftPlanner::new().plan_fft_forward(frame);
    let mut data = vec![0.0; bins * frames];
    let mut buf = vec![Complex::new(0.0, 0.0); frame];
    for t in 0..frames {
        let start = t * hop;
        for (n, b) in buf.iter_mut().enumerate() {
            let s = x.get(start + n).copied().unwrap_or(0.0);
            *b = Complex::new(s * window[n], 0.0);
        }
        fft.process(&mut buf);
        for k in 0..bins {
            data[k * frames + t] = buf[k].norm();
        }
    }
    let peak = data.iter().copied().fold(0.0, f64::max);
    if peak > 0.0 {
        data.iter_mut().for_each(|v| *v /= peak);
    }
    Ok(Spectrogram {
        frame_len: frame,
        hop,
        sample_rate_hz: audio.sample_rate_hz(),
        bins,
        frames,
        data,
    })
}
