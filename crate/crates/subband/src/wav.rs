//! RIFF/WAVE input and output.
//!
//! Reads PCM integer (8/16/24/32-bit) and IEEE float 32-bit files, averaging
//! all channels to mono. Integer samples are divided by the positive full
//! scale of their type (`2^(bits−1) − 1`) and clamped to `[−1, 1]`, which is
//! the exact inverse of the symmetric 16-bit quantizer used on write.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};
use subband_core::AudioBuffer;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WavError {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not a PCM WAV file ({detail})")]
    NotPcm { path: PathBuf, detail: String },
    #[error("{path}: zero frames")]
    ZeroFrames { path: PathBuf },
    #[error("{path}: unsupported sample format ({detail})")]
    Unsupported { path: PathBuf, detail: String },
    #[error("cannot write {path}: {detail}")]
    Unwritable { path: PathBuf, detail: String },
    #[error("{path}: invalid audio: {detail}")]
    InvalidAudio { path: PathBuf, detail: String },
}

/// Looks for the `fmt ` chunk and returns its format tag, if the file is a RIFF/WAVE.
fn sniff_format_tag(path: &Path) -> Option<u16> {
    let mut bytes = Vec::new();
    File::open(path).ok()?.take(4096).read_to_end(&mut bytes).ok()?;
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return None;
    }
    let mut pos = 12;
    while pos + 10 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32::from_le_bytes(bytes[pos + 4..pos + 8].try_into().ok()?) as usize;
        if id == b"fmt " {
            return Some(u16::from_le_bytes([bytes[pos + 8], bytes[pos + 9]]));
        }
        pos += 8 + size + (size & 1);
    }
    None
}

fn classify(path: &Path, err: hound::Error) -> WavError {
    let path_buf = path.to_path_buf();
    match err {
        hound::Error::IoError(source) => WavError::Unreadable {
            path: path_buf,
            source,
        },
        other => match sniff_format_tag(path) {
            // PCM, IEEE float, or extensible: the codec is fine, the layout is not.
            Some(1) | Some(3) | Some(0xFFFE) => WavError::Unsupported {
                path: path_buf,
                detail: other.to_string(),
            },
            Some(tag) => WavError::NotPcm {
                path: path_buf,
                detail: format!("format tag 0x{tag:04x}"),
            },
            None => WavError::NotPcm {
                path: path_buf,
                detail: other.to_string(),
            },
        },
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer, WavError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| WavError::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = WavReader::new(BufReader::new(file)).map_err(|e| classify(path, e))?;
    let spec = reader.spec();
    if reader.duration() == 0 {
        return Err(WavError::ZeroFrames {
            path: path.to_path_buf(),
        });
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(|e| classify(path, e))?,
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let full_scale = ((1i64 << (bits - 1)) - 1) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| (v as f64 / full_scale).clamp(-1.0, 1.0)))
                .collect::<Result<_, _>>()
                .map_err(|e| classify(path, e))?
        }
        (fmt, bits) => {
            return Err(WavError::Unsupported {
                path: path.to_path_buf(),
                detail: format!("{bits}-bit {fmt:?}"),
            })
        }
    };
    let channels = spec.channels.max(1) as usize;
    let mono: Vec<f64> = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    if mono.is_empty() {
        return Err(WavError::ZeroFrames {
            path: path.to_path_buf(),
        });
    }
    AudioBuffer::new(mono, spec.sample_rate).map_err(|e| WavError::InvalidAudio {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

/// Symmetric 16-bit quantizer: clip to `[−1, 1]`, scale by 32767, round.
pub fn quantize_i16(sample: f64) -> i16 {
    (sample.clamp(-1.0, 1.0) * 32767.0).round() as i16
}

/// Write 16-bit PCM mono.
pub fn write_wav(path: impl AsRef<Path>, audio: &AudioBuffer) -> Result<(), WavError> {
    let path = path.as_ref();
    let unwritable = |detail: String| WavError::Unwritable {
        path: path.to_path_buf(),
        detail,
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate_hz(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| unwritable(e.to_string()))?;
    for &s in audio.samples() {
        writer
            .write_sample(quantize_i16(s))
            .map_err(|e| unwritable(e.to_string()))?;
    }
    writer.finalize().map_err(|e| unwritable(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_raw(path: &Path, spec: WavSpec, samples: &[i32]) {
        let mut w = WavWriter::create(path, spec).unwrap();
        for &s in samples {
            match spec.bits_per_sample {
                8 => w.write_sample(s as i8).unwrap(),
                16 => w.write_sample(s as i16).unwrap(),
                _ => w.write_sample(s).unwrap(),
            }
        }
        w.finalize().unwrap();
    }

    fn spec(channels: u16, bits: u16) -> WavSpec {
        WavSpec {
            channels,
            sample_rate: 44_100,
            bits_per_sample: bits,
            sample_format: SampleFormat::Int,
        }
    }

    #[test]
    fn sixteen_bit_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        write_raw(&p, spec(1, 16), &[0, 16384, -16384]);
        let a = read_wav(&p).unwrap();
        let want = [0.0, 0.5, -0.5];
        for (x, w) in a.samples().iter().zip(want) {
            assert!((x - w).abs() < 1e-4);
        }
    }

    #[test]
    fn stereo_is_averaged() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.wav");
        write_raw(&p, spec(2, 16), &[32767, 0, 32767, 0]);
        let a = read_wav(&p).unwrap();
        assert_eq!(a.samples(), &[0.5, 0.5]);
    }

    #[test]
    fn other_integer_widths() {
        let dir = tempfile::tempdir().unwrap();
        for (bits, full) in [(8u16, 127i32), (24, 8_388_607), (32, i32::MAX)] {
            let p = dir.path().join(format!("w{bits}.wav"));
            write_raw(&p, spec(1, bits), &[full, -full, 0]);
            let a = read_wav(&p).unwrap();
            assert_eq!(a.samples(), &[1.0, -1.0, 0.0], "{bits}-bit");
        }
    }

    #[test]
    fn float_input() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.wav");
        let spec = WavSpec {
            channels: 1,
            sample_rate: 16_000,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mut w = WavWriter::create(&p, spec).unwrap();
        for s in [0.25f32, -0.75] {
            w.write_sample(s).unwrap();
        }
        w.finalize().unwrap();
        let a = read_wav(&p).unwrap();
        assert_eq!(a.samples(), &[0.25, -0.75]);
        assert_eq!(a.sample_rate_hz(), 16_000);
    }

    #[test]
    fn zero_frames() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.wav");
        write_raw(&p, spec(1, 16), &[]);
        let err = read_wav(&p).unwrap_err();
        assert!(matches!(err, WavError::ZeroFrames { .. }));
        assert!(err.to_string().contains("zero frames"));
    }

    #[test]
    fn missing_and_non_pcm() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("nope.wav");
        let err = read_wav(&missing).unwrap_err();
        assert!(matches!(err, WavError::Unreadable { .. }));
        assert!(err.to_string().contains("nope.wav"));

        // A-law (tag 6) header with a few data bytes.
        let p = dir.path().join("alaw.wav");
        let mut b = Vec::new();
        b.extend_from_slice(b"RIFF");
        b.extend_from_slice(&(36u32 + 4).to_le_bytes());
        b.extend_from_slice(b"WAVEfmt ");
        b.extend_from_slice(&16u32.to_le_bytes());
        b.extend_from_slice(&6u16.to_le_bytes());
        b.extend_from_slice(&1u16.to_le_bytes());
        b.extend_from_slice(&8000u32.to_le_bytes());
        b.extend_from_slice(&8000u32.to_le_bytes());
        b.extend_from_slice(&1u16.to_le_bytes());
        b.extend_from_slice(&8u16.to_le_bytes());
        b.extend_from_slice(b"data");
        b.extend_from_slice(&4u32.to_le_bytes());
        b.extend_from_slice(&[1, 2, 3, 4]);
        std::fs::write(&p, b).unwrap();
        assert!(matches!(read_wav(&p).unwrap_err(), WavError::NotPcm { .. }));

        let junk = dir.path().join("junk.wav");
        std::fs::write(&junk, b"hello").unwrap();
        assert!(matches!(read_wav(&junk).unwrap_err(), WavError::NotPcm { .. }));
    }

    #[test]
    fn write_clips_and_quantizes_symmetrically() {
        assert_eq!(quantize_i16(1.5), 32767);
        assert_eq!(quantize_i16(-1.0), -32767);
        assert_eq!(quantize_i16(-7.0), -32767);
        assert_eq!(quantize_i16(0.0), 0);

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("o.wav");
        let a = AudioBuffer::new(vec![1.5, -1.0, 0.25], 22_050).unwrap();
        write_wav(&p, &a).unwrap();
        let r = WavReader::open(&p).unwrap();
        assert_eq!(r.spec().channels, 1);
        assert_eq!(r.spec().bits_per_sample, 16);
        let raw: Vec<i16> = r.into_samples::<i16>().map(Result::unwrap).collect();
        assert_eq!(raw, vec![32767, -32767, 8192]);

        let bad = dir.path().join("no/such/dir/o.wav");
        assert!(matches!(write_wav(&bad, &a), Err(WavError::Unwritable { .. })));
    }
}
