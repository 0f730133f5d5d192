//! Regenerates the bundled test audio in `crates/subband/data/`:
//!
//! - `speech.wav`: 5 s of synthetic voiced/unvoiced speech-like signal
//!   (glottal pulse train through time-varying formant resonators, with
//!   fricative noise bursts), 44.1 kHz mono 16-bit.
//! - `babble.wav`: 5 s of babble-like interference, six overlapping
//!   independent synthetic talkers.
//! - `speech.txt`: the reference transcript used with the synthetic
//!   transcriber.
//!
//! Output is fully deterministic (fixed seeds).
//!
//! ```text
//! cargo run -p subband --example make_test_audio [out_dir]
//! ```

use std::f64::consts::PI;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subband::wav::write_wav;
use subband_core::audio::normalize_rms;
use subband_core::AudioBuffer;

const FS: f64 = 44_100.0;
const SECONDS: f64 = 5.0;

const TRANSCRIPT: &str = "The birch canoe slid on the smooth planks. \
Glue the sheet to the dark blue background. \
It's easy to tell the depth of a well.";

/// (F1, F2, F3) in Hz for a handful of vowels.
const VOWELS: [(f64, f64, f64); 6] = [
    (850.0, 1220.0, 2810.0),
    (310.0, 2790.0, 3310.0),
    (610.0, 1900.0, 2950.0),
    (590.0, 920.0, 2710.0),
    (370.0, 950.0, 2670.0),
    (500.0, 1500.0, 2500.0),
];

/// Two-pole resonator.
struct Resonator {
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn step(&mut self, x: f64, freq: f64, bandwidth: f64) -> f64 {
        let r = (-PI * bandwidth / FS).exp();
        let a1 = 2.0 * r * (2.0 * PI * freq / FS).cos();
        let a2 = -r * r;
        let gain = 1.0 - r;
        let y = gain * x + a1 * self.y1 + a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

fn talker(seed: u64, f0_base: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (FS * SECONDS) as usize;
    let mut out = vec![0.0; n];

    // Syllable plan: (start, length, vowel, fricative onset, pitch offset).
    let mut syllables = Vec::new();
    let mut t = rng.gen_range(0.02..0.15);
    while t < SECONDS - 0.1 {
        let len = rng.gen_range(0.12..0.28);
        syllables.push((
            t,
            len,
            rng.gen_range(0..VOWELS.len()),
            rng.gen_bool(0.45),
            rng.gen_range(-0.15..0.15),
        ));
        t += len + rng.gen_range(0.03..0.12);
    }

    let mut formants = [
        Resonator { y1: 0.0, y2: 0.0 },
        Resonator { y1: 0.0, y2: 0.0 },
        Resonator { y1: 0.0, y2: 0.0 },
    ];
    let mut fric = [Resonator { y1: 0.0, y2: 0.0 }, Resonator { y1: 0.0, y2: 0.0 }];
    let mut phase = 0.0;
    let mut prev_noise = 0.0;
    let mut current = 0;
    for (i, o) in out.iter_mut().enumerate() {
        let time = i as f64 / FS;
        while current + 1 < syllables.len() && time >= syllables[current + 1].0 {
            current += 1;
        }
        let (start, len, vowel, fricative, pitch) = syllables[current];
        let local = time - start;
        if local < 0.0 || local > len + 0.06 {
            // Let the resonators ring down in the gap.
            for (r, &(f, bw)) in formants.iter_mut().zip(&[(500.0, 80.0), (1500.0, 100.0), (2500.0, 120.0)]) {
                r.step(0.0, f, bw);
            }
            continue;
        }
        let progress = (local / len).min(1.0);
        let envelope = (PI * progress).sin().powf(0.6);

        // Glottal source: falling intonation across the syllable.
        let f0 = f0_base * (1.0 + pitch) * (1.1 - 0.2 * progress);
        phase += f0 / FS;
        let voiced = if phase >= 1.0 {
            phase -= 1.0;
            1.0
        } else {
            0.0
        };
        let (f1, f2, f3) = VOWELS[vowel];
        let next = VOWELS[(vowel + 1) % VOWELS.len()];
        let glide = 0.3 * progress;
        let v = formants[0].step(voiced, f1 + glide * (next.0 - f1), 90.0)
            + 0.7 * formants[1].step(voiced, f2 + glide * (next.1 - f2), 110.0)
            + 0.4 * formants[2].step(voiced, f3 + glide * (next.2 - f3), 150.0);

        // Fricative onset: high-passed noise shaped by two resonances.
        let mut s = 40.0 * envelope * v;
        if fricative && local < 0.09 {
            let white: f64 = rng.gen_range(-1.0..1.0);
            let hp = white - prev_noise;
            prev_noise = white;
            let burst = (1.0 - local / 0.09).powi(2);
            s += 0.6 * burst * (fric[0].step(hp, 4500.0, 1500.0) + fric[1].step(hp, 7500.0, 2500.0));
        }
        *o = s;
    }
    out
}

fn buffer(samples: Vec<f64>, target_rms: f64) -> AudioBuffer {
    let a = AudioBuffer::new(samples, FS as u32).expect("finite");
    normalize_rms(&a, target_rms).expect("non-silent")
}

fn main() {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data"));
    std::fs::create_dir_all(&dir).expect("create output directory");

    let speech = buffer(talker(7, 210.0), 0.08);
    write_wav(dir.join("speech.wav"), &speech).expect("write speech");

    let mut babble = vec![0.0; speech.len()];
    for (k, f0) in [120.0, 230.0, 105.0, 190.0, 140.0, 250.0].into_iter().enumerate() {
        for (b, s) in babble.iter_mut().zip(talker(100 + k as u64, f0)) {
            *b += s;
        }
    }
    let babble = buffer(babble, 0.08);
    write_wav(dir.join("babble.wav"), &babble).expect("write babble");

    std::fs::write(dir.join("speech.txt"), format!("{TRANSCRIPT}\n")).expect("write transcript");
    println!("wrote speech.wav, babble.wav, speech.txt to {}", dir.display());
}
