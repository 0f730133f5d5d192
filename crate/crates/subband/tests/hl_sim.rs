use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use subband::hl_sim::{
    band_energies, octave_bands, simulate_hearing_loss, Audiogram, RecruitmentConfig,
    DEFAULT_CALIBRATION_DB_SPL, OCTAVE_FREQUENCIES,
};
use subband::wav::read_wav;
use subband_core::AudioBuffer;

fn bundled_speech() -> AudioBuffer {
    read_wav(concat!(env!("CARGO_MANIFEST_DIR"), "/data/speech.wav")).unwrap()
}

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Shift of the (above 4 kHz) / (below 500 Hz) energy ratio, output vs input, in dB.
fn high_low_shift(input: &AudioBuffer, output: &AudioBuffer) -> f64 {
    let bands = [(0.0, 500.0), (4000.0, 1e9)];
    let a = band_energies(input, &bands);
    let b = band_energies(output, &bands);
    db(b[1] / b[0]) - db(a[1] / a[0])
}

#[test]
fn sloping_audiogram_attenuates_highs_against_lows() {
    let speech = bundled_speech();
    let out = simulate_hearing_loss(
        &speech,
        &Audiogram::sloping_moderate(),
        &RecruitmentConfig::default(),
        DEFAULT_CALIBRATION_DB_SPL,
    )
    .unwrap();
    let shift = high_low_shift(&speech, &out);
    assert!(shift <= -40.0, "high/low shift {shift} dB");
}

#[test]
fn attenuation_alone_gives_the_audiogram_difference() {
    // Without gating (huge calibration) or recruitment, the shift is set by
    // the 60 dB vs 30 dB losses alone.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x: Vec<f64> = (0..44_100).map(|_| rng.gen_range(-0.3..0.3)).collect();
    let noise = AudioBuffer::new(x, 44_100).unwrap();
    let flat = Audiogram::new(vec![(125.0, 30.0), (250.0, 30.0), (4000.0, 60.0), (8000.0, 60.0)]).unwrap();
    let out = simulate_hearing_loss(&noise, &flat, &RecruitmentConfig::disabled(), 400.0).unwrap();
    let shift = high_low_shift(&noise, &out);
    assert!((shift + 30.0).abs() < 1.5, "{shift}");
}

#[test]
fn zero_loss_identity() {
    let speech = bundled_speech();
    let out = simulate_hearing_loss(&speech, &Audiogram::normal(), &RecruitmentConfig::disabled(), 300.0).unwrap();
    let err = speech
        .samples()
        .iter()
        .zip(out.samples())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-3, "{err}");
}

#[test]
fn silence_stays_silent() {
    let a = AudioBuffer::silence(3000, 16_000).unwrap();
    let out = simulate_hearing_loss(&a, &Audiogram::sloping_moderate(), &RecruitmentConfig::default(), 100.0).unwrap();
    assert!(out.samples().iter().all(|&v| v == 0.0));
    assert_eq!(out.len(), a.len());
}

fn clip(speech: &AudioBuffer, offset: usize, len: usize) -> AudioBuffer {
    AudioBuffer::new(speech.samples()[offset..offset + len].to_vec(), speech.sample_rate_hz()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn more_loss_never_adds_band_energy(
        losses in prop::array::uniform7(0.0f64..70.0),
        offset in 0usize..150_000,
        recruit in any::<bool>(),
        calibration in 80.0f64..120.0,
    ) {
        let speech = bundled_speech();
        let x = clip(&speech, offset, 16_384);
        let a = Audiogram::octave(losses).unwrap();
        let b = a.shifted(10.0).unwrap();
        let r = if recruit { RecruitmentConfig::default() } else { RecruitmentConfig::disabled() };
        let ya = simulate_hearing_loss(&x, &a, &r, calibration).unwrap();
        let yb = simulate_hearing_loss(&x, &b, &r, calibration).unwrap();
        let bands = octave_bands(x.sample_rate_hz());
        let ea = band_energies(&ya, &bands);
        let eb = band_energies(&yb, &bands);
        for (i, (&pa, &pb)) in ea.iter().zip(&eb).enumerate() {
            prop_assert!(pb <= pa * (1.0 + 1e-9) + 1e-18,
                "band {} Hz: {} -> {}", OCTAVE_FREQUENCIES[i], pa, pb);
        }
    }
}

#[test]
fn components_below_the_shifted_threshold_are_removed() {
    // A 1 kHz tone at -60 dBFS sits at 40 dB SPL, under the 50 dB loss there.
    let x: Vec<f64> = (0..8192)
        .map(|i| 1e-3 * (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / 44_100.0).sin())
        .collect();
    let a = AudioBuffer::new(x, 44_100).unwrap();
    for r in [RecruitmentConfig::default(), RecruitmentConfig::disabled()] {
        let out = simulate_hearing_loss(&a, &Audiogram::sloping_moderate(), &r, DEFAULT_CALIBRATION_DB_SPL).unwrap();
        assert!(out.samples().iter().all(|&v| v == 0.0));
    }
    // The same tone survives without the loss.
    let out = simulate_hearing_loss(&a, &Audiogram::normal(), &RecruitmentConfig::disabled(), DEFAULT_CALIBRATION_DB_SPL).unwrap();
    assert!(out.samples().iter().any(|&v| v.abs() > 5e-4));
}
