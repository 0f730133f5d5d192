//! sym12 filter bank and the multi-level discrete wavelet transform.
//!
//! Decomposition is a Mallat pyramid: at every level the approximation branch
//! is low-pass filtered, high-pass filtered and decimated by two, and only the
//! approximation is split further. Reconstruction is the transpose of the
//! analysis, which for an orthogonal wavelet is its inverse.
//!
//! # Phase conventions
//!
//! With `h` = `dec_lo`, `g` = `dec_hi` (filter origin at index 0):
//!
//! * [`ExtensionMode::Periodic`]: `cA[i] = Σ_k h[k] · x[(2i − k) mod N']`,
//!   i.e. the even-indexed outputs of the circular convolution. `N'` is the
//!   input length rounded up to even by appending one zero sample, so the
//!   transform stays orthogonal and energy is conserved exactly. Output
//!   length is `ceil(N / 2)`.
//! * [`ExtensionMode::Symmetric`]: `cA[i] = Σ_k h[k] · x̃[2i + 1 − k]` where
//!   `x̃` is the half-sample symmetric extension of `x`. Output length is
//!   `floor((N + 23) / 2)`. This phase (odd-indexed outputs of the full
//!   convolution) is the one for which the truncated synthesis is exact.
//!
//! An impulse at index 0 in periodic mode therefore yields
//! `cA = [h[0], h[2], …, h[22], 0, …]`.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::audio::{self, AudioBuffer};

pub const FILTER_LEN: usize = 24;
pub const MAX_LEVEL: usize = 8;

/// Decomposition low-pass of the order-12 symlet.
const SYM12_DEC_LO: [f64; FILTER_LEN] = [
    0.00011196719424656033,
    -1.1353928041541452e-05,
    -0.0013497557555715387,
    0.00018021409008538188,
    0.007414965517654251,
    -0.0014089092443297553,
    -0.024220722675013445,
    0.0075537806116804775,
    0.04917931829966084,
    -0.03584883073695439,
    -0.022162306170337816,
    0.39888597239022,
    0.7634790977836572,
    0.46274103121927235,
    -0.07833262231634322,
    -0.17037069723886492,
    0.01530174062247884,
    0.05780417944550566,
    -0.0026043910313322326,
    -0.014589836449234145,
    0.00030764779631059454,
    0.002350297614183465,
    -1.8158078862617515e-05,
    -0.0001790665869750869,
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WaveletError {
    #[error("empty signal")]
    EmptySignal,
    #[error("decomposition level must be in 1..={MAX_LEVEL}, got {0}")]
    BadLevel(usize),
    #[error("signal of {len} samples is too short for a level-{level} decomposition (need at least {need})")]
    TooShort { len: usize, level: usize, need: usize },
    #[error("coefficient lengths {ca}/{cd} do not match target length {target} (expected {expected})")]
    InconsistentLengths {
        ca: usize,
        cd: usize,
        target: usize,
        expected: usize,
    },
    #[error("sub-band set is corrupted: {0}")]
    CorruptedBands(&'static str),
}

/// Boundary handling for the finite-length filter bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ExtensionMode {
    /// Circular extension ("periodization"). Orthogonal, exactly halving.
    #[default]
    Periodic,
    /// Half-sample symmetric extension.
    Symmetric,
}

impl ExtensionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ExtensionMode::Periodic => "periodic",
            ExtensionMode::Symmetric => "symmetric",
        }
    }

    /// Length of each coefficient array produced from an input of `len` samples.
    pub fn coeff_len(self, len: usize) -> usize {
        match self {
            ExtensionMode::Periodic => len.div_ceil(2),
            ExtensionMode::Symmetric => (len + FILTER_LEN - 1) / 2,
        }
    }
}

/// Analysis and synthesis filters of an orthogonal two-channel filter bank.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterQuad {
    pub dec_lo: [f64; FILTER_LEN],
    pub dec_hi: [f64; FILTER_LEN],
    pub rec_lo: [f64; FILTER_LEN],
    pub rec_hi: [f64; FILTER_LEN],
}

impl FilterQuad {
    /// Derive the full quad from an orthogonal low-pass: `dec_hi[n] = (−1)ⁿ dec_lo[L−1−n]`,
    /// and the reconstruction filters are time reverses of the decomposition ones.
    pub fn from_lowpass(dec_lo: [f64; FILTER_LEN]) -> Self {
        let mut dec_hi = [0.0; FILTER_LEN];
        let mut rec_lo = [0.0; FILTER_LEN];
        for n in 0..FILTER_LEN {
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            dec_hi[n] = sign * dec_lo[FILTER_LEN - 1 - n];
            rec_lo[n] = dec_lo[FILTER_LEN - 1 - n];
        }
        let mut rec_hi = [0.0; FILTER_LEN];
        for n in 0..FILTER_LEN {
            rec_hi[n] = dec_hi[FILTER_LEN - 1 - n];
        }
        Self {
            dec_lo,
            dec_hi,
            rec_lo,
            rec_hi,
        }
    }
}

pub fn sym12_filters() -> FilterQuad {
    FilterQuad::from_lowpass(SYM12_DEC_LO)
}

/// Index `j` (which may be negative or beyond the end) mapped into `0..n`.
fn reflect(j: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let j = j.rem_euclid(period) as usize;
    if j < n {
        j
    } else {
        2 * n - 1 - j
    }
}

/// Input with `FILTER_LEN - 1` samples of half-sample symmetric extension on
/// each side.
fn extend_symmetric(signal: &[f64]) -> Vec<f64> {
    let pad = (FILTER_LEN - 1) as isize;
    let n = signal.len();
    (-pad..n as isize + pad).map(|j| signal[reflect(j, n)]).collect()
}

/// Low- and high-pass outputs for one window. The taps run reversed:
/// `window[j] == x[newest − (pad − j)]`, so `Σ_k dec[k]·x[newest−k]` is
/// `Σ_j rec[j]·window[j]` with `rec[j] = dec[pad − j]`.
#[inline(always)]
fn analysis_taps(window: &[f64; FILTER_LEN], filters: &FilterQuad) -> (f64, f64) {
    let (lo_taps, hi_taps) = (&filters.rec_lo, &filters.rec_hi);
    // Four independent partial sums keep the loop vectorizable.
    let mut lo = [0.0; 4];
    let mut hi = [0.0; 4];
    for c in 0..FILTER_LEN / 4 {
        for l in 0..4 {
            let j = 4 * c + l;
            lo[l] += lo_taps[j] * window[j];
            hi[l] += hi_taps[j] * window[j];
        }
    }
    ((lo[0] + lo[1]) + (lo[2] + lo[3]), (hi[0] + hi[1]) + (hi[2] + hi[3]))
}

/// One analysis stage: filter with `dec_lo`/`dec_hi` and keep every other output.
pub fn dwt_step(
    signal: &[f64],
    filters: &FilterQuad,
    mode: ExtensionMode,
) -> Result<(Vec<f64>, Vec<f64>), WaveletError> {
    if signal.is_empty() {
        return Err(WaveletError::EmptySignal);
    }
    let pad = FILTER_LEN - 1;
    let n = signal.len();
    let m = mode.coeff_len(n);
    let mut ca = Vec::with_capacity(m);
    let mut cd = Vec::with_capacity(m);
    match mode {
        ExtensionMode::Periodic => {
            // Output i ends at sample 2i of the zero-padded, periodized input;
            // only the first few windows wrap around.
            let np = n + n % 2;
            let at = |j: isize| {
                let j = j.rem_euclid(np as isize) as usize;
                if j < n {
                    signal[j]
                } else {
                    0.0
                }
            };
            for i in 0..m {
                let newest = 2 * i;
                let (a, d) = if newest >= pad {
                    let window = signal[newest - pad..=newest].try_into().expect("window length");
                    analysis_taps(window, filters)
                } else {
                    let first = newest as isize - pad as isize;
                    let window = core::array::from_fn(|j| at(first + j as isize));
                    analysis_taps(&window, filters)
                };
                ca.push(a);
                cd.push(d);
            }
        }
        ExtensionMode::Symmetric => {
            let ext = extend_symmetric(signal);
            for i in 0..m {
                let newest = 2 * i + 1 + pad;
                let window = ext[newest - pad..=newest].try_into().expect("window length");
                let (a, d) = analysis_taps(window, filters);
                ca.push(a);
                cd.push(d);
            }
        }
    }
    Ok((ca, cd))
}

/// One synthesis stage: the transpose of [`dwt_step`], trimmed to `target_length`.
pub fn idwt_step(
    ca: &[f64],
    cd: &[f64],
    filters: &FilterQuad,
    target_length: usize,
    mode: ExtensionMode,
) -> Result<Vec<f64>, WaveletError> {
    let expected = mode.coeff_len(target_length);
    if target_length == 0 || ca.len() != expected || cd.len() != expected {
        return Err(WaveletError::InconsistentLengths {
            ca: ca.len(),
            cd: cd.len(),
            target: target_length,
            expected,
        });
    }
    let pad = FILTER_LEN - 1;
    let phase = match mode {
        ExtensionMode::Periodic => 0,
        ExtensionMode::Symmetric => 1,
    };
    let work_len = match mode {
        ExtensionMode::Periodic => target_length + target_length % 2,
        ExtensionMode::Symmetric => target_length + pad,
    };
    // acc[pad + j] accumulates contributions to extended index j.
    let mut acc = vec![0.0; work_len + pad];
    for i in 0..expected {
        let newest = 2 * i + phase + pad;
        let (a, d) = (ca[i], cd[i]);
        let window: &mut [f64; FILTER_LEN] =
            (&mut acc[newest - pad..=newest]).try_into().expect("window length");
        for j in 0..FILTER_LEN {
            window[j] += filters.rec_lo[j] * a + filters.rec_hi[j] * d;
        }
    }
    if mode == ExtensionMode::Periodic {
        // Fold the wrapped head back onto the end of the period.
        let np = work_len;
        for j in 0..pad {
            let target = (j as isize - pad as isize).rem_euclid(np as isize) as usize;
            acc[pad + target] += acc[j];
        }
    }
    acc.copy_within(pad..pad + target_length, 0);
    acc.truncate(target_length);
    Ok(acc)
}

/// Wavelet coefficients of a multi-level decomposition.
///
/// Bands are ordered by increasing frequency: `cA{L}, cD{L}, cD{L-1}, …, cD1`.
/// For the standard level-5 pipeline that is `cA5, cD5, cD4, cD3, cD2, cD1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubbandSet {
    bands: Vec<Vec<f64>>,
    original_length: usize,
    sample_rate_hz: u32,
    mode: ExtensionMode,
}

impl SubbandSet {
    pub fn level(&self) -> usize {
        self.bands.len() - 1
    }

    pub fn bands(&self) -> &[Vec<f64>] {
        &self.bands
    }

    pub fn band(&self, index: usize) -> &[f64] {
        &self.bands[index]
    }

    pub fn band_mut(&mut self, index: usize) -> &mut [f64] {
        &mut self.bands[index]
    }

    pub fn num_bands(&self) -> usize {
        self.bands.len()
    }

    pub fn original_length(&self) -> usize {
        self.original_length
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn mode(&self) -> ExtensionMode {
        self.mode
    }

    pub fn band_energies(&self) -> Vec<f64> {
        self.bands.iter().map(|b| audio::energy(b)).collect()
    }

    /// Each band's fraction of the total coefficient energy. All zero for a
    /// silent set.
    pub fn energy_shares(&self) -> Vec<f64> {
        let e = self.band_energies();
        let total: f64 = e.iter().sum();
        if total == 0.0 {
            return vec![0.0; e.len()];
        }
        e.iter().map(|v| v / total).collect()
    }

    /// Same layout, every coefficient zero.
    pub fn zeroed(&self) -> Self {
        let mut out = self.clone();
        for b in &mut out.bands {
            b.iter_mut().for_each(|c| *c = 0.0);
        }
        out
    }

    /// Nominal pass band of band `index` in Hz: `[0, fs/2^(L+1)]` for the
    /// approximation, `[fs/2^(k+1), fs/2^k]` for `cDk`. The real filters
    /// overlap their neighbours.
    pub fn nominal_range_hz(&self, index: usize) -> (f64, f64) {
        band_range_hz(self.sample_rate_hz, self.level(), index)
    }

    fn expected_lengths(original_length: usize, level: usize, mode: ExtensionMode) -> Vec<usize> {
        // Signal length entering each level, finest first.
        let mut lens = Vec::with_capacity(level + 1);
        let mut n = original_length;
        for _ in 0..level {
            lens.push(n);
            n = mode.coeff_len(n);
        }
        lens.push(n);
        lens
    }

    fn validate(&self) -> Result<(), WaveletError> {
        let level = self.bands.len().wrapping_sub(1);
        if self.bands.is_empty() || !(1..=MAX_LEVEL).contains(&level) {
            return Err(WaveletError::CorruptedBands("band count out of range"));
        }
        if self.original_length == 0 {
            return Err(WaveletError::CorruptedBands("zero original length"));
        }
        let lens = Self::expected_lengths(self.original_length, level, self.mode);
        // cA{L} and cD{L} both have lens[level]; cDk has lens[k].
        if self.bands[0].len() != lens[level] {
            return Err(WaveletError::CorruptedBands("approximation length mismatch"));
        }
        for (i, band) in self.bands.iter().enumerate().skip(1) {
            let k = level + 1 - i;
            if band.len() != lens[k] {
                return Err(WaveletError::CorruptedBands("detail length mismatch"));
            }
        }
        Ok(())
    }
}

/// Band label in the `cA5, cD5, …, cD1` naming scheme.
pub fn band_label(level: usize, index: usize) -> alloc::string::String {
    if index == 0 {
        alloc::format!("cA{level}")
    } else {
        alloc::format!("cD{}", level + 1 - index)
    }
}

pub fn band_range_hz(sample_rate_hz: u32, level: usize, index: usize) -> (f64, f64) {
    let fs = sample_rate_hz as f64;
    let pow = |k: usize| (1u64 << k) as f64;
    if index == 0 {
        (0.0, fs / pow(level + 1))
    } else {
        let k = level + 1 - index;
        (fs / pow(k + 1), fs / pow(k))
    }
}

/// Multi-level decomposition with the sym12 filters.
pub fn wavedec(
    audio: &AudioBuffer,
    level: usize,
    mode: ExtensionMode,
) -> Result<SubbandSet, WaveletError> {
    wavedec_with(audio, level, mode, &sym12_filters())
}

pub fn wavedec_with(
    audio: &AudioBuffer,
    level: usize,
    mode: ExtensionMode,
    filters: &FilterQuad,
) -> Result<SubbandSet, WaveletError> {
    if !(1..=MAX_LEVEL).contains(&level) {
        return Err(WaveletError::BadLevel(level));
    }
    let need = 1usize << level;
    if audio.len() < need {
        return Err(WaveletError::TooShort {
            len: audio.len(),
            level,
            need,
        });
    }
    let mut details = Vec::with_capacity(level);
    let (mut approx, cd) = dwt_step(audio.samples(), filters, mode)?;
    details.push(cd);
    for _ in 1..level {
        let (ca, cd) = dwt_step(&approx, filters, mode)?;
        details.push(cd);
        approx = ca;
    }
    let mut bands = Vec::with_capacity(level + 1);
    bands.push(approx);
    bands.extend(details.into_iter().rev());
    Ok(SubbandSet {
        bands,
        original_length: audio.len(),
        sample_rate_hz: audio.sample_rate_hz(),
        mode,
    })
}

/// Cascaded synthesis from the coarsest level up.
pub fn waverec(subbands: &SubbandSet) -> Result<AudioBuffer, WaveletError> {
    waverec_with(subbands, &sym12_filters())
}

pub fn waverec_with(subbands: &SubbandSet, filters: &FilterQuad) -> Result<AudioBuffer, WaveletError> {
    subbands.validate()?;
    let level = subbands.level();
    let lens = SubbandSet::expected_lengths(subbands.original_length, level, subbands.mode);
    let mut approx = subbands.bands[0].clone();
    for (i, detail) in subbands.bands.iter().enumerate().skip(1) {
        let k = level + 1 - i;
        approx = idwt_step(&approx, detail, filters, lens[k - 1], subbands.mode)?;
    }
    AudioBuffer::new(approx, subbands.sample_rate_hz)
        .map_err(|_| WaveletError::CorruptedBands("non-finite coefficients"))
}
