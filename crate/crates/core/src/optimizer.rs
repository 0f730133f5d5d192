//! Greedy coordinate search over per-band gains.
//!
//! Starting from unit gains, each band in turn (low to high frequency) is
//! swept over the gain grid with the other bands fixed, and the gain with the
//! highest mean accuracy across the NSR grid is kept. Full sweeps repeat until
//! one makes no improvement or `max_sweeps` is reached.
//!
//! Every (gains, nsr, scenario) score is cached, so revisiting a point never
//! calls the transcriber again. Within a coordinate step the candidate gains
//! are independent and may be fanned out through an [`Executor`]; the cache
//! and the evaluation trace are only touched by the driver, in candidate
//! order, so results do not depend on completion order.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use thiserror::Error;

use crate::audio::{self, AudioBuffer, AudioError};
use crate::enhancer::{self, EnhanceError, EnhanceSettings, GainVector};
use crate::exec::{Executor, Sequential};
use crate::scorer::{self, ScoreError, TranscribeError, Transcriber};

/// Where the enhancement sits relative to the noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scenario {
    /// Enhance clean speech, then add noise: `enhance(x) + nsr·n`.
    EnhanceThenMix,
    /// Add noise, then enhance the mix: `enhance(x + nsr·n)`.
    MixThenEnhance,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::EnhanceThenMix => "enhance-then-mix",
            Scenario::MixThenEnhance => "mix-then-enhance",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "enhance-then-mix" => Ok(Scenario::EnhanceThenMix),
            "mix-then-enhance" => Ok(Scenario::MixThenEnhance),
            other => Err(alloc::format!(
                "unknown scenario '{other}' (expected enhance-then-mix or mix-then-enhance)"
            )),
        }
    }
}

/// How the candidate gains of one coordinate step are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum GridStrategy {
    /// Every point of the gain grid.
    #[default]
    Full,
    /// A coarse grid first, then the fine grid within one coarse step of the
    /// coarse winner.
    CoarseToFine { coarse_step: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub gain_min: f64,
    pub gain_max: f64,
    pub gain_step: f64,
    pub nsr_grid: Vec<f64>,
    pub max_sweeps: usize,
    pub language: String,
    pub reference_text: String,
    pub enhance: EnhanceSettings,
    pub strategy: GridStrategy,
    /// Warm start; unit gains when `None`.
    pub initial_gains: Option<GainVector>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            gain_min: 0.0,
            gain_max: 3.0,
            gain_step: 0.1,
            nsr_grid: alloc::vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
            max_sweeps: 10,
            language: "en".into(),
            reference_text: String::new(),
            enhance: EnhanceSettings::default(),
            strategy: GridStrategy::Full,
            initial_gains: None,
        }
    }
}

/// Values are snapped to 1e-9 so that `0.1 · 3` prints and hashes as `0.3`.
fn snap(v: f64) -> f64 {
    libm::round(v * 1e9) / 1e9
}

fn grid(min: f64, max: f64, step: f64) -> Vec<f64> {
    let count = libm::floor((max - min) / step + 1e-9) as usize;
    (0..=count).map(|i| snap(min + i as f64 * step)).collect()
}

impl SearchConfig {
    pub fn num_bands(&self) -> usize {
        self.enhance.level + 1
    }

    pub fn gain_grid(&self) -> Vec<f64> {
        grid(self.gain_min, self.gain_max, self.gain_step)
    }

    pub fn validate(&self) -> Result<(), OptimizeError> {
        let bad = |m: &str| Err(OptimizeError::Config(m.into()));
        if !(self.gain_step > 0.0 && self.gain_step.is_finite()) {
            return bad("gain step must be positive");
        }
        if !(self.gain_min >= 0.0 && self.gain_max >= self.gain_min && self.gain_max.is_finite()) {
            return bad("gain range must satisfy 0 <= min <= max");
        }
        if !self.gain_grid().contains(&1.0) {
            return bad("gain grid must contain 1.0");
        }
        if self.nsr_grid.is_empty() {
            return bad("NSR grid is empty");
        }
        if self.nsr_grid.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("NSR values must be finite and non-negative");
        }
        if self.nsr_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("NSR grid must be strictly ascending");
        }
        if self.max_sweeps == 0 {
            return bad("max_sweeps must be at least 1");
        }
        if let GridStrategy::CoarseToFine { coarse_step } = self.strategy {
            if !(coarse_step > self.gain_step && coarse_step.is_finite()) {
                return bad("coarse step must exceed the fine step");
            }
        }
        if let Some(g) = &self.initial_gains {
            if g.len() != self.num_bands() {
                return bad("initial gains do not match the band count");
            }
        }
        if scorer::normalize_text(&self.reference_text, &self.language).is_empty() {
            return bad("reference text is empty");
        }
        self.enhance.limiter.validate()?;
        Ok(())
    }
}

/// One scored (gains, nsr) point, in evaluation order.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRecord {
    /// Logical timestamp: position in the evaluation sequence, from 1.
    pub seq: u64,
    pub scenario: Scenario,
    pub gains: GainVector,
    pub nsr: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NsrPoint {
    pub nsr: f64,
    pub baseline: f64,
    pub enhanced: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub scenario: Scenario,
    pub best_gains: GainVector,
    /// `best_gains` times the energy-normalization factor of enhancing the
    /// clean speech with them.
    pub effective_gains: GainVector,
    pub mean_accuracy: f64,
    pub baseline_mean_accuracy: f64,
    pub per_nsr_trace: Vec<NsrPoint>,
    pub evaluations: usize,
    pub sweeps_run: usize,
    pub trace: Vec<EvaluationRecord>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Enhance(#[from] EnhanceError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error("transcription failed at nsr {nsr} for gains [{gains}]: {source}")]
    Transcriber {
        nsr: f64,
        gains: GainVector,
        source: TranscribeError,
        /// Evaluations completed before the failure.
        partial_trace: Vec<EvaluationRecord>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct CacheKey {
    scenario: Scenario,
    nsr: u64,
    gains: Vec<u64>,
}

impl CacheKey {
    fn new(scenario: Scenario, gains: &GainVector, nsr: f64) -> Self {
        Self {
            scenario,
            nsr: nsr.to_bits(),
            gains: gains.as_slice().iter().map(|g| g.to_bits()).collect(),
        }
    }
}

/// Failure inside a single worker evaluation.
enum PointError {
    Transcriber { nsr: f64, source: TranscribeError },
    Other(OptimizeError),
}

/// Search state: inputs, the score cache and the evaluation trace.
pub struct GainSearch<'a, T> {
    speech: &'a AudioBuffer,
    noise: &'a AudioBuffer,
    scenario: Scenario,
    config: &'a SearchConfig,
    transcriber: &'a T,
    cache: BTreeMap<CacheKey, f64>,
    trace: Vec<EvaluationRecord>,
}

impl<'a, T: Transcriber + Sync> GainSearch<'a, T> {
    pub fn new(
        speech: &'a AudioBuffer,
        noise: &'a AudioBuffer,
        scenario: Scenario,
        config: &'a SearchConfig,
        transcriber: &'a T,
    ) -> Result<Self, OptimizeError> {
        config.validate()?;
        if speech.sample_rate_hz() != noise.sample_rate_hz() {
            return Err(AudioError::RateMismatch(speech.sample_rate_hz(), noise.sample_rate_hz()).into());
        }
        if speech.is_empty() {
            return Err(AudioError::Empty.into());
        }
        if noise.is_empty() {
            return Err(AudioError::EmptyNoise.into());
        }
        Ok(Self {
            speech,
            noise,
            scenario,
            config,
            transcriber,
            cache: BTreeMap::new(),
            trace: Vec::new(),
        })
    }

    pub fn trace(&self) -> &[EvaluationRecord] {
        &self.trace
    }

    /// Number of (gains, nsr) points actually scored so far.
    pub fn evaluations(&self) -> usize {
        self.trace.len()
    }

    /// Mean accuracy of `gains` over the NSR grid.
    pub fn evaluate_gains(&mut self, gains: &GainVector) -> Result<f64, OptimizeError> {
        self.evaluate_batch(&Sequential, core::slice::from_ref(gains))
            .map(|v| v[0])
    }

    /// Accuracy of `gains` at one NSR grid point, if it has been evaluated.
    pub fn cached(&self, gains: &GainVector, nsr: f64) -> Option<f64> {
        self.cache.get(&CacheKey::new(self.scenario, gains, nsr)).copied()
    }

    fn mean_of(&self, gains: &GainVector) -> f64 {
        let total: f64 = self
            .config
            .nsr_grid
            .iter()
            .map(|&nsr| self.cached(gains, nsr).expect("evaluated before use"))
            .sum();
        total / self.config.nsr_grid.len() as f64
    }

    fn enhance(&self, audio: &AudioBuffer, gains: &GainVector) -> Result<Option<AudioBuffer>, OptimizeError> {
        match enhancer::wavelet_enhance_with(audio, gains, &self.config.enhance) {
            Ok(e) => Ok(Some(e.audio)),
            Err(EnhanceError::DegenerateGains) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    fn score(&self, audio: &AudioBuffer, nsr: f64) -> Result<f64, PointError> {
        let text = self
            .transcriber
            .transcribe(audio, &self.config.language)
            .map_err(|source| PointError::Transcriber { nsr, source })?;
        scorer::transcription_accuracy(&text, &self.config.reference_text, &self.config.language)
            .map(|r| r.accuracy_percent)
            .map_err(|e| PointError::Other(e.into()))
    }

    /// Scores `gains` at each of `nsrs`. Silent output from degenerate gains
    /// scores zero without calling the transcriber.
    fn score_point(&self, gains: &GainVector, nsrs: &[f64]) -> Result<Vec<f64>, PointError> {
        let other = PointError::Other;
        match self.scenario {
            Scenario::EnhanceThenMix => {
                let Some(enhanced) = self.enhance(self.speech, gains).map_err(other)? else {
                    return Ok(alloc::vec![0.0; nsrs.len()]);
                };
                nsrs.iter()
                    .map(|&nsr| {
                        let mix = audio::mix_at_nsr(&enhanced, self.noise, nsr)
                            .map_err(|e| PointError::Other(e.into()))?;
                        self.score(&mix, nsr)
                    })
                    .collect()
            }
            Scenario::MixThenEnhance => nsrs
                .iter()
                .map(|&nsr| {
                    let mix = audio::mix_at_nsr(self.speech, self.noise, nsr)
                        .map_err(|e| PointError::Other(e.into()))?;
                    match self.enhance(&mix, gains).map_err(PointError::Other)? {
                        Some(enhanced) => self.score(&enhanced, nsr),
                        None => Ok(0.0),
                    }
                })
                .collect(),
        }
    }

    /// Mean accuracy for each candidate, evaluating cache misses through `exec`.
    pub fn evaluate_batch<E: Executor>(
        &mut self,
        exec: &E,
        candidates: &[GainVector],
    ) -> Result<Vec<f64>, OptimizeError> {
        // Misses per candidate, duplicates within the batch collapsed.
        let mut pending: Vec<(usize, Vec<f64>)> = Vec::new();
        let mut claimed: BTreeMap<CacheKey, ()> = BTreeMap::new();
        for (i, g) in candidates.iter().enumerate() {
            let missing: Vec<f64> = self
                .config
                .nsr_grid
                .iter()
                .copied()
                .filter(|&nsr| {
                    let key = CacheKey::new(self.scenario, g, nsr);
                    !self.cache.contains_key(&key) && claimed.insert(key, ()).is_none()
                })
                .collect();
            if !missing.is_empty() {
                pending.push((i, missing));
            }
        }

        let this = &*self;
        let results = exec.map_indexed(pending.len(), |j| {
            let (i, nsrs) = &pending[j];
            this.score_point(&candidates[*i], nsrs)
        });

        for ((i, nsrs), result) in pending.iter().zip(results) {
            let gains = &candidates[*i];
            match result {
                Ok(accs) => {
                    for (&nsr, acc) in nsrs.iter().zip(accs) {
                        self.record(gains, nsr, acc);
                    }
                }
                Err(PointError::Transcriber { nsr, source }) => {
                    return Err(OptimizeError::Transcriber {
                        nsr,
                        gains: gains.clone(),
                        source,
                        partial_trace: self.trace.clone(),
                    });
                }
                Err(PointError::Other(e)) => return Err(e),
            }
        }
        Ok(candidates.iter().map(|g| self.mean_of(g)).collect())
    }

    fn record(&mut self, gains: &GainVector, nsr: f64, accuracy: f64) {
        self.cache
            .insert(CacheKey::new(self.scenario, gains, nsr), accuracy);
        self.trace.push(EvaluationRecord {
            seq: self.trace.len() as u64 + 1,
            scenario: self.scenario,
            gains: gains.clone(),
            nsr,
            accuracy,
        });
    }

    /// Best of the candidate gains for `band`, as (gain, mean accuracy).
    /// Ties go to the gain nearest the incumbent, then to the smaller gain.
    fn best_of<E: Executor>(
        &mut self,
        exec: &E,
        current: &GainVector,
        band: usize,
        values: &[f64],
    ) -> Result<(f64, f64), OptimizeError> {
        let incumbent = current.get(band);
        let mut values: Vec<f64> = values.to_vec();
        if !values.contains(&incumbent) {
            values.push(incumbent);
        }
        let candidates = values
            .iter()
            .map(|&g| current.with(band, g))
            .collect::<Result<Vec<_>, _>>()?;
        let means = self.evaluate_batch(exec, &candidates)?;
        let mut best = (incumbent, self.mean_of(current));
        for (&g, &m) in values.iter().zip(&means) {
            let better = m > best.1
                || (m == best.1
                    && ((g - incumbent).abs() < (best.0 - incumbent).abs()
                        || ((g - incumbent).abs() == (best.0 - incumbent).abs() && g < best.0)));
            if better {
                best = (g, m);
            }
        }
        Ok(best)
    }

    fn step<E: Executor>(
        &mut self,
        exec: &E,
        current: &GainVector,
        band: usize,
    ) -> Result<(f64, f64), OptimizeError> {
        let cfg = self.config;
        match cfg.strategy {
            GridStrategy::Full => self.best_of(exec, current, band, &cfg.gain_grid()),
            GridStrategy::CoarseToFine { coarse_step } => {
                let coarse = grid(cfg.gain_min, cfg.gain_max, coarse_step);
                let (center, _) = self.best_of(exec, current, band, &coarse)?;
                let mut values: Vec<f64> = cfg
                    .gain_grid()
                    .into_iter()
                    .filter(|g| (g - center).abs() <= coarse_step + 1e-9)
                    .collect();
                // Keep the coarse points in play so the winner is global over
                // everything evaluated for this band.
                values.extend(coarse);
                values.sort_by(f64::total_cmp);
                values.dedup();
                self.best_of(exec, current, band, &values)
            }
        }
    }

    /// Run the coordinate search to completion.
    pub fn run<E: Executor>(mut self, exec: &E) -> Result<OptimizationResult, OptimizeError> {
        let bands = self.config.num_bands();
        let unit = GainVector::unit(bands);
        let mut gains = self.config.initial_gains.clone().unwrap_or_else(|| unit.clone());
        self.evaluate_batch(exec, &[unit.clone(), gains.clone()])?;
        let baseline = self.mean_of(&unit);
        let mut score = self.mean_of(&gains);

        let mut sweeps = 0;
        while sweeps < self.config.max_sweeps {
            sweeps += 1;
            let mut improved = false;
            for band in 0..bands {
                let (g, m) = self.step(exec, &gains, band)?;
                if g != gains.get(band) {
                    debug_assert!(m > score);
                    gains = gains.with(band, g)?;
                    score = m;
                    improved = true;
                }
            }
            if !improved {
                break;
            }
        }

        let per_nsr_trace = self
            .config
            .nsr_grid
            .iter()
            .map(|&nsr| NsrPoint {
                nsr,
                baseline: self.cached(&unit, nsr).unwrap_or(0.0),
                enhanced: self.cached(&gains, nsr).unwrap_or(0.0),
            })
            .collect();
        let factor = enhancer::wavelet_enhance_with(self.speech, &gains, &self.config.enhance)
            .map(|e| e.normalization_factor)
            .unwrap_or(1.0);
        Ok(OptimizationResult {
            scenario: self.scenario,
            effective_gains: gains.scaled(factor),
            best_gains: gains,
            mean_accuracy: score,
            baseline_mean_accuracy: baseline,
            per_nsr_trace,
            evaluations: self.trace.len(),
            sweeps_run: sweeps,
            trace: self.trace,
        })
    }
}

/// Mean accuracy of `gains` over the configured NSR grid.
pub fn evaluate_gains<T: Transcriber + Sync>(
    speech: &AudioBuffer,
    noise: &AudioBuffer,
    gains: &GainVector,
    scenario: Scenario,
    config: &SearchConfig,
    transcriber: &T,
) -> Result<f64, OptimizeError> {
    GainSearch::new(speech, noise, scenario, config, transcriber)?.evaluate_gains(gains)
}

pub fn greedy_optimize<T: Transcriber + Sync>(
    speech: &AudioBuffer,
    noise: &AudioBuffer,
    scenario: Scenario,
    config: &SearchConfig,
    transcriber: &T,
) -> Result<OptimizationResult, OptimizeError> {
    greedy_optimize_with(&Sequential, speech, noise, scenario, config, transcriber)
}

pub fn greedy_optimize_with<E: Executor, T: Transcriber + Sync>(
    exec: &E,
    speech: &AudioBuffer,
    noise: &AudioBuffer,
    scenario: Scenario,
    config: &SearchConfig,
    transcriber: &T,
) -> Result<OptimizationResult, OptimizeError> {
    GainSearch::new(speech, noise, scenario, config, transcriber)?.run(exec)
}

/// Greedy search restricted to a single NSR.
pub fn point_to_point_optimize<T: Transcriber + Sync>(
    speech: &AudioBuffer,
    noise: &AudioBuffer,
    nsr: f64,
    scenario: Scenario,
    config: &SearchConfig,
    transcriber: &T,
) -> Result<OptimizationResult, OptimizeError> {
    point_to_point_optimize_with(&Sequential, speech, noise, nsr, scenario, config, transcriber)
}

pub fn point_to_point_optimize_with<E: Executor, T: Transcriber + Sync>(
    exec: &E,
    speech: &AudioBuffer,
    noise: &AudioBuffer,
    nsr: f64,
    scenario: Scenario,
    config: &SearchConfig,
    transcriber: &T,
) -> Result<OptimizationResult, OptimizeError> {
    let single = SearchConfig {
        nsr_grid: alloc::vec![nsr],
        ..config.clone()
    };
    greedy_optimize_with(exec, speech, noise, scenario, &single, transcriber)
}
