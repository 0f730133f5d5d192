//! Wavelet sub-band speech enhancement.
//!
//! The signal is split into six octave-spaced bands by a level-5 sym12
//! discrete wavelet transform, each band is scaled by a preset gain, and the
//! result is resynthesized at the energy of the input. A greedy coordinate
//! search picks the gains that maximize a transcription-accuracy score.
//!
//! This crate is `no_std` and only needs `alloc`. File formats, the HTTP
//! recognizer client, the hearing-loss simulator and the command-line tool
//! live in the `subband` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod audio;
pub mod enhancer;
pub mod exec;
pub mod optimizer;
pub mod scorer;
pub mod wavelet;

pub use audio::{AudioBuffer, AudioDigest, AudioError, SignalStats};
pub use enhancer::{Band, EnhanceError, Enhanced, GainVector, LimiterConfig};
pub use exec::{Executor, Sequential};
pub use optimizer::{
    EvaluationRecord, NsrPoint, OptimizationResult, OptimizeError, Scenario, SearchConfig,
};
pub use scorer::{
    FixtureTranscriber, ScoreReport, SyntheticTranscriber, TokenSequence, Transcriber, TranscribeError,
};
pub use wavelet::{ExtensionMode, FilterQuad, SubbandSet, WaveletError};
