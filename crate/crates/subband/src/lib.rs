//! Host-side companion to `subband-core`: WAV files, the hearing-loss
//! simulator, spectrograms, speech-recognition clients, and the `subband`
//! command-line tool.

pub mod asr;
pub mod cli;
pub mod fixtures;
pub mod hl_sim;
pub mod parallel;
pub mod report;
pub mod spectrogram;
pub mod stub;
pub mod wav;
