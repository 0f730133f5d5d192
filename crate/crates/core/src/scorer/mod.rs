//! Transcription-accuracy scoring and the transcriber abstraction.
//!
//! Accuracy is `100 · max(0, 1 − d / |ref|)` where `d` is the unit-cost
//! Levenshtein distance between the normalized hypothesis and reference token
//! sequences. Tokens are words for space-delimited languages and single
//! characters for Chinese.

mod fixture;
mod synthetic;

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::audio::{AudioBuffer, AudioDigest};

pub use fixture::FixtureTranscriber;
pub use synthetic::{band_profile, profile_distance, SyntheticTranscriber};

/// Normalized text units of one transcript.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    pub tokens: Vec<String>,
    pub language: String,
}

impl TokenSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Tokens joined back into display text.
    pub fn joined(&self) -> String {
        let sep = if is_character_language(&self.language) {
            ""
        } else {
            " "
        };
        self.tokens.join(sep)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub accuracy_percent: f64,
    pub hypothesis: TokenSequence,
    pub reference: TokenSequence,
    pub edit_distance: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoreError {
    #[error("reference text is empty after normalization")]
    EmptyReference,
}

/// Failure of a [`Transcriber`]. The HTTP-specific variants are produced by
/// network-backed implementations outside this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum TranscribeError {
    #[error("unknown fixture: no transcript registered for audio digest {0}")]
    UnknownFixture(AudioDigest),
    #[error("transcriber configuration error: {0}")]
    Config(String),
    #[error("network failure after {attempts} attempt(s): {message}")]
    Network { attempts: u32, message: String },
    #[error("recognizer returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed recognizer response: {0}")]
    MalformedResponse(String),
    #[error("audio rejected by transcriber: {0}")]
    Audio(String),
}

impl TranscribeError {
    /// Failures of an external service, as opposed to local misuse.
    pub fn is_external(&self) -> bool {
        matches!(
            self,
            TranscribeError::Network { .. }
                | TranscribeError::Status { .. }
                | TranscribeError::MalformedResponse(_)
        )
    }
}

/// Speech-to-text capability used for scoring.
pub trait Transcriber {
    fn transcribe(&self, audio: &AudioBuffer, language: &str) -> Result<String, TranscribeError>;
}

impl<T: Transcriber + ?Sized> Transcriber for &T {
    fn transcribe(&self, audio: &AudioBuffer, language: &str) -> Result<String, TranscribeError> {
        (**self).transcribe(audio, language)
    }
}

impl<T: Transcriber + ?Sized> Transcriber for alloc::boxed::Box<T> {
    fn transcribe(&self, audio: &AudioBuffer, language: &str) -> Result<String, TranscribeError> {
        (**self).transcribe(audio, language)
    }
}

/// Languages scored per character rather than per word.
pub fn is_character_language(language: &str) -> bool {
    let primary = language.split(['-', '_']).next().unwrap_or("");
    ["zh", "cmn", "yue"]
        .iter()
        .any(|p| primary.eq_ignore_ascii_case(p))
}

/// Lowercase, drop punctuation and split into tokens.
///
/// Apostrophes are removed without splitting ("don't" → "dont"); any other
/// non-alphanumeric character acts as a separator.
pub fn normalize_text(raw: &str, language: &str) -> TokenSequence {
    let per_char = is_character_language(language);
    let mut tokens = Vec::new();
    let mut current = String::new();
    for c in raw.chars() {
        if c == '\'' || c == '\u{2019}' {
            continue;
        }
        if c.is_alphanumeric() {
            if per_char {
                tokens.push(c.to_lowercase().collect());
            } else {
                current.extend(c.to_lowercase());
            }
        } else if !current.is_empty() {
            tokens.push(core::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    TokenSequence {
        tokens,
        language: language.into(),
    }
}

/// Unit-cost Levenshtein distance.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    if b.is_empty() {
        return a.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = alloc::vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn transcription_accuracy(
    hypothesis: &str,
    reference: &str,
    language: &str,
) -> Result<ScoreReport, ScoreError> {
    let reference = normalize_text(reference, language);
    if reference.is_empty() {
        return Err(ScoreError::EmptyReference);
    }
    let hypothesis = normalize_text(hypothesis, language);
    let d = edit_distance(&hypothesis.tokens, &reference.tokens);
    let accuracy = (1.0 - d as f64 / reference.len() as f64).max(0.0) * 100.0;
    Ok(ScoreReport {
        accuracy_percent: accuracy,
        hypothesis,
        reference,
        edit_distance: d,
    })
}
