use alloc::collections::BTreeMap;
use alloc::string::String;

use super::{TranscribeError, Transcriber};
use crate::audio::{AudioBuffer, AudioDigest};

/// Looks transcripts up by the content digest of the audio.
#[derive(Debug, Clone, Default)]
pub struct FixtureTranscriber {
    table: BTreeMap<AudioDigest, String>,
}

impl FixtureTranscriber {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, audio: &AudioBuffer, transcript: impl Into<String>) {
        self.table.insert(audio.digest(), transcript.into());
    }

    pub fn insert(&mut self, digest: AudioDigest, transcript: impl Into<String>) {
        self.table.insert(digest, transcript.into());
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&AudioDigest, &String)> {
        self.table.iter()
    }
}

impl FromIterator<(AudioDigest, String)> for FixtureTranscriber {
    fn from_iter<I: IntoIterator<Item = (AudioDigest, String)>>(iter: I) -> Self {
        Self {
            table: iter.into_iter().collect(),
        }
    }
}

impl Transcriber for FixtureTranscriber {
    fn transcribe(&self, audio: &AudioBuffer, _language: &str) -> Result<String, TranscribeError> {
        let digest = audio.digest();
        self.table
            .get(&digest)
            .cloned()
            .ok_or(TranscribeError::UnknownFixture(digest))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn lookup_by_digest() {
        let a = AudioBuffer::new(vec![0.1, 0.2, 0.3], 16_000).unwrap();
        let b = AudioBuffer::new(vec![0.1, 0.2, 0.30001], 16_000).unwrap();
        let mut t = FixtureTranscriber::new();
        t.register(&a, "hello world");
        assert_eq!(t.transcribe(&a, "en").unwrap(), "hello world");
        assert_eq!(t.transcribe(&a, "en").unwrap(), "hello world");
        assert_eq!(
            t.transcribe(&b, "en"),
            Err(TranscribeError::UnknownFixture(b.digest()))
        );
    }
}
