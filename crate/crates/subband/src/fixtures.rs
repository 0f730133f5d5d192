//! Fixture table files: one `<64-hex-digit digest> <transcript>` entry per
//! line; blank lines and lines starting with `#` are ignored.

use std::fmt::Write as _;
use std::path::Path;

use subband_core::{AudioDigest, FixtureTranscriber};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FixtureFileError {
    #[error("cannot read fixture table {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("fixture table line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub fn parse_fixture_table(text: &str) -> Result<FixtureTranscriber, FixtureFileError> {
    let mut table = FixtureTranscriber::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (hex, transcript) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
        let digest = AudioDigest::from_hex(hex).ok_or_else(|| FixtureFileError::Parse {
            line: i + 1,
            message: format!("'{hex}' is not a 64-digit hex digest"),
        })?;
        table.insert(digest, transcript.trim());
    }
    Ok(table)
}

pub fn load_fixture_table(path: &Path) -> Result<FixtureTranscriber, FixtureFileError> {
    let text = std::fs::read_to_string(path).map_err(|source| FixtureFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_fixture_table(&text)
}

pub fn render_fixture_table(table: &FixtureTranscriber) -> String {
    let mut s = String::new();
    for (digest, transcript) in table.entries() {
        let _ = writeln!(s, "{digest} {transcript}");
    }
    s
}
