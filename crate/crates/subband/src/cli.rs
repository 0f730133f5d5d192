//! The `subband` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 I/O or file
//! format error, 3 external-service error, 4 numeric or degenerate input.
//!
//! Every command that writes files also writes a run manifest next to them
//! (`<output stem>.manifest.txt`, or `manifest.txt` inside the optimize
//! output directory). The manifest records the exact argument list, so
//! `subband replay <manifest>` reruns the command.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use subband_core::audio::{self, normalize_energy, normalize_rms, signal_stats};
use subband_core::enhancer::{self, EnhanceSettings, STANDARD_LEVEL};
use subband_core::optimizer::{self, GridStrategy, OptimizationResult, OptimizeError, SearchConfig};
use subband_core::scorer::{self, band_profile, ScoreError};
use subband_core::wavelet::{self, band_label, band_range_hz};
use subband_core::{
    AudioBuffer, AudioError, Band, EnhanceError, ExtensionMode, FixtureTranscriber, GainVector,
    LimiterConfig, Scenario, SyntheticTranscriber, TranscribeError, Transcriber,
};

use crate::asr::{HttpConfig, HttpTranscriber};
use crate::fixtures::{load_fixture_table, FixtureFileError};
use crate::hl_sim::{self, Audiogram, AudiogramParseError, HlError, RecruitmentConfig};
use crate::parallel::{default_jobs, RayonExecutor, ENV_JOBS};
use crate::report::{fmt_gains, fmt_num, render_result, render_trace, RunManifest, Table};
use crate::spectrogram::{self, SpectrogramError};
use crate::stub::{StubBehavior, StubServer};
use crate::wav::{read_wav, write_wav, WavError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_EXTERNAL: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    fn usage(message: impl Into<String>) -> Self {
        Self::new(EXIT_USAGE, message)
    }

    fn io(message: impl Into<String>) -> Self {
        Self::new(EXIT_IO, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<WavError> for CliError {
    fn from(e: WavError) -> Self {
        let code = match e {
            WavError::InvalidAudio { .. } => EXIT_NUMERIC,
            _ => EXIT_IO,
        };
        Self::new(code, e.to_string())
    }
}

impl From<AudioError> for CliError {
    fn from(e: AudioError) -> Self {
        let code = match e {
            AudioError::RateMismatch(..) | AudioError::BadNsr(_) | AudioError::BadTarget(_) => {
                EXIT_USAGE
            }
            _ => EXIT_NUMERIC,
        };
        Self::new(code, e.to_string())
    }
}

impl From<EnhanceError> for CliError {
    fn from(e: EnhanceError) -> Self {
        let code = match e {
            EnhanceError::BadGain { .. } | EnhanceError::GainCount { .. } | EnhanceError::BadLimiter { .. } => {
                EXIT_USAGE
            }
            _ => EXIT_NUMERIC,
        };
        Self::new(code, e.to_string())
    }
}

impl From<TranscribeError> for CliError {
    fn from(e: TranscribeError) -> Self {
        let code = if e.is_external() {
            EXIT_EXTERNAL
        } else if matches!(e, TranscribeError::Config(_)) {
            EXIT_USAGE
        } else {
            EXIT_NUMERIC
        };
        Self::new(code, e.to_string())
    }
}

impl From<ScoreError> for CliError {
    fn from(e: ScoreError) -> Self {
        Self::usage(e.to_string())
    }
}

impl From<OptimizeError> for CliError {
    fn from(e: OptimizeError) -> Self {
        match e {
            OptimizeError::Config(m) => Self::usage(format!("invalid search configuration: {m}")),
            OptimizeError::Audio(e) => e.into(),
            OptimizeError::Enhance(e) => e.into(),
            OptimizeError::Score(e) => e.into(),
            OptimizeError::Transcriber { ref source, .. } => {
                let code = CliError::from(source.clone()).code;
                Self::new(code, e.to_string())
            }
        }
    }
}

impl From<HlError> for CliError {
    fn from(e: HlError) -> Self {
        Self::new(EXIT_NUMERIC, e.to_string())
    }
}

impl From<AudiogramParseError> for CliError {
    fn from(e: AudiogramParseError) -> Self {
        Self::io(e.to_string())
    }
}

impl From<FixtureFileError> for CliError {
    fn from(e: FixtureFileError) -> Self {
        Self::io(e.to_string())
    }
}

impl From<SpectrogramError> for CliError {
    fn from(e: SpectrogramError) -> Self {
        let code = match e {
            SpectrogramError::EmptyAudio => EXIT_NUMERIC,
            _ => EXIT_USAGE,
        };
        Self::new(code, e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "subband", version, about = "Wavelet sub-band speech intelligibility enhancement")]
pub struct Cli {
    /// Worker threads for the optimizer (default: available cores).
    #[arg(long, global = true, env = ENV_JOBS)]
    pub jobs: Option<usize>,

    /// Where to write the run manifest (default: next to the output).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Apply per-band gains to a WAV file.
    Enhance(EnhanceArgs),
    /// Mix speech with rms-matched noise at a noise-to-signal ratio.
    Mix(MixArgs),
    /// Transcribe a WAV file and score it against a reference text.
    Score(ScoreArgs),
    /// Search for the per-band gains that maximize transcription accuracy.
    Optimize(OptimizeArgs),
    /// Simulate a hearing loss described by an audiogram.
    SimulateHl(SimulateHlArgs),
    /// Write a magnitude spectrogram as a PGM image and a text matrix.
    Spectrogram(SpectrogramArgs),
    /// Print the content digest of WAV files (the fixture-table key).
    Digest(DigestArgs),
    /// Run the local speech-recognition stub server.
    ServeStub(ServeStubArgs),
    /// Rerun the command recorded in a run manifest.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GainArgs {
    /// Gains, low to high band (cA5 cD5 cD4 cD3 cD2 cD1 at level 5).
    /// Values may also be given as one quoted, space- or comma-separated list.
    #[arg(value_name = "GAIN")]
    pub gains: Vec<String>,
    #[arg(long)]
    pub ca5: Option<f64>,
    #[arg(long)]
    pub cd5: Option<f64>,
    #[arg(long)]
    pub cd4: Option<f64>,
    #[arg(long)]
    pub cd3: Option<f64>,
    #[arg(long)]
    pub cd2: Option<f64>,
    #[arg(long)]
    pub cd1: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct EnhanceOpts {
    /// Decomposition depth; gains are expected for level + 1 bands.
    #[arg(long, default_value_t = STANDARD_LEVEL)]
    pub level: usize,
    /// Limiter knee start (fraction of full scale).
    #[arg(long, default_value_t = 0.80)]
    pub knee: f64,
    /// Peak threshold at which the limiter engages.
    #[arg(long, default_value_t = 0.99)]
    pub threshold: f64,
}

impl EnhanceOpts {
    fn settings(&self) -> CliResult<EnhanceSettings> {
        if !(1..=wavelet::MAX_LEVEL).contains(&self.level) {
            return Err(CliError::usage(format!(
                "--level must be in 1..={}, got {}",
                wavelet::MAX_LEVEL,
                self.level
            )));
        }
        Ok(EnhanceSettings {
            level: self.level,
            mode: ExtensionMode::Periodic,
            limiter: LimiterConfig::new(self.knee, self.threshold)?,
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct EnhanceArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    #[command(flatten)]
    pub gains: GainArgs,
    #[command(flatten)]
    pub opts: EnhanceOpts,
}

#[derive(Debug, Clone, Args)]
pub struct MixArgs {
    pub speech: PathBuf,
    pub noise: PathBuf,
    pub output: PathBuf,
    /// Noise amplitude relative to the speech after rms matching.
    #[arg(long, allow_negative_numbers = true)]
    pub nsr: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TranscriberKind {
    /// Digest-keyed transcript table (`--fixtures`).
    Fixture,
    /// Offline recognizer that degrades with band-profile distance.
    Synthetic,
    /// Speech-to-Text `recognize` endpoint.
    Http,
}

impl TranscriberKind {
    fn as_str(self) -> &'static str {
        match self {
            TranscriberKind::Fixture => "fixture",
            TranscriberKind::Synthetic => "synthetic",
            TranscriberKind::Http => "http",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TranscriberArgs {
    #[arg(long, value_enum, default_value_t = TranscriberKind::Synthetic)]
    pub transcriber: TranscriberKind,
    /// Fixture table: `<digest> <transcript>` per line.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// HTTP transcriber settings file (endpoint, retries, timeouts).
    #[arg(long)]
    pub asr_config: Option<PathBuf>,
    /// Synthetic transcriber: band-energy shares it recognizes perfectly.
    #[arg(long)]
    pub target_profile: Option<String>,
    /// Synthetic transcriber: the target is the profile of the target
    /// source enhanced with these gains.
    #[arg(long)]
    pub target_gains: Option<String>,
    /// Synthetic transcriber: audio the target profile is derived from.
    #[arg(long)]
    pub target_source: Option<PathBuf>,
    /// Synthetic transcriber: profile distance at which half the words drop.
    #[arg(long, default_value_t = 1.0)]
    pub half_distance: f64,
}

#[derive(Debug, Clone, Args)]
pub struct ReferenceArgs {
    /// Reference transcript.
    #[arg(long, conflicts_with = "reference_file")]
    pub reference: Option<String>,
    /// File holding the reference transcript (default: the speech file with
    /// a `.txt` extension, if present).
    #[arg(long)]
    pub reference_file: Option<PathBuf>,
    /// Language tag; zh, cmn and yue are scored per character.
    #[arg(long, default_value = "en")]
    pub language: String,
}

#[derive(Debug, Clone, Args)]
pub struct ScoreArgs {
    pub input: PathBuf,
    #[command(flatten)]
    pub reference: ReferenceArgs,
    #[command(flatten)]
    pub transcriber: TranscriberArgs,
}

#[derive(Debug, Clone, Args)]
pub struct OptimizeArgs {
    pub speech: PathBuf,
    pub noise: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "enhance-then-mix")]
    pub scenario: Scenario,
    /// Comma-separated noise-to-signal ratios.
    #[arg(long, default_value = "0,0.5,1,1.5,2,2.5,3")]
    pub nsr_grid: String,
    #[arg(long, default_value_t = 0.0)]
    pub gain_min: f64,
    #[arg(long, default_value_t = 3.0)]
    pub gain_max: f64,
    #[arg(long, default_value_t = 0.1)]
    pub gain_step: f64,
    #[arg(long, default_value_t = 10)]
    pub max_sweeps: usize,
    /// Search a coarse grid with this step first, then refine.
    #[arg(long)]
    pub coarse_step: Option<f64>,
    /// Starting gains (default: all ones).
    #[arg(long)]
    pub warm_start: Option<String>,
    /// Also optimize each NSR separately, warm-started from the universal
    /// gains, and write `point_to_point.txt`.
    #[arg(long)]
    pub point_to_point: bool,
    /// Speech is scaled to this rms, and the noise matched to it.
    #[arg(long, default_value_t = 0.05)]
    pub speech_rms: f64,
    #[command(flatten)]
    pub reference: ReferenceArgs,
    #[command(flatten)]
    pub transcriber: TranscriberArgs,
    #[command(flatten)]
    pub opts: EnhanceOpts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AudiogramPreset {
    /// 30 30 40 50 60 60 60 dB at 125 … 8000 Hz.
    Sloping,
    /// No loss.
    Normal,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateHlArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    /// Audiogram file: `frequency_hz loss_db` per line.
    #[arg(long, conflicts_with = "preset")]
    pub audiogram: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<AudiogramPreset>,
    #[arg(long)]
    pub no_recruitment: bool,
    /// dB SPL of a full-scale sine.
    #[arg(long, default_value_t = hl_sim::DEFAULT_CALIBRATION_DB_SPL)]
    pub calibration: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SpectrogramArgs {
    pub input: PathBuf,
    #[arg(long, default_value_t = 1024)]
    pub frame: usize,
    #[arg(long, default_value_t = 256)]
    pub hop: usize,
    /// Graymap image (default: input with `.pgm` extension).
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// Text matrix (default: input with `.spectrogram.txt` extension).
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    /// Image floor in dB relative to the peak.
    #[arg(long, default_value_t = spectrogram::DEFAULT_FLOOR_DB, allow_negative_numbers = true)]
    pub floor_db: f64,
}

#[derive(Debug, Clone, Args)]
pub struct DigestArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ServeStubArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Transcript returned for audio that is not in the fixture table.
    #[arg(long)]
    pub default_transcript: Option<String>,
    /// Status codes returned for the first requests, comma-separated.
    #[arg(long)]
    pub fail_first: Option<String>,
    /// Answer every request with zero alternatives.
    #[arg(long)]
    pub no_alternatives: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}

/// Parses a list of numbers separated by commas and/or whitespace.
pub fn parse_list(text: &str) -> Result<Vec<f64>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("'{s}' is not a number")))
        .collect()
}

fn parse_gains(text: &str, bands: usize, what: &str) -> CliResult<GainVector> {
    let values = parse_list(text).map_err(|e| CliError::usage(format!("{what}: {e}")))?;
    if values.len() != bands {
        return Err(CliError::usage(format!(
            "{what}: expected {bands} values, got {}",
            values.len()
        )));
    }
    Ok(GainVector::new(values)?)
}

impl GainArgs {
    fn named(&self) -> [(Band, Option<f64>); 6] {
        [
            (Band::CA5, self.ca5),
            (Band::CD5, self.cd5),
            (Band::CD4, self.cd4),
            (Band::CD3, self.cd3),
            (Band::CD2, self.cd2),
            (Band::CD1, self.cd1),
        ]
    }

    pub fn resolve(&self, level: usize) -> CliResult<GainVector> {
        let bands = level + 1;
        let mut gains = if self.gains.is_empty() {
            GainVector::unit(bands)
        } else {
            parse_gains(&self.gains.join(" "), bands, "gains")?
        };
        for (band, value) in self.named() {
            if let Some(v) = value {
                if level != STANDARD_LEVEL {
                    return Err(CliError::usage(format!(
                        "--{} is only available at level {STANDARD_LEVEL}",
                        band.name().to_lowercase()
                    )));
                }
                gains = gains.with(band.index(), v)?;
            }
        }
        Ok(gains)
    }
}

fn manifest_path(explicit: &Option<PathBuf>, output: &Path) -> PathBuf {
    explicit
        .clone()
        .unwrap_or_else(|| output.with_extension("manifest.txt"))
}

fn write_text(path: &Path, text: &str) -> CliResult {
    std::fs::write(path, text).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult {
    std::fs::write(path, bytes).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

struct Context {
    argv: Vec<String>,
    jobs: usize,
    manifest: Option<PathBuf>,
}

impl Context {
    fn manifest(&self, command: &str) -> RunManifest {
        let mut m = RunManifest::new(command);
        m.set("argv", serde_json::to_string(&self.argv).expect("strings serialize"));
        m
    }

    fn write_manifest(&self, m: &RunManifest, default_path: PathBuf) -> CliResult {
        let path = self.manifest.clone().unwrap_or(default_path);
        write_text(&path, &m.render())
    }
}

fn band_table(level: usize, fs: u32, columns: &[&str], rows: &[Vec<f64>]) -> Table {
    let mut header = vec!["band", "range_hz"];
    header.extend_from_slice(columns);
    let mut t = Table::new(&header);
    for i in 0..=level {
        let (lo, hi) = band_range_hz(fs, level, i);
        let mut row = vec![band_label(level, i), format!("{}-{}", fmt_num(lo), fmt_num(hi))];
        row.extend(rows.iter().map(|col| fmt_num(col[i])));
        t.push(row);
    }
    t
}

fn stats_line(label: &str, audio: &AudioBuffer) -> CliResult<String> {
    let s = signal_stats(audio)?;
    Ok(format!(
        "{label}: rms = {}  energy = {}  peak = {}",
        fmt_num(s.rms),
        fmt_num(s.energy),
        fmt_num(s.peak)
    ))
}

fn cmd_enhance(ctx: &Context, args: &EnhanceArgs) -> CliResult {
    let settings = args.opts.settings()?;
    let gains = args.gains.resolve(settings.level)?;
    let input = read_wav(&args.input)?;
    let out = enhancer::wavelet_enhance_with(&input, &gains, &settings)?;
    write_wav(&args.output, &out.audio)?;

    println!("{}", stats_line("input", &input)?);
    println!("{}", stats_line("output", &out.audio)?);
    println!("gains = {}", fmt_gains(&gains, " "));
    println!("normalization_factor = {}", fmt_num(out.normalization_factor));
    println!("limiter_engaged = {}", out.limiter_engaged);
    let before = wavelet::wavedec(&input, settings.level, ExtensionMode::Periodic)
        .map_err(EnhanceError::from)?
        .band_energies();
    let after = wavelet::wavedec(&out.audio, settings.level, ExtensionMode::Periodic)
        .map_err(EnhanceError::from)?
        .band_energies();
    print!(
        "{}",
        band_table(
            settings.level,
            input.sample_rate_hz(),
            &["gain", "input_energy", "output_energy"],
            &[gains.as_slice().to_vec(), before, after]
        )
        .aligned()
    );

    let mut m = ctx.manifest("enhance");
    m.param("input", args.input.display())
        .param("output", args.output.display())
        .param("gains", fmt_gains(&gains, " "))
        .param("level", settings.level)
        .param("knee", fmt_num(settings.limiter.knee_start))
        .param("threshold", fmt_num(settings.limiter.peak_threshold))
        .digest("input", input.digest())
        .digest("output", read_wav(&args.output)?.digest());
    ctx.write_manifest(&m, args.output.with_extension("manifest.txt"))
}

/// Scales `noise` to `rms`; silence stays silent.
fn match_rms(noise: &AudioBuffer, rms: f64) -> CliResult<AudioBuffer> {
    if audio::energy(noise.samples()) == 0.0 {
        return Ok(noise.clone());
    }
    Ok(normalize_rms(noise, rms)?)
}

fn cmd_mix(ctx: &Context, args: &MixArgs) -> CliResult {
    if !(args.nsr >= 0.0 && args.nsr.is_finite()) {
        return Err(CliError::usage(format!(
            "--nsr must be a non-negative number, got {}",
            args.nsr
        )));
    }
    let speech = read_wav(&args.speech)?;
    let noise = read_wav(&args.noise)?;
    if speech.sample_rate_hz() != noise.sample_rate_hz() {
        return Err(AudioError::RateMismatch(speech.sample_rate_hz(), noise.sample_rate_hz()).into());
    }
    let rms = signal_stats(&speech)?.rms;
    let noise = if rms > 0.0 { match_rms(&noise, rms)? } else { noise.scaled(0.0) };
    let mixed = audio::mix_at_nsr(&speech, &noise, args.nsr)?;
    write_wav(&args.output, &mixed)?;
    println!("{}", stats_line("speech", &speech)?);
    println!("{}", stats_line("mix", &mixed)?);

    let mut m = ctx.manifest("mix");
    m.param("speech", args.speech.display())
        .param("noise", args.noise.display())
        .param("output", args.output.display())
        .param("nsr", fmt_num(args.nsr))
        .digest("speech", speech.digest())
        .digest("output", read_wav(&args.output)?.digest());
    ctx.write_manifest(&m, args.output.with_extension("manifest.txt"))
}

impl ReferenceArgs {
    fn resolve(&self, speech: &Path) -> CliResult<String> {
        if let Some(text) = &self.reference {
            return Ok(text.clone());
        }
        let path = match &self.reference_file {
            Some(p) => p.clone(),
            None => {
                let sibling = speech.with_extension("txt");
                if !sibling.exists() {
                    return Err(CliError::usage(format!(
                        "no reference transcript: pass --reference or --reference-file (looked for {})",
                        sibling.display()
                    )));
                }
                sibling
            }
        };
        std::fs::read_to_string(&path)
            .map(|s| s.trim().to_string())
            .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))
    }
}

/// One of the three transcriber implementations, chosen at run time.
pub enum AnyTranscriber {
    Fixture(FixtureTranscriber),
    Synthetic(SyntheticTranscriber),
    Http(HttpTranscriber),
}

impl Transcriber for AnyTranscriber {
    fn transcribe(&self, audio: &AudioBuffer, language: &str) -> Result<String, TranscribeError> {
        match self {
            AnyTranscriber::Fixture(t) => t.transcribe(audio, language),
            AnyTranscriber::Synthetic(t) => t.transcribe(audio, language),
            AnyTranscriber::Http(t) => t.transcribe(audio, language),
        }
    }
}

impl TranscriberArgs {
    /// `default_source` is the (already normalized) audio the synthetic
    /// target is derived from when `--target-source` is not given.
    fn build(
        &self,
        reference: &str,
        language: &str,
        settings: &EnhanceSettings,
        default_source: Option<&AudioBuffer>,
        m: &mut RunManifest,
    ) -> CliResult<AnyTranscriber> {
        m.param("transcriber", self.transcriber.as_str());
        match self.transcriber {
            TranscriberKind::Fixture => {
                let path = self
                    .fixtures
                    .as_ref()
                    .ok_or_else(|| CliError::usage("--transcriber fixture requires --fixtures"))?;
                m.param("fixtures", path.display());
                Ok(AnyTranscriber::Fixture(load_fixture_table(path)?))
            }
            TranscriberKind::Http => {
                let cfg = HttpConfig::resolve(self.asr_config.as_deref())?;
                m.param("asr_endpoint", &cfg.endpoint);
                Ok(AnyTranscriber::Http(HttpTranscriber::from_env(cfg)?))
            }
            TranscriberKind::Synthetic => {
                let bands = settings.level + 1;
                let target = if let Some(p) = &self.target_profile {
                    let v = parse_list(p).map_err(|e| CliError::usage(format!("--target-profile: {e}")))?;
                    if v.len() != bands {
                        return Err(CliError::usage(format!(
                            "--target-profile: expected {bands} values, got {}",
                            v.len()
                        )));
                    }
                    v
                } else {
                    let source = match &self.target_source {
                        Some(p) => {
                            m.param("target_source", p.display());
                            read_wav(p)?
                        }
                        None => default_source.cloned().ok_or_else(|| {
                            CliError::usage(
                                "--transcriber synthetic needs --target-profile or --target-source",
                            )
                        })?,
                    };
                    let gains = match &self.target_gains {
                        Some(g) => parse_gains(g, bands, "--target-gains")?,
                        None => GainVector::unit(bands),
                    };
                    m.param("target_gains", fmt_gains(&gains, " "));
                    let enhanced = enhancer::wavelet_enhance_with(&source, &gains, settings)?;
                    band_profile(&enhanced.audio, settings.level)?
                };
                m.param(
                    "target_profile",
                    target.iter().map(|&v| fmt_num(v)).collect::<Vec<_>>().join(" "),
                );
                m.param("half_distance", fmt_num(self.half_distance));
                if !(self.half_distance > 0.0 && self.half_distance.is_finite()) {
                    return Err(CliError::usage("--half-distance must be positive"));
                }
                Ok(AnyTranscriber::Synthetic(
                    SyntheticTranscriber::new(reference, language, target, settings.level)
                        .with_half_distance(self.half_distance),
                ))
            }
        }
    }
}

fn cmd_score(ctx: &Context, args: &ScoreArgs) -> CliResult {
    let reference = args.reference.resolve(&args.input)?;
    let audio = read_wav(&args.input)?;
    let mut m = ctx.manifest("score");
    m.param("input", args.input.display())
        .param("language", &args.reference.language)
        .param("reference", &reference);
    let transcriber = args.transcriber.build(
        &reference,
        &args.reference.language,
        &EnhanceSettings::default(),
        None,
        &mut m,
    )?;
    let hypothesis = transcriber.transcribe(&audio, &args.reference.language)?;
    let report = scorer::transcription_accuracy(&hypothesis, &reference, &args.reference.language)?;
    println!("accuracy_percent = {}", fmt_num(report.accuracy_percent));
    println!("edit_distance = {}", report.edit_distance);
    println!("reference_tokens = {}", report.reference.len());
    println!("hypothesis = {}", report.hypothesis.joined());
    println!("reference = {}", report.reference.joined());
    m.digest("input", audio.digest());
    if let Some(path) = &ctx.manifest {
        write_text(path, &m.render())?;
    }
    Ok(())
}

fn accuracy_cell(baseline: f64, enhanced: f64) -> String {
    format!("{} -> {}", fmt_num(baseline), fmt_num(enhanced))
}

fn file_stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| p.display().to_string())
}

fn cmd_optimize(ctx: &Context, args: &OptimizeArgs) -> CliResult {
    let settings = args.opts.settings()?;
    let bands = settings.level + 1;
    let nsr_grid = parse_list(&args.nsr_grid).map_err(|e| CliError::usage(format!("--nsr-grid: {e}")))?;
    let warm = args
        .warm_start
        .as_deref()
        .map(|g| parse_gains(g, bands, "--warm-start"))
        .transpose()?;
    let reference = args.reference.resolve(&args.speech)?;
    let speech_raw = read_wav(&args.speech)?;
    let noise_raw = read_wav(&args.noise)?;
    let speech = normalize_rms(&speech_raw, args.speech_rms)?;
    let noise = match_rms(&noise_raw, args.speech_rms)?;

    let mut m = ctx.manifest("optimize");
    m.param("speech", args.speech.display())
        .param("noise", args.noise.display())
        .param("scenario", args.scenario)
        .param("nsr_grid", nsr_grid.iter().map(|&v| fmt_num(v)).collect::<Vec<_>>().join(","))
        .param("gain_min", fmt_num(args.gain_min))
        .param("gain_max", fmt_num(args.gain_max))
        .param("gain_step", fmt_num(args.gain_step))
        .param("max_sweeps", args.max_sweeps)
        .param("coarse_step", args.coarse_step.map_or("none".into(), fmt_num))
        .param(
            "warm_start",
            warm.as_ref().map_or("none".into(), |g| fmt_gains(g, " ")),
        )
        .param("speech_rms", fmt_num(args.speech_rms))
        .param("level", settings.level)
        .param("knee", fmt_num(settings.limiter.knee_start))
        .param("threshold", fmt_num(settings.limiter.peak_threshold))
        .param("language", &args.reference.language)
        .param("reference", &reference)
        .param("jobs", ctx.jobs);
    let transcriber = args.transcriber.build(
        &reference,
        &args.reference.language,
        &settings,
        Some(&speech),
        &mut m,
    )?;
    m.digest("speech", speech_raw.digest()).digest("noise", noise_raw.digest());

    let config = SearchConfig {
        gain_min: args.gain_min,
        gain_max: args.gain_max,
        gain_step: args.gain_step,
        nsr_grid: nsr_grid.clone(),
        max_sweeps: args.max_sweeps,
        language: args.reference.language.clone(),
        reference_text: reference.clone(),
        enhance: settings,
        strategy: args
            .coarse_step
            .map_or(GridStrategy::Full, |coarse_step| GridStrategy::CoarseToFine { coarse_step }),
        initial_gains: warm,
    };
    config.validate()?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", args.out.display())))?;
    let dir = &args.out;
    ctx.write_manifest(&m, dir.join("manifest.txt"))?;

    let exec = RayonExecutor::new(ctx.jobs).map_err(|e| CliError::usage(e.to_string()))?;
    let result = match optimizer::greedy_optimize_with(
        &exec,
        &speech,
        &noise,
        args.scenario,
        &config,
        &transcriber,
    ) {
        Ok(r) => r,
        Err(e) => {
            if let OptimizeError::Transcriber { partial_trace, .. } = &e {
                write_text(&dir.join("trace.log"), &render_trace(partial_trace))?;
            }
            return Err(e.into());
        }
    };
    write_text(&dir.join("trace.log"), &render_trace(&result.trace))?;
    write_text(&dir.join("result.txt"), &render_result(&result))?;

    // Tables mirror the "rows = inputs, columns = interference" layout.
    let mut summary = Table::new(&["speech", &file_stem(&args.noise)]);
    summary.push(vec![
        file_stem(&args.speech),
        accuracy_cell(result.baseline_mean_accuracy, result.mean_accuracy),
    ]);
    write_text(&dir.join("table.txt"), &summary.aligned())?;
    write_text(&dir.join("table.tsv"), &summary.tsv())?;

    let mut per_nsr = Table::new(&["nsr", "baseline", "enhanced", "delta"]);
    for p in &result.per_nsr_trace {
        per_nsr.push(vec![
            fmt_num(p.nsr),
            fmt_num(p.baseline),
            fmt_num(p.enhanced),
            fmt_num(p.enhanced - p.baseline),
        ]);
    }
    write_text(&dir.join("nsr_table.txt"), &per_nsr.aligned())?;
    write_text(&dir.join("nsr_table.tsv"), &per_nsr.tsv())?;

    if args.point_to_point {
        let p2p = point_to_point(&exec, &speech, &noise, args.scenario, &config, &transcriber, &result)?;
        write_text(&dir.join("point_to_point.txt"), &p2p.aligned())?;
        write_text(&dir.join("point_to_point.tsv"), &p2p.tsv())?;
    }

    print!("{}", render_result(&result));
    print!("{}", per_nsr.aligned());
    Ok(())
}

fn point_to_point(
    exec: &RayonExecutor,
    speech: &AudioBuffer,
    noise: &AudioBuffer,
    scenario: Scenario,
    config: &SearchConfig,
    transcriber: &AnyTranscriber,
    universal: &OptimizationResult,
) -> CliResult<Table> {
    let warm = SearchConfig {
        initial_gains: Some(universal.best_gains.clone()),
        ..config.clone()
    };
    let mut t = Table::new(&["nsr", "baseline", "universal", "point_to_point", "gains"]);
    for p in &universal.per_nsr_trace {
        let r = optimizer::point_to_point_optimize_with(exec, speech, noise, p.nsr, scenario, &warm, transcriber)?;
        t.push(vec![
            fmt_num(p.nsr),
            fmt_num(p.baseline),
            fmt_num(p.enhanced),
            fmt_num(r.mean_accuracy),
            fmt_gains(&r.best_gains, ","),
        ]);
    }
    Ok(t)
}

fn cmd_simulate_hl(ctx: &Context, args: &SimulateHlArgs) -> CliResult {
    let (audiogram, source) = match (&args.audiogram, args.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
            let a = Audiogram::parse(&text)
                .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
            (a, path.display().to_string())
        }
        (None, Some(AudiogramPreset::Normal)) => (Audiogram::normal(), "preset:normal".into()),
        (None, _) => (Audiogram::sloping_moderate(), "preset:sloping".into()),
    };
    if !args.calibration.is_finite() {
        return Err(CliError::usage("--calibration must be finite"));
    }
    let recruitment = if args.no_recruitment {
        RecruitmentConfig::disabled()
    } else {
        RecruitmentConfig::default()
    };
    let input = read_wav(&args.input)?;
    let simulated = hl_sim::simulate_hearing_loss(&input, &audiogram, &recruitment, args.calibration)?;
    let input_energy = audio::energy(input.samples());
    let output = if input_energy == 0.0 {
        simulated
    } else {
        normalize_energy(&simulated, input_energy).map_err(|e| match e {
            AudioError::AllZero => CliError::new(
                EXIT_NUMERIC,
                "simulated output is silent: every component fell below the shifted threshold",
            ),
            other => other.into(),
        })?
    };
    write_wav(&args.output, &output)?;

    let bands = hl_sim::octave_bands(input.sample_rate_hz());
    let before = hl_sim::band_energies(&input, &bands);
    let after = hl_sim::band_energies(&output, &bands);
    let total_before: f64 = before.iter().sum();
    let total_after: f64 = after.iter().sum();
    let rel_db = |e: f64, total: f64| {
        if e > 0.0 && total > 0.0 {
            fmt_num(10.0 * (e / total).log10())
        } else {
            "-inf".into()
        }
    };
    let mut t = Table::new(&["band_hz", "loss_db", "input_db", "output_db", "change_db"]);
    for (i, &f) in hl_sim::OCTAVE_FREQUENCIES.iter().enumerate() {
        let change = if before[i] > 0.0 && after[i] > 0.0 {
            fmt_num(10.0 * (after[i] / before[i]).log10())
        } else {
            "-inf".into()
        };
        t.push(vec![
            fmt_num(f),
            fmt_num(audiogram.loss_at(f)),
            rel_db(before[i], total_before),
            rel_db(after[i], total_after),
            change,
        ]);
    }
    print!("{}", t.aligned());

    let mut m = ctx.manifest("simulate-hl");
    m.param("input", args.input.display())
        .param("output", args.output.display())
        .param("audiogram", source)
        .param(
            "audiogram_points",
            audiogram
                .points()
                .iter()
                .map(|(f, l)| format!("{}:{}", fmt_num(*f), fmt_num(*l)))
                .collect::<Vec<_>>()
                .join(","),
        )
        .param("recruitment", recruitment.enabled)
        .param("calibration_db_spl", fmt_num(args.calibration))
        .digest("input", input.digest())
        .digest("output", read_wav(&args.output)?.digest());
    ctx.write_manifest(&m, args.output.with_extension("manifest.txt"))
}

fn cmd_spectrogram(ctx: &Context, args: &SpectrogramArgs) -> CliResult {
    let audio = read_wav(&args.input)?;
    let s = spectrogram::spectrogram(&audio, args.frame, args.hop)?;
    if !(args.floor_db < 0.0) {
        return Err(CliError::usage("--floor-db must be negative"));
    }
    let image = args.image.clone().unwrap_or_else(|| args.input.with_extension("pgm"));
    let matrix = args
        .matrix
        .clone()
        .unwrap_or_else(|| args.input.with_extension("spectrogram.txt"));
    write_bytes(&image, &s.to_pgm(args.floor_db))?;
    write_text(&matrix, &s.to_matrix_text())?;
    println!("bins = {}", s.bins);
    println!("frames = {}", s.frames);

    let mut m = ctx.manifest("spectrogram");
    m.param("input", args.input.display())
        .param("frame", args.frame)
        .param("hop", args.hop)
        .param("floor_db", fmt_num(args.floor_db))
        .param("image", image.display())
        .param("matrix", matrix.display())
        .digest("input", audio.digest());
    ctx.write_manifest(&m, manifest_path(&None, &image))
}

fn cmd_digest(args: &DigestArgs) -> CliResult {
    for p in &args.inputs {
        let a = read_wav(p)?;
        println!("{}  {}", a.digest(), p.display());
    }
    Ok(())
}

fn cmd_serve_stub(args: &ServeStubArgs) -> CliResult {
    let fixtures = match &args.fixtures {
        Some(p) => load_fixture_table(p)?,
        None => FixtureTranscriber::new(),
    };
    let leading_failures = match &args.fail_first {
        Some(s) => parse_list(s)
            .map_err(|e| CliError::usage(format!("--fail-first: {e}")))?
            .into_iter()
            .map(|v| v as u16)
            .collect(),
        None => Vec::new(),
    };
    let server = StubServer::start(
        &args.addr,
        StubBehavior {
            fixtures,
            default_transcript: args.default_transcript.clone(),
            leading_failures,
            no_alternatives: args.no_alternatives,
            required_token: None,
        },
    )
    .map_err(|e| CliError::io(format!("cannot listen on {}: {e}", args.addr)))?;
    println!("listening on {}", server.url());
    server.join();
    Ok(())
}

fn cmd_replay(args: &ReplayArgs) -> CliResult {
    let text = std::fs::read_to_string(&args.manifest)
        .map_err(|e| CliError::io(format!("cannot read {}: {e}", args.manifest.display())))?;
    let m = RunManifest::parse(&text)
        .ok_or_else(|| CliError::io(format!("{}: not a run manifest", args.manifest.display())))?;
    let argv: Vec<String> = m
        .get("argv")
        .and_then(|a| serde_json::from_str(a).ok())
        .ok_or_else(|| CliError::io(format!("{}: no argv entry", args.manifest.display())))?;
    if argv.iter().any(|a| a == "replay") {
        return Err(CliError::usage("refusing to replay a replay"));
    }
    let code = run(std::iter::once("subband".to_string()).chain(argv));
    if code == EXIT_OK {
        Ok(())
    } else {
        Err(CliError::new(code, format!("replayed command failed with exit code {code}")))
    }
}

fn dispatch(cli: &Cli, argv: Vec<String>) -> CliResult {
    let ctx = Context {
        argv,
        jobs: cli.jobs.filter(|&j| j > 0).unwrap_or_else(default_jobs),
        manifest: cli.manifest.clone(),
    };
    match &cli.command {
        Command::Enhance(a) => cmd_enhance(&ctx, a),
        Command::Mix(a) => cmd_mix(&ctx, a),
        Command::Score(a) => cmd_score(&ctx, a),
        Command::Optimize(a) => cmd_optimize(&ctx, a),
        Command::SimulateHl(a) => cmd_simulate_hl(&ctx, a),
        Command::Spectrogram(a) => cmd_spectrogram(&ctx, a),
        Command::Digest(a) => cmd_digest(a),
        Command::ServeStub(a) => cmd_serve_stub(a),
        Command::Replay(a) => cmd_replay(a),
    }
}

/// Runs the tool on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let argv = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match dispatch(&cli, argv) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("subband: error: {e}");
            e.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn list_parsing() {
        assert_eq!(parse_list("1, 0.5 2.1,3.1  0.3,0.5").unwrap(), vec![1.0, 0.5, 2.1, 3.1, 0.3, 0.5]);
        assert!(parse_list("1,x").is_err());
    }

    #[test]
    fn gains_positional_and_named() {
        let cli = Cli::try_parse_from(["subband", "enhance", "a.wav", "b.wav", "1 0.5 2.1 3.1 0.3 0.5"]).unwrap();
        let Command::Enhance(a) = cli.command else { panic!() };
        assert_eq!(a.gains.resolve(5).unwrap().as_slice(), &[1.0, 0.5, 2.1, 3.1, 0.3, 0.5]);

        let cli = Cli::try_parse_from(["subband", "enhance", "a.wav", "b.wav", "--cd3=3.1", "--cd2", "0.3"]).unwrap();
        let Command::Enhance(a) = cli.command else { panic!() };
        assert_eq!(a.gains.resolve(5).unwrap().as_slice(), &[1.0, 1.0, 1.0, 3.1, 0.3, 1.0]);
        assert_eq!(a.gains.resolve(4).unwrap_err().code, EXIT_USAGE);

        let cli = Cli::try_parse_from(["subband", "enhance", "a.wav", "b.wav", "1", "2"]).unwrap();
        let Command::Enhance(a) = cli.command else { panic!() };
        assert_eq!(a.gains.resolve(5).unwrap_err().code, EXIT_USAGE);
    }

    #[test]
    fn error_codes() {
        assert_eq!(CliError::from(TranscribeError::Config("x".into())).code, EXIT_USAGE);
        assert_eq!(
            CliError::from(TranscribeError::Status { status: 500, body: String::new() }).code,
            EXIT_EXTERNAL
        );
        assert_eq!(CliError::from(EnhanceError::DegenerateGains).code, EXIT_NUMERIC);
        assert_eq!(CliError::from(AudioError::BadNsr(-1.0)).code, EXIT_USAGE);
        assert_eq!(run(["subband", "no-such-command"]), EXIT_USAGE);
        assert_eq!(run(["subband", "--help"]), EXIT_OK);
    }
}
