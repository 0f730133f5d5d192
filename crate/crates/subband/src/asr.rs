//! HTTP speech-recognition client.
//!
//! Speaks the `recognize` contract of the Google Cloud Speech-to-Text v1 API:
//!
//! ```text
//! POST <endpoint>
//! {"config": {"encoding": "LINEAR16", "sampleRateHertz": 44100,
//!             "languageCode": "en-US", "audioChannelCount": 1},
//!  "audio":  {"content": "<base64 little-endian 16-bit PCM>"}}
//!
//! 200 {"results": [{"alternatives": [{"transcript": "...", "confidence": 0.9}]}]}
//! ```
//!
//! The transcript is the concatenation of the top alternative of every
//! result. The endpoint comes from a config file or `SUBBAND_ASR_URL`; the
//! credential only ever comes from `SUBBAND_ASR_TOKEN`.

use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use subband_core::{AudioBuffer, TranscribeError, Transcriber};

use crate::wav::quantize_i16;

pub const ENV_URL: &str = "SUBBAND_ASR_URL";
pub const ENV_TOKEN: &str = "SUBBAND_ASR_TOKEN";
pub const DEFAULT_ENDPOINT: &str = "https://speech.googleapis.com/v1/speech:recognize";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuthScheme {
    /// `Authorization: Bearer <token>` (OAuth access token).
    Bearer,
    /// `X-Goog-Api-Key: <token>`.
    ApiKey,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpConfig {
    pub endpoint: String,
    pub auth: AuthScheme,
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    pub timeout: Duration,
    pub max_in_flight: usize,
    /// Longest audio accepted, in seconds (synchronous recognition limit).
    pub max_duration_secs: f64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            endpoint: DEFAULT_ENDPOINT.into(),
            auth: AuthScheme::Bearer,
            max_retries: 3,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(8),
            timeout: Duration::from_secs(60),
            max_in_flight: 4,
            max_duration_secs: 60.0,
        }
    }
}

fn config_error(msg: impl Into<String>) -> TranscribeError {
    TranscribeError::Config(msg.into())
}

impl HttpConfig {
    /// `key = value` lines. Recognized keys: `endpoint`, `auth` (`bearer` or
    /// `api-key`), `max_retries`, `initial_backoff_ms`, `max_backoff_ms`,
    /// `timeout_ms`, `max_in_flight`, `max_duration_secs`. Credentials are
    /// refused here on purpose; they must come from the environment.
    pub fn parse(text: &str) -> Result<Self, TranscribeError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| config_error(format!("line {}: expected key = value", i + 1)))?;
            let num = |v: &str| -> Result<u64, TranscribeError> {
                v.parse()
                    .map_err(|_| config_error(format!("line {}: bad number '{v}'", i + 1)))
            };
            match key {
                "endpoint" | "url" => cfg.endpoint = value.to_string(),
                "auth" => {
                    cfg.auth = match value {
                        "bearer" => AuthScheme::Bearer,
                        "api-key" => AuthScheme::ApiKey,
                        other => return Err(config_error(format!("unknown auth scheme '{other}'"))),
                    }
                }
                "max_retries" => cfg.max_retries = num(value)? as u32,
                "initial_backoff_ms" => cfg.initial_backoff = Duration::from_millis(num(value)?),
                "max_backoff_ms" => cfg.max_backoff = Duration::from_millis(num(value)?),
                "timeout_ms" => cfg.timeout = Duration::from_millis(num(value)?),
                "max_in_flight" => cfg.max_in_flight = num(value)?.max(1) as usize,
                "max_duration_secs" => {
                    cfg.max_duration_secs = value
                        .parse()
                        .map_err(|_| config_error(format!("line {}: bad number '{value}'", i + 1)))?
                }
                "token" | "credential" | "api_key" | "key" => {
                    return Err(config_error(format!(
                        "credentials are not accepted in config files; set {ENV_TOKEN}"
                    )))
                }
                other => return Err(config_error(format!("line {}: unknown key '{other}'", i + 1))),
            }
        }
        Ok(cfg)
    }

    /// Config file if given, otherwise defaults; `SUBBAND_ASR_URL` overrides
    /// the endpoint only when no file sets one.
    pub fn resolve(file: Option<&Path>) -> Result<Self, TranscribeError> {
        let from_file = match file {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| config_error(format!("cannot read {}: {e}", p.display())))?;
                Some(Self::parse(&text)?)
            }
            None => None,
        };
        let file_sets_endpoint = from_file
            .as_ref()
            .is_some_and(|c| c.endpoint != DEFAULT_ENDPOINT);
        let mut cfg = from_file.unwrap_or_default();
        if !file_sets_endpoint {
            if let Ok(url) = std::env::var(ENV_URL) {
                if !url.trim().is_empty() {
                    cfg.endpoint = url.trim().to_string();
                }
            }
        }
        Ok(cfg)
    }
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct RecognitionConfig<'a> {
    encoding: &'a str,
    sample_rate_hertz: u32,
    language_code: &'a str,
    audio_channel_count: u32,
}

#[derive(Serialize)]
struct RecognitionAudio {
    content: String,
}

#[derive(Serialize)]
struct RecognizeRequest<'a> {
    config: RecognitionConfig<'a>,
    audio: RecognitionAudio,
}

#[derive(Deserialize)]
struct RecognizeResponse {
    #[serde(default)]
    results: Vec<RecognitionResult>,
}

#[derive(Deserialize)]
struct RecognitionResult {
    #[serde(default)]
    alternatives: Vec<Alternative>,
}

#[derive(Deserialize)]
struct Alternative {
    #[serde(default)]
    transcript: String,
}

/// Request body for `audio` in the recognize contract.
pub fn encode_request(audio: &AudioBuffer, language: &str) -> String {
    let mut pcm = Vec::with_capacity(audio.len() * 2);
    for &s in audio.samples() {
        pcm.extend_from_slice(&quantize_i16(s).to_le_bytes());
    }
    let req = RecognizeRequest {
        config: RecognitionConfig {
            encoding: "LINEAR16",
            sample_rate_hertz: audio.sample_rate_hz(),
            language_code: language,
            audio_channel_count: 1,
        },
        audio: RecognitionAudio {
            content: base64::engine::general_purpose::STANDARD.encode(pcm),
        },
    };
    serde_json::to_string(&req).expect("serializable")
}

/// Parsed recognizer reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recognition {
    pub transcript: String,
    /// The service answered but offered no alternatives at all.
    pub no_hypotheses: bool,
}

pub fn decode_response(body: &str) -> Result<Recognition, TranscribeError> {
    let resp: RecognizeResponse = serde_json::from_str(body)
        .map_err(|e| TranscribeError::MalformedResponse(e.to_string()))?;
    let parts: Vec<&str> = resp
        .results
        .iter()
        .filter_map(|r| r.alternatives.first())
        .map(|a| a.transcript.trim())
        .collect();
    Ok(Recognition {
        no_hypotheses: parts.is_empty(),
        transcript: parts.join(" "),
    })
}

/// One `recognize` call as seen by the client, after retries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestRecord {
    pub attempts: u32,
    pub retries: u32,
    /// HTTP status of the last attempt, if any response arrived.
    pub status: Option<u16>,
    pub ok: bool,
}

struct InFlight {
    count: Mutex<usize>,
    freed: Condvar,
    limit: usize,
}

impl InFlight {
    fn acquire(&self) -> InFlightGuard<'_> {
        let mut n = self.count.lock().unwrap_or_else(|e| e.into_inner());
        while *n >= self.limit {
            n = self.freed.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n += 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut n = self.0.count.lock().unwrap_or_else(|e| e.into_inner());
        *n -= 1;
        self.0.freed.notify_one();
    }
}

fn is_transient(status: u16) -> bool {
    matches!(status, 408 | 429 | 500 | 502 | 503 | 504)
}

pub struct HttpTranscriber {
    config: HttpConfig,
    token: String,
    agent: ureq::Agent,
    in_flight: InFlight,
    log: Mutex<Vec<RequestRecord>>,
}

impl HttpTranscriber {
    pub fn new(config: HttpConfig, token: impl Into<String>) -> Result<Self, TranscribeError> {
        let token = token.into();
        if token.trim().is_empty() {
            return Err(config_error(format!("missing credential: {ENV_TOKEN} is empty")));
        }
        if !(config.endpoint.starts_with("http://") || config.endpoint.starts_with("https://")) {
            return Err(config_error(format!("endpoint '{}' is not an http(s) URL", config.endpoint)));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let limit = config.max_in_flight.max(1);
        Ok(Self {
            config,
            token,
            agent,
            in_flight: InFlight {
                count: Mutex::new(0),
                freed: Condvar::new(),
                limit,
            },
            log: Mutex::new(Vec::new()),
        })
    }

    /// Credential from `SUBBAND_ASR_TOKEN`; fails before any network traffic
    /// when it is missing.
    pub fn from_env(config: HttpConfig) -> Result<Self, TranscribeError> {
        let token = std::env::var(ENV_TOKEN)
            .map_err(|_| config_error(format!("missing credential: set {ENV_TOKEN}")))?;
        Self::new(config, token)
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    pub fn request_log(&self) -> Vec<RequestRecord> {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn backoff(&self, retry: u32) -> Duration {
        let factor = 2u32.saturating_pow(retry.saturating_sub(1));
        self.config
            .initial_backoff
            .saturating_mul(factor)
            .min(self.config.max_backoff)
    }

    fn post(&self, body: &str) -> Result<(u16, String), String> {
        let req = self.agent.post(&self.config.endpoint).header("Content-Type", "application/json");
        let req = match self.config.auth {
            AuthScheme::Bearer => req.header("Authorization", &format!("Bearer {}", self.token)),
            AuthScheme::ApiKey => req.header("X-Goog-Api-Key", &self.token),
        };
        let resp = req.send(body).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let text = resp
            .into_body()
            .read_to_string()
            .map_err(|e| e.to_string())?;
        Ok((status, text))
    }

    fn log(&self, record: RequestRecord) {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).push(record);
    }

    pub fn recognize(&self, audio: &AudioBuffer, language: &str) -> Result<Recognition, TranscribeError> {
        if audio.duration_secs() > self.config.max_duration_secs {
            return Err(TranscribeError::Audio(format!(
                "{:.1} s exceeds the {:.1} s limit",
                audio.duration_secs(),
                self.config.max_duration_secs
            )));
        }
        let body = encode_request(audio, language);
        let _slot = self.in_flight.acquire();
        let mut attempts = 0;
        loop {
            attempts += 1;
            let retries = attempts - 1;
            let can_retry = retries < self.config.max_retries;
            let outcome = self.post(&body);
            let failure = match outcome {
                Ok((200..=299, text)) => {
                    let parsed = decode_response(&text);
                    self.log(RequestRecord {
                        attempts,
                        retries,
                        status: Some(200),
                        ok: parsed.is_ok(),
                    });
                    return parsed;
                }
                Ok((status, text)) if !is_transient(status) || !can_retry => {
                    self.log(RequestRecord {
                        attempts,
                        retries,
                        status: Some(status),
                        ok: false,
                    });
                    return Err(TranscribeError::Status {
                        status,
                        body: text.chars().take(500).collect(),
                    });
                }
                Ok(_) => None,
                Err(message) if !can_retry => Some(message),
                Err(_) => None,
            };
            if let Some(message) = failure {
                self.log(RequestRecord {
                    attempts,
                    retries,
                    status: None,
                    ok: false,
                });
                return Err(TranscribeError::Network { attempts, message });
            }
            std::thread::sleep(self.backoff(attempts));
        }
    }
}

impl Transcriber for HttpTranscriber {
    fn transcribe(&self, audio: &AudioBuffer, language: &str) -> Result<String, TranscribeError> {
        self.recognize(audio, language).map(|r| r.transcript)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn response_decoding() {
        let r = decode_response(
            r#"{"results":[{"alternatives":[{"transcript":"hello","confidence":0.9},{"transcript":"yellow"}]},
                          {"alternatives":[{"transcript":" world"}]}]}"#,
        )
        .unwrap();
        assert_eq!(r.transcript, "hello world");
        assert!(!r.no_hypotheses);

        let r = decode_response("{}").unwrap();
        assert!(r.no_hypotheses);
        assert_eq!(r.transcript, "");
        let r = decode_response(r#"{"results":[{"alternatives":[]}]}"#).unwrap();
        assert!(r.no_hypotheses);

        assert!(matches!(
            decode_response("<html>"),
            Err(TranscribeError::MalformedResponse(_))
        ));
        assert!(matches!(
            decode_response(r#"{"results": 3}"#),
            Err(TranscribeError::MalformedResponse(_))
        ));
    }

    #[test]
    fn request_encoding() {
        let a = AudioBuffer::new(vec![0.0, 1.0, -1.0], 16_000).unwrap();
        let body = encode_request(&a, "en-US");
        let v: serde_json::Value = serde_json::from_str(&body).unwrap();
        assert_eq!(v["config"]["encoding"], "LINEAR16");
        assert_eq!(v["config"]["sampleRateHertz"], 16_000);
        assert_eq!(v["config"]["languageCode"], "en-US");
        let pcm = base64::engine::general_purpose::STANDARD
            .decode(v["audio"]["content"].as_str().unwrap())
            .unwrap();
        assert_eq!(pcm, vec![0, 0, 0xff, 0x7f, 0x01, 0x80]);
    }

    #[test]
    fn config_file() {
        let c = HttpConfig::parse("endpoint = http://localhost:9/x\nmax_retries = 5\nauth = api-key\n").unwrap();
        assert_eq!(c.endpoint, "http://localhost:9/x");
        assert_eq!(c.max_retries, 5);
        assert_eq!(c.auth, AuthScheme::ApiKey);
        assert!(HttpConfig::parse("token = abc").is_err());
        assert!(HttpConfig::parse("bogus = 1").is_err());
        assert!(HttpConfig::parse("max_retries = many").is_err());
    }

    #[test]
    fn empty_credential_rejected() {
        assert!(matches!(
            HttpTranscriber::new(HttpConfig::default(), "  "),
            Err(TranscribeError::Config(_))
        ));
    }

    #[test]
    fn backoff_grows_and_caps() {
        let t = HttpTranscriber::new(
            HttpConfig {
                initial_backoff: Duration::from_millis(100),
                max_backoff: Duration::from_millis(350),
                ..Default::default()
            },
            "t",
        )
        .unwrap();
        assert_eq!(t.backoff(1), Duration::from_millis(100));
        assert_eq!(t.backoff(2), Duration::from_millis(200));
        assert_eq!(t.backoff(3), Duration::from_millis(350));
    }
}
