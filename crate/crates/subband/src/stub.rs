//! Local recognizer implementing the same `recognize` contract as
//! [`crate::asr`], for tests and offline runs.
//!
//! The request audio is decoded from base64 PCM back to samples (÷32767),
//! digested, and looked up in a fixture table. Unknown audio gets the
//! default transcript if one is set, otherwise a response with no results.
//! A scripted list of status codes can be returned for the first requests.

use std::collections::VecDeque;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use base64::Engine as _;
use serde::Deserialize;
use subband_core::{AudioBuffer, AudioDigest, FixtureTranscriber, Transcriber};
use tiny_http::{Header, Response, Server};

#[derive(Debug, Clone, Default)]
pub struct StubBehavior {
    pub fixtures: FixtureTranscriber,
    /// Transcript for audio not in the table; `None` answers with no results.
    pub default_transcript: Option<String>,
    /// Status codes returned, in order, before normal service starts.
    pub leading_failures: Vec<u16>,
    /// Always answer with a result that has zero alternatives.
    pub no_alternatives: bool,
    /// If set, requests must carry `Authorization: Bearer <token>`.
    pub required_token: Option<String>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Config {
    sample_rate_hertz: u32,
    #[allow(dead_code)]
    language_code: String,
}

#[derive(Deserialize)]
struct Audio {
    content: String,
}

#[derive(Deserialize)]
struct Request {
    config: Config,
    audio: Audio,
}

/// Samples exactly as a client quantized them, read back at 1/32767.
pub fn decode_pcm(content_b64: &str, sample_rate_hz: u32) -> Result<AudioBuffer, String> {
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(content_b64)
        .map_err(|e| format!("bad base64: {e}"))?;
    if bytes.len() % 2 != 0 {
        return Err("odd PCM byte count".into());
    }
    let samples = bytes
        .chunks_exact(2)
        .map(|b| (i16::from_le_bytes([b[0], b[1]]) as f64 / 32767.0).clamp(-1.0, 1.0))
        .collect();
    AudioBuffer::new(samples, sample_rate_hz).map_err(|e| e.to_string())
}

fn json_response(status: u16, body: String) -> Response<std::io::Cursor<Vec<u8>>> {
    let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
    Response::from_string(body).with_status_code(status).with_header(header)
}

fn error_body(status: u16, message: &str) -> String {
    serde_json::json!({"error": {"code": status, "message": message}}).to_string()
}

struct Shared {
    behavior: StubBehavior,
    failures: Mutex<VecDeque<u16>>,
    requests: AtomicUsize,
}

impl Shared {
    fn respond(&self, body: &str, auth: Option<&str>) -> (u16, String) {
        self.requests.fetch_add(1, Ordering::SeqCst);
        if let Some(status) = self.failures.lock().unwrap_or_else(|e| e.into_inner()).pop_front() {
            return (status, error_body(status, "scripted failure"));
        }
        if let Some(token) = &self.behavior.required_token {
            if auth != Some(format!("Bearer {token}").as_str()) {
                return (401, error_body(401, "missing or invalid credential"));
            }
        }
        let req: Request = match serde_json::from_str(body) {
            Ok(r) => r,
            Err(e) => return (400, error_body(400, &e.to_string())),
        };
        let audio = match decode_pcm(&req.audio.content, req.config.sample_rate_hertz) {
            Ok(a) => a,
            Err(e) => return (400, error_body(400, &e)),
        };
        if self.behavior.no_alternatives {
            return (200, r#"{"results":[{"alternatives":[]}]}"#.into());
        }
        let transcript = self
            .behavior
            .fixtures
            .transcribe(&audio, "")
            .ok()
            .or_else(|| self.behavior.default_transcript.clone());
        let body = match transcript {
            Some(t) => serde_json::json!({
                "results": [{"alternatives": [{"transcript": t, "confidence": 1.0}]}]
            })
            .to_string(),
            None => "{}".into(),
        };
        (200, body)
    }
}

/// A running stub; stops when dropped.
pub struct StubServer {
    addr: SocketAddr,
    server: Arc<Server>,
    shared: Arc<Shared>,
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
}

impl StubServer {
    /// Binds `addr` (use port 0 for an ephemeral port) and serves in a
    /// background thread.
    pub fn start(addr: &str, behavior: StubBehavior) -> std::io::Result<Self> {
        let server = Server::http(addr).map_err(|e| std::io::Error::other(e.to_string()))?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("not an IP listener"))?;
        let server = Arc::new(server);
        let shared = Arc::new(Shared {
            failures: Mutex::new(behavior.leading_failures.iter().copied().collect()),
            behavior,
            requests: AtomicUsize::new(0),
        });
        let stop = Arc::new(AtomicBool::new(false));
        let thread = {
            let (server, shared, stop) = (server.clone(), shared.clone(), stop.clone());
            std::thread::spawn(move || serve(&server, &shared, &stop))
        };
        Ok(Self {
            addr,
            server,
            shared,
            stop,
            thread: Some(thread),
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn url(&self) -> String {
        format!("http://{}/v1/speech:recognize", self.addr)
    }

    /// Requests received so far, including scripted failures.
    pub fn request_count(&self) -> usize {
        self.shared.requests.load(Ordering::SeqCst)
    }

    /// Serve on the calling thread until the process is killed.
    pub fn join(mut self) {
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

fn serve(server: &Server, shared: &Shared, stop: &AtomicBool) {
    while !stop.load(Ordering::SeqCst) {
        let mut request = match server.recv_timeout(Duration::from_millis(50)) {
            Ok(Some(r)) => r,
            Ok(None) => continue,
            Err(_) => break,
        };
        let auth = request
            .headers()
            .iter()
            .find(|h| h.field.equiv("Authorization"))
            .map(|h| h.value.as_str().to_string());
        let mut body = String::new();
        let (status, text) = if request.as_reader().read_to_string(&mut body).is_err() {
            (400, error_body(400, "unreadable body"))
        } else if request.method() != &tiny_http::Method::Post {
            (405, error_body(405, "POST only"))
        } else {
            shared.respond(&body, auth.as_deref())
        };
        let _ = request.respond(json_response(status, text));
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        self.server.unblock();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Digest a client would produce for this audio after 16-bit transport.
pub fn transport_digest(audio: &AudioBuffer) -> AudioDigest {
    let round_trip: Vec<f64> = audio
        .samples()
        .iter()
        .map(|&s| crate::wav::quantize_i16(s) as f64 / 32767.0)
        .collect();
    AudioBuffer::new(round_trip, audio.sample_rate_hz())
        .expect("finite")
        .digest()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asr::encode_request;

    #[test]
    fn pcm_round_trip_matches_transport_digest() {
        let a = AudioBuffer::new(vec![0.1, -0.2, 0.333, 1.2], 8000).unwrap();
        let body: serde_json::Value = serde_json::from_str(&encode_request(&a, "en")).unwrap();
        let decoded = decode_pcm(body["audio"]["content"].as_str().unwrap(), 8000).unwrap();
        assert_eq!(decoded.digest(), transport_digest(&a));
        assert_eq!(decoded.samples()[3], 1.0);
    }

    #[test]
    fn scripted_responses() {
        let a = AudioBuffer::new(vec![0.5; 10], 8000).unwrap();
        let mut fixtures = FixtureTranscriber::new();
        fixtures.insert(transport_digest(&a), "hello");
        let shared = Shared {
            failures: Mutex::new([503].into_iter().collect()),
            behavior: StubBehavior {
                fixtures,
                ..Default::default()
            },
            requests: AtomicUsize::new(0),
        };
        let body = encode_request(&a, "en");
        assert_eq!(shared.respond(&body, None).0, 503);
        let (status, text) = shared.respond(&body, None);
        assert_eq!(status, 200);
        assert!(text.contains("hello"));
        let other = encode_request(&AudioBuffer::new(vec![0.1; 10], 8000).unwrap(), "en");
        assert_eq!(shared.respond(&other, None), (200, "{}".to_string()));
        assert_eq!(shared.respond("nope", None).0, 400);
        assert_eq!(shared.requests.load(Ordering::SeqCst), 4);
    }
}
