use std::time::Duration;

use subband::asr::{HttpConfig, HttpTranscriber};
use subband::stub::{transport_digest, StubBehavior, StubServer};
use subband_core::scorer::transcription_accuracy;
use subband_core::{AudioBuffer, FixtureTranscriber, TranscribeError, Transcriber};

const TOKEN: &str = "test-token";

fn clip() -> AudioBuffer {
    let x = (0..1600).map(|i| 0.3 * (i as f64 * 0.05).sin()).collect();
    AudioBuffer::new(x, 16_000).unwrap()
}

fn stub(behavior: StubBehavior) -> StubServer {
    StubServer::start(
        "127.0.0.1:0",
        StubBehavior {
            required_token: Some(TOKEN.into()),
            ..behavior
        },
    )
    .unwrap()
}

fn client(server: &StubServer, token: &str) -> HttpTranscriber {
    let config = HttpConfig {
        endpoint: server.url(),
        initial_backoff: Duration::from_millis(10),
        max_backoff: Duration::from_millis(40),
        timeout: Duration::from_secs(10),
        ..Default::default()
    };
    HttpTranscriber::new(config, token).unwrap()
}

fn fixtures(audio: &AudioBuffer, text: &str) -> FixtureTranscriber {
    let mut f = FixtureTranscriber::new();
    f.insert(transport_digest(audio), text);
    f
}

#[test]
fn transient_failure_is_retried_once() {
    let a = clip();
    let server = stub(StubBehavior {
        fixtures: fixtures(&a, "open the window"),
        leading_failures: vec![503],
        ..Default::default()
    });
    let c = client(&server, TOKEN);
    assert_eq!(c.transcribe(&a, "en").unwrap(), "open the window");
    let log = c.request_log();
    assert_eq!(log.len(), 1);
    assert_eq!(log[0].retries, 1);
    assert_eq!(log[0].attempts, 2);
    assert!(log[0].ok);
    assert_eq!(server.request_count(), 2);
}

#[test]
fn retries_give_up_after_the_limit() {
    let a = clip();
    let server = stub(StubBehavior {
        fixtures: fixtures(&a, "hello"),
        leading_failures: vec![503, 429, 500, 502, 503],
        ..Default::default()
    });
    let c = client(&server, TOKEN);
    match c.transcribe(&a, "en") {
        Err(TranscribeError::Status { status: 502, .. }) => {}
        other => panic!("{other:?}"),
    }
    assert_eq!(server.request_count(), 4);
}

#[test]
fn client_errors_are_not_retried() {
    let a = clip();
    let server = stub(StubBehavior {
        leading_failures: vec![400],
        ..Default::default()
    });
    let c = client(&server, TOKEN);
    assert!(matches!(c.transcribe(&a, "en"), Err(TranscribeError::Status { status: 400, .. })));
    assert_eq!(server.request_count(), 1);
}

#[test]
fn missing_credential_is_a_configuration_error() {
    let config = HttpConfig {
        endpoint: "http://127.0.0.1:9/v1/speech:recognize".into(),
        ..Default::default()
    };
    assert!(matches!(HttpTranscriber::new(config, ""), Err(TranscribeError::Config(_))));
}

#[test]
fn wrong_credential_is_rejected() {
    let a = clip();
    let server = stub(StubBehavior::default());
    let c = client(&server, "not-the-token");
    let err = c.transcribe(&a, "en").unwrap_err();
    assert!(matches!(err, TranscribeError::Status { status: 401, .. }));
    assert!(err.is_external());
}

#[test]
fn zero_alternatives_score_zero() {
    let a = clip();
    let server = stub(StubBehavior {
        no_alternatives: true,
        ..Default::default()
    });
    let c = client(&server, TOKEN);
    let r = c.recognize(&a, "en").unwrap();
    assert!(r.no_hypotheses);
    assert_eq!(r.transcript, "");
    assert_eq!(transcription_accuracy(&r.transcript, "open the window", "en").unwrap().accuracy_percent, 0.0);
}

#[test]
fn unknown_audio_has_no_results() {
    let server = stub(StubBehavior::default());
    let c = client(&server, TOKEN);
    let r = c.recognize(&clip(), "en").unwrap();
    assert!(r.no_hypotheses);
}

#[test]
fn unreachable_endpoint_is_a_network_error() {
    let server = stub(StubBehavior::default());
    let url = server.url();
    drop(server);
    let config = HttpConfig {
        endpoint: url,
        max_retries: 1,
        initial_backoff: Duration::from_millis(1),
        timeout: Duration::from_secs(2),
        ..Default::default()
    };
    let c = HttpTranscriber::new(config, TOKEN).unwrap();
    match c.transcribe(&clip(), "en") {
        Err(TranscribeError::Network { attempts: 2, .. }) => {}
        other => panic!("{other:?}"),
    }
}
