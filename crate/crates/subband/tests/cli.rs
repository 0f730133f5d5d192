use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use subband::stub::{StubBehavior, StubServer};
use subband::wav::read_wav;

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn subband(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subband"))
        .current_dir(dir)
        .env_remove("SUBBAND_ASR_TOKEN")
        .env_remove("SUBBAND_ASR_URL")
        .env_remove("SUBBAND_JOBS")
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn speech() -> String {
    data("speech.wav").display().to_string()
}

#[test]
fn enhance_writes_audio_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let o = subband(dir.path(), &["enhance", &speech(), "out.wav", "1", "0.5", "2.1", "3.1", "0.3", "0.5"]);
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("limiter_engaged = false"));
    let out = read_wav(dir.path().join("out.wav")).unwrap();
    assert_eq!(out.len(), read_wav(data("speech.wav")).unwrap().len());
    let manifest = std::fs::read_to_string(dir.path().join("out.manifest.txt")).unwrap();
    assert!(manifest.contains("command = enhance"));
    assert!(manifest.contains("param.gains = 1 0.5 2.1 3.1 0.3 0.5"));
}

#[test]
fn named_gain_flags_match_positional_gains() {
    let dir = tempfile::tempdir().unwrap();
    let a = subband(dir.path(), &["enhance", &speech(), "a.wav", "1,1,1,2.5,1,1"]);
    let b = subband(dir.path(), &["enhance", &speech(), "b.wav", "--cd3", "2.5"]);
    assert!(a.status.success() && b.status.success());
    let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
    assert_eq!(read("a.wav"), read("b.wav"));
}

#[test]
fn replay_reproduces_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let o = subband(dir.path(), &["enhance", &speech(), "out.wav", "0.8", "1", "1.4", "2", "1", "0.7"]);
    assert!(o.status.success());
    let first = std::fs::read(dir.path().join("out.wav")).unwrap();
    std::fs::remove_file(dir.path().join("out.wav")).unwrap();
    let r = subband(dir.path(), &["replay", "out.manifest.txt"]);
    assert!(r.status.success(), "{r:?}");
    assert_eq!(std::fs::read(dir.path().join("out.wav")).unwrap(), first);
}

#[test]
fn score_with_fixture_table() {
    let dir = tempfile::tempdir().unwrap();
    let d = subband(dir.path(), &["digest", &speech()]);
    let digest = stdout(&d).split_whitespace().next().unwrap().to_string();
    std::fs::write(dir.path().join("fixtures.txt"), format!("# table\n{digest} the birch canoe slid\n")).unwrap();
    let o = subband(
        dir.path(),
        &["score", "--transcriber", "fixture", "--fixtures", "fixtures.txt", "--reference", "the birch canoe slid on", &speech()],
    );
    assert!(o.status.success(), "{o:?}");
    assert!(stdout(&o).contains("accuracy_percent = 80"), "{}", stdout(&o));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(subband(p, &["enhance", &speech(), "o.wav", "1", "1"]).status.code(), Some(1));
    assert_eq!(subband(p, &["no-such-command"]).status.code(), Some(1));
    assert_eq!(subband(p, &["enhance", "missing.wav", "o.wav", "1,1,1,1,1,1"]).status.code(), Some(2));
    assert_eq!(subband(p, &["enhance", &speech(), "o.wav", "0,0,0,0,0,0"]).status.code(), Some(4));
    let no_token = subband(p, &["score", "--transcriber", "http", "--reference", "hello", &speech()]);
    assert_eq!(no_token.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&no_token.stderr).contains("SUBBAND_ASR_TOKEN"));
}

#[test]
fn service_failure_exits_with_external_error() {
    let server = StubServer::start(
        "127.0.0.1:0",
        StubBehavior {
            leading_failures: vec![400],
            ..Default::default()
        },
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_subband"))
        .current_dir(dir.path())
        .env("SUBBAND_ASR_URL", server.url())
        .env("SUBBAND_ASR_TOKEN", "t")
        .args(["score", "--transcriber", "http", "--reference", "hello", &speech()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{o:?}");
}

#[test]
fn mix_and_simulate_hearing_loss() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let babble = data("babble.wav").display().to_string();
    assert!(subband(p, &["mix", "--nsr", "1", &speech(), &babble, "mix.wav"]).status.success());
    let o = subband(p, &["simulate-hl", "--preset", "sloping", "mix.wav", "hl.wav"]);
    assert!(o.status.success(), "{o:?}");
    assert!(p.join("hl.wav").exists());
    assert!(p.join("hl.manifest.txt").exists());
}

#[test]
fn spectrogram_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = subband(dir.path(), &["spectrogram", "--image", "s.pgm", "--matrix", "s.txt", &speech()]);
    assert!(o.status.success(), "{o:?}");
    let pgm = std::fs::read(dir.path().join("s.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5"));
}

#[test]
fn optimize_small_grid() {
    let dir = tempfile::tempdir().unwrap();
    let babble = data("babble.wav").display().to_string();
    let o = subband(
        dir.path(),
        &[
            "--jobs", "2", "optimize", "--out", "run", "--nsr-grid", "0,1", "--gain-step", "0.5",
            "--max-sweeps", "2", "--target-gains", "1,0.5,2,3,0.5,0.5", "--point-to-point", &speech(), &babble,
        ],
    );
    assert!(o.status.success(), "{o:?}");
    for f in ["manifest.txt", "trace.log", "result.txt", "table.txt", "table.tsv", "nsr_table.tsv", "point_to_point.txt"] {
        assert!(dir.path().join("run").join(f).exists(), "{f}");
    }
    let result = std::fs::read_to_string(dir.path().join("run/result.txt")).unwrap();
    assert!(result.contains("best_gains"), "{result}");
}
