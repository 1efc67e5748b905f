mod common;

use std::io::{BufRead, BufReader};
use std::process::{Command, Output, Stdio};

use fbenv::server::{self, ServerConfig};

use common::{closed_port, lockstep_server, oracle};

fn fbenv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fbenv"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn port_of(endpoint: &str) -> String {
    endpoint.rsplit(':').next().unwrap().to_string()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(fbenv(&["--help"]).status.code(), Some(0));
    assert_eq!(fbenv(&["--version"]).status.code(), Some(0));
    assert_eq!(fbenv(&[]).status.code(), Some(1));
    assert_eq!(fbenv(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(fbenv(&["bench", "--fps", "fast"]).status.code(), Some(1));
    // argument checks that need no server
    assert_eq!(fbenv(&["bench", "--duration", "0.5"]).status.code(), Some(1));
    assert_eq!(fbenv(&["capture", "--count", "0"]).status.code(), Some(1));
}

#[test]
fn unreachable_server_is_a_runtime_error() {
    let port = port_of(&closed_port());
    let out = fbenv(&["--port", &port, "capture", "--count", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn capture_writes_pgm_frames() {
    let server = lockstep_server(21);
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("frames");
    let out = fbenv(&[
        "--port",
        &port_of(&server.endpoint()),
        "capture",
        "--count",
        "3",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let first = fbenv::pgm::load_pgm(out_dir.join("frame-000000.pgm")).unwrap();
    assert_eq!((first.width(), first.height()), (160, 160));
    assert!(out_dir.join("frame-000002.pgm").exists());

    // the ball in the connect frame sits where the oracle puts p0
    let left = oracle::ball_left(server.game_state().position) as usize;
    let row = first.row(125);
    assert_eq!(row.iter().position(|&v| v == 255), Some(left));
    let small = first.downsample(16, 16).unwrap();
    let band = small.row(12);
    let argmax = (0..16).fold(0, |b, i| if band[i] > band[b] { i } else { b });
    assert!(argmax == (left + 3) / 10 || argmax == (left + 4) / 10);
}

#[test]
fn bench_kv_output_is_machine_readable() {
    let server = server::serve(ServerConfig::default()).unwrap();
    let out = fbenv(&[
        "--port",
        &port_of(&server.endpoint()),
        "bench",
        "--duration",
        "1",
        "--format",
        "kv",
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 10);
    for line in text.lines() {
        let (k, v) = line.split_once('=').expect(line);
        assert!(!k.is_empty() && k.bytes().all(|b| b.is_ascii_lowercase() || b == b'_'), "{line}");
        assert!(!v.is_empty() && v.bytes().all(|b| b.is_ascii_digit() || b == b'.' || b == b'-'), "{line}");
    }
    assert!(text.contains("target_fps=0\n"));
}

#[test]
fn play_and_train_in_lockstep() {
    let server = lockstep_server(22);
    let port = port_of(&server.endpoint());
    let out = fbenv(&["--port", &port, "--lockstep", "--seed", "3", "play", "--episodes", "2"]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("episode 1 score"));
    assert!(text.contains("mean "));

    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("q.tsv");
    let out = fbenv(&[
        "--port",
        &port,
        "--lockstep",
        "train",
        "--episodes",
        "3",
        "--out",
        table.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    assert!(fbenv::agent::load_qtable(&table).is_ok());

    let out = fbenv(&[
        "--port",
        &port,
        "--lockstep",
        "play",
        "--policy",
        "greedy",
        "--qtable",
        table.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let out = fbenv(&["--port", &port, "--lockstep", "play", "--policy", "greedy"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn serve_announces_its_address() {
    let mut child = Command::new(env!("CARGO_BIN_EXE_fbenv"))
        .args(["--port", "0", "--lockstep", "serve", "--no-hash"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    assert!(line.starts_with("listening on 127.0.0.1:"), "{line}");
    let endpoint = line.trim().trim_start_matches("listening on ");
    let session = fbenv::client::connect(endpoint, fbenv::PixelFormat::rgb888());
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(session.is_ok());
}
