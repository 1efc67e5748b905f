#![allow(dead_code)]

use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::thread::{self, JoinHandle};

use fbenv::server::{self, ServerConfig, ServerHandle};
use fbenv::{make_env, Env, EnvConfig};

/// Straight-line re-derivation of the game physics, kept separate from the
/// library so tests compare two independent implementations.
pub mod oracle {
    pub const A: f64 = 0.004;
    pub const G: f64 = 0.002;

    pub fn step(p: f64, v: f64, tilt: i32) -> (f64, f64) {
        let v = v + A * tilt as f64 + G * p;
        (p + v, v)
    }

    /// Ticks completed with the ball still on the paddle, following `policy`
    /// (tick index to tilt), capped at `limit`.
    pub fn survival(p0: f64, v0: f64, limit: u64, mut policy: impl FnMut(u64) -> i32) -> u64 {
        let (mut p, mut v) = (p0, v0);
        for k in 0..limit {
            (p, v) = step(p, v, policy(k));
            if p.abs() > 1.0 {
                return k;
            }
        }
        limit
    }

    /// First pixel column of the 8-pixel ball on the 160-pixel screen.
    pub fn ball_left(p: f64) -> i64 {
        ((p + 1.0) / 2.0 * 151.0 + 0.5).floor() as i64 - 4
    }
}

pub fn lockstep_server(seed: u64) -> ServerHandle {
    server::serve(ServerConfig::lockstep(seed)).expect("server starts")
}

pub fn lockstep_env(server: &ServerHandle) -> Env {
    let mut cfg = EnvConfig::with_endpoint(server.endpoint());
    cfg.lockstep = true;
    make_env(cfg).expect("env connects")
}

/// A one-shot fake RFB server: sends `greeting`, reads `expect_read` bytes,
/// then sends `reply` and holds the socket open until the client hangs up.
pub fn scripted_server(
    greeting: Vec<u8>,
    expect_read: usize,
    reply: Vec<u8>,
) -> (String, JoinHandle<Vec<u8>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = listener.local_addr().unwrap().to_string();
    let handle = thread::spawn(move || {
        let (mut s, _): (TcpStream, _) = listener.accept().unwrap();
        s.write_all(&greeting).unwrap();
        let mut got = vec![0u8; expect_read];
        if s.read_exact(&mut got).is_err() {
            return Vec::new();
        }
        let _ = s.write_all(&reply);
        let mut rest = Vec::new();
        let _ = s.read_to_end(&mut rest);
        got.extend(rest);
        got
    });
    (endpoint, handle)
}

/// A port that refuses connections.
pub fn closed_port() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = l.local_addr().unwrap().to_string();
    drop(l);
    addr
}
