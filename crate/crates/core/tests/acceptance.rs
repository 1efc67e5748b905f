//! Acceptance suite. Every criterion prints one PASS/FAIL line; the test
//! fails if any criterion does. Run with `--nocapture` to see the lines.

mod common;

use std::net::TcpStream;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fbenv::agent::{self, greedy_policy, AgentConfig, EpsilonSchedule, QTable, StateKey};
use fbenv::bench::{self, BenchMode};
use fbenv::client;
use fbenv::keysym;
use fbenv::server::{self, query_state_hash, ServerConfig};
use fbenv::wire::{
    decode_client_message, decode_server_message, encode_client_message, encode_server_message,
    perform_handshake, ClientMessage, Rectangle, RectUpdate, ServerMessage,
};
use fbenv::{Error, PixelFormat};

use common::{lockstep_env, lockstep_server, oracle, scripted_server};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e2s(e: Error) -> String {
    e.to_string()
}

fn random_format(rng: &mut ChaCha8Rng) -> PixelFormat {
    let big_endian = rng.gen();
    match rng.gen_range(0..3) {
        0 => {
            let mut shifts = [0u8, 8, 16];
            for i in (1..3).rev() {
                shifts.swap(i, rng.gen_range(0..=i));
            }
            PixelFormat {
                bits_per_pixel: 32,
                depth: 24,
                big_endian,
                true_color: true,
                red_max: 255,
                green_max: 255,
                blue_max: 255,
                red_shift: shifts[0],
                green_shift: shifts[1],
                blue_shift: shifts[2],
            }
        }
        1 => PixelFormat {
            bits_per_pixel: 16,
            depth: 16,
            big_endian,
            true_color: true,
            red_max: 31,
            green_max: 63,
            blue_max: 31,
            red_shift: 11,
            green_shift: 5,
            blue_shift: 0,
        },
        _ => PixelFormat {
            bits_per_pixel: 8,
            depth: 8,
            big_endian,
            true_color: true,
            red_max: 7,
            green_max: 7,
            blue_max: 3,
            red_shift: 0,
            green_shift: 3,
            blue_shift: 6,
        },
    }
}

fn random_client_message(rng: &mut ChaCha8Rng) -> ClientMessage {
    match rng.gen_range(0..5) {
        0 => ClientMessage::SetPixelFormat(random_format(rng)),
        1 => {
            let n = rng.gen_range(0..20);
            ClientMessage::SetEncodings((0..n).map(|_| rng.gen()).collect())
        }
        2 => ClientMessage::FramebufferUpdateRequest {
            incremental: rng.gen(),
            region: Rectangle::new(rng.gen(), rng.gen(), rng.gen(), rng.gen()),
        },
        3 => ClientMessage::KeyEvent {
            down: rng.gen(),
            keysym: rng.gen(),
        },
        _ => ClientMessage::PointerEvent {
            button_mask: rng.gen(),
            x: rng.gen(),
            y: rng.gen(),
        },
    }
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    for i in 0..1000 {
        let msg = random_client_message(&mut rng);
        let bytes = encode_client_message(&msg).map_err(e2s)?;
        let (back, used) = decode_client_message(&bytes).map_err(e2s)?;
        ensure(back == msg && used == bytes.len(), || {
            format!("message {i} did not round-trip: {msg:?}")
        })?;
        // every strict prefix is incomplete, never a different message
        let cut = rng.gen_range(0..bytes.len());
        ensure(
            matches!(decode_client_message(&bytes[..cut]), Err(e) if e.is_incomplete()),
            || format!("prefix of message {i} was not reported incomplete"),
        )?;
    }

    let fmt = PixelFormat::rgb888();
    let update = ServerMessage::FramebufferUpdate(vec![RectUpdate {
        rect: Rectangle::new(3, 4, 2, 2),
        pixels: (0u8..16).collect(),
    }]);
    let bytes = encode_server_message(&update);
    let (back, used) = decode_server_message(&bytes, &fmt, (160, 160)).map_err(e2s)?;
    ensure(back == update && used == bytes.len(), || "server update round-trip".into())?;

    // hand-built rejections
    let mut hextile = vec![0u8, 0, 0, 1, 0, 0, 0, 0, 0, 1, 0, 1];
    hextile.extend(5i32.to_be_bytes());
    hextile.extend([0; 4]);
    ensure(
        matches!(
            decode_server_message(&hextile, &fmt, (160, 160)),
            Err(Error::UnsupportedEncoding(_))
        ),
        || "non-raw rectangle accepted".into(),
    )?;
    let colormap = [1u8, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0];
    ensure(
        matches!(
            decode_server_message(&colormap, &fmt, (160, 160)),
            Err(Error::UnsupportedEncoding(_))
        ),
        || "colour map message accepted".into(),
    )?;

    let server = lockstep_server(1);
    let mut stream = TcpStream::connect(server.addr()).map_err(|e| e.to_string())?;
    let init = perform_handshake(&mut stream).map_err(e2s)?;
    ensure(
        (init.width, init.height, init.format) == (160, 160, PixelFormat::rgb888()),
        || format!("unexpected ServerInit {init:?}"),
    )?;

    let mut greeting = b"RFB 003.008\n".to_vec();
    greeting.extend([1, 2]);
    let (ep, _fake) = scripted_server(greeting, 12, Vec::new());
    ensure(
        matches!(
            client::connect(&ep, PixelFormat::rgb888()),
            Err(Error::UnsupportedSecurity(ref offered)) if offered == &[2]
        ),
        || "VNC-auth-only server not rejected".into(),
    )?;

    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("1000 round-trips, handshake, rejections in {elapsed:.2?}"))
}

fn criterion_2() -> Outcome {
    let started = Instant::now();
    let server = lockstep_server(2);
    let hash_addr = server.hash_addr().ok_or("hash channel disabled")?;
    let mut s = client::connect(&server.endpoint(), PixelFormat::rgb888()).map_err(e2s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0xC2);
    let mut samples = 0;
    for tick in 1..=500 {
        if server.game_state().terminal {
            s.press_key(keysym::SPACE).map_err(e2s)?;
        } else {
            match rng.gen_range(0..3) {
                1 => s.press_key(keysym::LEFT).map_err(e2s)?,
                2 => s.press_key(keysym::RIGHT).map_err(e2s)?,
                _ => {}
            }
        }
        s.request_update(true, Duration::from_secs(5)).map_err(e2s)?;
        if tick % 25 == 0 {
            let (hash, generation) = query_state_hash(hash_addr).map_err(e2s)?;
            ensure(generation == s.frame_counter(), || {
                format!("tick {tick}: generation {generation} vs {}", s.frame_counter())
            })?;
            ensure(hash == s.framebuffer().content_hash(), || {
                format!("tick {tick}: hash mismatch")
            })?;
            samples += 1;
        }
    }
    let elapsed = started.elapsed();
    ensure(elapsed < Duration::from_secs(30), || format!("took {elapsed:?}"))?;
    Ok(format!("{samples}/20 hash samples match over 500 ticks in {elapsed:.2?}"))
}

fn criteria_3_and_4() -> (Outcome, Outcome) {
    let run = || -> Result<_, String> {
        let server = server::serve(ServerConfig::default()).map_err(e2s)?;
        let ep = server.endpoint();
        let ten = Duration::from_secs(10);
        let slow = bench::bench(BenchMode::FixedRate(30.0), ten, &ep).map_err(e2s)?;
        let fast = bench::bench(BenchMode::FixedRate(300.0), ten, &ep).map_err(e2s)?;
        let free = bench::bench(BenchMode::Unrestricted, Duration::from_secs(3), &ep).map_err(e2s)?;
        Ok((slow, fast, free))
    };
    let (slow, fast, free) = match run() {
        Ok(r) => r,
        Err(e) => return (Err(e.clone()), Err(e)),
    };

    let c3 = (|| {
        ensure((285..=315).contains(&slow.frames), || {
            format!("30 fps delivered {} frames in 10 s", slow.frames)
        })?;
        ensure((2850..=3150).contains(&fast.frames), || {
            format!("300 fps delivered {} frames in 10 s", fast.frames)
        })?;
        ensure(slow.cpu_ratio < fast.cpu_ratio, || {
            format!("cpu ratio {:.4} at 30 fps vs {:.4} at 300 fps", slow.cpu_ratio, fast.cpu_ratio)
        })?;
        Ok(format!(
            "30 fps: {} frames, cpu {:.3}; 300 fps: {} frames, cpu {:.3}",
            slow.frames, slow.cpu_ratio, fast.frames, fast.cpu_ratio
        ))
    })();

    let c4 = (|| {
        ensure(free.achieved_fps >= 1000.0, || {
            format!("unrestricted {:.0} fps", free.achieved_fps)
        })?;
        ensure(free.achieved_fps >= 10.0 * slow.achieved_fps, || {
            format!("unrestricted {:.0} fps vs fixed {:.1}", free.achieved_fps, slow.achieved_fps)
        })?;
        Ok(format!(
            "unrestricted {:.0} fps ({:.0}x the 30 fps mode)",
            free.achieved_fps,
            free.achieved_fps / slow.achieved_fps
        ))
    })();
    (c3, c4)
}

/// Chain MDP: state 0 --R--> 1 --R--> terminal (reward 1); L from 0 stays
/// with reward 0.1, L from 1 returns to 0.
fn chain(s: u32, a: usize) -> (f64, u32, bool) {
    match (s, a) {
        (0, 0) => (0.1, 0, false),
        (0, _) => (0.0, 1, false),
        (1, 0) => (0.0, 0, false),
        _ => (1.0, 2, true),
    }
}

fn criterion_5() -> Outcome {
    let gamma = 0.5;
    // closed form at gamma = 1/2
    let expected = [[0.35, 0.5], [0.25, 1.0]];
    let mut q = QTable::new(2);
    for sweep in 1..=50 {
        for s in 0..2u32 {
            for a in 0..2 {
                let (r, s2, terminal) = chain(s, a);
                q.update(StateKey(s), a, r, StateKey(s2), terminal, 1.0, gamma)
                    .map_err(e2s)?;
            }
        }
        let err = (0..2)
            .flat_map(|s| (0..2).map(move |a| (s, a)))
            .map(|(s, a)| (q.value(StateKey(s as u32), a) - expected[s][a]).abs())
            .fold(0.0, f64::max);
        if err <= 1e-9 {
            let policy = greedy_policy(&q);
            ensure(
                policy.action(StateKey(0)) == 1 && policy.action(StateKey(1)) == 1,
                || "greedy policy is not move-right".into(),
            )?;
            return Ok(format!("max error {err:.1e} after {sweep} sweeps"));
        }
    }
    Err("not within 1e-9 after 50 sweeps".into())
}

fn criterion_6() -> Outcome {
    let s = EpsilonSchedule::default();
    ensure(s.epsilon(0) == 0.9, || format!("eps(0) = {}", s.epsilon(0)))?;
    ensure(s.epsilon(10_000) == 0.1, || format!("eps(10000) = {}", s.epsilon(10_000)))?;
    ensure((s.epsilon(5_000) - 0.5).abs() <= 1e-12, || {
        format!("eps(5000) = {}", s.epsilon(5_000))
    })?;
    for t in 0..20_000 {
        ensure(s.epsilon(t + 1) <= s.epsilon(t), || format!("rises at step {t}"))?;
    }
    ensure(s.epsilon(20_000) == 0.1, || "does not stay at 0.1".into())?;
    Ok("0.9 -> 0.5 -> 0.1, monotone".into())
}

struct LearnRun {
    baseline: f64,
    scores: Vec<f64>,
    wall: Duration,
}

fn learn(seed: u64) -> Result<LearnRun, String> {
    let server = lockstep_server(seed);
    let mut env = lockstep_env(&server);
    let baseline = agent::mean(&agent::random_scores(&mut env, 50, seed).map_err(e2s)?);
    let (_, report) = agent::train(&mut env, &AgentConfig::with_seed(seed), 500).map_err(e2s)?;
    Ok(LearnRun {
        baseline,
        scores: report.scores,
        wall: report.wall_time,
    })
}

fn criterion_7() -> Outcome {
    let first = learn(0)?;
    let last50 = agent::mean(&first.scores[first.scores.len() - 50..]);
    ensure(first.wall < Duration::from_secs(600), || {
        format!("training took {:?}", first.wall)
    })?;
    ensure(last50 >= 5.0 * first.baseline, || {
        format!("last-50 mean {last50:.3} < 5 x random {:.3}", first.baseline)
    })?;
    let again = learn(0)?;
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    ensure(bits(&first.scores) == bits(&again.scores), || {
        "re-run produced different scores".into()
    })?;
    Ok(format!(
        "random {:.3}, last-50 {last50:.3} ({:.1}x) in {:.1?}; re-run identical",
        first.baseline,
        last50 / first.baseline,
        first.wall
    ))
}

fn criterion_8() -> Outcome {
    let server = lockstep_server(8);
    let mut env = lockstep_env(&server);
    let mut worst: f64 = 0.0;
    for episode in 0..5 {
        env.reset().map_err(e2s)?;
        let ticks = oracle::survival(server.game_state().position, 0.0, 3000, |_| 0);
        let mut score = 0.0;
        loop {
            let s = env.step(0).map_err(e2s)?;
            score += s.reward;
            if s.done() {
                break;
            }
        }
        let gap = (score - ticks as f64 / 30.0).abs();
        ensure(gap <= 1.0 / 30.0 + 1e-12, || {
            format!("episode {episode}: score {score} vs {ticks} ticks")
        })?;
        worst = worst.max(gap);
    }
    Ok(format!("5 no-op episodes, worst gap {worst:.1e}"))
}

#[test]
fn acceptance() {
    let (c3, c4) = criteria_3_and_4();
    let results = [
        ("1 wire round-trip and handshake", criterion_1()),
        ("2 client buffer matches server", criterion_2()),
        ("3 fixed-rate capture", c3),
        ("4 unrestricted capture", c4),
        ("5 Q-learning on a chain MDP", criterion_5()),
        ("6 epsilon schedule", criterion_6()),
        ("7 learning beats random play", criterion_7()),
        ("8 no-op score matches physics", criterion_8()),
    ];
    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name}: {why}");
            }
        }
    }
    assert_eq!(failed, 0, "{failed} acceptance criteria failed");
}
