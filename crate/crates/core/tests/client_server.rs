mod common;

use std::net::TcpStream;
use std::thread;
use std::time::Duration;

use fbenv::client::{self, SessionState, StopCondition, StopSignal};
use fbenv::keysym;
use fbenv::server::{self, query_state_hash, ServerConfig, Tilt};
use fbenv::wire::{perform_handshake, ClientMessage};
use fbenv::{Error, PixelFormat};

use common::{closed_port, lockstep_server, oracle, scripted_server};

const STEP: Duration = Duration::from_secs(5);

#[test]
fn connect_delivers_full_first_frame() {
    let server = lockstep_server(1);
    let mut s = client::connect(&server.endpoint(), PixelFormat::rgb888()).unwrap();
    assert_eq!(s.state(), SessionState::Ready);
    assert_eq!((s.server_init().width, s.server_init().height), (160, 160));
    assert_eq!(s.server_init().name, "multitask-lite");
    assert_eq!(s.frame_counter(), 1);
    let frame = s.current_frame().unwrap();
    assert_eq!((frame.width(), frame.height()), (160, 160));

    // ball position in the first frame matches the oracle's geometry
    let p0 = server.game_state().position;
    let left = oracle::ball_left(p0) as usize;
    let row = frame.row(124);
    assert_eq!(row[left], 255);
    assert_eq!(row[left + 7], 255);
    assert_eq!(row[left - 1], 0);
    assert_eq!(row[left + 8], 0);
}

#[test]
fn raw_handshake_against_the_server() {
    let server = lockstep_server(2);
    let mut stream = TcpStream::connect(server.addr()).unwrap();
    let init = perform_handshake(&mut stream).unwrap();
    assert_eq!((init.width, init.height), (160, 160));
    assert_eq!(init.format, PixelFormat::rgb888());
}

#[test]
fn closed_port_is_a_connection_error() {
    match client::connect(&closed_port(), PixelFormat::rgb888()) {
        Err(Error::Io(_)) | Err(Error::ConnectTimeout(_)) => {}
        other => panic!("expected a connection error, got {other:?}"),
    }
}

#[test]
fn vnc_auth_only_server_is_rejected() {
    let mut greeting = b"RFB 003.008\n".to_vec();
    greeting.extend([1, 2]);
    let (ep, fake) = scripted_server(greeting, 12, Vec::new());
    match client::connect(&ep, PixelFormat::rgb888()) {
        Err(Error::UnsupportedSecurity(offered)) => assert_eq!(offered, vec![2]),
        other => panic!("expected unsupported security, got {other:?}"),
    }
    assert_eq!(&fake.join().unwrap()[..12], b"RFB 003.008\n");
}

#[test]
fn old_protocol_versions_are_rejected() {
    for v in [&b"RFB 003.003\n"[..], b"RFB 003.007\n"] {
        let (ep, fake) = scripted_server(v.to_vec(), 0, Vec::new());
        assert!(matches!(
            client::connect(&ep, PixelFormat::rgb888()),
            Err(Error::UnsupportedVersion(_))
        ));
        drop(fake);
    }
}

#[test]
fn refused_connection_reports_the_reason() {
    let mut greeting = b"RFB 003.008\n".to_vec();
    greeting.extend([0, 0, 0, 0, 4]);
    greeting.extend(b"busy");
    let (ep, _fake) = scripted_server(greeting, 0, Vec::new());
    match client::connect(&ep, PixelFormat::rgb888()) {
        Err(Error::HandshakeRefused(reason)) => assert_eq!(reason, "busy"),
        other => panic!("expected refusal, got {other:?}"),
    }
}

#[test]
fn static_screen_polls_are_identical() {
    let server = lockstep_server(3);
    let mut s = client::connect(&server.endpoint(), PixelFormat::rgb888()).unwrap();
    // full refreshes do not tick in lockstep
    s.request_update(false, STEP).unwrap();
    let a = s.current_frame().unwrap().clone();
    s.request_update(false, STEP).unwrap();
    let b = s.current_frame().unwrap().clone();
    assert_eq!(a, b);
    assert_eq!(server.game_state().ticks_survived, 0);
}

#[test]
fn lockstep_requests_advance_one_tick_each() {
    let server = lockstep_server(4);
    let mut s = client::connect(&server.endpoint(), PixelFormat::rgb888()).unwrap();
    let start = server.game_state();
    for n in 1..=20u64 {
        s.request_update(true, STEP).unwrap();
        assert_eq!(server.game_state().ticks_survived, n);
    }
    let (mut p, mut v) = (start.position, 0.0);
    for _ in 0..20 {
        (p, v) = oracle::step(p, v, 0);
    }
    let g = server.game_state();
    assert!((g.position - p).abs() < 1e-12 && (g.velocity - v).abs() < 1e-12);
}

#[test]
fn pressed_arrows_tilt_the_paddle() {
    let server = lockstep_server(5);
    let mut s = client::connect(&server.endpoint(), PixelFormat::rgb888()).unwrap();
    s.press_key(keysym::LEFT).unwrap();
    s.request_update(true, STEP).unwrap();
    assert_eq!(server.game_state().tilt, Tilt::Left);
    s.request_update(true, STEP).unwrap();
    assert_eq!(server.game_state().tilt, Tilt::Level);
    s.press_key(keysym::RIGHT).unwrap();
    s.request_update(true, STEP).unwrap();
    assert_eq!(server.game_state().tilt, Tilt::Right);
}

#[test]
fn holding_left_moves_the_ball_left() {
    let server = server::serve(ServerConfig::lockstep(6)).unwrap();
    let mut s = client::connect(&server.endpoint(), PixelFormat::rgb888()).unwrap();
    s.send_key(keysym::LEFT, true).unwrap();
    for _ in 0..15 {
        s.request_update(true, STEP).unwrap();
    }
    let g = server.game_state();
    assert!(g.position < 0.0, "{g:?}");
}

#[test]
fn queued_input_arrives_in_order() {
    let server = lockstep_server(7);
    let mut s = client::connect(&server.endpoint(), PixelFormat::rgb888()).unwrap();
    let input = s.input_sender();
    let keys = [keysym::LEFT, keysym::RIGHT, keysym::UP, keysym::DOWN, 0x61];
    for &k in &keys {
        input.send_key(k, true).unwrap();
        input.send_key(k, false).unwrap();
    }
    input.send_pointer(10, 20, 1).unwrap();
    s.request_update(true, STEP).unwrap();

    let mut expected: Vec<ClientMessage> = keys
        .iter()
        .flat_map(|&k| {
            [
                ClientMessage::KeyEvent { down: true, keysym: k },
                ClientMessage::KeyEvent { down: false, keysym: k },
            ]
        })
        .collect();
    expected.push(ClientMessage::PointerEvent { button_mask: 1, x: 10, y: 20 });
    assert_eq!(server.input_log(), expected);
}

#[test]
fn pointer_outside_screen_is_rejected() {
    let server = lockstep_server(8);
    let mut s = client::connect(&server.endpoint(), PixelFormat::rgb888()).unwrap();
    assert!(s.send_pointer(159, 159, 0).is_ok());
    assert!(matches!(s.send_pointer(160, 0, 0), Err(Error::Argument(_))));
    assert!(matches!(
        s.input_sender().send_pointer(0, 200, 0),
        Err(Error::Argument(_))
    ));
}

#[test]
fn server_drop_mid_capture_is_reported() {
    let server = server::serve(ServerConfig::default()).unwrap();
    let mut s = client::connect(&server.endpoint(), PixelFormat::rgb888()).unwrap();
    let mut frames = 0;
    let stats = thread::scope(|scope| {
        scope.spawn(|| {
            thread::sleep(Duration::from_millis(300));
            server.drop_client();
        });
        s.run_fixed_rate(30.0, StopCondition::after(Duration::from_secs(5)), |_, _| {
            frames += 1;
            Ok::<_, Error>(())
        })
        .unwrap()
    });
    assert!(stats.error.is_some(), "{stats:?}");
    assert!(stats.wall_time < Duration::from_secs(5));
    assert_eq!(stats.frames_delivered, frames);
    assert_eq!(s.state(), SessionState::Closed);
    assert!(s.poll_frame().is_err());
}

#[test]
fn closed_session_refuses_to_poll() {
    let server = lockstep_server(9);
    let mut s = client::connect(&server.endpoint(), PixelFormat::rgb888()).unwrap();
    s.close();
    assert_eq!(s.state(), SessionState::Closed);
    assert!(matches!(s.poll_frame(), Err(Error::InvalidState(_))));
}

#[test]
fn capture_argument_and_stop_edge_cases() {
    let server = server::serve(ServerConfig::default()).unwrap();
    let mut s = client::connect(&server.endpoint(), PixelFormat::rgb888()).unwrap();
    let ok = |_: &fbenv::GrayFrame, _: u64| Ok::<_, Error>(());

    assert!(matches!(
        s.run_fixed_rate(0.0, StopCondition::after(Duration::from_secs(1)), ok),
        Err(Error::Argument(_))
    ));

    let signal = StopSignal::new();
    signal.fire();
    let stats = s.run_unrestricted(StopCondition::on_signal(signal), ok).unwrap();
    assert_eq!(stats.frames_delivered, 0);

    let stats = s
        .run_fixed_rate(30.0, StopCondition::after(Duration::ZERO), ok)
        .unwrap();
    assert_eq!(stats.frames_delivered, 0);
    assert_eq!(s.state(), SessionState::Ready);
}

#[test]
fn callback_error_ends_the_loop() {
    let server = lockstep_server(10);
    let mut s = client::connect(&server.endpoint(), PixelFormat::rgb888()).unwrap();
    let stats = s
        .run_unrestricted(StopCondition::after(Duration::from_secs(5)), |_, i| {
            if i == 3 {
                Err("enough")
            } else {
                Ok(())
            }
        })
        .unwrap();
    assert_eq!(stats.frames_delivered, 4);
    assert!(matches!(stats.error, Some(Error::Callback(ref m)) if m == "enough"));
}

#[test]
fn client_buffer_matches_server_hash() {
    let server = lockstep_server(11);
    let mut s = client::connect(&server.endpoint(), PixelFormat::rgb888()).unwrap();
    let hash_addr = server.hash_addr().unwrap();
    for i in 0..30 {
        if i % 7 == 0 {
            s.press_key(if i % 2 == 0 { keysym::LEFT } else { keysym::RIGHT }).unwrap();
        }
        s.request_update(true, STEP).unwrap();
        let (hash, generation) = query_state_hash(hash_addr).unwrap();
        assert_eq!(generation, s.frame_counter());
        assert_eq!(hash, s.framebuffer().content_hash());
    }
}

#[test]
fn other_pixel_formats_track_the_server() {
    let server = lockstep_server(12);
    let fmt = PixelFormat {
        bits_per_pixel: 16,
        depth: 16,
        big_endian: true,
        true_color: true,
        red_max: 31,
        green_max: 63,
        blue_max: 31,
        red_shift: 11,
        green_shift: 5,
        blue_shift: 0,
    };
    let mut s = client::connect(&server.endpoint(), fmt).unwrap();
    for _ in 0..10 {
        s.request_update(true, STEP).unwrap();
    }
    let (hash, _) = query_state_hash(server.hash_addr().unwrap()).unwrap();
    assert_eq!(hash, s.framebuffer().content_hash());
    let left = oracle::ball_left(server.game_state().position) as usize;
    assert_eq!(s.current_frame().unwrap().row(121)[left + 3], 255);
}

#[test]
fn real_time_server_ticks_on_its_own() {
    let server = server::serve(ServerConfig {
        tick: server::TickMode::Rate(100.0),
        ..Default::default()
    })
    .unwrap();
    let _s = client::connect(&server.endpoint(), PixelFormat::rgb888()).unwrap();
    thread::sleep(Duration::from_millis(300));
    let ticks = server.game_state().ticks_survived;
    assert!(server.game_state().terminal || (15..=45).contains(&ticks), "{ticks}");
}
