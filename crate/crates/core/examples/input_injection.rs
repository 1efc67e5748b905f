//! Sends key and pointer events. In lockstep each frame request is one game
//! tick, so the ball's response to the held key is visible frame by frame.

mod common;

use std::time::Duration;

use fbenv::client;
use fbenv::keysym;
use fbenv::server::ServerConfig;
use fbenv::PixelFormat;

fn ball_column(session: &mut fbenv::Session) -> fbenv::Result<Option<usize>> {
    // first white pixel in one of the full-resolution ball rows
    Ok(session.current_frame()?.row(123).iter().position(|&v| v == 255))
}

fn main() -> fbenv::Result<()> {
    let (endpoint, _server) = common::endpoint(ServerConfig::lockstep(3))?;
    let mut session = client::connect(&endpoint, PixelFormat::rgb888())?;
    println!("start: ball left edge at column {:?}", ball_column(&mut session)?);

    for (name, key) in [("LEFT", keysym::LEFT), ("RIGHT", keysym::RIGHT)] {
        session.send_key(key, true)?;
        for _ in 0..12 {
            session.request_update(true, Duration::from_secs(5))?;
        }
        session.send_key(key, false)?;
        println!(
            "after holding {name} for 12 ticks: column {:?}",
            ball_column(&mut session)?
        );
    }

    // pointer events are accepted and bounds-checked, though the game ignores them
    session.send_pointer(80, 80, 0b1)?;
    session.send_pointer(80, 80, 0)?;
    match session.send_pointer(500, 10, 0) {
        Err(e) => println!("out-of-screen pointer rejected: {e}"),
        Ok(()) => println!("out-of-screen pointer unexpectedly accepted"),
    }
    Ok(())
}
