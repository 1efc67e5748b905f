//! Unrestricted capture: frames are polled back to back. A stop signal fired
//! from the callback ends the run after 5000 frames.

mod common;

use std::time::Duration;

use fbenv::client::{self, StopCondition, StopSignal};
use fbenv::server::ServerConfig;
use fbenv::PixelFormat;

fn main() -> fbenv::Result<()> {
    let (endpoint, _server) = common::endpoint(ServerConfig::default())?;
    let mut session = client::connect(&endpoint, PixelFormat::rgb888())?;

    let signal = StopSignal::new();
    let stop = StopCondition::after(Duration::from_secs(10)).or_signal(signal.clone());
    let stats = session.run_unrestricted(stop, |_, index| {
        if index + 1 == 5000 {
            signal.fire();
        }
        Ok::<_, fbenv::Error>(())
    })?;

    println!(
        "{} frames in {:.3} s: {:.0} fps",
        stats.frames_delivered,
        stats.wall_time.as_secs_f64(),
        stats.achieved_fps
    );
    Ok(())
}
