//! Fixed-rate capture: a callback receives one frame per tick at 30 fps.

mod common;

use std::time::Duration;

use fbenv::client::{self, StopCondition};
use fbenv::server::ServerConfig;
use fbenv::PixelFormat;

fn main() -> fbenv::Result<()> {
    let (endpoint, _server) = common::endpoint(ServerConfig::default())?;
    let mut session = client::connect(&endpoint, PixelFormat::rgb888())?;

    let stop = StopCondition::after(Duration::from_secs(3));
    let stats = session.run_fixed_rate(30.0, stop, |frame, tick| {
        if tick % 15 == 0 {
            let row = frame.row(123);
            let col = row.iter().position(|&v| v == 255);
            println!("tick {tick:>3}: ball starts at column {col:?}, mean luma {:.2}", frame.mean());
        }
        Ok::<_, fbenv::Error>(())
    })?;

    println!(
        "{} frames in {:.2} s ({:.1} fps), p50 {:.3} ms, p99 {:.3} ms",
        stats.frames_delivered,
        stats.wall_time.as_secs_f64(),
        stats.achieved_fps,
        stats.latency_p50_ms,
        stats.latency_p99_ms
    );
    if let Some(e) = stats.error {
        return Err(e);
    }
    Ok(())
}
