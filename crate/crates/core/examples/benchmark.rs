//! Compares fixed-rate capture at 30 fps with unrestricted capture.

mod common;

use std::time::Duration;

use fbenv::bench::{self, BenchMode};
use fbenv::server::ServerConfig;

fn main() -> fbenv::Result<()> {
    let (endpoint, _server) = common::endpoint(ServerConfig::default())?;
    let secs = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(3.0);

    for mode in [BenchMode::FixedRate(30.0), BenchMode::Unrestricted] {
        let report = bench::bench(mode, Duration::from_secs_f64(secs), &endpoint)?;
        println!("{}", report.to_table());
    }
    Ok(())
}
