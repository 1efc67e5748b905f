//! Runs the multitask-lite server until interrupted, printing the game state
//! once a second. Connect any VNC viewer to the printed address.
//!
//! ```text
//! cargo run --example mock_server -- 5900
//! ```

use std::time::Duration;

use fbenv::server::{self, ServerConfig};

fn main() -> fbenv::Result<()> {
    let port = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(5900);
    let handle = server::serve(ServerConfig {
        port,
        auto_reset: true,
        ..Default::default()
    })?;
    println!("listening on {}", handle.addr());
    if let Some(addr) = handle.hash_addr() {
        println!("state hash on {addr} (send \"HASH\\n\")");
    }
    loop {
        std::thread::sleep(Duration::from_secs(1));
        let g = handle.game_state();
        println!(
            "episode {} p={:+.3} v={:+.4} ticks={} terminal={}",
            handle.episodes(),
            g.position,
            g.velocity,
            g.ticks_survived,
            g.terminal
        );
    }
}
