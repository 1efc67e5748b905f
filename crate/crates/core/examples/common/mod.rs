#![allow(dead_code)]

use fbenv::server::{self, ServerConfig, ServerHandle};

/// Uses `FBENV_ENDPOINT` if set, otherwise starts an in-process game server.
/// Keep the returned handle alive for as long as the server is needed.
pub fn endpoint(cfg: ServerConfig) -> fbenv::Result<(String, Option<ServerHandle>)> {
    if let Ok(ep) = std::env::var("FBENV_ENDPOINT") {
        return Ok((ep, None));
    }
    let handle = server::serve(cfg)?;
    println!("started multitask-lite on {}", handle.endpoint());
    Ok((handle.endpoint(), Some(handle)))
}
