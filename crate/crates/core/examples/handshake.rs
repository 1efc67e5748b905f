//! Connects, negotiates RFB 3.8 and prints what the server announced.

mod common;

use fbenv::client;
use fbenv::server::ServerConfig;
use fbenv::PixelFormat;

fn main() -> fbenv::Result<()> {
    let (endpoint, _server) = common::endpoint(ServerConfig::default())?;
    let mut session = client::connect(&endpoint, PixelFormat::rgb888())?;

    let init = session.server_init();
    println!("desktop  {:?}", init.name);
    println!("size     {}x{}", init.width, init.height);
    println!("server   {:?}", init.format);
    println!("client   {:?}", session.framebuffer().format());

    let generation = session.frame_counter();
    let mean = session.current_frame()?.mean();
    println!("frame    generation {generation} mean luma {mean:.2}");
    session.close();
    Ok(())
}
