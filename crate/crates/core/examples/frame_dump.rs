//! Saves a handful of full-resolution frames as PGM images, then reads one
//! back and shows its 16x16 downsampled form as ASCII art.

mod common;

use fbenv::bench;
use fbenv::pgm;
use fbenv::server::ServerConfig;

fn main() -> fbenv::Result<()> {
    let (endpoint, _server) = common::endpoint(ServerConfig::default())?;
    let dir = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("fbenv-frames"));

    let files = bench::capture(&endpoint, 5, &dir)?;
    for f in &files {
        println!("wrote {}", f.display());
    }

    let frame = pgm::load_pgm(&files[0])?;
    let small = frame.downsample(16, 16)?;
    for y in 0..small.height() {
        let line: String = small
            .row(y)
            .iter()
            .map(|&v| match v {
                0 => ' ',
                1..=63 => '.',
                64..=191 => '+',
                _ => '#',
            })
            .collect();
        println!("|{line}|");
    }
    Ok(())
}
