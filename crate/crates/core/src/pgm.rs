//! Binary portable graymap (`P5`, maxval 255) frame dumps.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::framebuffer::GrayFrame;

pub fn write_pgm<W: Write>(frame: &GrayFrame, mut out: W) -> Result<()> {
    write!(out, "P5\n{} {}\n255\n", frame.width(), frame.height())?;
    out.write_all(frame.values())?;
    out.flush()?;
    Ok(())
}

/// Writes `frame` to `path`, replacing any existing file.
pub fn save_pgm(frame: &GrayFrame, path: impl AsRef<Path>) -> Result<()> {
    write_pgm(frame, BufWriter::new(File::create(path)?))
}

/// Reads a `P5` graymap with maxval 255. Comment lines are skipped.
pub fn read_pgm<R: Read>(mut input: R) -> Result<GrayFrame> {
    let mut data = Vec::new();
    input.read_to_end(&mut data)?;
    let mut pos = 0;
    let mut fields = Vec::with_capacity(4);
    while fields.len() < 4 {
        while pos < data.len() && (data[pos].is_ascii_whitespace() || data[pos] == b'#') {
            if data[pos] == b'#' {
                while pos < data.len() && data[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                pos += 1;
            }
        }
        let start = pos;
        while pos < data.len() && !data[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Protocol("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&data[start..pos]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    if fields[0] != "P5" {
        return Err(Error::Protocol(format!("not a P5 graymap: {}", fields[0])));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Protocol(format!("bad PGM header field {s:?}")))
    };
    let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval != 255 {
        return Err(Error::Protocol(format!("unsupported maxval {maxval}")));
    }
    let raster = data
        .get(pos..pos + width * height)
        .ok_or_else(|| Error::Protocol("truncated PGM raster".into()))?;
    GrayFrame::new(width, height, raster.to_vec())
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<GrayFrame> {
    read_pgm(File::open(path)?)
}
