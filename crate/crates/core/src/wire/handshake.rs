use std::io::{Read, Write};

use super::PixelFormat;
use crate::error::{Error, Result};

/// Version string the client sends back; the only version spoken.
pub const PROTOCOL_VERSION: &[u8; 12] = b"RFB 003.008\n";

const SECURITY_NONE: u8 = 1;

/// Screen geometry and native format announced by the server after the handshake.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerInit {
    pub width: u16,
    pub height: u16,
    pub format: PixelFormat,
    pub name: String,
}

impl ServerInit {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + self.name.len());
        out.extend_from_slice(&self.width.to_be_bytes());
        out.extend_from_slice(&self.height.to_be_bytes());
        out.extend_from_slice(&self.format.to_bytes());
        out.extend_from_slice(&(self.name.len() as u32).to_be_bytes());
        out.extend_from_slice(self.name.as_bytes());
        out
    }
}

/// Parses a 12-byte `RFB xxx.yyy\n` greeting into (major, minor).
pub(crate) fn parse_version(greeting: &[u8; 12]) -> Result<(u32, u32)> {
    let text = String::from_utf8_lossy(greeting);
    let bad = || Error::Protocol(format!("malformed version greeting {text:?}"));
    if !greeting.starts_with(b"RFB ") || greeting[7] != b'.' || greeting[11] != b'\n' {
        return Err(bad());
    }
    let digits = |s: &[u8]| -> Result<u32> {
        std::str::from_utf8(s)
            .ok()
            .filter(|d| d.bytes().all(|b| b.is_ascii_digit()))
            .and_then(|d| d.parse().ok())
            .ok_or_else(bad)
    };
    Ok((digits(&greeting[4..7])?, digits(&greeting[8..11])?))
}

/// Runs the client side of the RFB 3.8 handshake over `io`.
///
/// Replies with version 3.8, selects security type None, checks the
/// SecurityResult, sends a shared ClientInit and parses the ServerInit.
/// Servers announcing anything below 3.8 are rejected.
pub fn perform_handshake<S: Read + Write>(io: &mut S) -> Result<ServerInit> {
    let mut greeting = [0u8; 12];
    io.read_exact(&mut greeting)?;
    let (major, minor) = parse_version(&greeting)?;
    if (major, minor) < (3, 8) {
        return Err(Error::UnsupportedVersion(
            String::from_utf8_lossy(&greeting).trim_end().to_string(),
        ));
    }
    io.write_all(PROTOCOL_VERSION)?;
    io.flush()?;

    let count = read_u8(io)?;
    if count == 0 {
        return Err(Error::HandshakeRefused(read_reason(io)?));
    }
    let mut offered = vec![0u8; usize::from(count)];
    io.read_exact(&mut offered)?;
    if !offered.contains(&SECURITY_NONE) {
        return Err(Error::UnsupportedSecurity(offered));
    }
    io.write_all(&[SECURITY_NONE])?;
    io.flush()?;

    let result = read_u32(io)?;
    if result != 0 {
        return Err(Error::HandshakeRefused(read_reason(io)?));
    }

    // ClientInit: shared-flag = 1
    io.write_all(&[1])?;
    io.flush()?;

    let mut head = [0u8; 20];
    io.read_exact(&mut head)?;
    let width = u16::from_be_bytes([head[0], head[1]]);
    let height = u16::from_be_bytes([head[2], head[3]]);
    let format = PixelFormat::from_bytes(head[4..20].try_into().expect("16 bytes"));
    let name_len = read_u32(io)? as usize;
    let mut name = vec![0u8; name_len];
    io.read_exact(&mut name)?;
    if width == 0 || height == 0 {
        return Err(Error::Protocol(format!(
            "server announced empty screen {width}x{height}"
        )));
    }
    Ok(ServerInit {
        width,
        height,
        format,
        name: String::from_utf8_lossy(&name).into_owned(),
    })
}

fn read_u8<R: Read>(r: &mut R) -> Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_be_bytes(b))
}

fn read_reason<R: Read>(r: &mut R) -> Result<String> {
    let len = read_u32(r)? as usize;
    let mut text = vec![0u8; len.min(64 * 1024)];
    r.read_exact(&mut text)?;
    Ok(String::from_utf8_lossy(&text).into_owned())
}
