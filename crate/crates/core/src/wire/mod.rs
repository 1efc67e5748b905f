//! Byte-exact codec for the subset of RFB 3.8 (RFC 6143) the harness speaks.
//!
//! Client messages: SetPixelFormat, SetEncodings, FramebufferUpdateRequest,
//! KeyEvent and PointerEvent. Server messages: FramebufferUpdate (raw encoding
//! only), Bell and ServerCutText. SetColorMapEntries is parsed only far enough
//! to be rejected. Every multi-byte integer is big-endian.
//!
//! Decoders work on byte slices and return the number of bytes consumed, so a
//! caller can keep a receive buffer and retry on [`Error::Incomplete`].

pub(crate) mod handshake;
mod pixel;

pub use handshake::{perform_handshake, ServerInit, PROTOCOL_VERSION};
pub use pixel::PixelFormat;

use crate::error::{Error, Result};

/// The only rectangle encoding supported.
pub const ENCODING_RAW: i32 = 0;

pub const CLIENT_SET_PIXEL_FORMAT: u8 = 0;
pub const CLIENT_SET_ENCODINGS: u8 = 2;
pub const CLIENT_FRAMEBUFFER_UPDATE_REQUEST: u8 = 3;
pub const CLIENT_KEY_EVENT: u8 = 4;
pub const CLIENT_POINTER_EVENT: u8 = 5;

pub const SERVER_FRAMEBUFFER_UPDATE: u8 = 0;
pub const SERVER_SET_COLOR_MAP_ENTRIES: u8 = 1;
pub const SERVER_BELL: u8 = 2;
pub const SERVER_CUT_TEXT: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Rectangle {
    pub x: u16,
    pub y: u16,
    pub width: u16,
    pub height: u16,
    pub encoding: i32,
}

impl Rectangle {
    pub fn new(x: u16, y: u16, width: u16, height: u16) -> Self {
        Rectangle {
            x,
            y,
            width,
            height,
            encoding: ENCODING_RAW,
        }
    }

    pub fn area(&self) -> usize {
        usize::from(self.width) * usize::from(self.height)
    }

    /// True when the rectangle lies entirely inside a `width` x `height` screen.
    pub fn fits_within(&self, width: u16, height: u16) -> bool {
        u32::from(self.x) + u32::from(self.width) <= u32::from(width)
            && u32::from(self.y) + u32::from(self.height) <= u32::from(height)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientMessage {
    SetPixelFormat(PixelFormat),
    SetEncodings(Vec<i32>),
    FramebufferUpdateRequest { incremental: bool, region: Rectangle },
    KeyEvent { down: bool, keysym: u32 },
    PointerEvent { button_mask: u8, x: u16, y: u16 },
}

impl ClientMessage {
    pub fn message_type(&self) -> u8 {
        match self {
            ClientMessage::SetPixelFormat(_) => CLIENT_SET_PIXEL_FORMAT,
            ClientMessage::SetEncodings(_) => CLIENT_SET_ENCODINGS,
            ClientMessage::FramebufferUpdateRequest { .. } => CLIENT_FRAMEBUFFER_UPDATE_REQUEST,
            ClientMessage::KeyEvent { .. } => CLIENT_KEY_EVENT,
            ClientMessage::PointerEvent { .. } => CLIENT_POINTER_EVENT,
        }
    }
}

/// One rectangle of a FramebufferUpdate together with its raw pixel bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RectUpdate {
    pub rect: Rectangle,
    pub pixels: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ServerMessage {
    FramebufferUpdate(Vec<RectUpdate>),
    Bell,
    ServerCutText(String),
}

/// Appends the wire form of `msg` to `out`.
pub fn encode_client_message_into(msg: &ClientMessage, out: &mut Vec<u8>) -> Result<()> {
    out.push(msg.message_type());
    match msg {
        ClientMessage::SetPixelFormat(fmt) => {
            fmt.validate()
                .map_err(|e| Error::Encoding(e.to_string()))?;
            out.extend_from_slice(&[0; 3]);
            out.extend_from_slice(&fmt.to_bytes());
        }
        ClientMessage::SetEncodings(encodings) => {
            let count = u16::try_from(encodings.len()).map_err(|_| {
                Error::Encoding(format!("{} encodings exceed 65535", encodings.len()))
            })?;
            out.push(0);
            out.extend_from_slice(&count.to_be_bytes());
            for e in encodings {
                out.extend_from_slice(&e.to_be_bytes());
            }
        }
        ClientMessage::FramebufferUpdateRequest {
            incremental,
            region,
        } => {
            out.push(u8::from(*incremental));
            for v in [region.x, region.y, region.width, region.height] {
                out.extend_from_slice(&v.to_be_bytes());
            }
        }
        ClientMessage::KeyEvent { down, keysym } => {
            out.push(u8::from(*down));
            out.extend_from_slice(&[0; 2]);
            out.extend_from_slice(&keysym.to_be_bytes());
        }
        ClientMessage::PointerEvent { button_mask, x, y } => {
            out.push(*button_mask);
            out.extend_from_slice(&x.to_be_bytes());
            out.extend_from_slice(&y.to_be_bytes());
        }
    }
    Ok(())
}

/// Encodes one client-to-server message.
///
/// Coordinates are `u16` by construction, so the only range violations left
/// are an invalid pixel format or more than 65535 encodings.
pub fn encode_client_message(msg: &ClientMessage) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(20);
    encode_client_message_into(msg, &mut out)?;
    Ok(out)
}

/// Decodes one client message from the front of `buf`.
pub fn decode_client_message(buf: &[u8]) -> Result<(ClientMessage, usize)> {
    let mut r = SliceReader::new(buf);
    let msg = match r.u8()? {
        CLIENT_SET_PIXEL_FORMAT => {
            r.skip(3)?;
            let fmt = PixelFormat::from_bytes(r.array::<16>()?);
            ClientMessage::SetPixelFormat(fmt)
        }
        CLIENT_SET_ENCODINGS => {
            r.skip(1)?;
            let count = r.u16()?;
            let mut encodings = Vec::with_capacity(usize::from(count));
            for _ in 0..count {
                encodings.push(r.i32()?);
            }
            ClientMessage::SetEncodings(encodings)
        }
        CLIENT_FRAMEBUFFER_UPDATE_REQUEST => {
            let incremental = r.u8()? != 0;
            let (x, y, width, height) = (r.u16()?, r.u16()?, r.u16()?, r.u16()?);
            ClientMessage::FramebufferUpdateRequest {
                incremental,
                region: Rectangle::new(x, y, width, height),
            }
        }
        CLIENT_KEY_EVENT => {
            let down = r.u8()? != 0;
            r.skip(2)?;
            let keysym = r.u32()?;
            ClientMessage::KeyEvent { down, keysym }
        }
        CLIENT_POINTER_EVENT => {
            let button_mask = r.u8()?;
            let (x, y) = (r.u16()?, r.u16()?);
            ClientMessage::PointerEvent { button_mask, x, y }
        }
        other => {
            return Err(Error::Protocol(format!(
                "unknown client message type {other}"
            )))
        }
    };
    Ok((msg, r.pos))
}

/// Appends the wire form of a server message. Pixel lengths are not checked
/// here; the server builds them from its own framebuffer.
pub fn encode_server_message_into(msg: &ServerMessage, out: &mut Vec<u8>) {
    match msg {
        ServerMessage::FramebufferUpdate(rects) => {
            out.push(SERVER_FRAMEBUFFER_UPDATE);
            out.push(0);
            out.extend_from_slice(&(rects.len() as u16).to_be_bytes());
            for RectUpdate { rect, pixels } in rects {
                for v in [rect.x, rect.y, rect.width, rect.height] {
                    out.extend_from_slice(&v.to_be_bytes());
                }
                out.extend_from_slice(&rect.encoding.to_be_bytes());
                out.extend_from_slice(pixels);
            }
        }
        ServerMessage::Bell => out.push(SERVER_BELL),
        ServerMessage::ServerCutText(text) => {
            out.push(SERVER_CUT_TEXT);
            out.extend_from_slice(&[0; 3]);
            // Latin-1 on the wire; anything else becomes '?'.
            let latin1: Vec<u8> = text
                .chars()
                .map(|c| u8::try_from(u32::from(c)).unwrap_or(b'?'))
                .collect();
            out.extend_from_slice(&(latin1.len() as u32).to_be_bytes());
            out.extend_from_slice(&latin1);
        }
    }
}

pub fn encode_server_message(msg: &ServerMessage) -> Vec<u8> {
    let mut out = Vec::new();
    encode_server_message_into(msg, &mut out);
    out
}

/// Decodes one server message from the front of `buf`.
///
/// `screen` is the announced framebuffer size; rectangles must fit inside it.
/// On success returns the message and the exact number of bytes it occupied.
pub fn decode_server_message(
    buf: &[u8],
    fmt: &PixelFormat,
    screen: (u16, u16),
) -> Result<(ServerMessage, usize)> {
    let mut r = SliceReader::new(buf);
    let msg = match r.u8()? {
        SERVER_FRAMEBUFFER_UPDATE => {
            r.skip(1)?;
            let count = r.u16()?;
            let bpp = fmt.bytes_per_pixel();
            let mut rects = Vec::with_capacity(usize::from(count));
            for _ in 0..count {
                let (x, y, width, height) = (r.u16()?, r.u16()?, r.u16()?, r.u16()?);
                let encoding = r.i32()?;
                if encoding != ENCODING_RAW {
                    return Err(Error::UnsupportedEncoding(format!(
                        "rectangle encoding {encoding}"
                    )));
                }
                let rect = Rectangle {
                    x,
                    y,
                    width,
                    height,
                    encoding,
                };
                if !rect.fits_within(screen.0, screen.1) {
                    return Err(Error::Protocol(format!(
                        "rectangle {rect:?} outside {}x{} screen",
                        screen.0, screen.1
                    )));
                }
                let pixels = r.take(rect.area() * bpp)?.to_vec();
                rects.push(RectUpdate { rect, pixels });
            }
            ServerMessage::FramebufferUpdate(rects)
        }
        SERVER_SET_COLOR_MAP_ENTRIES => {
            r.skip(1)?;
            let _first = r.u16()?;
            let count = r.u16()?;
            r.skip(usize::from(count) * 6)?;
            return Err(Error::UnsupportedEncoding(
                "SetColorMapEntries (palette formats are not supported)".into(),
            ));
        }
        SERVER_BELL => ServerMessage::Bell,
        SERVER_CUT_TEXT => {
            r.skip(3)?;
            let len = r.u32()? as usize;
            let text = r.take(len)?.iter().map(|&b| char::from(b)).collect();
            ServerMessage::ServerCutText(text)
        }
        other => {
            return Err(Error::Protocol(format!(
                "unknown server message type {other}"
            )))
        }
    };
    Ok((msg, r.pos))
}

/// Bounds-checked big-endian reader over a slice. Running out of input yields
/// [`Error::Incomplete`] with the total length required so far.
struct SliceReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> SliceReader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        SliceReader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.buf.len() {
            return Err(Error::Incomplete { needed: end });
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn skip(&mut self, n: usize) -> Result<()> {
        self.take(n).map(|_| ())
    }

    fn array<const N: usize>(&mut self) -> Result<&'a [u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_be_bytes(*self.array()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_be_bytes(*self.array()?))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_be_bytes(*self.array()?))
    }
}
