use crate::error::{Error, Result};

/// Pixel layout negotiated between client and server.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PixelFormat {
    pub bits_per_pixel: u8,
    pub depth: u8,
    pub big_endian: bool,
    pub true_color: bool,
    pub red_max: u16,
    pub green_max: u16,
    pub blue_max: u16,
    pub red_shift: u8,
    pub green_shift: u8,
    pub blue_shift: u8,
}

impl PixelFormat {
    /// Encoded size on the wire, including the three padding bytes.
    pub const WIRE_LEN: usize = 16;

    /// 32 bpp, depth 24, little-endian, red at bit 16, green at 8, blue at 0.
    /// This is the format the client always requests.
    pub const fn rgb888() -> Self {
        PixelFormat {
            bits_per_pixel: 32,
            depth: 24,
            big_endian: false,
            true_color: true,
            red_max: 255,
            green_max: 255,
            blue_max: 255,
            red_shift: 16,
            green_shift: 8,
            blue_shift: 0,
        }
    }

    pub fn bytes_per_pixel(&self) -> usize {
        usize::from(self.bits_per_pixel / 8)
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.bits_per_pixel, 8 | 16 | 32) {
            return Err(Error::InvalidPixelFormat(format!(
                "bits-per-pixel {} not in {{8, 16, 32}}",
                self.bits_per_pixel
            )));
        }
        if self.depth == 0 || self.depth > self.bits_per_pixel {
            return Err(Error::InvalidPixelFormat(format!(
                "depth {} outside 1..={}",
                self.depth, self.bits_per_pixel
            )));
        }
        if !self.true_color {
            return Ok(());
        }
        let bpp = u32::from(self.bits_per_pixel);
        let mut used = 0u64;
        for (name, max, shift) in self.channels() {
            if max == 0 || (u32::from(max) + 1).count_ones() != 1 {
                return Err(Error::InvalidPixelFormat(format!(
                    "{name}-max {max} is not 2^k - 1"
                )));
            }
            let width = max.count_ones();
            if u32::from(shift) + width > bpp {
                return Err(Error::InvalidPixelFormat(format!(
                    "{name} channel (shift {shift}, {width} bits) exceeds {bpp} bits"
                )));
            }
            let mask = u64::from(max) << shift;
            if used & mask != 0 {
                return Err(Error::InvalidPixelFormat(format!(
                    "{name} channel overlaps another channel"
                )));
            }
            used |= mask;
        }
        Ok(())
    }

    fn channels(&self) -> [(&'static str, u16, u8); 3] {
        [
            ("red", self.red_max, self.red_shift),
            ("green", self.green_max, self.green_shift),
            ("blue", self.blue_max, self.blue_shift),
        ]
    }

    pub fn to_bytes(&self) -> [u8; Self::WIRE_LEN] {
        let mut out = [0u8; Self::WIRE_LEN];
        out[0] = self.bits_per_pixel;
        out[1] = self.depth;
        out[2] = u8::from(self.big_endian);
        out[3] = u8::from(self.true_color);
        out[4..6].copy_from_slice(&self.red_max.to_be_bytes());
        out[6..8].copy_from_slice(&self.green_max.to_be_bytes());
        out[8..10].copy_from_slice(&self.blue_max.to_be_bytes());
        out[10] = self.red_shift;
        out[11] = self.green_shift;
        out[12] = self.blue_shift;
        out
    }

    /// Parses the 16-byte wire form. Flags are nonzero-is-true; padding is ignored.
    pub fn from_bytes(b: &[u8; Self::WIRE_LEN]) -> Self {
        PixelFormat {
            bits_per_pixel: b[0],
            depth: b[1],
            big_endian: b[2] != 0,
            true_color: b[3] != 0,
            red_max: u16::from_be_bytes([b[4], b[5]]),
            green_max: u16::from_be_bytes([b[6], b[7]]),
            blue_max: u16::from_be_bytes([b[8], b[9]]),
            red_shift: b[10],
            green_shift: b[11],
            blue_shift: b[12],
        }
    }

    /// Reads one pixel value from `bytes` (exactly `bytes_per_pixel` long).
    #[inline]
    pub fn read_pixel(&self, bytes: &[u8]) -> u32 {
        match (self.bits_per_pixel, self.big_endian) {
            (8, _) => u32::from(bytes[0]),
            (16, false) => u32::from(u16::from_le_bytes([bytes[0], bytes[1]])),
            (16, true) => u32::from(u16::from_be_bytes([bytes[0], bytes[1]])),
            (_, false) => u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]),
            (_, true) => u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]),
        }
    }

    #[inline]
    pub fn write_pixel(&self, value: u32, out: &mut [u8]) {
        match (self.bits_per_pixel, self.big_endian) {
            (8, _) => out[0] = value as u8,
            (16, false) => out[..2].copy_from_slice(&(value as u16).to_le_bytes()),
            (16, true) => out[..2].copy_from_slice(&(value as u16).to_be_bytes()),
            (_, false) => out[..4].copy_from_slice(&value.to_le_bytes()),
            (_, true) => out[..4].copy_from_slice(&value.to_be_bytes()),
        }
    }

    /// Raw channel values of a pixel, each in `0..=channel max`.
    #[inline]
    pub fn unpack(&self, value: u32) -> (u16, u16, u16) {
        (
            ((value >> self.red_shift) & u32::from(self.red_max)) as u16,
            ((value >> self.green_shift) & u32::from(self.green_max)) as u16,
            ((value >> self.blue_shift) & u32::from(self.blue_max)) as u16,
        )
    }

    /// Packs 8-bit channels, rescaling each to the channel's max with rounding.
    #[inline]
    pub fn pack_rgb(&self, r: u8, g: u8, b: u8) -> u32 {
        fn scale(c: u8, max: u16) -> u32 {
            (u32::from(c) * u32::from(max) + 127) / 255
        }
        (scale(r, self.red_max) << self.red_shift)
            | (scale(g, self.green_max) << self.green_shift)
            | (scale(b, self.blue_max) << self.blue_shift)
    }

    /// Channels of a pixel rescaled to 0..=255 with rounding.
    #[inline]
    pub fn unpack_rgb8(&self, value: u32) -> (u8, u8, u8) {
        fn scale(c: u16, max: u16) -> u8 {
            if max == 0 {
                return 0;
            }
            ((u32::from(c) * 255 + u32::from(max) / 2) / u32::from(max)) as u8
        }
        let (r, g, b) = self.unpack(value);
        (
            scale(r, self.red_max),
            scale(g, self.green_max),
            scale(b, self.blue_max),
        )
    }
}

impl Default for PixelFormat {
    fn default() -> Self {
        Self::rgb888()
    }
}
