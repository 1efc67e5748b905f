//! Client-side screen model and the grayscale observation pipeline.

use std::hash::Hasher;

use fnv::FnvHasher;

use crate::error::{Error, Result};
use crate::wire::{PixelFormat, RectUpdate, Rectangle};

/// The client's mirror of the remote screen.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Framebuffer {
    width: u16,
    height: u16,
    format: PixelFormat,
    pixels: Vec<u8>,
    generation: u64,
}

impl Framebuffer {
    /// A zero-filled buffer at generation 0.
    pub fn new(width: u16, height: u16, format: PixelFormat) -> Self {
        let len = usize::from(width) * usize::from(height) * format.bytes_per_pixel();
        Framebuffer {
            width,
            height,
            format,
            pixels: vec![0; len],
            generation: 0,
        }
    }

    /// Wraps existing pixel bytes; the length must match the geometry.
    pub fn from_pixels(
        width: u16,
        height: u16,
        format: PixelFormat,
        pixels: Vec<u8>,
    ) -> Result<Self> {
        let expected = usize::from(width) * usize::from(height) * format.bytes_per_pixel();
        if pixels.len() != expected {
            return Err(Error::Argument(format!(
                "{} pixel bytes for a {width}x{height} buffer needing {expected}",
                pixels.len()
            )));
        }
        Ok(Framebuffer {
            width,
            height,
            format,
            pixels,
            generation: 0,
        })
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn format(&self) -> &PixelFormat {
        &self.format
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn bounds(&self) -> Rectangle {
        Rectangle::new(0, 0, self.width, self.height)
    }

    fn check_rectangle(&self, rect: &Rectangle, len: usize) -> Result<()> {
        if !rect.fits_within(self.width, self.height) {
            return Err(Error::UpdateRejected(format!(
                "rectangle {},{} {}x{} exceeds {}x{} buffer",
                rect.x, rect.y, rect.width, rect.height, self.width, self.height
            )));
        }
        let expected = rect.area() * self.format.bytes_per_pixel();
        if len != expected {
            return Err(Error::UpdateRejected(format!(
                "{len} pixel bytes for a rectangle needing {expected}"
            )));
        }
        Ok(())
    }

    /// Overwrites the rows covered by `rect`. On error nothing is modified.
    pub fn apply_rectangle(&mut self, rect: &Rectangle, pixels: &[u8]) -> Result<()> {
        self.check_rectangle(rect, pixels.len())?;
        let bpp = self.format.bytes_per_pixel();
        let stride = usize::from(self.width) * bpp;
        let row_len = usize::from(rect.width) * bpp;
        if row_len == 0 {
            return Ok(());
        }
        for (i, src) in pixels.chunks_exact(row_len).enumerate() {
            let start = (usize::from(rect.y) + i) * stride + usize::from(rect.x) * bpp;
            self.pixels[start..start + row_len].copy_from_slice(src);
        }
        Ok(())
    }

    /// Applies one FramebufferUpdate message and bumps the generation by one.
    /// All rectangles are validated before any is written.
    pub fn apply_update(&mut self, rects: &[RectUpdate]) -> Result<()> {
        for r in rects {
            self.check_rectangle(&r.rect, r.pixels.len())?;
        }
        for r in rects {
            self.apply_rectangle(&r.rect, &r.pixels)?;
        }
        self.generation += 1;
        Ok(())
    }

    /// Copies out the pixel bytes of a sub-rectangle, row-major.
    pub fn region_bytes(&self, rect: &Rectangle) -> Result<Vec<u8>> {
        if !rect.fits_within(self.width, self.height) {
            return Err(Error::Argument(format!("{rect:?} outside buffer")));
        }
        let bpp = self.format.bytes_per_pixel();
        let stride = usize::from(self.width) * bpp;
        let row_len = usize::from(rect.width) * bpp;
        let mut out = Vec::with_capacity(row_len * usize::from(rect.height));
        for y in rect.y..rect.y + rect.height {
            let start = usize::from(y) * stride + usize::from(rect.x) * bpp;
            out.extend_from_slice(&self.pixels[start..start + row_len]);
        }
        Ok(out)
    }

    /// The pixel at (x, y) with channels rescaled to 0..=255.
    pub fn rgb_at(&self, x: u16, y: u16) -> Option<(u8, u8, u8)> {
        if x >= self.width || y >= self.height {
            return None;
        }
        let bpp = self.format.bytes_per_pixel();
        let off = (usize::from(y) * usize::from(self.width) + usize::from(x)) * bpp;
        let value = self.format.read_pixel(&self.pixels[off..off + bpp]);
        Some(self.format.unpack_rgb8(value))
    }

    /// Re-encodes every pixel into another true-color format.
    pub fn convert(&self, target: PixelFormat) -> Result<Framebuffer> {
        if !self.format.true_color || !target.true_color {
            return Err(Error::UnsupportedFormat(
                "conversion requires true-color formats".into(),
            ));
        }
        if target == self.format {
            return Ok(self.clone());
        }
        let (src_bpp, dst_bpp) = (self.format.bytes_per_pixel(), target.bytes_per_pixel());
        let mut out = vec![0u8; self.pixels.len() / src_bpp * dst_bpp];
        for (src, dst) in self
            .pixels
            .chunks_exact(src_bpp)
            .zip(out.chunks_exact_mut(dst_bpp))
        {
            let (r, g, b) = self.format.unpack_rgb8(self.format.read_pixel(src));
            target.write_pixel(target.pack_rgb(r, g, b), dst);
        }
        Ok(Framebuffer {
            width: self.width,
            height: self.height,
            format: target,
            pixels: out,
            generation: self.generation,
        })
    }

    /// 64-bit FNV-1a over the raw pixel bytes.
    pub fn content_hash(&self) -> u64 {
        fnv1a64(&self.pixels)
    }

    /// Per-pixel BT.601 luma, with channels first rescaled to 0..=255.
    pub fn to_grayscale(&self) -> Result<GrayFrame> {
        if !self.format.true_color {
            return Err(Error::UnsupportedFormat(
                "palette (non-true-color) framebuffer".into(),
            ));
        }
        let fmt = self.format;
        let bpp = fmt.bytes_per_pixel();
        let eight_bit = fmt.red_max == 255 && fmt.green_max == 255 && fmt.blue_max == 255;
        let values = self
            .pixels
            .chunks_exact(bpp)
            .map(|px| {
                let (r, g, b) = fmt.unpack(fmt.read_pixel(px));
                if eight_bit {
                    luma8(r as u32, g as u32, b as u32)
                } else {
                    luma_scaled(&fmt, r, g, b)
                }
            })
            .collect();
        Ok(GrayFrame {
            width: usize::from(self.width),
            height: usize::from(self.height),
            values,
        })
    }
}

/// round(0.299 R + 0.587 G + 0.114 B), exact in integers, halves rounded up.
#[inline]
fn luma8(r: u32, g: u32, b: u32) -> u8 {
    ((299 * r + 587 * g + 114 * b + 500) / 1000) as u8
}

/// Same as [`luma8`] for arbitrary channel maxima, evaluated as an exact
/// rational so every format rounds identically.
fn luma_scaled(fmt: &PixelFormat, r: u16, g: u16, b: u16) -> u8 {
    let (mr, mg, mb) = (
        u128::from(fmt.red_max),
        u128::from(fmt.green_max),
        u128::from(fmt.blue_max),
    );
    let (r, g, b) = (u128::from(r), u128::from(g), u128::from(b));
    let num = 255 * (299 * r * mg * mb + 587 * g * mr * mb + 114 * b * mr * mg);
    let den = 1000 * mr * mg * mb;
    ((2 * num + den) / (2 * den)).min(255) as u8
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

/// Row-major 8-bit luminance image.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    values: Vec<u8>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, values: Vec<u8>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Argument(format!(
                "{} values for a {width}x{height} frame",
                values.len()
            )));
        }
        Ok(GrayFrame {
            width,
            height,
            values,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        GrayFrame {
            width,
            height,
            values: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.values[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.values[y * self.width..(y + 1) * self.width]
    }

    pub fn mean(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().map(|&v| f64::from(v)).sum::<f64>() / self.values.len() as f64
    }

    pub fn crop(&self, x: usize, y: usize, width: usize, height: usize) -> Result<GrayFrame> {
        if width == 0 || height == 0 || x + width > self.width || y + height > self.height {
            return Err(Error::Argument(format!(
                "crop {x},{y} {width}x{height} outside {}x{} frame",
                self.width, self.height
            )));
        }
        let mut values = Vec::with_capacity(width * height);
        for row in y..y + height {
            values.extend_from_slice(&self.row(row)[x..x + width]);
        }
        Ok(GrayFrame {
            width,
            height,
            values,
        })
    }

    /// Box-filter downsampling.
    ///
    /// Output cell `i` along an axis of length `n` covers source indices
    /// `floor(i*n/m) .. floor((i+1)*n/m)`, so cells differ in size by at most
    /// one. Each output value is the cell mean rounded half-up.
    pub fn downsample(&self, out_width: usize, out_height: usize) -> Result<GrayFrame> {
        if out_width == 0
            || out_height == 0
            || out_width > self.width
            || out_height > self.height
        {
            return Err(Error::Argument(format!(
                "cannot downsample {}x{} to {out_width}x{out_height}",
                self.width, self.height
            )));
        }
        if out_width == self.width && out_height == self.height {
            return Ok(self.clone());
        }
        let xs = partition(self.width, out_width);
        let ys = partition(self.height, out_height);
        let mut values = Vec::with_capacity(out_width * out_height);
        for (y0, y1) in &ys {
            for (x0, x1) in &xs {
                let mut sum = 0u64;
                for y in *y0..*y1 {
                    sum += self.row(y)[*x0..*x1].iter().map(|&v| u64::from(v)).sum::<u64>();
                }
                let count = ((y1 - y0) * (x1 - x0)) as u64;
                values.push(((2 * sum + count) / (2 * count)) as u8);
            }
        }
        Ok(GrayFrame {
            width: out_width,
            height: out_height,
            values,
        })
    }
}

fn partition(n: usize, m: usize) -> Vec<(usize, usize)> {
    (0..m).map(|i| (i * n / m, (i + 1) * n / m)).collect()
}
