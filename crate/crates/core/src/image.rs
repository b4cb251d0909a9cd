//! Float RGBA images with premultiplied color, and 8-bit PNG I/O.
//!
//! PNG files store straight (non-premultiplied) alpha; loading premultiplies
//! so that renders (composited over black) and ground truth compare directly.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, RgbaImage as PngBuffer};

use crate::error::{CoreError, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct RgbaImage {
    pub width: u32,
    pub height: u32,
    /// `height * width * 4`, premultiplied rgb then alpha.
    pub data: Vec<f32>,
}

impl RgbaImage {
    pub fn new(width: u32, height: u32) -> Self {
        RgbaImage {
            width,
            height,
            data: vec![0.0; (width * height * 4) as usize],
        }
    }

    /// Builds an image from premultiplied rgb (3 per pixel) and alpha maps.
    pub fn from_maps(width: u32, height: u32, rgb: &[f32], alpha: &[f32]) -> Result<Self> {
        let n = (width * height) as usize;
        if rgb.len() != 3 * n || alpha.len() != n {
            return Err(CoreError::ShapeMismatch(format!(
                "maps ({}, {}) for {width}x{height}",
                rgb.len(),
                alpha.len()
            )));
        }
        let mut data = Vec::with_capacity(4 * n);
        for p in 0..n {
            data.extend_from_slice(&rgb[3 * p..3 * p + 3]);
            data.push(alpha[p]);
        }
        Ok(RgbaImage { width, height, data })
    }

    pub fn pixel_count(&self) -> usize {
        (self.width * self.height) as usize
    }

    pub fn pixel(&self, x: u32, y: u32) -> [f32; 4] {
        let i = ((y * self.width + x) * 4) as usize;
        [self.data[i], self.data[i + 1], self.data[i + 2], self.data[i + 3]]
    }

    pub fn rgb(&self) -> Vec<f32> {
        self.data
            .chunks_exact(4)
            .flat_map(|p| [p[0], p[1], p[2]])
            .collect()
    }

    pub fn alpha(&self) -> Vec<f32> {
        self.data.chunks_exact(4).map(|p| p[3]).collect()
    }

    pub fn same_shape(&self, other: &RgbaImage) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(CoreError::ShapeMismatch(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    /// 8-bit straight-alpha RGBA buffer.
    pub fn to_rgba8(&self) -> PngBuffer {
        let q = |v: f32| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        let mut buf = PngBuffer::new(self.width, self.height);
        for (px, p) in buf.pixels_mut().zip(self.data.chunks_exact(4)) {
            let a = p[3].clamp(0.0, 1.0);
            let un = |c: f32| if a > 0.0 { c / a } else { 0.0 };
            px.0 = [q(un(p[0])), q(un(p[1])), q(un(p[2])), q(a)];
        }
        buf
    }

    pub fn from_rgba8(buf: &PngBuffer) -> Self {
        let mut data = Vec::with_capacity((buf.width() * buf.height() * 4) as usize);
        for px in buf.pixels() {
            let a = px.0[3] as f32 / 255.0;
            for c in 0..3 {
                data.push(px.0[c] as f32 / 255.0 * a);
            }
            data.push(a);
        }
        RgbaImage {
            width: buf.width(),
            height: buf.height(),
            data,
        }
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_png_bytes()?)
            .map_err(|e| CoreError::Image(format!("{}: {e}", path.as_ref().display())))
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Cursor::new(Vec::new());
        self.to_rgba8()
            .write_to(&mut out, ImageFormat::Png)
            .map_err(|e| CoreError::Image(e.to_string()))?;
        Ok(out.into_inner())
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path.as_ref())
            .map_err(|e| CoreError::Image(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_png_bytes(&bytes)
    }

    pub fn from_png_bytes(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
            .map_err(|e| CoreError::Image(e.to_string()))?;
        Ok(Self::from_rgba8(&img.to_rgba8()))
    }

    /// Quantizes to the values an 8-bit round trip would produce.
    pub fn quantized(&self) -> Self {
        Self::from_rgba8(&self.to_rgba8())
    }
}
