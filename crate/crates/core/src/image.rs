//! Single-channel 8-bit pattern images and their PNG form.

use std::path::Path;

use image::{GrayImage, ImageFormat};

use crate::{Error, Result};

pub const BACKGROUND: u8 = 255;

/// Row-major 8-bit grayscale raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternImage {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl PatternImage {
    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        PatternImage { width, height, pixels: vec![value; width * height] }
    }

    /// White canvas.
    pub fn blank(width: usize, height: usize) -> Self {
        Self::filled(width, height, BACKGROUND)
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::InvalidParam(format!("{} pixels for a {width}x{height} image", pixels.len())));
        }
        Ok(PatternImage { width, height, pixels })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.pixels[y * self.width + x] = v;
    }

    /// Writes `min(current, v)`.
    #[inline]
    pub fn darken(&mut self, x: usize, y: usize, v: u8) {
        let p = &mut self.pixels[y * self.width + x];
        *p = (*p).min(v);
    }

    /// Pixels strictly darker than `threshold`.
    pub fn dark_mask(&self, threshold: u8) -> Vec<bool> {
        self.pixels.iter().map(|&p| p < threshold).collect()
    }

    pub fn dark_count(&self, threshold: u8) -> usize {
        self.pixels.iter().filter(|&&p| p < threshold).count()
    }

    pub fn transpose(&self) -> Self {
        let mut out = PatternImage::blank(self.height, self.width);
        for y in 0..self.height {
            for x in 0..self.width {
                out.set(y, x, self.get(x, y));
            }
        }
        out
    }

    fn to_gray_image(&self) -> GrayImage {
        GrayImage::from_raw(self.width as u32, self.height as u32, self.pixels.clone()).expect("buffer matches dimensions")
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut buf = std::io::Cursor::new(Vec::new());
        self.to_gray_image().write_to(&mut buf, ImageFormat::Png).map_err(|e| Error::Image { path: "<memory>".into(), source: e })?;
        Ok(buf.into_inner())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes = self.encode_png()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    /// Loads any image the decoder understands, converted to 8-bit luma.
    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path).map_err(|e| Error::Image { path: path.into(), source: e })?.to_luma8();
        let (w, h) = img.dimensions();
        Ok(PatternImage { width: w as usize, height: h as usize, pixels: img.into_raw() })
    }
}
