//! Pixel grids, masks and the self-contained edit operations.
//!
//! Everything here is pure and deterministic: the same inputs always produce
//! bit-identical outputs, which the undo stack and the golden tests rely on.

mod color;
mod inpaint;
mod mask;
mod metrics;
mod shaping;

use std::io::Cursor;
use std::path::Path;

use thiserror::Error;

pub use color::{
    adjust_brightness, apply_filter, recolor_region, recolor_region_with_ratio, retain_object,
    Filter, Shade, BRIGHTNESS_STEP, MAX_BRIGHTNESS_DEGREE, RECOLOR_RATIO, RETAIN_BACKGROUND,
};
pub use inpaint::{naive_inpaint, naive_inpaint_with_stats, InpaintStats};
pub use mask::{dilate_mask, iou, overlap_area};
pub use metrics::{psnr, ssim, PSNR_CAP_DB, SSIM_STRIDE, SSIM_WINDOW};
pub use shaping::{scale_region, ShapeWarp};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImageError {
    #[error("expected a {expected}-channel image, got {actual} channels")]
    ChannelMismatch { expected: u8, actual: u8 },
    #[error("mask is {mask_w}x{mask_h} but image is {image_w}x{image_h}")]
    MaskDimensionMismatch {
        mask_w: u32,
        mask_h: u32,
        image_w: u32,
        image_h: u32,
    },
    #[error("masks differ in size: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("images differ in shape: {0:?} vs {1:?}")]
    ShapeMismatch((u32, u32, u8), (u32, u32, u8)),
    #[error("mask covers the whole image; nothing to inpaint from")]
    FullMask,
    #[error("brightness degree {0} outside -10..=10")]
    DegreeOutOfRange(i32),
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("decode failed: {0}")]
    Decode(String),
    #[error("encode failed: {0}")]
    Encode(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, ImageError>;

/// Row-major 8-bit image with 1 (gray) or 3 (RGB) interleaved channels.
#[derive(Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    channels: u8,
    data: Vec<u8>,
}

impl std::fmt::Debug for RasterImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RasterImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("channels", &self.channels)
            .finish_non_exhaustive()
    }
}

impl RasterImage {
    pub fn new(width: u32, height: u32, channels: u8, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(ImageError::InvalidRaster(format!(
                "dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(ImageError::InvalidRaster(format!(
                "unsupported channel count {channels}"
            )));
        }
        let expected = width as usize * height as usize * channels as usize;
        if data.len() != expected {
            return Err(ImageError::InvalidRaster(format!(
                "data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Uniform RGB image.
    pub fn filled_rgb(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut data = Vec::with_capacity(n * 3);
        for _ in 0..n {
            data.extend_from_slice(&rgb);
        }
        Self::new(width, height, 3, data).expect("valid dimensions")
    }

    pub fn filled_gray(width: u32, height: u32, value: u8) -> Self {
        Self::new(width, height, 1, vec![value; width as usize * height as usize])
            .expect("valid dimensions")
    }

    pub fn from_fn_rgb(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, 3, data).expect("valid dimensions")
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn shape(&self) -> (u32, u32, u8) {
        (self.width, self.height, self.channels)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn pixel(&self, x: u32, y: u32) -> &[u8] {
        let c = self.channels as usize;
        let i = (y as usize * self.width as usize + x as usize) * c;
        &self.data[i..i + c]
    }

    pub fn pixel_mut(&mut self, x: u32, y: u32) -> &mut [u8] {
        let c = self.channels as usize;
        let i = (y as usize * self.width as usize + x as usize) * c;
        &mut self.data[i..i + c]
    }

    pub fn require_rgb(&self) -> Result<()> {
        if self.channels == 3 {
            Ok(())
        } else {
            Err(ImageError::ChannelMismatch {
                expected: 3,
                actual: self.channels,
            })
        }
    }

    pub fn check_mask(&self, mask: &BinaryMask) -> Result<()> {
        if mask.dimensions() == self.dimensions() {
            Ok(())
        } else {
            Err(ImageError::MaskDimensionMismatch {
                mask_w: mask.width(),
                mask_h: mask.height(),
                image_w: self.width,
                image_h: self.height,
            })
        }
    }

    /// Luma plane (BT.601 weights) as floats; gray images pass through.
    pub fn luma(&self) -> Vec<f64> {
        match self.channels {
            1 => self.data.iter().map(|&v| v as f64).collect(),
            _ => self
                .data
                .chunks_exact(3)
                .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
                .collect(),
        }
    }

    /// SHA-256 over shape and samples, hex encoded. Used as a stable image id.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        hasher.update(self.width.to_le_bytes());
        hasher.update(self.height.to_le_bytes());
        hasher.update([self.channels]);
        hasher.update(&self.data);
        hex::encode(hasher.finalize())
    }

    /// Decodes PNG or JPEG bytes. Alpha is dropped; 16-bit is narrowed.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let dynamic = image::load_from_memory(bytes).map_err(|e| ImageError::Decode(e.to_string()))?;
        let has_color = dynamic.color().has_color();
        if has_color {
            let rgb = dynamic.into_rgb8();
            let (w, h) = rgb.dimensions();
            Self::new(w, h, 3, rgb.into_raw())
        } else {
            let gray = dynamic.into_luma8();
            let (w, h) = gray.dimensions();
            Self::new(w, h, 1, gray.into_raw())
        }
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let color = if self.channels == 3 {
            image::ExtendedColorType::Rgb8
        } else {
            image::ExtendedColorType::L8
        };
        let mut out = Cursor::new(Vec::new());
        image::write_buffer_with_format(
            &mut out,
            &self.data,
            self.width,
            self.height,
            color,
            image::ImageFormat::Png,
        )
        .map_err(|e| ImageError::Encode(e.to_string()))?;
        Ok(out.into_inner())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path.as_ref())
            .map_err(|e| ImageError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Self::decode(&bytes)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let bytes = self.encode_png()?;
        std::fs::write(path.as_ref(), bytes)
            .map_err(|e| ImageError::Io(format!("{}: {e}", path.as_ref().display())))
    }
}

/// Row-major boolean mask.
#[derive(Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
}

impl std::fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BinaryMask")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("set", &self.count())
            .finish()
    }
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(ImageError::InvalidRaster(format!(
                "mask dimensions must be positive, got {width}x{height}"
            )));
        }
        if bits.len() != width as usize * height as usize {
            return Err(ImageError::InvalidRaster(format!(
                "mask has {} bits, expected {}",
                bits.len(),
                width as usize * height as usize
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn empty(width: u32, height: u32) -> Self {
        Self::new(width, height, vec![false; width as usize * height as usize])
            .expect("valid dimensions")
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self::new(width, height, vec![true; width as usize * height as usize])
            .expect("valid dimensions")
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self::new(width, height, bits).expect("valid dimensions")
    }

    /// Axis-aligned rectangle `[x0, x0+w) x [y0, y0+h)`, clipped to the mask.
    pub fn rect(width: u32, height: u32, x0: u32, y0: u32, w: u32, h: u32) -> Self {
        Self::from_fn(width, height, |x, y| {
            x >= x0 && x < x0.saturating_add(w) && y >= y0 && y < y0.saturating_add(h)
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        let w = self.width as usize;
        self.bits[y as usize * w + x as usize] = value;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    pub fn is_full(&self) -> bool {
        self.bits.iter().all(|&b| b)
    }

    /// Any nonzero sample (first channel) is set.
    pub fn from_image(image: &RasterImage) -> Self {
        let c = image.channels() as usize;
        let bits = image.data().chunks_exact(c).map(|p| p[0] != 0).collect();
        Self::new(image.width(), image.height(), bits).expect("image dimensions are valid")
    }

    /// Set bits become 255, clear bits 0, as a gray image.
    pub fn to_image(&self) -> RasterImage {
        let data = self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
        RasterImage::new(self.width, self.height, 1, data).expect("mask dimensions are valid")
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        Ok(Self::from_image(&RasterImage::decode(bytes)?))
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        self.to_image().encode_png()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::from_image(&RasterImage::load(path)?))
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_image().save_png(path)
    }

    /// Centroid of the set bits, if any.
    pub fn centroid(&self) -> Option<(f64, f64)> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    sx += x as f64;
                    sy += y as f64;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raster_rejects_bad_length() {
        assert!(RasterImage::new(2, 2, 3, vec![0; 11]).is_err());
        assert!(RasterImage::new(0, 2, 3, vec![]).is_err());
        assert!(RasterImage::new(1, 1, 4, vec![0; 4]).is_err());
    }

    #[test]
    fn png_round_trip_is_lossless() {
        let img = RasterImage::from_fn_rgb(7, 5, |x, y| [(x * 30) as u8, (y * 40) as u8, 17]);
        let back = RasterImage::decode(&img.encode_png().unwrap()).unwrap();
        assert_eq!(back, img);

        let gray = RasterImage::new(3, 2, 1, vec![0, 1, 2, 250, 251, 255]).unwrap();
        assert_eq!(RasterImage::decode(&gray.encode_png().unwrap()).unwrap(), gray);
    }

    #[test]
    fn corrupt_bytes_fail_to_decode() {
        assert!(matches!(
            RasterImage::decode(b"not an image"),
            Err(ImageError::Decode(_))
        ));
    }

    #[test]
    fn mask_png_round_trip() {
        let m = BinaryMask::from_fn(9, 4, |x, y| (x + y) % 3 == 0);
        assert_eq!(BinaryMask::decode_png(&m.encode_png().unwrap()).unwrap(), m);
    }

    #[test]
    fn digest_depends_on_shape() {
        let a = RasterImage::filled_gray(4, 1, 9);
        let b = RasterImage::filled_gray(2, 2, 9);
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), a.clone().digest());
    }
}
