//! Floating-point RGB rasters and 8-bit PNG conversion.

use std::path::Path;

use thiserror::Error;

use crate::math::Vec3;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("failed to decode {path}: {source}")]
    Decode {
        path: String,
        #[source]
        source: ::image::ImageError,
    },
    #[error("failed to encode image: {0}")]
    Encode(#[from] ::image::ImageError),
    #[error("image dimensions {0}x{1} are invalid")]
    Dimensions(u32, u32),
}

/// Row-major RGB image with nominal range [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: u32,
    height: u32,
    data: Vec<Vec3>,
}

impl ImageBuffer {
    pub fn new(width: u32, height: u32, fill: Vec3) -> Self {
        Self {
            width,
            height,
            data: vec![fill; width as usize * height as usize],
        }
    }

    pub fn from_pixels(width: u32, height: u32, data: Vec<Vec3>) -> Result<Self, ImageError> {
        if data.len() != width as usize * height as usize {
            return Err(ImageError::Dimensions(width, height));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[Vec3] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [Vec3] {
        &mut self.data
    }

    pub fn get(&self, x: u32, y: u32) -> Vec3 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: Vec3) {
        let w = self.width as usize;
        self.data[y as usize * w + x as usize] = rgb;
    }

    pub fn same_size(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Largest per-channel absolute difference.
    pub fn max_abs_diff(&self, other: &ImageBuffer) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .flat_map(|(a, b)| (0..3).map(move |c| (a[c] - b[c]).abs()))
            .fold(0.0, f64::max)
    }

    /// Averages `factor`×`factor` blocks; trailing rows/columns that do not
    /// fill a block are dropped.
    pub fn downscale(&self, factor: u32) -> ImageBuffer {
        if factor <= 1 {
            return self.clone();
        }
        let (w, h) = (self.width / factor, self.height / factor);
        let norm = 1.0 / f64::from(factor * factor);
        let mut out = ImageBuffer::new(w, h, [0.0; 3]);
        for y in 0..h {
            for x in 0..w {
                let mut acc = [0.0; 3];
                for dy in 0..factor {
                    for dx in 0..factor {
                        let p = self.get(x * factor + dx, y * factor + dy);
                        for c in 0..3 {
                            acc[c] += p[c];
                        }
                    }
                }
                out.set(x, y, acc.map(|v| v * norm));
            }
        }
        out
    }

    /// Decodes a PNG or JPEG file into [0, 1] coded RGB (no linearization).
    pub fn load(path: &Path) -> Result<Self, ImageError> {
        let decoded = ::image::open(path).map_err(|source| ImageError::Decode {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::from_rgb8(&decoded.to_rgb8()))
    }

    pub fn from_rgb8(img: &::image::RgbImage) -> Self {
        let data = img
            .pixels()
            .map(|p| p.0.map(|v| f64::from(v) / 255.0))
            .collect();
        Self {
            width: img.width(),
            height: img.height(),
            data,
        }
    }

    /// 8-bit quantization with round-half-away-from-zero after clamping to [0, 1].
    pub fn to_rgb8(&self) -> ::image::RgbImage {
        let mut out = ::image::RgbImage::new(self.width, self.height);
        for (dst, src) in out.pixels_mut().zip(&self.data) {
            dst.0 = src.map(quantize);
        }
        out
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, ImageError> {
        let mut bytes = Vec::new();
        self.to_rgb8().write_to(
            &mut std::io::Cursor::new(&mut bytes),
            ::image::ImageFormat::Png,
        )?;
        Ok(bytes)
    }

    pub fn save_png(&self, path: &Path) -> Result<(), ImageError> {
        self.to_rgb8()
            .save_with_format(path, ::image::ImageFormat::Png)?;
        Ok(())
    }
}

pub fn quantize(v: f64) -> u8 {
    // f64::round rounds half away from zero.
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization_rounds_half_away_from_zero() {
        assert_eq!(quantize(0.5 / 255.0), 1);
        assert_eq!(quantize(1.5 / 255.0), 2);
        assert_eq!(quantize(-0.2), 0);
        assert_eq!(quantize(1.7), 255);
        assert_eq!(quantize(f64::NAN), 0);
    }

    #[test]
    fn downscale_averages_blocks() {
        let mut img = ImageBuffer::new(4, 2, [0.0; 3]);
        img.set(0, 0, [1.0, 1.0, 1.0]);
        img.set(3, 1, [0.4, 0.0, 0.8]);
        let half = img.downscale(2);
        assert_eq!((half.width(), half.height()), (2, 1));
        assert_eq!(half.get(0, 0), [0.25; 3]);
        assert_eq!(half.get(1, 0), [0.1, 0.0, 0.2]);
    }

    #[test]
    fn png_round_trip_preserves_quantized_values() {
        let mut img = ImageBuffer::new(3, 2, [0.0; 3]);
        img.set(1, 1, [1.0, 0.5, 0.25]);
        let bytes = img.encode_png().unwrap();
        let back = ImageBuffer::from_rgb8(&::image::load_from_memory(&bytes).unwrap().to_rgb8());
        assert!(back.max_abs_diff(&img) <= 0.5 / 255.0 + 1e-12);
    }
}
