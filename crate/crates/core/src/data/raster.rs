//! In-memory rasters: RGB images in `[0, 1]` and single-channel signed grids.

use std::path::Path;

use image::{ImageBuffer, Rgb};

use super::DataError;

/// Row-major interleaved RGB image with channel values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self, DataError> {
        if width == 0 || height == 0 {
            return Err(DataError::EmptyRaster);
        }
        if data.len() != width * height * 3 {
            return Err(DataError::ShapeMismatch {
                expected: width * height * 3,
                actual: data.len(),
            });
        }
        if let Some(pos) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(DataError::PixelOutOfRange {
                index: pos,
                value: data[pos] as f64,
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let data = std::iter::repeat_n(rgb, width * height).flatten().collect();
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Writes a pixel, clamping each channel into `[0, 1]`.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        for c in 0..3 {
            self.data[i + c] = rgb[c].clamp(0.0, 1.0);
        }
    }

    /// Rec. 601 luma of one pixel.
    #[inline]
    pub fn luminance(&self, x: usize, y: usize) -> f32 {
        let [r, g, b] = self.get(x, y);
        luma(r, g, b)
    }

    /// One channel as a row-major plane.
    pub fn channel(&self, c: usize) -> Vec<f32> {
        self.data.iter().skip(c).step_by(3).copied().collect()
    }

    /// Reassembles an image from three planes, clamping into `[0, 1]`.
    pub fn from_planes(width: usize, height: usize, planes: [&[f32]; 3]) -> Self {
        let n = width * height;
        let mut data = Vec::with_capacity(n * 3);
        for i in 0..n {
            for plane in &planes {
                data.push(plane[i].clamp(0.0, 1.0));
            }
        }
        Self { width, height, data }
    }

    pub fn from_png_bytes(bytes: &[u8]) -> Result<Self, DataError> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)?;
        Ok(Self::from_dynamic(img))
    }

    /// Reads an 8-bit RGB or RGBA PNG; alpha is dropped.
    pub fn load_png(path: &Path) -> Result<Self, DataError> {
        let bytes = std::fs::read(path).map_err(|e| DataError::io(path, e))?;
        Self::from_png_bytes(&bytes)
    }

    fn from_dynamic(img: image::DynamicImage) -> Self {
        let rgb = img.to_rgb8();
        let (w, h) = rgb.dimensions();
        let data = rgb.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
        Self {
            width: w as usize,
            height: h as usize,
            data,
        }
    }

    /// Quantizes to 8 bits per channel.
    pub fn to_rgb8(&self) -> ImageBuffer<Rgb<u8>, Vec<u8>> {
        let raw = self.data.iter().map(|&v| quantize(v)).collect();
        ImageBuffer::from_raw(self.width as u32, self.height as u32, raw)
            .expect("buffer length matches dimensions")
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>, DataError> {
        let mut out = std::io::Cursor::new(Vec::new());
        self.to_rgb8().write_to(&mut out, image::ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn save_png(&self, path: &Path) -> Result<(), DataError> {
        let bytes = self.to_png_bytes()?;
        std::fs::write(path, bytes).map_err(|e| DataError::io(path, e))
    }
}

#[inline]
pub fn luma(r: f32, g: f32, b: f32) -> f32 {
    0.299 * r + 0.587 * g + 0.114 * b
}

#[inline]
fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Row-major `height x width` grid of finite signed values.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    height: usize,
    width: usize,
    values: Vec<f32>,
}

impl Grid {
    pub fn new(height: usize, width: usize, values: Vec<f32>) -> Result<Self, DataError> {
        if height == 0 || width == 0 {
            return Err(DataError::EmptyRaster);
        }
        if values.len() != height * width {
            return Err(DataError::ShapeMismatch {
                expected: height * width,
                actual: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(DataError::NonFinite { index });
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::new(height, width, vec![0.0; height * width]).expect("non-empty zero grid")
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.values[row * self.width + col]
    }

    pub fn max_abs(&self) -> f32 {
        self.values.iter().fold(0.0f32, |m, v| m.max(v.abs()))
    }

    /// Renders the grid with a diverging palette: negative blue, zero white,
    /// positive red, scaled by the largest magnitude.
    pub fn to_heatmap(&self) -> RgbImage {
        let scale = self.max_abs();
        let mut data = Vec::with_capacity(self.values.len() * 3);
        for &v in &self.values {
            let t = if scale > 0.0 { v / scale } else { 0.0 };
            let rgb = if t >= 0.0 {
                [1.0, 1.0 - t, 1.0 - t]
            } else {
                [1.0 + t, 1.0 + t, 1.0]
            };
            data.extend(rgb);
        }
        RgbImage::new(self.width, self.height, data).expect("palette stays in range")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_pixels() {
        let err = RgbImage::new(1, 1, vec![0.0, 1.5, 0.0]).unwrap_err();
        assert!(matches!(err, DataError::PixelOutOfRange { index: 1, .. }));
        assert!(RgbImage::new(2, 1, vec![0.0; 3]).is_err());
    }

    #[test]
    fn png_round_trip_preserves_8bit_values() {
        let data: Vec<f32> = (0..4 * 3 * 3).map(|i| (i * 7 % 256) as f32 / 255.0).collect();
        let img = RgbImage::new(4, 3, data).unwrap();
        let back = RgbImage::from_png_bytes(&img.to_png_bytes().unwrap()).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn rgba_png_drops_alpha() {
        let buf: ImageBuffer<image::Rgba<u8>, Vec<u8>> =
            ImageBuffer::from_raw(1, 1, vec![255, 0, 51, 10]).unwrap();
        let mut bytes = std::io::Cursor::new(Vec::new());
        buf.write_to(&mut bytes, image::ImageFormat::Png).unwrap();
        let img = RgbImage::from_png_bytes(bytes.get_ref()).unwrap();
        assert_eq!(img.get(0, 0), [1.0, 0.0, 0.2]);
    }

    #[test]
    fn heatmap_palette() {
        let g = Grid::new(1, 3, vec![-2.0, 0.0, 2.0]).unwrap();
        let h = g.to_heatmap();
        assert_eq!(h.get(0, 0), [0.0, 0.0, 1.0]);
        assert_eq!(h.get(1, 0), [1.0, 1.0, 1.0]);
        assert_eq!(h.get(2, 0), [1.0, 0.0, 0.0]);
    }

    #[test]
    fn grid_rejects_nan() {
        assert!(matches!(
            Grid::new(1, 2, vec![0.0, f32::NAN]),
            Err(DataError::NonFinite { index: 1 })
        ));
    }
}
