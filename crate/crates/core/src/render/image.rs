use std::path::Path;

use super::RenderError;
use crate::scalar::Real;

/// Row-major interleaved float image.
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T = f64> {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<T>,
}

impl<T: Real> Image<T> {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self { width, height, channels, data: vec![T::zero(); width * height * channels] }
    }

    pub fn filled(width: usize, height: usize, pixel: &[T]) -> Self {
        let mut data = Vec::with_capacity(width * height * pixel.len());
        for _ in 0..width * height {
            data.extend_from_slice(pixel);
        }
        Self { width, height, channels: pixel.len(), data }
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        (y * self.width + x) * self.channels
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[T] {
        let i = self.index(x, y);
        &self.data[i..i + self.channels]
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Single channel extracted as its own image.
    pub fn channel(&self, c: usize) -> Image<T> {
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data: self.data.iter().skip(c).step_by(self.channels).copied().collect(),
        }
    }

    pub fn mean(&self) -> T {
        if self.data.is_empty() {
            return T::zero();
        }
        self.data.iter().copied().sum::<T>() / T::count(self.data.len())
    }

    pub fn cast<U: Real>(&self) -> Image<U> {
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    /// Straight-alpha RGBA composited over a solid background to RGB.
    pub fn composite_rgba(&self, background: [T; 3]) -> Image<T> {
        assert_eq!(self.channels, 4, "composite needs RGBA");
        let mut out = Image::new(self.width, self.height, 3);
        for (src, dst) in self.data.chunks_exact(4).zip(out.data.chunks_exact_mut(3)) {
            let a = src[3];
            for c in 0..3 {
                dst[c] = a * src[c] + (T::one() - a) * background[c];
            }
        }
        out
    }

    /// Gradient of a composited RGB image pulled back to the straight RGBA input.
    pub fn composite_rgba_backward(rgba: &Image<T>, d_rgb: &Image<T>, background: [T; 3]) -> Image<T> {
        let mut out = Image::new(rgba.width, rgba.height, 4);
        for ((src, g), dst) in rgba.data.chunks_exact(4).zip(d_rgb.data.chunks_exact(3)).zip(out.data.chunks_exact_mut(4)) {
            let a = src[3];
            let mut ga = T::zero();
            for c in 0..3 {
                dst[c] = g[c] * a;
                ga += g[c] * (src[c] - background[c]);
            }
            dst[3] = ga;
        }
        out
    }

    /// Writes 8-bit PNG (1, 3 or 4 channels; RGBA is straight alpha).
    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), RenderError> {
        let path = path.as_ref();
        let color = match self.channels {
            1 => png::ColorType::Grayscale,
            3 => png::ColorType::Rgb,
            4 => png::ColorType::Rgba,
            c => return Err(RenderError::Image(format!("cannot write {c}-channel PNG"))),
        };
        let file = std::fs::File::create(path).map_err(|e| RenderError::Image(format!("{}: {e}", path.display())))?;
        let mut enc = png::Encoder::new(std::io::BufWriter::new(file), self.width as u32, self.height as u32);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let bytes: Vec<u8> = self
            .data
            .iter()
            .map(|v| (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let mut writer = enc.write_header().map_err(|e| RenderError::Image(e.to_string()))?;
        writer.write_image_data(&bytes).map_err(|e| RenderError::Image(e.to_string()))?;
        Ok(())
    }

    /// Reads an 8-bit PNG as RGB in [0, 1], compositing any alpha over white.
    pub fn load_png_rgb(path: impl AsRef<Path>) -> Result<Image<T>, RenderError> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| RenderError::Image(format!("{}: {e}", path.display())))?;
        let mut decoder = png::Decoder::new(std::io::BufReader::new(file));
        decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = decoder.read_info().map_err(|e| RenderError::Image(e.to_string()))?;
        let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
        let info = reader.next_frame(&mut buf).map_err(|e| RenderError::Image(e.to_string()))?;
        let (w, h) = (info.width as usize, info.height as usize);
        let ch = match info.color_type {
            png::ColorType::Grayscale => 1,
            png::ColorType::GrayscaleAlpha => 2,
            png::ColorType::Rgb => 3,
            png::ColorType::Rgba => 4,
            other => return Err(RenderError::Image(format!("unsupported PNG color type {other:?}"))),
        };
        let mut out = Image::new(w, h, 3);
        for (src, dst) in buf[..w * h * ch].chunks_exact(ch).zip(out.data.chunks_exact_mut(3)) {
            let f = |b: u8| b as f64 / 255.0;
            let (rgb, a) = match ch {
                1 => ([f(src[0]); 3], 1.0),
                2 => ([f(src[0]); 3], f(src[1])),
                3 => ([f(src[0]), f(src[1]), f(src[2])], 1.0),
                _ => ([f(src[0]), f(src[1]), f(src[2])], f(src[3])),
            };
            for c in 0..3 {
                dst[c] = T::lit(a * rgb[c] + (1.0 - a));
            }
        }
        Ok(out)
    }
}
