//! Float images, binary masks, PNG export and raw float dumps.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("png error: {0}")]
    Png(String),
    #[error("unsupported channel count {0}")]
    Channels(usize),
    #[error("malformed raw dump: {0}")]
    Raw(String),
}

/// Row-major `height x width x channels` float image. Row 0 is the top of the picture.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height * channels, "image data length");
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        (y * self.width + x) * self.channels
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = self.index(x, y);
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let i = self.index(x, y);
        let c = self.channels;
        &mut self.data[i..i + c]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Rounds every value to the nearest `f32`, the precision of the guidance wire format.
    pub fn to_f32_precision(mut self) -> Self {
        for v in &mut self.data {
            *v = *v as f32 as f64;
        }
        self
    }

    fn to_u8(v: f64) -> u8 {
        if v.is_nan() {
            return 0;
        }
        (v.clamp(0.0, 1.0) * 255.0).round() as u8
    }

    /// 8-bit PNG; values are clamped to `[0, 1]`. One channel is written as grayscale,
    /// three as RGB.
    pub fn save_png(&self, path: &Path) -> Result<(), ImageError> {
        let bytes: Vec<u8> = self.data.iter().map(|&v| Self::to_u8(v)).collect();
        let color = match self.channels {
            1 => image::ExtendedColorType::L8,
            3 => image::ExtendedColorType::Rgb8,
            4 => image::ExtendedColorType::Rgba8,
            c => return Err(ImageError::Channels(c)),
        };
        image::save_buffer(path, &bytes, self.width as u32, self.height as u32, color)
            .map_err(|e| ImageError::Png(e.to_string()))
    }

    /// Loads a PNG as a 3-channel image with values in `[0, 1]`.
    pub fn load_png_rgb(path: &Path) -> Result<Self, ImageError> {
        let img = image::open(path).map_err(|e| ImageError::Png(e.to_string()))?.to_rgb8();
        let (w, h) = img.dimensions();
        let data = img.as_raw().iter().map(|&b| b as f64 / 255.0).collect();
        Ok(Self::from_data(w as usize, h as usize, 3, data))
    }

    /// Horizontal concatenation of equally sized images.
    pub fn hstack(frames: &[Image]) -> Image {
        let first = &frames[0];
        let width: usize = frames.iter().map(|f| f.width).sum();
        let mut out = Image::new(width, first.height, first.channels);
        let mut x0 = 0;
        for f in frames {
            assert_eq!((f.height, f.channels), (first.height, first.channels));
            for y in 0..f.height {
                for x in 0..f.width {
                    out.pixel_mut(x0 + x, y).copy_from_slice(f.pixel(x, y));
                }
            }
            x0 += f.width;
        }
        out
    }
}

/// Binary `height x width` mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// As a one-channel image of zeros and ones.
    pub fn to_image(&self) -> Image {
        Image::from_data(
            self.width,
            self.height,
            1,
            self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
    }

    /// 1-bit grayscale PNG.
    pub fn save_png(&self, path: &Path) -> Result<(), ImageError> {
        let file = BufWriter::new(File::create(path)?);
        let mut enc = png::Encoder::new(file, self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::One);
        let mut writer = enc.write_header().map_err(|e| ImageError::Png(e.to_string()))?;
        let stride = self.width.div_ceil(8);
        let mut bytes = vec![0u8; stride * self.height];
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    bytes[y * stride + x / 8] |= 0x80 >> (x % 8);
                }
            }
        }
        writer
            .write_image_data(&bytes)
            .map_err(|e| ImageError::Png(e.to_string()))
    }
}

/// Peak signal-to-noise ratio for unit-range signals over the pixels selected by `mask`
/// (all pixels when `None`). Returns `+inf` for identical inputs.
pub fn psnr(a: &Image, b: &Image, mask: Option<&Mask>) -> f64 {
    assert!(a.same_shape(b), "psnr needs equally shaped images");
    let mut sum = 0.0;
    let mut count = 0usize;
    for p in 0..a.pixel_count() {
        if mask.is_some_and(|m| !m.data[p]) {
            continue;
        }
        for c in 0..a.channels {
            let d = a.data[p * a.channels + c] - b.data[p * b.channels + c];
            sum += d * d;
        }
        count += a.channels;
    }
    if count == 0 {
        return f64::INFINITY;
    }
    let mse = sum / count as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

const RAW_MAGIC: &[u8; 8] = b"TMRAWF64";

/// Writes a raw float dump: magic, `u32` rank, `u64` dims, then little-endian `f64` data.
pub fn write_raw(path: &Path, shape: &[usize], data: &[f64]) -> Result<(), ImageError> {
    assert_eq!(shape.iter().product::<usize>(), data.len(), "raw dump shape");
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(RAW_MAGIC)?;
    w.write_all(&(shape.len() as u32).to_le_bytes())?;
    for &d in shape {
        w.write_all(&(d as u64).to_le_bytes())?;
    }
    for v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_raw(path: &Path) -> Result<(Vec<usize>, Vec<f64>), ImageError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    decode_raw(&bytes)
}

pub fn decode_raw(bytes: &[u8]) -> Result<(Vec<usize>, Vec<f64>), ImageError> {
    let err = |m: &str| ImageError::Raw(m.to_string());
    if bytes.len() < 12 || &bytes[..8] != RAW_MAGIC {
        return Err(err("bad magic"));
    }
    let rank = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let mut off = 12;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let b = bytes.get(off..off + 8).ok_or_else(|| err("truncated header"))?;
        shape.push(u64::from_le_bytes(b.try_into().unwrap()) as usize);
        off += 8;
    }
    let count: usize = shape.iter().product();
    if bytes.len() != off + 8 * count {
        return Err(err("payload length does not match the shape"));
    }
    let data = bytes[off..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((shape, data))
}
