//! Floating-point images and PNG I/O.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Row-major interleaved image with `channels` values per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn filled(width: usize, height: usize, value: &[f64]) -> Self {
        let mut data = Vec::with_capacity(width * height * value.len());
        for _ in 0..width * height {
            data.extend_from_slice(value);
        }
        Self {
            width,
            height,
            channels: value.len(),
            data,
        }
    }

    pub fn from_data(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return invalid(format!(
                "image buffer has {} values, expected {width}x{height}x{channels}",
                data.len()
            ));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        (y * self.width + x) * self.channels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y) + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let i = self.index(x, y) + c;
        self.data[i] = v;
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = self.index(x, y);
        &self.data[i..i + self.channels]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes an RGB image as 8-bit PNG (values clamped to [0, 1]).
pub fn save_png(path: &Path, img: &Image) -> Result<()> {
    if img.channels != 3 {
        return invalid("save_png expects a 3-channel image");
    }
    let file = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(file, img.width as u32, img.height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header()?;
    let bytes: Vec<u8> = img.data.iter().map(|&v| to_u8(v)).collect();
    writer.write_image_data(&bytes)?;
    Ok(())
}

/// Reads an 8-bit PNG as an RGB float image in [0, 1]. Gray and alpha
/// channels are expanded or dropped.
pub fn load_png(path: &Path) -> Result<Image> {
    let mut dec = png::Decoder::new(std::io::BufReader::new(File::open(path)?));
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec.read_info()?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let src_channels = info.color_type.samples();
    let mut img = Image::new(w, h, 3);
    for p in 0..w * h {
        let px = &buf[p * src_channels..(p + 1) * src_channels];
        let rgb = match src_channels {
            1 | 2 => [px[0]; 3],
            _ => [px[0], px[1], px[2]],
        };
        for c in 0..3 {
            img.data[p * 3 + c] = rgb[c] as f64 / 255.0;
        }
    }
    Ok(img)
}

/// Sidecar metadata for 16-bit depth PNGs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthSidecar {
    /// Depth value that maps to 65535.
    pub max_depth: f64,
}

/// Writes a single-channel depth map as 16-bit grayscale PNG plus a JSON
/// sidecar (`<path>.json`) recording the scale.
pub fn save_depth_png(path: &Path, depth: &Image) -> Result<DepthSidecar> {
    if depth.channels != 1 {
        return invalid("save_depth_png expects a 1-channel image");
    }
    let max_depth = depth.max_value();
    let scale = if max_depth > 0.0 {
        65535.0 / max_depth
    } else {
        0.0
    };
    let file = BufWriter::new(File::create(path)?);
    let mut enc = png::Encoder::new(file, depth.width as u32, depth.height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Sixteen);
    let mut writer = enc.write_header()?;
    let mut bytes = Vec::with_capacity(depth.data.len() * 2);
    for &d in &depth.data {
        let q = (d.max(0.0) * scale).round().min(65535.0) as u16;
        bytes.extend_from_slice(&q.to_be_bytes());
    }
    writer.write_image_data(&bytes)?;
    let sidecar = DepthSidecar { max_depth };
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(sidecar)
}

pub fn load_depth_png(path: &Path) -> Result<Image> {
    let sidecar: DepthSidecar =
        serde_json::from_str(&std::fs::read_to_string(sidecar_path(path))?)?;
    let dec = png::Decoder::new(std::io::BufReader::new(File::open(path)?));
    let mut reader = dec.read_info()?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf)?;
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != png::BitDepth::Sixteen {
        return invalid("depth PNG must be 16-bit grayscale");
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let data = buf[..w * h * 2]
        .chunks_exact(2)
        .map(|b| u16::from_be_bytes([b[0], b[1]]) as f64 * sidecar.max_depth / 65535.0)
        .collect();
    Image::from_data(w, h, 1, data)
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_quantizes_to_8_bits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let mut img = Image::new(5, 3, 3);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = (i as f64 * 17.0 % 256.0) / 255.0;
        }
        save_png(&path, &img).unwrap();
        let back = load_png(&path).unwrap();
        assert_eq!(back.width, 5);
        for (a, b) in img.data.iter().zip(back.data.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn depth_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        let data: Vec<f64> = (0..12).map(|i| i as f64 * 0.37).collect();
        let depth = Image::from_data(4, 3, 1, data).unwrap();
        let side = save_depth_png(&path, &depth).unwrap();
        assert_eq!(side.max_depth, 11.0 * 0.37);
        let back = load_depth_png(&path).unwrap();
        for (a, b) in depth.data.iter().zip(back.data.iter()) {
            assert!((a - b).abs() <= side.max_depth / 65535.0);
        }
    }
}
