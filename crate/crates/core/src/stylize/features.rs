//! Feature maps: the builtin differentiable descriptor and FMAP files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{invalid, DecodeError, Error, Result};
use crate::image::Image;

/// Spatial stride of the builtin descriptor.
pub const STRIDE: usize = 8;
/// Channels of the builtin descriptor: mean Y/Cb/Cr, 8 orientation bins,
/// luminance variance.
pub const BUILTIN_CHANNELS: usize = 12;
const ORIENT_BINS: usize = 8;
const ORIENT_KAPPA: f64 = 2.0;
const NORM_FLOOR: f64 = 1e-8;
const GRAD_FLOOR: f64 = 1e-12;

const FMAP_MAGIC: &[u8; 4] = b"FMAP";
const FMAP_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FeatureSource {
    Builtin,
    File(PathBuf),
}

/// Channel-major feature grid. Values are kept in f64; file-backed maps hold
/// exactly the stored f32 values.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
    pub source: FeatureSource,
}

impl FeatureMap {
    pub fn locations(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Feature vector at row-major location `loc`.
    pub fn vector(&self, loc: usize) -> Vec<f64> {
        let n = self.locations();
        (0..self.channels).map(|c| self.data[c * n + loc]).collect()
    }
}

/// Which extractor to use: `builtin` or `file:<dir>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Extractor {
    Builtin,
    File(PathBuf),
}

impl std::str::FromStr for Extractor {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "builtin" {
            Ok(Self::Builtin)
        } else if let Some(p) = s.strip_prefix("file:") {
            if p.is_empty() {
                return invalid("file extractor needs a directory: file:<dir>");
            }
            Ok(Self::File(PathBuf::from(p)))
        } else {
            invalid(format!(
                "unknown extractor '{s}' (expected builtin or file:<dir>)"
            ))
        }
    }
}

impl Extractor {
    /// Features of `image`. File extractors read `<dir>/<key>.fmap`.
    pub fn extract(&self, image: &Image, key: &str) -> Result<FeatureMap> {
        match self {
            Self::Builtin => Ok(extract_builtin(image)),
            Self::File(dir) => read_fmap(&dir.join(format!("{key}.fmap"))),
        }
    }
}

pub fn grid_size(width: usize, height: usize) -> (usize, usize) {
    (width.div_ceil(STRIDE), height.div_ceil(STRIDE))
}

const YCC: [[f64; 3]; 3] = [
    [0.299, 0.587, 0.114],
    [-0.564 * 0.299, -0.564 * 0.587, 0.564 * (1.0 - 0.114)],
    [0.713 * (1.0 - 0.299), -0.713 * 0.587, -0.713 * 0.114],
];

fn bin_axes() -> [(f64, f64); ORIENT_BINS] {
    std::array::from_fn(|k| {
        let c = k as f64 * std::f64::consts::PI / ORIENT_BINS as f64;
        ((2.0 * c).cos(), (2.0 * c).sin())
    })
}

/// Per-pixel luminance/chroma and central-difference luminance gradients.
struct Prepared {
    ycc: Vec<[f64; 3]>,
    gx: Vec<f64>,
    gy: Vec<f64>,
}

fn prepare(image: &Image) -> Prepared {
    let (w, h) = (image.width, image.height);
    let ycc: Vec<[f64; 3]> = (0..w * h)
        .map(|p| {
            let px = &image.data[p * image.channels..p * image.channels + 3];
            YCC.map(|row| row[0] * px[0] + row[1] * px[1] + row[2] * px[2])
        })
        .collect();
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
            gx[y * w + x] = 0.5 * (ycc[y * w + xr][0] - ycc[y * w + xl][0]);
            gy[y * w + x] = 0.5 * (ycc[yd * w + x][0] - ycc[yu * w + x][0]);
        }
    }
    Prepared { ycc, gx, gy }
}

/// Smooth orientation response of one gradient to every bin:
/// `m·exp(κ(cos(2θ − 2c_k) − 1))`.
fn orient_response(gx: f64, gy: f64, axes: &[(f64, f64); ORIENT_BINS]) -> [f64; ORIENT_BINS] {
    let m2 = gx * gx + gy * gy + GRAD_FLOOR;
    let m = m2.sqrt();
    let c2 = (gx * gx - gy * gy) / m2;
    let s2 = 2.0 * gx * gy / m2;
    axes.map(|(ck, sk)| m * (ORIENT_KAPPA * (c2 * ck + s2 * sk - 1.0)).exp())
}

fn cell_range(i: usize, len: usize) -> std::ops::Range<usize> {
    i * STRIDE..((i + 1) * STRIDE).min(len)
}

/// Unnormalized descriptors, per location, in channel order.
fn raw_descriptors(image: &Image, prep: &Prepared) -> Vec<[f64; BUILTIN_CHANNELS]> {
    let (w, h) = (image.width, image.height);
    let (fw, fh) = grid_size(w, h);
    let axes = bin_axes();
    let mut out = Vec::with_capacity(fw * fh);
    for cy in 0..fh {
        for cx in 0..fw {
            let mut v = [0.0; BUILTIN_CHANNELS];
            let mut n = 0.0;
            for y in cell_range(cy, h) {
                for x in cell_range(cx, w) {
                    let p = y * w + x;
                    for c in 0..3 {
                        v[c] += prep.ycc[p][c];
                    }
                    let r = orient_response(prep.gx[p], prep.gy[p], &axes);
                    for k in 0..ORIENT_BINS {
                        v[3 + k] += r[k];
                    }
                    n += 1.0;
                }
            }
            for val in v.iter_mut().take(3 + ORIENT_BINS) {
                *val /= n;
            }
            let mut var = 0.0;
            for y in cell_range(cy, h) {
                for x in cell_range(cx, w) {
                    let d = prep.ycc[y * w + x][0] - v[0];
                    var += d * d;
                }
            }
            v[11] = var / n;
            out.push(v);
        }
    }
    out
}

/// Stride-8 descriptor: mean luminance and chroma, an 8-bin soft histogram of
/// gradient orientation (weighted by magnitude) and luminance variance, each
/// location scaled to unit length.
pub fn extract_builtin(image: &Image) -> FeatureMap {
    let prep = prepare(image);
    let raw = raw_descriptors(image, &prep);
    let (fw, fh) = grid_size(image.width, image.height);
    let n = fw * fh;
    let mut data = vec![0.0; BUILTIN_CHANNELS * n];
    for (loc, v) in raw.iter().enumerate() {
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        for c in 0..BUILTIN_CHANNELS {
            data[c * n + loc] = v[c] / (norm + NORM_FLOOR);
        }
    }
    FeatureMap {
        channels: BUILTIN_CHANNELS,
        height: fh,
        width: fw,
        data,
        source: FeatureSource::Builtin,
    }
}

/// Vector-Jacobian product of [`extract_builtin`]: maps a gradient on the
/// feature map to a gradient on the RGB image.
pub fn builtin_backward(image: &Image, grad: &FeatureMap) -> Result<Image> {
    let (w, h) = (image.width, image.height);
    let (fw, fh) = grid_size(w, h);
    if grad.channels != BUILTIN_CHANNELS || grad.width != fw || grad.height != fh {
        return invalid("feature gradient does not match the builtin grid of this image");
    }
    let prep = prepare(image);
    let raw = raw_descriptors(image, &prep);
    let axes = bin_axes();
    let nloc = fw * fh;
    let mut d_ycc = vec![[0.0f64; 3]; w * h];
    let mut d_gx = vec![0.0; w * h];
    let mut d_gy = vec![0.0; w * h];

    for cy in 0..fh {
        for cx in 0..fw {
            let loc = cy * fw + cx;
            let v = &raw[loc];
            let g: Vec<f64> = (0..BUILTIN_CHANNELS)
                .map(|c| grad.data[c * nloc + loc])
                .collect();
            // f = v / (|v| + ε)
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            let den = norm + NORM_FLOOR;
            let vg: f64 = v.iter().zip(&g).map(|(a, b)| a * b).sum();
            let dv: Vec<f64> = (0..BUILTIN_CHANNELS)
                .map(|c| {
                    let radial = if norm > 0.0 {
                        v[c] * vg / (norm * den * den)
                    } else {
                        0.0
                    };
                    g[c] / den - radial
                })
                .collect();
            let rows = cell_range(cy, h);
            let cols = cell_range(cx, w);
            let n = (rows.len() * cols.len()) as f64;
            for y in rows {
                for x in cols.clone() {
                    let p = y * w + x;
                    for c in 0..3 {
                        d_ycc[p][c] += dv[c] / n;
                    }
                    d_ycc[p][0] += dv[11] * 2.0 * (prep.ycc[p][0] - v[0]) / n;

                    let (gx, gy) = (prep.gx[p], prep.gy[p]);
                    let m2 = gx * gx + gy * gy + GRAD_FLOOR;
                    let m = m2.sqrt();
                    let a = gx * gx - gy * gy;
                    let b = 2.0 * gx * gy;
                    let (c2, s2) = (a / m2, b / m2);
                    let m4 = m2 * m2;
                    let dc2_dx = 2.0 * gx * (m2 - a) / m4;
                    let ds2_dx = (2.0 * gy * m2 - 2.0 * gx * b) / m4;
                    let dc2_dy = -2.0 * gy * (m2 + a) / m4;
                    let ds2_dy = (2.0 * gx * m2 - 2.0 * gy * b) / m4;
                    for (k, &(ck, sk)) in axes.iter().enumerate() {
                        let e = (ORIENT_KAPPA * (c2 * ck + s2 * sk - 1.0)).exp();
                        let up = dv[3 + k] / n * e;
                        d_gx[p] += up * (gx / m + m * ORIENT_KAPPA * (ck * dc2_dx + sk * ds2_dx));
                        d_gy[p] += up * (gy / m + m * ORIENT_KAPPA * (ck * dc2_dy + sk * ds2_dy));
                    }
                }
            }
        }
    }

    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
            d_ycc[y * w + xr][0] += 0.5 * d_gx[p];
            d_ycc[y * w + xl][0] -= 0.5 * d_gx[p];
            d_ycc[yd * w + x][0] += 0.5 * d_gy[p];
            d_ycc[yu * w + x][0] -= 0.5 * d_gy[p];
        }
    }

    let mut out = Image::new(w, h, image.channels);
    for p in 0..w * h {
        for ch in 0..3 {
            out.data[p * image.channels + ch] = (0..3).map(|r| YCC[r][ch] * d_ycc[p][r]).sum();
        }
    }
    Ok(out)
}

pub fn write_fmap(path: &Path, fm: &FeatureMap) -> Result<()> {
    let mut buf = Vec::with_capacity(20 + 4 * fm.data.len());
    buf.extend_from_slice(FMAP_MAGIC);
    for v in [
        FMAP_VERSION,
        fm.channels as u32,
        fm.height as u32,
        fm.width as u32,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for &v in &fm.data {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn decode_fmap(bytes: &[u8], origin: PathBuf) -> Result<FeatureMap> {
    if bytes.len() < 20 {
        if bytes.len() < 4 || &bytes[..4] != FMAP_MAGIC {
            return Err(DecodeError::MalformedHeader("missing FMAP magic".into()).into());
        }
        return Err(DecodeError::Truncated {
            expected: 20,
            found: bytes.len(),
        }
        .into());
    }
    if &bytes[..4] != FMAP_MAGIC {
        return Err(DecodeError::MalformedHeader("missing FMAP magic".into()).into());
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let version = word(0);
    if version != FMAP_VERSION {
        return Err(DecodeError::UnsupportedVersion(format!("FMAP version {version}")).into());
    }
    let (c, h, w) = (word(1) as usize, word(2) as usize, word(3) as usize);
    if c == 0 || h == 0 || w == 0 {
        return Err(DecodeError::MalformedHeader(format!("empty feature grid {c}x{h}x{w}")).into());
    }
    let expected = c
        .checked_mul(h)
        .and_then(|v| v.checked_mul(w))
        .and_then(|v| v.checked_mul(4))
        .and_then(|v| v.checked_add(20))
        .ok_or_else(|| DecodeError::MalformedHeader("feature grid too large".into()))?;
    if bytes.len() != expected {
        if bytes.len() < expected {
            return Err(DecodeError::Truncated {
                expected,
                found: bytes.len(),
            }
            .into());
        }
        return Err(DecodeError::MalformedHeader(format!(
            "{} trailing bytes",
            bytes.len() - expected
        ))
        .into());
    }
    let data: Vec<f64> = bytes[20..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return invalid("feature file contains non-finite values");
    }
    Ok(FeatureMap {
        channels: c,
        height: h,
        width: w,
        data,
        source: FeatureSource::File(origin),
    })
}

pub fn read_fmap(path: &Path) -> Result<FeatureMap> {
    let bytes = fs::read(path).map_err(|e| {
        Error::InvalidInput(format!("cannot read feature file {}: {e}", path.display()))
    })?;
    decode_fmap(&bytes, path.to_path_buf())
}
