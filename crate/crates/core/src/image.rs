//! Float raster images and the codec/resampling helpers every other module
//! builds on.
//!
//! Intensities are stored as `f64` in `[0, 1]`, row-major, channels
//! interleaved. Buffers are immutable once constructed.

use std::fmt;
use std::io::Cursor;
use std::path::Path;

use image::codecs::jpeg::JpegEncoder;
use image::{ExtendedColorType, ImageEncoder};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// BT.601 luma weights for red and blue; green takes the remainder.
const LUMA_R: f64 = 0.299;
const LUMA_B: f64 = 0.114;

#[derive(Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl fmt::Debug for ImageBuffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImageBuffer")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("channels", &self.channels)
            .finish_non_exhaustive()
    }
}

impl ImageBuffer {
    /// Builds a buffer, checking shape, channel count and value range.
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "empty image {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!(
                "unsupported channel count {channels}"
            )));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidImage(format!(
                "data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidImage(format!(
                "intensity {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Constructs a buffer from a closure over `(x, y, channel)`. Values are
    /// clamped into `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(clamp_unit(f(x, y, c)));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    /// Uniform image.
    pub fn constant(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(
            width,
            height,
            channels,
            vec![clamp_unit(value); width * height * channels],
        )
    }

    /// Crate-internal constructor for buffers whose invariants the caller
    /// already guarantees (same shape as a validated input, values clamped).
    pub(crate) fn from_parts(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height * channels);
        debug_assert!(data.iter().all(|v| (0.0..=1.0).contains(v)));
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    /// Extracts one channel as a dense `width * height` plane.
    pub fn plane(&self, c: usize) -> Vec<f64> {
        assert!(c < self.channels, "channel {c} out of range");
        self.data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    /// Reassembles an image from per-channel planes.
    pub(crate) fn from_planes(width: usize, height: usize, planes: &[Vec<f64>]) -> Self {
        let channels = planes.len();
        let mut data = vec![0.0; width * height * channels];
        for (c, plane) in planes.iter().enumerate() {
            for (i, v) in plane.iter().enumerate() {
                data[i * channels + c] = clamp_unit(*v);
            }
        }
        Self::from_parts(width, height, channels, data)
    }

    /// Rounds every sample to the nearest 8-bit level (`round(v * 255) / 255`).
    pub fn quantize(&self) -> ImageBuffer {
        let data = self
            .data
            .iter()
            .map(|v| f64::from(to_u8(*v)) / 255.0)
            .collect();
        Self::from_parts(self.width, self.height, self.channels, data)
    }

    pub fn to_u8_vec(&self) -> Vec<u8> {
        self.data.iter().map(|v| to_u8(*v)).collect()
    }

    /// Arithmetic mean over all samples.
    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

#[inline]
pub(crate) fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

#[inline]
fn to_u8(v: f64) -> u8 {
    (clamp_unit(v) * 255.0).round() as u8
}

/// Opaque image identifier: a manifest key or a relative path.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ImageId(String);

impl ImageId {
    pub fn new(id: impl Into<String>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(Error::InvalidParameter("image id must be non-empty".into()));
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.0.as_bytes()
    }
}

impl TryFrom<String> for ImageId {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        Self::new(value)
    }
}

impl From<ImageId> for String {
    fn from(value: ImageId) -> Self {
        value.0
    }
}

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    Png,
    Jpeg,
}

/// Decodes PNG or JPEG bytes. `name` only feeds error messages.
pub fn decode(bytes: &[u8], name: &str) -> Result<ImageBuffer> {
    let decoded = image::load_from_memory(bytes).map_err(|e| Error::Decode {
        name: name.to_string(),
        reason: e.to_string(),
    })?;
    let (width, height) = (decoded.width() as usize, decoded.height() as usize);
    let grayscale = !decoded.color().has_color();
    let (channels, raw) = if grayscale {
        (1, decoded.into_luma8().into_raw())
    } else {
        (3, decoded.into_rgb8().into_raw())
    };
    let data = raw.into_iter().map(|v| f64::from(v) / 255.0).collect();
    ImageBuffer::new(width, height, channels, data).map_err(|e| Error::Decode {
        name: name.to_string(),
        reason: e.to_string(),
    })
}

/// Encodes at 8-bit depth. `quality` is used by JPEG only (clamped to 1..=100).
pub fn encode(img: &ImageBuffer, format: ImageFormat, quality: u8) -> Result<Vec<u8>> {
    let color = if img.channels() == 1 {
        ExtendedColorType::L8
    } else {
        ExtendedColorType::Rgb8
    };
    let (w, h) = (img.width() as u32, img.height() as u32);
    let bytes = img.to_u8_vec();
    let mut out = Vec::new();
    match format {
        ImageFormat::Png => {
            image::codecs::png::PngEncoder::new(Cursor::new(&mut out))
                .write_image(&bytes, w, h, color)
                .map_err(|e| Error::Encode(e.to_string()))?;
        }
        ImageFormat::Jpeg => {
            JpegEncoder::new_with_quality(Cursor::new(&mut out), quality.clamp(1, 100))
                .write_image(&bytes, w, h, color)
                .map_err(|e| Error::Encode(e.to_string()))?;
        }
    }
    Ok(out)
}

pub fn read_image(path: &Path) -> Result<ImageBuffer> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, &path.display().to_string())
}

pub fn write_png(img: &ImageBuffer, path: &Path) -> Result<()> {
    let bytes = encode(img, ImageFormat::Png, 100)?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// BT.601 luma. Single-channel inputs are returned unchanged.
pub fn to_grayscale(img: &ImageBuffer) -> ImageBuffer {
    if img.channels() == 1 {
        return img.clone();
    }
    let data = img
        .data()
        .chunks_exact(3)
        .map(|px| {
            let (r, g, b) = (px[0], px[1], px[2]);
            // Written relative to green so that gray pixels map exactly.
            clamp_unit(g + LUMA_R * (r - g) + LUMA_B * (b - g))
        })
        .collect();
    ImageBuffer::from_parts(img.width(), img.height(), 1, data)
}

/// Bilinear resampling with pixel-centre alignment and edge clamping; no
/// antialiasing prefilter.
pub fn resize(img: &ImageBuffer, width: usize, height: usize) -> Result<ImageBuffer> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidParameter(format!(
            "resize target must be at least 1x1, got {width}x{height}"
        )));
    }
    if width == img.width() && height == img.height() {
        return Ok(img.clone());
    }
    let xs = sample_positions(img.width(), width);
    let ys = sample_positions(img.height(), height);
    let ch = img.channels();
    let mut data = Vec::with_capacity(width * height * ch);
    for &(y0, y1, ty) in &ys {
        for &(x0, x1, tx) in &xs {
            for c in 0..ch {
                let a = img.get(x0, y0, c);
                let b = img.get(x1, y0, c);
                let p = img.get(x0, y1, c);
                let q = img.get(x1, y1, c);
                let top = a + (b - a) * tx;
                let bottom = p + (q - p) * tx;
                data.push(clamp_unit(top + (bottom - top) * ty));
            }
        }
    }
    Ok(ImageBuffer::from_parts(width, height, ch, data))
}

fn sample_positions(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = pos.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, pos - i0 as f64)
        })
        .collect()
}

/// Deterministic non-constant RGB pattern for unit tests.
#[cfg(test)]
pub(crate) fn gradient_rgb(width: usize, height: usize) -> ImageBuffer {
    ImageBuffer::from_fn(width, height, 3, |x, y, c| {
        ((x * 7 + y * 13 + c * 29) % 97) as f64 / 96.0
    })
    .unwrap()
}
