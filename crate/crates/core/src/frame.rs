use std::fmt;

use crate::error::{Error, Result};

/// Height, width and channel count of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Shape {
            height,
            width,
            channels,
        }
    }

    pub const fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// A normalized raster, stored row-major in `(height, width, channels)` order.
///
/// Every pixel lies in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTensor {
    shape: Shape,
    pixels: Vec<f64>,
}

impl FrameTensor {
    pub fn new(shape: Shape, pixels: Vec<f64>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::Input(format!("frame shape {shape} has a zero dimension")));
        }
        if pixels.len() != shape.len() {
            return Err(Error::InputShape {
                expected: format!("{shape} ({} values)", shape.len()),
                actual: format!("{} values", pixels.len()),
            });
        }
        if let Some(v) = pixels.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Input(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(FrameTensor { shape, pixels })
    }

    /// Builds a frame from 8-bit samples, dividing by 255.
    pub fn from_u8(shape: Shape, raw: &[u8]) -> Result<Self> {
        Self::new(shape, raw.iter().map(|&b| f64::from(b) / 255.0).collect())
    }

    pub fn zeros(shape: Shape) -> Self {
        FrameTensor {
            shape,
            pixels: vec![0.0; shape.len()],
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.pixels[(row * self.shape.width + col) * self.shape.channels + channel]
    }

    /// Channel-major copy of the pixels, the layout the network layers consume.
    pub fn to_chw(&self) -> Vec<f64> {
        let Shape {
            height,
            width,
            channels,
        } = self.shape;
        if channels == 1 {
            return self.pixels.clone();
        }
        let mut out = vec![0.0; self.pixels.len()];
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    out[(ch * height + r) * width + c] = self.pixels[(r * width + c) * channels + ch];
                }
            }
        }
        out
    }

    /// Inverse of [`FrameTensor::to_chw`]. Values must already be in `[0, 1]`.
    pub(crate) fn from_chw(shape: Shape, chw: &[f64]) -> Self {
        debug_assert_eq!(chw.len(), shape.len());
        let Shape {
            height,
            width,
            channels,
        } = shape;
        let pixels = if channels == 1 {
            chw.to_vec()
        } else {
            let mut out = vec![0.0; chw.len()];
            for ch in 0..channels {
                for r in 0..height {
                    for c in 0..width {
                        out[(r * width + c) * channels + ch] = chw[(ch * height + r) * width + c];
                    }
                }
            }
            out
        };
        FrameTensor { shape, pixels }
    }

    /// Averages channels into a single-channel frame.
    pub fn to_grayscale(&self) -> FrameTensor {
        let c = self.shape.channels;
        if c == 1 {
            return self.clone();
        }
        let pixels = self
            .pixels
            .chunks_exact(c)
            .map(|px| px.iter().sum::<f64>() / c as f64)
            .collect();
        FrameTensor {
            shape: Shape::new(self.shape.height, self.shape.width, 1),
            pixels,
        }
    }

    /// Quantizes to 8-bit grayscale, averaging channels first.
    pub fn to_gray_u8(&self) -> Vec<u8> {
        self.to_grayscale()
            .pixels
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
            .collect()
    }
}
