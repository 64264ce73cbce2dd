use crate::error::{Error, Result};
use crate::geometry::CropTransform;

/// Dense height x width x channels grid of 32-bit reals, stored row-major by
/// (row, column, channel), with provenance describing the crop it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    values: Vec<f32>,
    /// Scale factor of the crop this map was computed from (1.0 = the
    /// reference object size).
    pub scale: f32,
    /// Optional link between grid cells and image pixels.
    pub transform: Option<CropTransform>,
}

impl FeatureMap {
    pub fn new(
        height: usize,
        width: usize,
        channels: usize,
        values: Vec<f32>,
        scale: f32,
        transform: Option<CropTransform>,
    ) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::Input(format!(
                "feature map dimensions must be >= 1, got {height}x{width}x{channels}"
            )));
        }
        if values.len() != height * width * channels {
            return Err(Error::Input(format!(
                "feature map value count {} does not match {height}x{width}x{channels}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("feature map contains non-finite values".into()));
        }
        Ok(FeatureMap {
            height,
            width,
            channels,
            values,
            scale,
            transform,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        FeatureMap {
            height,
            width,
            channels,
            values: vec![0.0; height * width * channels],
            scale: 1.0,
            transform: None,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.width + col) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f32 {
        self.values[self.index(row, col, ch)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: f32) {
        let i = self.index(row, col, ch);
        self.values[i] = v;
    }

    /// All channel values at one grid cell, contiguous.
    #[inline]
    pub fn cell(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.width + col) * self.channels;
        &self.values[start..start + self.channels]
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}
