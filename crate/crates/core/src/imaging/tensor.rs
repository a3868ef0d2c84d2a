use crate::error::{CoreError, Result};

/// Channel-major 3-D array of `f32` (CHW layout, row-major within a channel).
///
/// Holds feature maps produced by the embedding stage as well as the image
/// planes fed into convolution layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Tensor3 {
    /// Zero-filled tensor. All dimensions must be >= 1.
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        assert!(
            channels >= 1 && height >= 1 && width >= 1,
            "tensor dimensions must be >= 1, got {channels}x{height}x{width}"
        );
        Tensor3 {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_data(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if channels < 1 || height < 1 || width < 1 {
            return Err(CoreError::InvalidInput(format!(
                "tensor dimensions must be >= 1, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(CoreError::DimensionMismatch(format!(
                "tensor data length {} != {}x{}x{}",
                data.len(),
                channels,
                height,
                width
            )));
        }
        Ok(Tensor3 {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.idx(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        let i = self.idx(c, y, x);
        self.data[i] = v;
    }

    /// One channel plane as a contiguous row-major slice.
    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.height * self.width;
        &self.data[c * plane..(c + 1) * plane]
    }

    /// One row of one channel, contiguous.
    #[inline]
    pub fn row(&self, c: usize, y: usize) -> &[f32] {
        let start = self.idx(c, y, 0);
        &self.data[start..start + self.width]
    }
}
