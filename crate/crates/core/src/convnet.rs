//! Minimal convolution building blocks shared by the embedding stage and
//! the classifier's frozen feature stack. Weights are fixed after seeded
//! construction; nothing here ever trains.

use crate::error::{CoreError, Result};
use crate::imaging::ops::dot_rows;
use crate::imaging::{Image, Tensor3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// One valid-mode convolution layer with optional ReLU.
///
/// Weights are laid out `[out_ch][in_ch][k][k]`, one bias per filter.
#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub relu: bool,
    weights: Vec<f32>,
    bias: Vec<f32>,
}

impl ConvLayer {
    /// Seeded scaled-uniform init: U(-a, a) with a = sqrt(1 / fan_in).
    pub fn seeded(
        in_ch: usize,
        out_ch: usize,
        kernel: usize,
        stride: usize,
        relu: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let fan_in = (in_ch * kernel * kernel) as f32;
        let a = (1.0 / fan_in).sqrt();
        let weights = (0..out_ch * in_ch * kernel * kernel)
            .map(|_| rng.random_range(-a..a))
            .collect();
        let bias = (0..out_ch).map(|_| rng.random_range(-a..a)).collect();
        ConvLayer {
            in_ch,
            out_ch,
            kernel,
            stride,
            relu,
            weights,
            bias,
        }
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn bias(&self) -> &[f32] {
        &self.bias
    }

    /// Output side length for a square input, or None if the input is
    /// smaller than the kernel.
    pub fn out_size(&self, n: usize) -> Option<usize> {
        if n < self.kernel {
            None
        } else {
            Some((n - self.kernel) / self.stride + 1)
        }
    }

    pub fn forward(&self, input: &Tensor3) -> Result<Tensor3> {
        if input.channels() != self.in_ch {
            return Err(CoreError::DimensionMismatch(format!(
                "conv expects {} channels, got {}",
                self.in_ch,
                input.channels()
            )));
        }
        let (oh, ow) = match (self.out_size(input.height()), self.out_size(input.width())) {
            (Some(h), Some(w)) => (h, w),
            _ => {
                return Err(CoreError::DimensionMismatch(format!(
                    "input {}x{} smaller than kernel {}",
                    input.height(),
                    input.width(),
                    self.kernel
                )))
            }
        };
        let k = self.kernel;
        let window = self.in_ch * k * k;
        let mut out = Tensor3::new(self.out_ch, oh, ow);
        // gather one output row of input windows, then run every filter as
        // a long contiguous dot product (im2col, one row at a time)
        let mut col = vec![0.0f32; ow * window];
        for oy in 0..oh {
            let iy = oy * self.stride;
            for ox in 0..ow {
                let ix = ox * self.stride;
                let dst = &mut col[ox * window..(ox + 1) * window];
                let mut p = 0;
                for c in 0..self.in_ch {
                    for ky in 0..k {
                        dst[p..p + k].copy_from_slice(&input.row(c, iy + ky)[ix..ix + k]);
                        p += k;
                    }
                }
            }
            for f in 0..self.out_ch {
                let w_filter = &self.weights[f * window..(f + 1) * window];
                for ox in 0..ow {
                    let v = self.bias[f] + dot_rows(w_filter, &col[ox * window..(ox + 1) * window]);
                    out.set(f, oy, ox, if self.relu { v.max(0.0) } else { v });
                }
            }
        }
        Ok(out)
    }
}

/// 2x2 max pooling with stride 2; trailing odd row/column is dropped.
pub fn max_pool2(input: &Tensor3) -> Tensor3 {
    let oh = input.height() / 2;
    let ow = input.width() / 2;
    assert!(oh >= 1 && ow >= 1, "input too small to pool");
    let mut out = Tensor3::new(input.channels(), oh, ow);
    for c in 0..input.channels() {
        for oy in 0..oh {
            for ox in 0..ow {
                let v = input
                    .get(c, 2 * oy, 2 * ox)
                    .max(input.get(c, 2 * oy, 2 * ox + 1))
                    .max(input.get(c, 2 * oy + 1, 2 * ox))
                    .max(input.get(c, 2 * oy + 1, 2 * ox + 1));
                out.set(c, oy, ox, v);
            }
        }
    }
    out
}

/// Per-patch normalization used in front of every conv stack: subtract the
/// patch mean and divide by the patch standard deviation (eps guard 1e-6).
/// Statistics accumulate in f64 so integer-valued inputs normalize
/// identically regardless of pixel order.
pub fn normalize_patch(t: &mut Tensor3) {
    let n = t.data().len() as f64;
    let mut sum = 0.0f64;
    let mut sq = 0.0f64;
    for &v in t.data() {
        sum += v as f64;
        sq += (v as f64) * (v as f64);
    }
    let mean = sum / n;
    let var = (sq / n - mean * mean).max(0.0);
    let std = var.sqrt().max(1e-6);
    for v in t.data_mut() {
        *v = ((*v as f64 - mean) / std) as f32;
    }
}

/// Image (HWC, 1 or 3 channels) to planar tensor with exactly `channels`
/// planes; a grayscale image is replicated across the requested planes.
pub fn image_to_tensor(img: &Image, channels: usize) -> Tensor3 {
    let mut t = Tensor3::new(channels, img.height(), img.width());
    for c in 0..channels {
        let src_c = if img.channels() == 1 { 0 } else { c.min(img.channels() - 1) };
        for y in 0..img.height() {
            for x in 0..img.width() {
                t.set(c, y, x, img.get(y, x, src_c));
            }
        }
    }
    t
}
