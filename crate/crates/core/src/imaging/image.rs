use crate::error::{CoreError, Result};

/// Raster image: interleaved row-major HWC, `f32` samples in `[0, 255]`.
///
/// Channels is 1 (grayscale) or 3 (RGB). Pixel values stay in the 8-bit
/// range as floats; normalization is the consumer's job so that cropping
/// and resizing stay layout-exact.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    /// Zero-filled image. `channels` must be 1 or 3.
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        assert!(height >= 1 && width >= 1, "image dimensions must be >= 1");
        assert!(
            channels == 1 || channels == 3,
            "channels must be 1 or 3, got {channels}"
        );
        Image {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn from_data(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height < 1 || width < 1 {
            return Err(CoreError::InvalidInput(
                "image dimensions must be >= 1".into(),
            ));
        }
        if channels != 1 && channels != 3 {
            return Err(CoreError::InvalidInput(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(CoreError::DimensionMismatch(format!(
                "image data length {} != {}x{}x{}",
                data.len(),
                height,
                width,
                channels
            )));
        }
        Ok(Image {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f32) {
        let i = (y * self.width + x) * self.channels + c;
        self.data[i] = v;
    }

    /// Per-channel mean over the whole image, accumulated in f64 so the
    /// result does not depend on traversal order for integer-valued pixels.
    pub fn per_channel_mean(&self) -> Vec<f32> {
        let mut sums = vec![0.0f64; self.channels];
        for px in self.data.chunks_exact(self.channels) {
            for (s, &v) in sums.iter_mut().zip(px) {
                *s += v as f64;
            }
        }
        let n = (self.height * self.width) as f64;
        sums.iter().map(|s| (s / n) as f32).collect()
    }

    /// Grayscale view: channel mean per pixel (identity for 1-channel input).
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let mut out = Image::new(self.height, self.width, 1);
        for (o, px) in out.data.iter_mut().zip(self.data.chunks_exact(3)) {
            *o = (px[0] + px[1] + px[2]) / 3.0;
        }
        out
    }
}

/// Axis-aligned target region in image pixels, stored center + size.
///
/// The center is unrestricted (a box may lie partly or fully outside the
/// frame); width and height are strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub cx: f32,
    pub cy: f32,
    pub w: f32,
    pub h: f32,
}

impl BoundingBox {
    pub fn new(cx: f32, cy: f32, w: f32, h: f32) -> Result<Self> {
        if !(w > 0.0 && h > 0.0 && w.is_finite() && h.is_finite()) {
            return Err(CoreError::InvalidInput(format!(
                "box size must be positive and finite, got {w}x{h}"
            )));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(CoreError::InvalidInput("box center must be finite".into()));
        }
        Ok(BoundingBox { cx, cy, w, h })
    }

    /// From the annotation convention: top-left pixel index plus size.
    /// Centers use `(w - 1) / 2` offsets so integer-pixel boxes round-trip.
    pub fn from_top_left(x: f32, y: f32, w: f32, h: f32) -> Result<Self> {
        BoundingBox::new(x + (w - 1.0) / 2.0, y + (h - 1.0) / 2.0, w, h)
    }

    /// Back to the annotation convention `(x, y, w, h)`.
    pub fn to_top_left(&self) -> (f32, f32, f32, f32) {
        (
            self.cx - (self.w - 1.0) / 2.0,
            self.cy - (self.h - 1.0) / 2.0,
            self.w,
            self.h,
        )
    }

    pub fn area(&self) -> f32 {
        self.w * self.h
    }

    /// Same center, both sides multiplied by `factor`.
    pub fn scaled(&self, factor: f32) -> BoundingBox {
        BoundingBox {
            cx: self.cx,
            cy: self.cy,
            w: self.w * factor,
            h: self.h * factor,
        }
    }

    pub fn with_center(&self, cx: f32, cy: f32) -> BoundingBox {
        BoundingBox { cx, cy, ..*self }
    }

    /// Intersection-over-union treating each box as the continuous rectangle
    /// of its extent. Symmetric, in [0, 1], and 1 only for identical boxes.
    pub fn iou(&self, other: &BoundingBox) -> f32 {
        let half = |b: &BoundingBox| (b.w / 2.0, b.h / 2.0);
        let (hw_a, hh_a) = half(self);
        let (hw_b, hh_b) = half(other);
        let ix = (self.cx + hw_a).min(other.cx + hw_b) - (self.cx - hw_a).max(other.cx - hw_b);
        let iy = (self.cy + hh_a).min(other.cy + hh_b) - (self.cy - hh_a).max(other.cy - hh_b);
        if ix <= 0.0 || iy <= 0.0 {
            return 0.0;
        }
        let inter = ix * iy;
        let union = self.area() + other.area() - inter;
        inter / union
    }

    /// Euclidean distance between the two box centers.
    pub fn center_error(&self, other: &BoundingBox) -> f32 {
        let dx = self.cx - other.cx;
        let dy = self.cy - other.cy;
        (dx * dx + dy * dy).sqrt()
    }
}
