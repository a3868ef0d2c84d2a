use super::{Image, Tensor3};
use crate::error::{CoreError, Result};

/// Plain 2-D grid of `f32` scores, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGrid {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl ScoreGrid {
    pub fn from_data(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(CoreError::DimensionMismatch(format!(
                "grid data length {} != {rows}x{cols}",
                data.len()
            )));
        }
        Ok(ScoreGrid { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    /// Row-major-first cell holding the maximum value.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut best_v = f32::NEG_INFINITY;
        for r in 0..self.rows {
            for c in 0..self.cols {
                let v = self.get(r, c);
                if v > best_v {
                    best_v = v;
                    best = (r, c);
                }
            }
        }
        best
    }

    pub fn min_max(&self) -> (f32, f32) {
        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        for &v in &self.data {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }
}

/// f32 dot product with eight accumulators so the compiler can vectorize;
/// the summation order is fixed, keeping results deterministic. Inputs are
/// short-to-moderate rows (kernel windows, exemplar rows), well within f32
/// accumulation accuracy; callers needing more total rows in f64.
#[inline]
pub(crate) fn dot_rows(a: &[f32], b: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        let j = i * 8;
        for l in 0..8 {
            acc[l] += a[j + l] * b[j + l];
        }
    }
    let mut tail = 0.0;
    for j in chunks * 8..a.len() {
        tail += a[j] * b[j];
    }
    let head = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    head + tail
}

/// Valid-mode cross-correlation of `exemplar` slid over `candidate`, summed
/// across channels, plus a constant bias on every output cell.
///
/// Output is `(Hc - He + 1) x (Wc - We + 1)`. Row products accumulate into
/// an f64 total; the bias is added in f32 as the final step so that maps
/// computed with different biases differ by exactly that constant.
pub fn xcorr_valid(candidate: &Tensor3, exemplar: &Tensor3, bias: f32) -> Result<ScoreGrid> {
    if candidate.channels() != exemplar.channels() {
        return Err(CoreError::DimensionMismatch(format!(
            "channel count {} != {}",
            candidate.channels(),
            exemplar.channels()
        )));
    }
    if exemplar.height() > candidate.height() || exemplar.width() > candidate.width() {
        return Err(CoreError::DimensionMismatch(format!(
            "exemplar {}x{} larger than candidate {}x{}",
            exemplar.height(),
            exemplar.width(),
            candidate.height(),
            candidate.width()
        )));
    }
    let out_h = candidate.height() - exemplar.height() + 1;
    let out_w = candidate.width() - exemplar.width() + 1;
    let mut out = vec![0.0f32; out_h * out_w];
    for oy in 0..out_h {
        for ox in 0..out_w {
            let mut acc = 0.0f64;
            for c in 0..candidate.channels() {
                for ky in 0..exemplar.height() {
                    let cand_row = &candidate.row(c, oy + ky)[ox..ox + exemplar.width()];
                    acc += dot_rows(cand_row, exemplar.row(c, ky)) as f64;
                }
            }
            out[oy * out_w + ox] = acc as f32 + bias;
        }
    }
    ScoreGrid::from_data(out_h, out_w, out)
}

/// Integer pixel anchor of a square crop: round-half-up of the ideal
/// top-left coordinate. Monotone in `center`, no tie surprises at .5.
#[inline]
fn crop_anchor(center: f32, side: usize) -> i64 {
    (center as f64 - (side as f64 - 1.0) / 2.0 + 0.5).floor() as i64
}

/// Square `side x side` crop centered (to the nearest pixel) at `center`,
/// with out-of-frame samples filled by the per-channel mean of the source.
///
/// Total: a fully out-of-frame crop comes back all-mean.
pub fn crop_padded(image: &Image, center: (f32, f32), side: usize) -> Image {
    assert!(side >= 1, "crop side must be >= 1");
    let x0 = crop_anchor(center.0, side);
    let y0 = crop_anchor(center.1, side);
    let mean = image.per_channel_mean();
    let ch = image.channels();
    let mut out = Image::new(side, side, ch);
    for oy in 0..side {
        let sy = y0 + oy as i64;
        for ox in 0..side {
            let sx = x0 + ox as i64;
            let inside =
                sy >= 0 && sx >= 0 && (sy as usize) < image.height() && (sx as usize) < image.width();
            for c in 0..ch {
                let v = if inside {
                    image.get(sy as usize, sx as usize, c)
                } else {
                    mean[c]
                };
                out.set(oy, ox, c, v);
            }
        }
    }
    out
}

/// Bilinear resize with corner-aligned sampling: output corners map onto
/// input corners. Identity (bit-exact copy) when the size is unchanged.
pub fn resize_bilinear(image: &Image, out_h: usize, out_w: usize) -> Image {
    assert!(out_h >= 1 && out_w >= 1, "resize target must be >= 1");
    if out_h == image.height() && out_w == image.width() {
        return image.clone();
    }
    let ch = image.channels();
    let src_pos = |o: usize, out_n: usize, src_n: usize| -> f32 {
        if out_n == 1 {
            (src_n as f32 - 1.0) / 2.0
        } else {
            o as f32 * (src_n as f32 - 1.0) / (out_n as f32 - 1.0)
        }
    };
    let lerp = |a: f32, b: f32, t: f32| a + t * (b - a);
    let mut out = Image::new(out_h, out_w, ch);
    for oy in 0..out_h {
        let fy = src_pos(oy, out_h, image.height());
        let y0 = (fy.floor() as usize).min(image.height() - 1);
        let y1 = (y0 + 1).min(image.height() - 1);
        let ty = fy - y0 as f32;
        for ox in 0..out_w {
            let fx = src_pos(ox, out_w, image.width());
            let x0 = (fx.floor() as usize).min(image.width() - 1);
            let x1 = (x0 + 1).min(image.width() - 1);
            let tx = fx - x0 as f32;
            for c in 0..ch {
                let top = lerp(image.get(y0, x0, c), image.get(y0, x1, c), tx);
                let bot = lerp(image.get(y1, x0, c), image.get(y1, x1, c), tx);
                out.set(oy, ox, c, lerp(top, bot, ty));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Triple-loop reference correlation, independent of the production path.
    fn xcorr_oracle(candidate: &Tensor3, exemplar: &Tensor3, bias: f32) -> Vec<f32> {
        let out_h = candidate.height() - exemplar.height() + 1;
        let out_w = candidate.width() - exemplar.width() + 1;
        let mut out = Vec::with_capacity(out_h * out_w);
        for oy in 0..out_h {
            for ox in 0..out_w {
                let mut acc = 0.0f64;
                for c in 0..exemplar.channels() {
                    for ky in 0..exemplar.height() {
                        for kx in 0..exemplar.width() {
                            acc += candidate.get(c, oy + ky, ox + kx) as f64
                                * exemplar.get(c, ky, kx) as f64;
                        }
                    }
                }
                out.push(acc as f32 + bias);
            }
        }
        out
    }

    fn random_tensor(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize) -> Tensor3 {
        let data = (0..c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor3::from_data(c, h, w, data).unwrap()
    }

    #[test]
    fn identical_ones_give_nine() {
        let t = Tensor3::from_data(1, 3, 3, vec![1.0; 9]).unwrap();
        let m = xcorr_valid(&t, &t, 0.0).unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 1));
        assert_eq!(m.get(0, 0), 9.0);
    }

    #[test]
    fn bias_shifts_every_cell_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cand = random_tensor(&mut rng, 2, 6, 7);
        let ex = random_tensor(&mut rng, 2, 3, 3);
        let b = 1.25f32;
        let m0 = xcorr_valid(&cand, &ex, 0.0).unwrap();
        let mb = xcorr_valid(&cand, &ex, b).unwrap();
        for (v0, vb) in m0.data().iter().zip(mb.data()) {
            assert_eq!(*vb, *v0 + b);
        }
        assert_eq!(m0.argmax(), mb.argmax());
    }

    #[test]
    fn matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let cand = random_tensor(&mut rng, 3, 8, 8);
        let ex = random_tensor(&mut rng, 3, 4, 4);
        let m = xcorr_valid(&cand, &ex, 0.5).unwrap();
        assert_eq!((m.rows(), m.cols()), (5, 5));
        let want = xcorr_oracle(&cand, &ex, 0.5);
        for (got, want) in m.data().iter().zip(&want) {
            assert!((got - want).abs() <= 1e-5, "{got} vs {want}");
        }
    }

    #[test]
    fn linearity_in_candidate() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cand = random_tensor(&mut rng, 2, 5, 5);
        let ex = random_tensor(&mut rng, 2, 2, 2);
        let a = 3.5f32;
        let scaled =
            Tensor3::from_data(2, 5, 5, cand.data().iter().map(|v| a * v).collect()).unwrap();
        let m1 = xcorr_valid(&scaled, &ex, 0.0).unwrap();
        let m2 = xcorr_valid(&cand, &ex, 0.0).unwrap();
        for (v1, v2) in m1.data().iter().zip(m2.data()) {
            assert!((v1 - a * v2).abs() <= 1e-5);
        }
    }

    #[test]
    fn dimension_errors_rejected() {
        let small = Tensor3::new(1, 2, 2);
        let big = Tensor3::new(1, 4, 4);
        let other_ch = Tensor3::new(2, 2, 2);
        assert!(xcorr_valid(&small, &big, 0.0).is_err());
        assert!(xcorr_valid(&big, &other_ch, 0.0).is_err());
    }

    /// 8x8 single-channel gradient: pixel (y, x) = 8y + x.
    fn gradient_8x8() -> Image {
        let data = (0..64).map(|i| i as f32).collect();
        Image::from_data(8, 8, 1, data).unwrap()
    }

    #[test]
    fn crop_inside_is_subregion() {
        let img = gradient_8x8();
        let crop = crop_padded(&img, (3.0, 4.0), 3);
        // anchor x = floor(3 - 1 + 0.5) = 2, y = floor(4 - 1 + 0.5) = 3
        for oy in 0..3 {
            for ox in 0..3 {
                assert_eq!(crop.get(oy, ox, 0), img.get(3 + oy, 2 + ox, 0));
            }
        }
    }

    #[test]
    fn corner_crop_of_constant_is_constant() {
        let img = Image::from_data(5, 5, 1, vec![42.0; 25]).unwrap();
        let crop = crop_padded(&img, (0.0, 0.0), 4);
        assert!(crop.data().iter().all(|&v| v == 42.0));
    }

    #[test]
    fn half_offframe_crop_matches_hand_computation() {
        let img = gradient_8x8();
        // Mean of 0..63 is 31.5. Crop side 4 at center (-1, 3):
        // x anchor = floor(-1 - 1.5 + 0.5) = -2, y anchor = floor(3 - 1.5 + 0.5) = 2.
        let crop = crop_padded(&img, (-1.0, 3.0), 4);
        let m = 31.5;
        #[rustfmt::skip]
        let want = [
            m, m, 16.0, 17.0,
            m, m, 24.0, 25.0,
            m, m, 32.0, 33.0,
            m, m, 40.0, 41.0,
        ];
        assert_eq!(crop.data(), &want);
    }

    #[test]
    fn fully_offframe_crop_is_all_mean() {
        let img = gradient_8x8();
        let crop = crop_padded(&img, (-100.0, -100.0), 3);
        assert!(crop.data().iter().all(|&v| v == 31.5));
    }

    #[test]
    fn crop_recrop_is_idempotent_on_interior() {
        let img = gradient_8x8();
        let crop = crop_padded(&img, (4.0, 4.0), 5);
        // Re-cropping the crop about its own center with the same side
        // must reproduce it exactly (all samples stay in-frame).
        let again = crop_padded(&crop, (2.0, 2.0), 5);
        assert_eq!(crop, again);
    }

    #[test]
    fn resize_same_size_is_identity() {
        let img = gradient_8x8();
        let out = resize_bilinear(&img, 8, 8);
        assert_eq!(img, out);
    }

    #[test]
    fn resize_2x2_to_3x3_hand_values() {
        let img = Image::from_data(2, 2, 1, vec![0.0, 2.0, 4.0, 6.0]).unwrap();
        let out = resize_bilinear(&img, 3, 3);
        #[rustfmt::skip]
        let want = [
            0.0, 1.0, 2.0,
            2.0, 3.0, 4.0,
            4.0, 5.0, 6.0,
        ];
        assert_eq!(out.data(), &want);
        assert_eq!(out.get(1, 1, 0), 3.0);
    }

    #[test]
    fn resize_constant_stays_constant() {
        let img = Image::from_data(3, 4, 3, vec![7.5; 36]).unwrap();
        for (h, w) in [(1, 1), (2, 9), (10, 10), (5, 3)] {
            let out = resize_bilinear(&img, h, w);
            assert!(out.data().iter().all(|&v| v == 7.5), "{h}x{w}");
        }
    }
}
