//! Scaled candidate patch extraction: the exemplar and search-region crops
//! for the matching stage, and the per-peak scale-pyramid patches the
//! classifier scores.

use crate::error::{CoreError, Result};
use crate::imaging::{crop_padded, resize_bilinear, BoundingBox, Image};
use crate::matching::Peak;

/// Context-margin geometry for a target box: margin `p = (w + h) / 4`,
/// exemplar crop side `s = sqrt((w + 2p)(h + 2p))`, search crop side `2s`
/// (about four times the target area).
#[derive(Debug, Clone, Copy)]
pub struct CropGeometry {
    pub context_margin: f32,
    pub exemplar_side: f32,
    pub candidate_side: f32,
}

impl CropGeometry {
    pub fn for_box(b: &BoundingBox) -> Self {
        let p = (b.w + b.h) / 4.0;
        let s = ((b.w + 2.0 * p) * (b.h + 2.0 * p)).sqrt();
        CropGeometry {
            context_margin: p,
            exemplar_side: s,
            candidate_side: 2.0 * s,
        }
    }
}

/// Recorded geometry of a search-region crop: enough to map points between
/// the resized patch and frame coordinates.
#[derive(Debug, Clone, Copy)]
pub struct SearchGeometry {
    /// Frame-pixel point the patch center corresponds to.
    pub center: (f32, f32),
    /// Integer side of the square source crop, in frame pixels.
    pub crop_side_px: usize,
    /// Side of the resized output patch.
    pub out_size: usize,
    /// Frame pixels per patch pixel: `crop_side_px / out_size`.
    pub scale: f32,
}

impl SearchGeometry {
    pub fn patch_to_frame(&self, p: (f32, f32)) -> (f32, f32) {
        let c = (self.out_size as f32 - 1.0) / 2.0;
        (
            self.center.0 + (p.0 - c) * self.scale,
            self.center.1 + (p.1 - c) * self.scale,
        )
    }

    pub fn frame_to_patch(&self, f: (f32, f32)) -> (f32, f32) {
        let c = (self.out_size as f32 - 1.0) / 2.0;
        (
            c + (f.0 - self.center.0) / self.scale,
            c + (f.1 - self.center.1) / self.scale,
        )
    }
}

fn rounded_side(side: f32) -> usize {
    (side.round() as i64).max(1) as usize
}

/// Exemplar patch: square crop of the context-margin side centered on the
/// box, mean-padded where it leaves the frame, resized to `out_size`.
pub fn exemplar_crop(frame: &Image, bbox: &BoundingBox, out_size: usize) -> Image {
    let geom = CropGeometry::for_box(bbox);
    let crop = crop_padded(frame, (bbox.cx, bbox.cy), rounded_side(geom.exemplar_side));
    resize_bilinear(&crop, out_size, out_size)
}

/// Search-region patch: square crop of twice the exemplar side centered on
/// the previous target position, mean-padded, resized to `out_size`. The
/// returned geometry carries the frame-per-patch pixel ratio for mapping
/// peak positions back to frame coordinates.
pub fn candidate_crop(frame: &Image, prev_box: &BoundingBox, out_size: usize) -> (Image, SearchGeometry) {
    let geom = CropGeometry::for_box(prev_box);
    let side_px = rounded_side(geom.candidate_side);
    let crop = crop_padded(frame, (prev_box.cx, prev_box.cy), side_px);
    let patch = resize_bilinear(&crop, out_size, out_size);
    (
        patch,
        SearchGeometry {
            center: (prev_box.cx, prev_box.cy),
            crop_side_px: side_px,
            out_size,
            scale: side_px as f32 / out_size as f32,
        },
    )
}

/// One classifier input: a patch cropped at a peak position and scale.
#[derive(Debug, Clone)]
pub struct Candidate {
    /// `cls_size x cls_size` patch fed to the classifier.
    pub patch: Image,
    pub scale_factor: f32,
    /// Peak position in frame pixels (after clamping; see `make_candidates`).
    pub image_pos: (f32, f32),
    /// Index into the peak list this candidate came from.
    pub source_peak: usize,
    /// Current box at `image_pos` with both sides scaled by `scale_factor`.
    pub proposed_box: BoundingBox,
    /// Real-valued source crop side in frame pixels (before rounding).
    pub crop_side: f32,
}

/// Ascending scale factors `step^e` for `e = -(count-1)/2 ..= (count-1)/2`.
/// `count` must be odd so the center factor is exactly 1.
pub fn scale_factors(step: f32, count: usize) -> Vec<f32> {
    assert!(count % 2 == 1, "scale count must be odd, got {count}");
    let half = (count / 2) as i32;
    (-half..=half).map(|e| step.powi(e)).collect()
}

/// Crop one `cls_size` patch per (peak, scale) pair, peak-major then scale
/// ascending. Each crop is a square of side `exemplar_side(current_box) *
/// scale` centered at the peak's frame position; the proposed box scales
/// both sides of the current box.
///
/// Peak positions are clamped so the crop center stays within the frame
/// extended by half the crop side, which keeps every patch at least half
/// in-frame.
pub fn make_candidates(
    frame: &Image,
    peaks: &[Peak],
    geom: &SearchGeometry,
    current_box: &BoundingBox,
    scales: &[f32],
    cls_size: usize,
) -> Result<Vec<Candidate>> {
    if peaks.is_empty() {
        return Err(CoreError::InvalidInput("no peaks to crop candidates at".into()));
    }
    let base_side = CropGeometry::for_box(current_box).exemplar_side;
    let mut out = Vec::with_capacity(peaks.len() * scales.len());
    for (pi, peak) in peaks.iter().enumerate() {
        let frame_pos = geom.patch_to_frame(peak.image_pos);
        for &f in scales {
            let side = base_side * f;
            let half = side / 2.0;
            let cx = frame_pos
                .0
                .clamp(-half, frame.width() as f32 - 1.0 + half);
            let cy = frame_pos
                .1
                .clamp(-half, frame.height() as f32 - 1.0 + half);
            let crop = crop_padded(frame, (cx, cy), rounded_side(side));
            let patch = resize_bilinear(&crop, cls_size, cls_size);
            out.push(Candidate {
                patch,
                scale_factor: f,
                image_pos: (cx, cy),
                source_peak: pi,
                proposed_box: BoundingBox {
                    cx,
                    cy,
                    w: current_box.w * f,
                    h: current_box.h * f,
                },
                crop_side: side,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matching::{find_peaks, SimilarityMap};
    use crate::imaging::ScoreGrid;

    fn flat_frame(h: usize, w: usize, v: f32) -> Image {
        Image::from_data(h, w, 1, vec![v; h * w]).unwrap()
    }

    #[test]
    fn geometry_for_square_63_5_box() {
        // w = h = 63.5: p = 31.75, s = sqrt(127 * 127) = 127
        let b = BoundingBox::new(200.0, 200.0, 63.5, 63.5).unwrap();
        let g = CropGeometry::for_box(&b);
        assert!((g.context_margin - 31.75).abs() < 1e-5);
        assert!((g.exemplar_side - 127.0).abs() < 1e-4);
        assert!((g.candidate_side - 254.0).abs() < 1e-4);
    }

    #[test]
    fn exemplar_crop_is_127_without_distortion() {
        // side exactly 127 -> no resize resampling of the source pixels
        let mut frame = flat_frame(400, 400, 10.0);
        frame.set(200, 200, 0, 250.0);
        let b = BoundingBox::new(200.0, 200.0, 63.5, 63.5).unwrap();
        let patch = exemplar_crop(&frame, &b, 127);
        assert_eq!((patch.height(), patch.width()), (127, 127));
        assert_eq!(patch.get(63, 63, 0), 250.0);
    }

    #[test]
    fn constant_frame_gives_constant_patch() {
        let frame = flat_frame(300, 300, 77.0);
        let b = BoundingBox::new(150.0, 150.0, 40.0, 60.0).unwrap();
        let patch = exemplar_crop(&frame, &b, 127);
        assert!(patch.data().iter().all(|&v| v == 77.0));
    }

    #[test]
    fn corner_box_pads_with_frame_mean() {
        let frame = flat_frame(100, 100, 50.0);
        let b = BoundingBox::new(0.0, 0.0, 30.0, 30.0).unwrap();
        let patch = exemplar_crop(&frame, &b, 127);
        // constant frame: mean equals the constant, so padding is invisible
        assert!(patch.data().iter().all(|&v| v == 50.0));
    }

    #[test]
    fn candidate_crop_ratio_and_round_trip() {
        let frame = flat_frame(600, 600, 0.0);
        let b = BoundingBox::new(300.0, 300.0, 63.5, 63.5).unwrap();
        let (patch, geom) = candidate_crop(&frame, &b, 255);
        assert_eq!((patch.height(), patch.width()), (255, 255));
        assert_eq!(geom.crop_side_px, 254);
        assert!((geom.scale - 254.0 / 255.0).abs() < 1e-6);
        // patch <-> frame composes to identity
        for p in [(0.0, 0.0), (127.0, 127.0), (13.25, 201.5)] {
            let f = geom.patch_to_frame(p);
            let back = geom.frame_to_patch(f);
            assert!((back.0 - p.0).abs() < 1e-4 && (back.1 - p.1).abs() < 1e-4);
        }
    }

    #[test]
    fn scale_factors_ascending_centered_at_one() {
        let s = scale_factors(1.02, 3);
        assert_eq!(s.len(), 3);
        assert!((s[0] - 1.0 / 1.02).abs() < 1e-6);
        assert_eq!(s[1], 1.0);
        assert!((s[2] - 1.02).abs() < 1e-6);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }

    fn one_peak_at_center(side: usize, stride: f32) -> Vec<Peak> {
        let n = 9;
        let mut data = vec![0.0f32; n * n];
        data[(n / 2) * n + n / 2] = 1.0;
        let map = SimilarityMap {
            scores: ScoreGrid::from_data(n, n, data).unwrap(),
            map_stride: stride,
            candidate_center: ((side as f32 - 1.0) / 2.0, (side as f32 - 1.0) / 2.0),
            candidate_side: side as f32,
        };
        find_peaks(&map, 0.75)
    }

    #[test]
    fn candidate_cardinality_and_order() {
        let frame = flat_frame(500, 500, 0.0);
        let b = BoundingBox::new(250.0, 250.0, 48.0, 48.0).unwrap();
        let (_, geom) = candidate_crop(&frame, &b, 255);
        let peaks = one_peak_at_center(255, 8.0);
        let scales = scale_factors(1.02, 3);

        let cands = make_candidates(&frame, &peaks, &geom, &b, &scales, 107).unwrap();
        assert_eq!(cands.len(), 3);
        for (i, c) in cands.iter().enumerate() {
            assert_eq!((c.patch.height(), c.patch.width()), (107, 107));
            assert_eq!(c.scale_factor, scales[i]);
            assert_eq!(c.source_peak, 0);
        }

        // two peaks -> 6 candidates, peak-major then scale ascending
        let mut two = peaks.clone();
        two.push(Peak {
            row: 2,
            col: 2,
            ..two[0]
        });
        let cands = make_candidates(&frame, &two, &geom, &b, &scales, 107).unwrap();
        assert_eq!(cands.len(), 6);
        let order: Vec<(usize, f32)> = cands.iter().map(|c| (c.source_peak, c.scale_factor)).collect();
        assert_eq!(
            order,
            vec![
                (0, scales[0]),
                (0, scales[1]),
                (0, scales[2]),
                (1, scales[0]),
                (1, scales[1]),
                (1, scales[2]),
            ]
        );
    }

    #[test]
    fn crop_side_strictly_grows_with_scale() {
        let frame = flat_frame(500, 500, 0.0);
        let b = BoundingBox::new(250.0, 250.0, 20.0, 14.0).unwrap();
        let (_, geom) = candidate_crop(&frame, &b, 255);
        let peaks = one_peak_at_center(255, 8.0);
        let scales = scale_factors(1.02, 5);
        let cands = make_candidates(&frame, &peaks, &geom, &b, &scales, 107).unwrap();
        for w in cands.windows(2) {
            assert!(w[0].crop_side < w[1].crop_side);
        }
    }

    #[test]
    fn scale_one_candidate_centered_on_blob_color() {
        // frame with a distinct blob at the box center; the scale-1 patch
        // center pixel must be the blob color
        let mut frame = flat_frame(400, 400, 20.0);
        for y in 180..221 {
            for x in 180..221 {
                frame.set(y, x, 0, 240.0);
            }
        }
        let b = BoundingBox::new(200.0, 200.0, 41.0, 41.0).unwrap();
        let (_, geom) = candidate_crop(&frame, &b, 255);
        let peaks = one_peak_at_center(255, 8.0);
        let cands = make_candidates(&frame, &peaks, &geom, &b, &[1.0], 107).unwrap();
        assert_eq!(cands.len(), 1);
        assert_eq!(cands[0].patch.get(53, 53, 0), 240.0);
    }

    #[test]
    fn reprojection_recovers_peak_position_within_half_pixel() {
        let frame = flat_frame(500, 500, 0.0);
        let b = BoundingBox::new(250.0, 250.0, 48.0, 48.0).unwrap();
        let (_, geom) = candidate_crop(&frame, &b, 255);
        let peaks = one_peak_at_center(255, 8.0);
        let scales = scale_factors(1.02, 3);
        let cands = make_candidates(&frame, &peaks, &geom, &b, &scales, 107).unwrap();
        let expect = geom.patch_to_frame(peaks[0].image_pos);
        for c in &cands {
            assert!((c.image_pos.0 - expect.0).abs() <= 0.5);
            assert!((c.image_pos.1 - expect.1).abs() <= 0.5);
        }
    }

    #[test]
    fn empty_peaks_rejected() {
        let frame = flat_frame(100, 100, 0.0);
        let b = BoundingBox::new(50.0, 50.0, 20.0, 20.0).unwrap();
        let (_, geom) = candidate_crop(&frame, &b, 255);
        assert!(make_candidates(&frame, &[], &geom, &b, &[1.0], 107).is_err());
    }
}
