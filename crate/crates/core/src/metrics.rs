//! Evaluation metrics: distance-precision and overlap-success curves over
//! annotated sequences.

use crate::error::{CoreError, Result};
use crate::imaging::BoundingBox;

/// Sampled metric curve; `values[i]` is the fraction of frames passing at
/// `thresholds[i]`.
#[derive(Debug, Clone)]
pub struct Curve {
    pub thresholds: Vec<f32>,
    pub values: Vec<f64>,
}

impl Curve {
    /// `threshold,value` CSV rows with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,value\n");
        for (t, v) in self.thresholds.iter().zip(&self.values) {
            out.push_str(&format!("{t},{v}\n"));
        }
        out
    }
}

/// Precision curve with its conventional 20-pixel summary value.
#[derive(Debug, Clone)]
pub struct PrecisionCurve {
    pub curve: Curve,
    pub at_20px: f64,
}

/// Success curve with its area-under-curve summary (mean over thresholds).
#[derive(Debug, Clone)]
pub struct SuccessCurve {
    pub curve: Curve,
    pub auc: f64,
}

fn check_lengths(results: &[BoundingBox], gt: &[BoundingBox]) -> Result<()> {
    if results.is_empty() {
        return Err(CoreError::InvalidInput("no frames to evaluate".into()));
    }
    if results.len() != gt.len() {
        return Err(CoreError::InvalidInput(format!(
            "result count {} != ground-truth count {}",
            results.len(),
            gt.len()
        )));
    }
    Ok(())
}

/// Fraction of frames whose center error is within each integer threshold
/// 0..=50 pixels; non-decreasing in the threshold.
pub fn precision_curve(results: &[BoundingBox], gt: &[BoundingBox]) -> Result<PrecisionCurve> {
    check_lengths(results, gt)?;
    let errors: Vec<f32> = results
        .iter()
        .zip(gt)
        .map(|(r, g)| r.center_error(g))
        .collect();
    let n = errors.len() as f64;
    let thresholds: Vec<f32> = (0..=50).map(|t| t as f32).collect();
    let values: Vec<f64> = thresholds
        .iter()
        .map(|&t| errors.iter().filter(|&&e| e <= t).count() as f64 / n)
        .collect();
    let at_20px = values[20];
    Ok(PrecisionCurve {
        curve: Curve { thresholds, values },
        at_20px,
    })
}

/// Fraction of frames whose IoU reaches each threshold 0, 0.05, ..., 1;
/// non-increasing in the threshold. AUC is the mean over thresholds.
pub fn success_curve(results: &[BoundingBox], gt: &[BoundingBox]) -> Result<SuccessCurve> {
    check_lengths(results, gt)?;
    let ious: Vec<f32> = results.iter().zip(gt).map(|(r, g)| r.iou(g)).collect();
    let n = ious.len() as f64;
    let thresholds: Vec<f32> = (0..=20).map(|i| i as f32 * 0.05).collect();
    let values: Vec<f64> = thresholds
        .iter()
        .map(|&t| ious.iter().filter(|&&v| v >= t).count() as f64 / n)
        .collect();
    let auc = values.iter().sum::<f64>() / values.len() as f64;
    Ok(SuccessCurve {
        curve: Curve { thresholds, values },
        auc,
    })
}

/// Mean IoU between per-frame results and ground truth.
pub fn mean_iou(results: &[BoundingBox], gt: &[BoundingBox]) -> Result<f64> {
    check_lengths(results, gt)?;
    let sum: f64 = results.iter().zip(gt).map(|(r, g)| r.iou(g) as f64).sum();
    Ok(sum / results.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn boxes(centers: &[(f32, f32)]) -> Vec<BoundingBox> {
        centers
            .iter()
            .map(|&(x, y)| BoundingBox::new(x, y, 10.0, 10.0).unwrap())
            .collect()
    }

    #[test]
    fn perfect_results_max_both_metrics() {
        let gt = boxes(&[(10.0, 10.0), (20.0, 10.0), (30.0, 10.0)]);
        let p = precision_curve(&gt, &gt).unwrap();
        assert!(p.curve.values.iter().all(|&v| v == 1.0));
        assert_eq!(p.at_20px, 1.0);
        let s = success_curve(&gt, &gt).unwrap();
        assert!(s.curve.values.iter().all(|&v| v == 1.0));
        assert_eq!(s.auc, 1.0);
        assert_eq!(mean_iou(&gt, &gt).unwrap(), 1.0);
    }

    #[test]
    fn offset_25px_precision() {
        let gt = boxes(&[(10.0, 10.0), (40.0, 10.0)]);
        let results = boxes(&[(35.0, 10.0), (65.0, 10.0)]);
        let p = precision_curve(&results, &gt).unwrap();
        assert_eq!(p.curve.values[20], 0.0);
        assert_eq!(p.curve.values[25], 1.0);
        assert_eq!(p.at_20px, 0.0);
    }

    #[test]
    fn mixed_offsets_give_half_precision() {
        let gt = boxes(&[(10.0, 10.0), (10.0, 50.0)]);
        let results = boxes(&[(10.0, 10.0), (110.0, 50.0)]);
        let p = precision_curve(&results, &gt).unwrap();
        assert_eq!(p.at_20px, 0.5);
    }

    #[test]
    fn disjoint_boxes_fail_success_everywhere_above_zero() {
        let gt = boxes(&[(10.0, 10.0)]);
        let results = boxes(&[(100.0, 100.0)]);
        let s = success_curve(&results, &gt).unwrap();
        assert_eq!(s.curve.values[0], 1.0); // IoU 0 >= threshold 0
        assert!(s.curve.values[1..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn curves_are_monotone_in_the_right_direction() {
        let gt = boxes(&[(0.0, 0.0), (10.0, 3.0), (25.0, 7.0), (40.0, 2.0)]);
        let results = boxes(&[(3.0, 1.0), (40.0, 3.0), (25.5, 7.0), (90.0, 2.0)]);
        let p = precision_curve(&results, &gt).unwrap();
        assert!(p.curve.values.windows(2).all(|w| w[0] <= w[1]));
        let s = success_curve(&results, &gt).unwrap();
        assert!(s.curve.values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn length_mismatch_rejected() {
        let gt = boxes(&[(0.0, 0.0), (1.0, 1.0)]);
        let results = boxes(&[(0.0, 0.0)]);
        assert!(precision_curve(&results, &gt).is_err());
        assert!(success_curve(&results, &gt).is_err());
        assert!(mean_iou(&[], &[]).is_err());
    }

    #[test]
    fn csv_has_threshold_value_rows() {
        let gt = boxes(&[(0.0, 0.0)]);
        let p = precision_curve(&gt, &gt).unwrap();
        let csv = p.curve.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("threshold,value"));
        assert_eq!(lines.next(), Some("0,1"));
        assert_eq!(csv.lines().count(), 52);
    }
}
