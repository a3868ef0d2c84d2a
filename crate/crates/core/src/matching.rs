//! Matching-stage decision logic: the similarity map between exemplar and
//! candidate features, enumeration of qualifying peaks, and mapping of peak
//! cells back to candidate-image pixels.

use crate::error::Result;
use crate::imaging::{xcorr_valid, ScoreGrid, Tensor3};

/// Similarity score grid plus the geometry needed to translate map cells
/// into candidate-image pixel positions.
#[derive(Debug, Clone)]
pub struct SimilarityMap {
    pub scores: ScoreGrid,
    /// Candidate-image pixels per map cell (the embedding's total stride).
    pub map_stride: f32,
    /// Point in candidate-image pixels the map center corresponds to.
    pub candidate_center: (f32, f32),
    /// Side length of the candidate image the map was computed from.
    pub candidate_side: f32,
}

/// A qualifying local maximum of a similarity map.
///
/// `norm_score` is the min-max normalized value in [0, 1]; the global
/// maximum always normalizes to exactly 1. `image_pos` is the peak's
/// position in candidate-image pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub row: usize,
    pub col: usize,
    pub score: f32,
    pub norm_score: f32,
    pub image_pos: (f32, f32),
}

/// Cross-correlate candidate and exemplar features and attach coordinate
/// geometry. Propagates dimension errors from the correlation.
pub fn similarity(
    exemplar_feat: &Tensor3,
    candidate_feat: &Tensor3,
    bias: f32,
    map_stride: f32,
    candidate_center: (f32, f32),
    candidate_side: f32,
) -> Result<SimilarityMap> {
    let scores = xcorr_valid(candidate_feat, exemplar_feat, bias)?;
    Ok(SimilarityMap {
        scores,
        map_stride,
        candidate_center,
        candidate_side,
    })
}

/// Map a cell of the score grid to candidate-image pixels:
/// `candidate_center + (cell - map_center) * map_stride`, no sub-cell
/// refinement.
pub fn peak_to_image(map: &SimilarityMap, row: usize, col: usize) -> (f32, f32) {
    let center_r = (map.scores.rows() as f32 - 1.0) / 2.0;
    let center_c = (map.scores.cols() as f32 - 1.0) / 2.0;
    (
        map.candidate_center.0 + (col as f32 - center_c) * map.map_stride,
        map.candidate_center.1 + (row as f32 - center_r) * map.map_stride,
    )
}

/// All 8-neighborhood local maxima whose min-max normalized score reaches
/// `gamma_p`, sorted by normalized score descending (ties by row-major cell
/// order). Never empty: the global maximum always qualifies.
///
/// Within a connected plateau of equal values only the row-major-first cell
/// is reported, and a plateau counts as a maximum only if no cell of it has
/// a strictly greater neighbor. A constant map yields the single center
/// cell at normalized score 1.
pub fn find_peaks(map: &SimilarityMap, gamma_p: f32) -> Vec<Peak> {
    assert!(
        gamma_p > 0.0 && gamma_p <= 1.0,
        "gamma_p must be in (0, 1], got {gamma_p}"
    );
    let grid = &map.scores;
    let (rows, cols) = (grid.rows(), grid.cols());
    let (lo, hi) = grid.min_max();

    if hi == lo {
        let (r, c) = (rows / 2, cols / 2);
        let image_pos = peak_to_image(map, r, c);
        return vec![Peak {
            row: r,
            col: c,
            score: grid.get(r, c),
            norm_score: 1.0,
            image_pos,
        }];
    }

    let range = hi - lo;
    let mut visited = vec![false; rows * cols];
    let mut peaks: Vec<Peak> = Vec::new();

    for r in 0..rows {
        for c in 0..cols {
            if visited[r * cols + c] {
                continue;
            }
            let v = grid.get(r, c);
            let norm = (v - lo) / range;
            if norm < gamma_p {
                continue;
            }
            // Flood-fill the equal-value component starting here; (r, c) is
            // its row-major-first cell because earlier cells were visited.
            let mut stack = vec![(r, c)];
            visited[r * cols + c] = true;
            let mut is_max = true;
            while let Some((pr, pc)) = stack.pop() {
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        if dr == 0 && dc == 0 {
                            continue;
                        }
                        let nr = pr as i64 + dr;
                        let nc = pc as i64 + dc;
                        if nr < 0 || nc < 0 || nr >= rows as i64 || nc >= cols as i64 {
                            continue;
                        }
                        let (nr, nc) = (nr as usize, nc as usize);
                        let nv = grid.get(nr, nc);
                        if nv > v {
                            is_max = false;
                        } else if nv == v && !visited[nr * cols + nc] {
                            visited[nr * cols + nc] = true;
                            stack.push((nr, nc));
                        }
                    }
                }
            }
            if is_max {
                peaks.push(Peak {
                    row: r,
                    col: c,
                    score: v,
                    norm_score: norm,
                    image_pos: peak_to_image(map, r, c),
                });
            }
        }
    }

    peaks.sort_by(|a, b| {
        b.norm_score
            .partial_cmp(&a.norm_score)
            .unwrap()
            .then_with(|| (a.row, a.col).cmp(&(b.row, b.col)))
    });
    debug_assert!(!peaks.is_empty());
    peaks
}
