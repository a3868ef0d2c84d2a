//! Model-update gating: per-frame decision whether the classifier may
//! fine-tune, based on the current optimal result's similarity and
//! classification scores against their historical means.
//!
//! Owned by a single tracker instance; the decision functions are pure.

use crate::error::{CoreError, Result};
use crate::matching::Peak;
use std::collections::VecDeque;

/// Ring buffer of the last `n` frames' optimal-result scores
/// `(s_m, s_c)`; the oldest entry is evicted first.
#[derive(Debug, Clone)]
pub struct ScoreHistory {
    buf: VecDeque<(f32, f32)>,
    capacity: usize,
}

impl ScoreHistory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "history capacity must be >= 1");
        ScoreHistory {
            buf: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Stored entries, oldest first.
    pub fn entries(&self) -> impl Iterator<Item = (f32, f32)> + '_ {
        self.buf.iter().copied()
    }

    /// Append the frame's optimal-result scores, evicting the oldest entry
    /// once full. Recording happens every frame regardless of the gate
    /// outcome, so the baseline keeps tracking current conditions.
    pub fn record(&mut self, s_m: f32, s_c: f32) -> Result<()> {
        if !s_m.is_finite() || !s_c.is_finite() {
            return Err(CoreError::InvalidInput(format!(
                "history scores must be finite, got ({s_m}, {s_c})"
            )));
        }
        if self.buf.len() == self.capacity {
            self.buf.pop_front();
        }
        self.buf.push_back((s_m, s_c));
        Ok(())
    }

    /// Arithmetic means over the stored entries (over k entries when fewer
    /// than `n` frames have been recorded). None while empty.
    pub fn historical_means(&self) -> Option<(f32, f32)> {
        if self.buf.is_empty() {
            return None;
        }
        let mut sm = 0.0f64;
        let mut sc = 0.0f64;
        for &(m, c) in &self.buf {
            sm += m as f64;
            sc += c as f64;
        }
        let k = self.buf.len() as f64;
        Some(((sm / k) as f32, (sc / k) as f32))
    }
}

/// Why the gate decided the way it did. `update` is true exactly for
/// `SinglePeak`, `ScoresPass` and `Warmup`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateReason {
    SinglePeak,
    ScoresPass,
    SimilarityFail,
    ClassificationFail,
    Warmup,
}

impl GateReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            GateReason::SinglePeak => "single_peak",
            GateReason::ScoresPass => "scores_pass",
            GateReason::SimilarityFail => "similarity_fail",
            GateReason::ClassificationFail => "classification_fail",
            GateReason::Warmup => "warmup",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateDecision {
    pub update: bool,
    pub reason: GateReason,
}

impl GateDecision {
    fn from_reason(reason: GateReason) -> Self {
        let update = matches!(
            reason,
            GateReason::SinglePeak | GateReason::ScoresPass | GateReason::Warmup
        );
        GateDecision { update, reason }
    }
}

/// Ratio thresholds for peak counting and the two historical-score tests.
#[derive(Debug, Clone, Copy)]
pub struct GateThresholds {
    pub gamma_p: f32,
    pub gamma_m: f32,
    pub gamma_c: f32,
}

/// Per-frame update decision:
///
/// - empty history: update (warmup; early frames follow the ground-truth
///   anchored initialization and are the most reliable),
/// - exactly one peak qualified at ratio `gamma_p`: update directly,
/// - multiple peaks: update only when `s_m_t > gamma_m * mean(S_M)` and
///   `s_c_t > gamma_c * mean(S_C)` (strict), checked similarity-first so
///   the reason names the first failing test.
pub fn should_update(
    peaks: &[Peak],
    s_m_t: f32,
    s_c_t: f32,
    history: &ScoreHistory,
    gammas: GateThresholds,
) -> GateDecision {
    let (s_m_bar, s_c_bar) = match history.historical_means() {
        None => return GateDecision::from_reason(GateReason::Warmup),
        Some(means) => means,
    };
    if peaks.len() == 1 {
        return GateDecision::from_reason(GateReason::SinglePeak);
    }
    if !(s_m_t > gammas.gamma_m * s_m_bar) {
        return GateDecision::from_reason(GateReason::SimilarityFail);
    }
    if !(s_c_t > gammas.gamma_c * s_c_bar) {
        return GateDecision::from_reason(GateReason::ClassificationFail);
    }
    GateDecision::from_reason(GateReason::ScoresPass)
}
