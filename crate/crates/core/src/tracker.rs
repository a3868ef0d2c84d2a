//! Per-frame orchestration of the full cascade: search-region crop, feature
//! embedding, similarity map, peak finding, scale-pyramid candidates,
//! classifier selection, gated online update.
//!
//! One `TrackerState` per sequence, mutated single-threaded; distinct
//! sequences can run fully in parallel.

use crate::candidates::{candidate_crop, exemplar_crop, make_candidates, scale_factors, CropGeometry};
use crate::classifier::{generate_samples, ClassifierHead};
use crate::config::Hyperparams;
use crate::embedding::{build_embedding, Embedding};
use crate::error::{CoreError, Result};
use crate::gate::{should_update, GateReason, GateThresholds, ScoreHistory};
use crate::imaging::{BoundingBox, Image, Tensor3};
use crate::matching::{find_peaks, similarity};
use crate::sequence::Sequence;

/// Pipeline variant, used by the ablation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Global-max peak at scale 1, no classifier, no updates.
    MatchingOnly,
    /// Full cascade with the update gate forced open.
    NoGate,
    /// The complete pipeline.
    Full,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::MatchingOnly => "matching_only",
            Variant::NoGate => "no_gate",
            Variant::Full => "full",
        }
    }
}

/// Output of one tracked frame.
#[derive(Debug, Clone)]
pub struct TrackResult {
    pub bbox: BoundingBox,
    /// Normalized similarity score of the winning candidate's peak.
    pub s_m: f32,
    /// Classification score of the winning candidate.
    pub s_c: f32,
    /// Whether the classifier fine-tuned on this frame.
    pub updated: bool,
    /// Gate reasoning; None for variants that bypass the gate.
    pub reason: Option<GateReason>,
    pub peak_count: usize,
}

/// All mutable state of one tracking run.
pub struct TrackerState {
    current_box: BoundingBox,
    exemplar_feat: Tensor3,
    embedding: Box<dyn Embedding>,
    head: Option<ClassifierHead>,
    history: ScoreHistory,
    frame_index: usize,
    config: Hyperparams,
    variant: Variant,
}

/// Per-frame stream for the online sample generator, derived from the
/// classifier seed so whole runs stay reproducible.
fn sample_seed(base: u64, frame_index: usize) -> u64 {
    base.wrapping_add((frame_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

impl TrackerState {
    /// Initialize on the first frame: crop and embed the exemplar once,
    /// seed the classifier head and train it on ground-truth samples.
    pub fn init(frame: &Image, gt_box: BoundingBox, config: Hyperparams) -> Result<Self> {
        Self::init_with_variant(frame, gt_box, config, Variant::Full)
    }

    pub fn init_with_variant(
        frame: &Image,
        gt_box: BoundingBox,
        config: Hyperparams,
        variant: Variant,
    ) -> Result<Self> {
        config.validate()?;
        let embedding = build_embedding(&config.embedding.name, config.embedding.seed)?;
        let exemplar = exemplar_crop(frame, &gt_box, config.exemplar_size);
        let exemplar_feat = embedding.embed(&exemplar)?;
        // the candidate crop is strictly larger, so if the exemplar embeds,
        // every later embed call succeeds too
        if embedding.output_size(config.candidate_size).is_none() {
            return Err(CoreError::Config(format!(
                "candidate size {} too small for embedding {}",
                config.candidate_size, config.embedding.name
            )));
        }

        let head = if variant == Variant::MatchingOnly {
            None
        } else {
            let mut head = ClassifierHead::new(config.cls_size, config.classifier.seed)?;
            let samples = generate_samples(
                frame,
                &gt_box,
                (config.classifier.pos_samples, config.classifier.neg_samples),
                (config.classifier.pos_iou, config.classifier.neg_iou),
                config.cls_size,
                sample_seed(config.classifier.seed, 1),
            );
            // degenerate frames can fail to produce both classes; tracking
            // then starts from the seeded head instead of refusing to run
            if samples.iter().any(|s| s.label == crate::classifier::Label::Foreground)
                && samples.iter().any(|s| s.label == crate::classifier::Label::Background)
            {
                head.fine_tune(&samples, config.classifier.init_iters, config.classifier.lr_init)?;
            }
            Some(head)
        };

        Ok(TrackerState {
            current_box: gt_box,
            exemplar_feat,
            embedding,
            head,
            history: ScoreHistory::new(config.n),
            frame_index: 1,
            config,
            variant,
        })
    }

    pub fn current_box(&self) -> BoundingBox {
        self.current_box
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn exemplar_feat(&self) -> &Tensor3 {
        &self.exemplar_feat
    }

    pub fn head(&self) -> Option<&ClassifierHead> {
        self.head.as_ref()
    }

    fn clamp_center(&self, pos: (f32, f32), frame: &Image, half_extent: f32) -> (f32, f32) {
        (
            pos.0.clamp(-half_extent, frame.width() as f32 - 1.0 + half_extent),
            pos.1.clamp(-half_extent, frame.height() as f32 - 1.0 + half_extent),
        )
    }

    /// Track one frame. Total for any frame content: every degenerate path
    /// (constant similarity map, pure noise) resolves to a deterministic
    /// fallback instead of an error.
    pub fn track_frame(&mut self, frame: &Image) -> TrackResult {
        let cfg = &self.config;
        let (patch, geom) = candidate_crop(frame, &self.current_box, cfg.candidate_size);
        let cand_feat = self
            .embedding
            .embed(&patch)
            .expect("candidate patch matches embedding geometry");
        let center = (cfg.candidate_size as f32 - 1.0) / 2.0;
        let map = similarity(
            &self.exemplar_feat,
            &cand_feat,
            cfg.bias,
            self.embedding.spec().total_stride as f32,
            (center, center),
            cfg.candidate_size as f32,
        )
        .expect("exemplar features fit inside candidate features");
        let peaks = find_peaks(&map, cfg.gamma_p);
        let peak_count = peaks.len();

        if self.variant == Variant::MatchingOnly {
            // global max at scale 1; find_peaks sorts it first
            let top = &peaks[0];
            let pos = geom.patch_to_frame(top.image_pos);
            let half = CropGeometry::for_box(&self.current_box).exemplar_side / 2.0;
            let (cx, cy) = self.clamp_center(pos, frame, half);
            self.current_box = self.current_box.with_center(cx, cy);
            self.frame_index += 1;
            return TrackResult {
                bbox: self.current_box,
                s_m: top.norm_score,
                s_c: 0.0,
                updated: false,
                reason: None,
                peak_count,
            };
        }

        let scales = scale_factors(cfg.scale_step, cfg.scale_count);
        let candidates = make_candidates(frame, &peaks, &geom, &self.current_box, &scales, cfg.cls_size)
            .expect("peaks are never empty");
        let head = self.head.as_mut().expect("cascade variants carry a head");
        let sel = head
            .select_optimal(&candidates)
            .expect("candidate patches match classifier input size");
        let winner = &candidates[sel.index];
        let s_m_t = peaks[winner.source_peak].norm_score;
        let s_c_t = sel.p_target;
        let new_box = winner.proposed_box;

        let (decision_update, reason) = match self.variant {
            Variant::Full => {
                let d = should_update(
                    &peaks,
                    s_m_t,
                    s_c_t,
                    &self.history,
                    GateThresholds {
                        gamma_p: cfg.gamma_p,
                        gamma_m: cfg.gamma_m,
                        gamma_c: cfg.gamma_c,
                    },
                );
                (d.update, Some(d.reason))
            }
            Variant::NoGate => (true, None),
            Variant::MatchingOnly => unreachable!(),
        };

        let mut updated = false;
        if decision_update {
            let samples = generate_samples(
                frame,
                &new_box,
                (cfg.classifier.pos_samples, cfg.classifier.neg_samples),
                (cfg.classifier.pos_iou, cfg.classifier.neg_iou),
                cfg.cls_size,
                sample_seed(cfg.classifier.seed, self.frame_index + 1),
            );
            // a single-class sample set (box nearly filling the frame)
            // deterministically skips the update instead of failing
            if head.fine_tune(&samples, cfg.classifier.update_iters, cfg.classifier.lr_update).is_ok() {
                updated = true;
            }
        }

        self.history
            .record(s_m_t, s_c_t)
            .expect("normalized scores are finite");
        self.current_box = new_box;
        self.frame_index += 1;
        TrackResult {
            bbox: new_box,
            s_m: s_m_t,
            s_c: s_c_t,
            updated,
            reason,
            peak_count,
        }
    }
}

/// Run the full pipeline over a sequence: init on frame 1 (its result is
/// the ground-truth box with both scores 1), then track every later frame.
pub fn track_sequence(seq: &Sequence, config: Hyperparams) -> Result<Vec<TrackResult>> {
    track_sequence_variant(seq, config, Variant::Full)
}

pub fn track_sequence_variant(
    seq: &Sequence,
    config: Hyperparams,
    variant: Variant,
) -> Result<Vec<TrackResult>> {
    if seq.frames.is_empty() {
        return Err(CoreError::InvalidInput("empty sequence".into()));
    }
    if seq.gt_boxes.is_empty() {
        return Err(CoreError::InvalidInput("sequence has no init box".into()));
    }
    let mut state = TrackerState::init_with_variant(&seq.frames[0], seq.gt_boxes[0], config, variant)?;
    let mut results = Vec::with_capacity(seq.frames.len());
    results.push(TrackResult {
        bbox: seq.gt_boxes[0],
        s_m: 1.0,
        s_c: 1.0,
        updated: variant != Variant::MatchingOnly,
        reason: None,
        peak_count: 1,
    });
    for frame in &seq.frames[1..] {
        results.push(state.track_frame(frame));
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequence::{synth_sequence, BlobSpec, SynthSpec};

    fn quick_config() -> Hyperparams {
        // small iteration counts keep unit tests fast; acceptance tests
        // run the defaults
        let mut hp = Hyperparams::default();
        hp.classifier.init_iters = 10;
        hp.classifier.update_iters = 3;
        hp.classifier.pos_samples = 8;
        hp.classifier.neg_samples = 24;
        hp
    }

    fn static_spec(frames: usize) -> SynthSpec {
        SynthSpec {
            name: "static".into(),
            width: 240,
            height: 180,
            frame_count: frames,
            background: [30.0, 30.0, 30.0],
            target: BlobSpec {
                start_center: (120.0, 90.0),
                size: (48.0, 48.0),
                velocity: (0.0, 0.0),
                color: [210.0, 70.0, 50.0],
                zoom: 1.0,
            },
            distractor: None,
            noise_sigma: 0.0,
            seed: 5,
        }
    }

    #[test]
    fn init_geometry_and_determinism() {
        let seq = synth_sequence(&static_spec(1)).unwrap();
        let cfg = quick_config();
        let a = TrackerState::init(&seq.frames[0], seq.gt_boxes[0], cfg.clone()).unwrap();
        // fixed_conv on a 127 exemplar -> 16x6x6
        let f = a.exemplar_feat();
        assert_eq!((f.channels(), f.height(), f.width()), (16, 6, 6));
        let b = TrackerState::init(&seq.frames[0], seq.gt_boxes[0], cfg).unwrap();
        assert_eq!(a.exemplar_feat().data(), b.exemplar_feat().data());
        assert_eq!(
            a.head().unwrap().trainable_bits(),
            b.head().unwrap().trainable_bits()
        );
    }

    #[test]
    fn whole_frame_init_box_accepted() {
        let seq = synth_sequence(&static_spec(1)).unwrap();
        let frame = &seq.frames[0];
        let whole = BoundingBox::new(
            (frame.width() as f32 - 1.0) / 2.0,
            (frame.height() as f32 - 1.0) / 2.0,
            frame.width() as f32,
            frame.height() as f32,
        )
        .unwrap();
        assert!(TrackerState::init(frame, whole, quick_config()).is_ok());
    }

    #[test]
    fn static_sequence_stays_put_at_scale_one() {
        let seq = synth_sequence(&static_spec(8)).unwrap();
        let results = track_sequence(&seq, quick_config()).unwrap();
        let stride = 8.0;
        for r in &results[1..] {
            assert!((r.bbox.cx - 120.0).abs() <= stride / 2.0, "drifted to {}", r.bbox.cx);
            assert!((r.bbox.cy - 90.0).abs() <= stride / 2.0);
        }
        // the scale selection settles on 1 after at most a few
        // equilibration steps, so the size stops changing and stays close
        // to the ground truth
        let tail: Vec<f32> = results[5..].iter().map(|r| r.bbox.w).collect();
        assert!(tail.windows(2).all(|w| w[0] == w[1]), "scale still moving: {tail:?}");
        let last = results.last().unwrap();
        let limit = 1.02f32.powi(5);
        assert!(
            last.bbox.w <= 48.0 * limit && last.bbox.w >= 48.0 / limit,
            "equilibrium size {} too far from 48",
            last.bbox.w
        );
    }

    #[test]
    fn identity_embedding_follows_one_stride_translation() {
        let mut spec = static_spec(3);
        spec.target.velocity = (8.0, 0.0);
        spec.target.size = (63.75, 63.75);
        spec.target.start_center = (100.0, 90.0);
        spec.width = 320;
        let seq = synth_sequence(&spec).unwrap();
        let mut cfg = quick_config();
        cfg.embedding.name = "identity".into();
        cfg.scale_count = 1;
        let results = track_sequence(&seq, cfg).unwrap();
        for (t, r) in results.iter().enumerate() {
            let want = 100.0 + 8.0 * t as f32;
            assert!(
                (r.bbox.cx - want).abs() <= 0.5,
                "frame {t}: cx {} vs {want}",
                r.bbox.cx
            );
            assert!((r.bbox.cy - 90.0).abs() <= 0.5);
        }
    }

    #[test]
    fn pure_noise_frame_still_produces_result() {
        let seq = synth_sequence(&static_spec(1)).unwrap();
        let mut state = TrackerState::init(&seq.frames[0], seq.gt_boxes[0], quick_config()).unwrap();
        let mut noise = Image::new(180, 240, 3);
        let mut v = 17u32;
        for p in noise.data_mut() {
            v = v.wrapping_mul(1664525).wrapping_add(1013904223);
            *p = (v >> 24) as f32;
        }
        let r = state.track_frame(&noise);
        assert!(r.bbox.w > 0.0 && r.bbox.h > 0.0);
        assert!(r.peak_count >= 1);
        assert!((0.0..=1.0).contains(&r.s_m));
        assert!((0.0..=1.0).contains(&r.s_c));
    }

    #[test]
    fn exemplar_is_immutable_across_frames() {
        let seq = synth_sequence(&static_spec(4)).unwrap();
        let mut state = TrackerState::init(&seq.frames[0], seq.gt_boxes[0], quick_config()).unwrap();
        let before: Vec<u32> = state.exemplar_feat().data().iter().map(|v| v.to_bits()).collect();
        for f in &seq.frames[1..] {
            state.track_frame(f);
        }
        let after: Vec<u32> = state.exemplar_feat().data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn size_drift_is_bounded_per_frame() {
        let mut spec = static_spec(6);
        spec.target.zoom = 1.01;
        spec.width = 320;
        spec.height = 320;
        spec.target.start_center = (160.0, 160.0);
        let seq = synth_sequence(&spec).unwrap();
        let cfg = quick_config();
        let step = cfg.scale_step;
        let results = track_sequence(&seq, cfg).unwrap();
        for pair in results.windows(2) {
            let wf = pair[1].bbox.w / pair[0].bbox.w;
            let hf = pair[1].bbox.h / pair[0].bbox.h;
            let af = pair[1].bbox.area() / pair[0].bbox.area();
            assert!(wf >= 1.0 / step - 1e-5 && wf <= step + 1e-5);
            assert!(hf >= 1.0 / step - 1e-5 && hf <= step + 1e-5);
            assert!(af >= 1.0 / (step * step) - 1e-5 && af <= step * step + 1e-5);
        }
    }

    #[test]
    fn single_frame_sequence_returns_ground_truth() {
        let seq = synth_sequence(&static_spec(1)).unwrap();
        let results = track_sequence(&seq, quick_config()).unwrap();
        assert_eq!(results.len(), 1);
        assert_eq!(results[0].bbox, seq.gt_boxes[0]);
        assert_eq!((results[0].s_m, results[0].s_c), (1.0, 1.0));
    }

    #[test]
    fn full_run_is_deterministic() {
        let mut spec = static_spec(5);
        spec.noise_sigma = 4.0;
        spec.target.velocity = (3.0, 0.0);
        let seq = synth_sequence(&spec).unwrap();
        let run = || track_sequence(&seq, quick_config()).unwrap();
        let a = run();
        let b = run();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.bbox, y.bbox);
            assert_eq!(x.s_m.to_bits(), y.s_m.to_bits());
            assert_eq!(x.s_c.to_bits(), y.s_c.to_bits());
            assert_eq!(x.updated, y.updated);
            assert_eq!(x.peak_count, y.peak_count);
        }
    }

    #[test]
    fn empty_sequence_rejected() {
        let seq = Sequence {
            name: "empty".into(),
            frames: vec![],
            gt_boxes: vec![],
        };
        assert!(track_sequence(&seq, quick_config()).is_err());
    }

    #[test]
    fn matching_only_variant_tracks_without_head() {
        let mut spec = static_spec(4);
        spec.target.velocity = (3.0, 0.0);
        let seq = synth_sequence(&spec).unwrap();
        let results = track_sequence_variant(&seq, quick_config(), Variant::MatchingOnly).unwrap();
        for r in &results[1..] {
            assert!(!r.updated);
            assert!(r.reason.is_none());
            // size never changes in the matching-only variant
            assert_eq!((r.bbox.w, r.bbox.h), (48.0, 48.0));
        }
        // it still roughly follows the blob
        let last = results.last().unwrap();
        assert!((last.bbox.cx - (120.0 + 9.0)).abs() <= 8.0);
    }
}
