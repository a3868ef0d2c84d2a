//! Classification stage: scores candidate patches foreground/background,
//! selects the optimal result, and fine-tunes its fully connected tail
//! online by full-batch SGD with momentum.
//!
//! The convolutional feature stack is seeded once and frozen; only the two
//! 512-unit fully connected layers and the 2-way classification layer ever
//! train. Trainable parameters are kept in f64 so gradient verification
//! against finite differences is not drowned by accumulation noise.
//!
//! `score` is safe to call concurrently on a shared head; `fine_tune`
//! needs exclusive access.

use crate::candidates::{Candidate, CropGeometry};
use crate::convnet::{image_to_tensor, max_pool2, normalize_patch, ConvLayer};
use crate::error::{CoreError, Result};
use crate::imaging::{crop_padded, resize_bilinear, BoundingBox, Image};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Foreground,
    Background,
}

/// One labeled patch for online training.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub patch: Image,
    pub label: Label,
    pub iou_with_target: f32,
}

/// Trainable affine layer with per-parameter momentum buffers.
#[derive(Debug, Clone)]
struct Linear {
    in_dim: usize,
    out_dim: usize,
    w: Vec<f64>,
    b: Vec<f64>,
    vw: Vec<f64>,
    vb: Vec<f64>,
}

/// Eight-accumulator dot product; the relaxed summation order lets the
/// compiler vectorize, and the order is still fixed, so results stay
/// deterministic.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
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
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// `dst += s * src`, elementwise.
#[inline]
fn axpy(dst: &mut [f64], s: f64, src: &[f64]) {
    for (d, &v) in dst.iter_mut().zip(src) {
        *d += s * v;
    }
}

impl Linear {
    fn seeded(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let a = (1.0 / in_dim as f64).sqrt();
        Linear {
            in_dim,
            out_dim,
            w: (0..in_dim * out_dim).map(|_| rng.random_range(-a..a)).collect(),
            b: vec![0.0; out_dim],
            vw: vec![0.0; in_dim * out_dim],
            vb: vec![0.0; out_dim],
        }
    }

    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for j in 0..self.out_dim {
            let row = &self.w[j * self.in_dim..(j + 1) * self.in_dim];
            out.push(self.b[j] + dot(row, x));
        }
    }

    fn param_count(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Frozen convolutional feature stack: two conv+ReLU+maxpool stages over a
/// 3-plane input. For the standard 107x107 patch it yields 16x3x3 = 144
/// features.
#[derive(Debug, Clone)]
pub struct ConvStack {
    conv1: ConvLayer,
    conv2: ConvLayer,
}

impl ConvStack {
    fn seeded(rng: &mut ChaCha8Rng) -> Self {
        ConvStack {
            conv1: ConvLayer::seeded(3, 8, 7, 3, true, rng),
            conv2: ConvLayer::seeded(8, 16, 5, 2, true, rng),
        }
    }

    /// Flattened feature length for a square input of side `n`.
    fn feature_dim(&self, n: usize) -> Option<usize> {
        let s1 = self.conv1.out_size(n)? / 2;
        if s1 < self.conv2.kernel {
            return None;
        }
        let s2 = self.conv2.out_size(s1)? / 2;
        (s2 >= 1).then_some(self.conv2.out_ch * s2 * s2)
    }

    fn features(&self, patch: &Image) -> Result<Vec<f64>> {
        let mut t = image_to_tensor(patch, 3);
        normalize_patch(&mut t);
        let h1 = max_pool2(&self.conv1.forward(&t)?);
        let h2 = max_pool2(&self.conv2.forward(&h1)?);
        let mut feat: Vec<f64> = h2.data().iter().map(|&v| v as f64).collect();
        // standardize the feature vector to unit RMS; keeps the fully
        // connected tail's gradient scale independent of conv output
        // magnitude so the configured learning rates behave
        let rms = (feat.iter().map(|v| v * v).sum::<f64>() / feat.len() as f64).sqrt();
        let inv = 1.0 / rms.max(1e-6);
        for v in &mut feat {
            *v *= inv;
        }
        Ok(feat)
    }

    /// Bit patterns of every weight, for frozen-layer checks.
    pub fn weight_bits(&self) -> Vec<u32> {
        self.conv1
            .weights()
            .iter()
            .chain(self.conv1.bias())
            .chain(self.conv2.weights())
            .chain(self.conv2.bias())
            .map(|v| v.to_bits())
            .collect()
    }
}

/// Result of `select_optimal`: the winning candidate index, its target
/// probability, and the scores of every candidate in input order.
#[derive(Debug, Clone)]
pub struct Selection {
    pub index: usize,
    pub p_target: f32,
    pub scores: Vec<f32>,
}

/// Outcome of one `fine_tune` call: mean cross-entropy before the first and
/// after the last step.
#[derive(Debug, Clone, Copy)]
pub struct TuneReport {
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// First index holding the maximum value (ties resolve to the earliest).
pub(crate) fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate().skip(1) {
        if v > scores[best] {
            best = i;
        }
    }
    best
}

/// The classification subnetwork: frozen conv stack, two trainable fully
/// connected layers, and a trainable 2-way softmax classification layer.
#[derive(Debug, Clone)]
pub struct ClassifierHead {
    conv: ConvStack,
    input_size: usize,
    fc1: Linear,
    fc2: Linear,
    fc_cls: Linear,
    momentum: f64,
}

pub const FC_UNITS: usize = 512;

impl ClassifierHead {
    /// Standard head: 512-unit fc1 and fc2, 2-score classification layer,
    /// momentum 0.9, for `input_size`-pixel square patches.
    pub fn new(input_size: usize, seed: u64) -> Result<Self> {
        Self::with_fc_units(input_size, FC_UNITS, FC_UNITS, seed)
    }

    /// Head with custom fully connected widths. Production code always uses
    /// [`ClassifierHead::new`]; narrow heads exist for gradient
    /// verification, where the full parameter count would be impractical.
    pub fn with_fc_units(input_size: usize, fc1: usize, fc2: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let conv = ConvStack::seeded(&mut rng);
        let feat = conv.feature_dim(input_size).ok_or_else(|| {
            CoreError::InvalidInput(format!("patch size {input_size} too small for conv stack"))
        })?;
        Ok(ClassifierHead {
            conv,
            input_size,
            fc1: Linear::seeded(feat, fc1, &mut rng),
            fc2: Linear::seeded(fc1, fc2, &mut rng),
            fc_cls: Linear::seeded(fc2, 2, &mut rng),
            momentum: 0.9,
        })
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn fc_units(&self) -> (usize, usize, usize) {
        (self.fc1.out_dim, self.fc2.out_dim, self.fc_cls.out_dim)
    }

    pub fn conv_stack(&self) -> &ConvStack {
        &self.conv
    }

    /// Frozen conv features for a patch; rejects wrong patch sizes.
    pub fn features(&self, patch: &Image) -> Result<Vec<f64>> {
        if patch.height() != self.input_size || patch.width() != self.input_size {
            return Err(CoreError::DimensionMismatch(format!(
                "classifier expects {0}x{0} patches, got {1}x{2}",
                self.input_size,
                patch.height(),
                patch.width()
            )));
        }
        self.conv.features(patch)
    }

    fn forward(&self, feat: &[f64], h1: &mut Vec<f64>, h2: &mut Vec<f64>, logits: &mut Vec<f64>) {
        self.fc1.forward(feat, h1);
        for v in h1.iter_mut() {
            *v = v.max(0.0);
        }
        self.fc2.forward(h1, h2);
        for v in h2.iter_mut() {
            *v = v.max(0.0);
        }
        self.fc_cls.forward(h2, logits);
    }

    /// Softmax class probabilities for a feature vector:
    /// `(p_target, p_background)`.
    pub fn score_features(&self, feat: &[f64]) -> (f64, f64) {
        let (mut h1, mut h2, mut logits) = (Vec::new(), Vec::new(), Vec::new());
        self.forward(feat, &mut h1, &mut h2, &mut logits);
        let m = logits[0].max(logits[1]);
        let e0 = (logits[0] - m).exp();
        let e1 = (logits[1] - m).exp();
        (e0 / (e0 + e1), e1 / (e0 + e1))
    }

    /// Softmax probabilities `(p_target, p_background)` for a patch; they
    /// lie in [0, 1] and sum to 1 within float rounding.
    pub fn score(&self, patch: &Image) -> Result<(f32, f32)> {
        let feat = self.features(patch)?;
        let (pt, pb) = self.score_features(&feat);
        Ok((pt as f32, pb as f32))
    }

    /// Candidate with the highest target probability; ties resolve to the
    /// earliest candidate (peak-major, scale-ascending order).
    pub fn select_optimal(&self, candidates: &[Candidate]) -> Result<Selection> {
        if candidates.is_empty() {
            return Err(CoreError::InvalidInput("no candidates to select from".into()));
        }
        let mut p_targets = Vec::with_capacity(candidates.len());
        for c in candidates {
            let feat = self.features(&c.patch)?;
            p_targets.push(self.score_features(&feat).0);
        }
        let index = argmax_first(&p_targets);
        Ok(Selection {
            index,
            p_target: p_targets[index] as f32,
            scores: p_targets.iter().map(|&v| v as f32).collect(),
        })
    }

    /// Batched hidden activations, weight-row-outer so each weight matrix
    /// streams through memory once for the whole sample set.
    fn batch_hidden(&self, feats: &[(Vec<f64>, Label)]) -> (Vec<f64>, Vec<f64>) {
        let n = feats.len();
        let d1 = self.fc1.out_dim;
        let d2 = self.fc2.out_dim;
        let mut h1 = vec![0.0f64; n * d1];
        for j in 0..d1 {
            let row = &self.fc1.w[j * self.fc1.in_dim..(j + 1) * self.fc1.in_dim];
            let b = self.fc1.b[j];
            for (s, (x, _)) in feats.iter().enumerate() {
                h1[s * d1 + j] = (b + dot(row, x)).max(0.0);
            }
        }
        let mut h2 = vec![0.0f64; n * d2];
        for j in 0..d2 {
            let row = &self.fc2.w[j * self.fc2.in_dim..(j + 1) * self.fc2.in_dim];
            let b = self.fc2.b[j];
            for s in 0..n {
                h2[s * d2 + j] = (b + dot(row, &h1[s * d1..(s + 1) * d1])).max(0.0);
            }
        }
        (h1, h2)
    }

    /// Mean softmax cross-entropy over labeled feature vectors.
    pub fn loss_on_features(&self, feats: &[(Vec<f64>, Label)]) -> f64 {
        let d2 = self.fc2.out_dim;
        let (_, h2) = self.batch_hidden(feats);
        let mut total = 0.0;
        for (s, (_, label)) in feats.iter().enumerate() {
            let h2_s = &h2[s * d2..(s + 1) * d2];
            let l0 = self.fc_cls.b[0] + dot(&self.fc_cls.w[..d2], h2_s);
            let l1 = self.fc_cls.b[1] + dot(&self.fc_cls.w[d2..], h2_s);
            let m = l0.max(l1);
            let log_z = m + ((l0 - m).exp() + (l1 - m).exp()).ln();
            let target_logit = match label {
                Label::Foreground => l0,
                Label::Background => l1,
            };
            total += log_z - target_logit;
        }
        total / feats.len() as f64
    }

    /// Gradient of `loss_on_features` with respect to every trainable
    /// parameter, flattened in the same order as `get_param`/`set_param`:
    /// fc1.w, fc1.b, fc2.w, fc2.b, fc_cls.w, fc_cls.b.
    ///
    /// Computed batch-major with weight-row-outer loops so each weight
    /// matrix streams through memory once per call instead of once per
    /// sample; the loop order is fixed, so results are deterministic.
    pub fn gradients_on_features(&self, feats: &[(Vec<f64>, Label)]) -> Vec<f64> {
        let n = feats.len();
        let inv_n = 1.0 / n as f64;
        let d1 = self.fc1.out_dim;
        let d2 = self.fc2.out_dim;
        let (h1, h2) = self.batch_hidden(feats);

        // per-sample softmax deltas and the small classification layer
        let mut g_w3 = vec![0.0; self.fc_cls.w.len()];
        let mut g_b3 = vec![0.0; self.fc_cls.b.len()];
        let mut dh2 = vec![0.0f64; n * d2];
        for (s, (_, label)) in feats.iter().enumerate() {
            let h2_s = &h2[s * d2..(s + 1) * d2];
            let l0 = self.fc_cls.b[0] + dot(&self.fc_cls.w[..d2], h2_s);
            let l1 = self.fc_cls.b[1] + dot(&self.fc_cls.w[d2..], h2_s);
            let m = l0.max(l1);
            let e0 = (l0 - m).exp();
            let e1 = (l1 - m).exp();
            let z = e0 + e1;
            let mut dlogits = [e0 / z * inv_n, e1 / z * inv_n];
            match label {
                Label::Foreground => dlogits[0] -= inv_n,
                Label::Background => dlogits[1] -= inv_n,
            }
            let dh2_s = &mut dh2[s * d2..(s + 1) * d2];
            for j in 0..2 {
                let row = &self.fc_cls.w[j * d2..(j + 1) * d2];
                axpy(&mut g_w3[j * d2..(j + 1) * d2], dlogits[j], h2_s);
                axpy(dh2_s, dlogits[j], row);
                g_b3[j] += dlogits[j];
            }
            // ReLU mask (h2 > 0 iff pre-activation > 0)
            for (d, &h) in dh2_s.iter_mut().zip(h2_s) {
                if h <= 0.0 {
                    *d = 0.0;
                }
            }
        }

        // fc2 weight gradients and backprop to h1, row-outer
        let mut g_w2 = vec![0.0; self.fc2.w.len()];
        let mut g_b2 = vec![0.0; self.fc2.b.len()];
        let mut dh1 = vec![0.0f64; n * d1];
        for j in 0..d2 {
            let row = &self.fc2.w[j * self.fc2.in_dim..(j + 1) * self.fc2.in_dim];
            let g_row = &mut g_w2[j * self.fc2.in_dim..(j + 1) * self.fc2.in_dim];
            let mut gb = 0.0;
            for s in 0..n {
                let d = dh2[s * d2 + j];
                if d == 0.0 {
                    continue;
                }
                axpy(g_row, d, &h1[s * d1..(s + 1) * d1]);
                axpy(&mut dh1[s * d1..(s + 1) * d1], d, row);
                gb += d;
            }
            g_b2[j] = gb;
        }
        for (d, &h) in dh1.iter_mut().zip(&h1) {
            if h <= 0.0 {
                *d = 0.0;
            }
        }

        // fc1 weight gradients, row-outer
        let mut g_w1 = vec![0.0; self.fc1.w.len()];
        let mut g_b1 = vec![0.0; self.fc1.b.len()];
        for j in 0..d1 {
            let g_row = &mut g_w1[j * self.fc1.in_dim..(j + 1) * self.fc1.in_dim];
            let mut gb = 0.0;
            for (s, (x, _)) in feats.iter().enumerate() {
                let d = dh1[s * d1 + j];
                if d == 0.0 {
                    continue;
                }
                axpy(g_row, d, x);
                gb += d;
            }
            g_b1[j] = gb;
        }

        let mut out = Vec::with_capacity(self.num_trainable());
        out.extend(g_w1);
        out.extend(g_b1);
        out.extend(g_w2);
        out.extend(g_b2);
        out.extend(g_w3);
        out.extend(g_b3);
        out
    }

    pub fn num_trainable(&self) -> usize {
        self.fc1.param_count() + self.fc2.param_count() + self.fc_cls.param_count()
    }

    fn param_slot(&mut self, idx: usize) -> &mut f64 {
        let mut i = idx;
        for layer in [&mut self.fc1, &mut self.fc2, &mut self.fc_cls] {
            if i < layer.w.len() {
                return &mut layer.w[i];
            }
            i -= layer.w.len();
            if i < layer.b.len() {
                return &mut layer.b[i];
            }
            i -= layer.b.len();
        }
        panic!("parameter index {idx} out of range");
    }

    pub fn get_param(&mut self, idx: usize) -> f64 {
        *self.param_slot(idx)
    }

    pub fn set_param(&mut self, idx: usize, v: f64) {
        *self.param_slot(idx) = v;
    }

    /// Full-batch SGD with momentum on the given samples, `iterations`
    /// steps at learning rate `lr`. Only fc1, fc2 and the classification
    /// layer move; the conv stack is untouched. Requires at least one
    /// sample of each class.
    pub fn fine_tune(
        &mut self,
        samples: &[TrainingSample],
        iterations: usize,
        lr: f64,
    ) -> Result<TuneReport> {
        let has_fg = samples.iter().any(|s| s.label == Label::Foreground);
        let has_bg = samples.iter().any(|s| s.label == Label::Background);
        if !has_fg || !has_bg {
            return Err(CoreError::InvalidInput(
                "fine_tune needs at least one sample of each class".into(),
            ));
        }
        // conv stack is frozen, so features are computed once per sample
        let mut feats = Vec::with_capacity(samples.len());
        for s in samples {
            feats.push((self.features(&s.patch)?, s.label));
        }
        Ok(self.fine_tune_features(&feats, iterations, lr))
    }

    fn fine_tune_features(
        &mut self,
        feats: &[(Vec<f64>, Label)],
        iterations: usize,
        lr: f64,
    ) -> TuneReport {
        let initial_loss = self.loss_on_features(feats);
        for _ in 0..iterations {
            let grads = self.gradients_on_features(feats);
            let m = self.momentum;
            let mut i = 0;
            for layer in [&mut self.fc1, &mut self.fc2, &mut self.fc_cls] {
                for (w, vw) in layer.w.iter_mut().zip(layer.vw.iter_mut()) {
                    *vw = m * *vw + grads[i];
                    *w -= lr * *vw;
                    i += 1;
                }
                for (b, vb) in layer.b.iter_mut().zip(layer.vb.iter_mut()) {
                    *vb = m * *vb + grads[i];
                    *b -= lr * *vb;
                    i += 1;
                }
            }
            debug_assert_eq!(i, grads.len());
        }
        TuneReport {
            initial_loss,
            final_loss: self.loss_on_features(feats),
        }
    }

    /// Bit patterns of all trainable parameters, for identity checks.
    pub fn trainable_bits(&self) -> Vec<u64> {
        let mut out = Vec::with_capacity(self.num_trainable());
        for layer in [&self.fc1, &self.fc2, &self.fc_cls] {
            out.extend(layer.w.iter().map(|v| v.to_bits()));
            out.extend(layer.b.iter().map(|v| v.to_bits()));
        }
        out
    }
}

/// Labeled training patches around an optimal box: `counts.0` foreground
/// samples from Gaussian perturbations (IoU >= `thresholds.0`) and
/// `counts.1` background samples from uniform perturbations (IoU <=
/// `thresholds.1`), each cropped with the usual context margin and resized
/// to `cls_size`.
///
/// The first foreground sample is the unperturbed box itself. Draws that
/// fail their IoU bound are retried a bounded number of times and then
/// skipped, so the function always returns (possibly with fewer samples).
pub fn generate_samples(
    frame: &Image,
    optimal_box: &BoundingBox,
    counts: (usize, usize),
    thresholds: (f32, f32),
    cls_size: usize,
    seed: u64,
) -> Vec<TrainingSample> {
    const MAX_TRIES: usize = 50;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(counts.0 + counts.1);
    let side = (optimal_box.w * optimal_box.h).sqrt();

    let crop_sample = |b: &BoundingBox| -> Image {
        let g = CropGeometry::for_box(b);
        let crop = crop_padded(frame, (b.cx, b.cy), (g.exemplar_side.round() as i64).max(1) as usize);
        resize_bilinear(&crop, cls_size, cls_size)
    };

    for i in 0..counts.0 {
        if i == 0 {
            out.push(TrainingSample {
                patch: crop_sample(optimal_box),
                label: Label::Foreground,
                iou_with_target: 1.0,
            });
            continue;
        }
        for _ in 0..MAX_TRIES {
            let dx: f64 = StandardNormal.sample(&mut rng);
            let dy: f64 = StandardNormal.sample(&mut rng);
            let ds: f64 = StandardNormal.sample(&mut rng);
            let f = 1.02f32.powf(ds as f32);
            let b = BoundingBox {
                cx: optimal_box.cx + dx as f32 * 0.06 * side,
                cy: optimal_box.cy + dy as f32 * 0.06 * side,
                w: optimal_box.w * f,
                h: optimal_box.h * f,
            };
            let iou = b.iou(optimal_box);
            if iou >= thresholds.0 {
                out.push(TrainingSample {
                    patch: crop_sample(&b),
                    label: Label::Foreground,
                    iou_with_target: iou,
                });
                break;
            }
        }
    }

    for _ in 0..counts.1 {
        for _ in 0..MAX_TRIES {
            let dx = rng.random_range(-1.5..1.5) * side;
            let dy = rng.random_range(-1.5..1.5) * side;
            let f = rng.random_range(0.7..1.3);
            let b = BoundingBox {
                cx: (optimal_box.cx + dx).clamp(0.0, frame.width() as f32 - 1.0),
                cy: (optimal_box.cy + dy).clamp(0.0, frame.height() as f32 - 1.0),
                w: optimal_box.w * f,
                h: optimal_box.h * f,
            };
            let iou = b.iou(optimal_box);
            if iou <= thresholds.1 {
                out.push(TrainingSample {
                    patch: crop_sample(&b),
                    label: Label::Background,
                    iou_with_target: iou,
                });
                break;
            }
        }
    }

    out
}
