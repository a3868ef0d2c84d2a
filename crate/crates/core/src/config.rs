//! Tracker hyperparameters, loadable from a plain-text `key = value` file
//! with `#` comments. Every key can also be overridden one at a time via
//! `apply`, which backs the CLI's `--set key=value` flag.

use crate::error::{CoreError, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    /// `identity` or `fixed_conv`.
    pub name: String,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassifierConfig {
    /// First-frame training steps on ground-truth samples.
    pub init_iters: usize,
    /// Online fine-tune steps per gated frame.
    pub update_iters: usize,
    pub lr_init: f64,
    pub lr_update: f64,
    pub momentum: f64,
    pub pos_samples: usize,
    pub neg_samples: usize,
    pub pos_iou: f32,
    pub neg_iou: f32,
    pub seed: u64,
}

/// All tunables of the tracking pipeline with their paper-default values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Hyperparams {
    pub gamma_p: f32,
    pub gamma_m: f32,
    pub gamma_c: f32,
    /// Number of historical frames in the gate's score means.
    pub n: usize,
    pub scale_step: f32,
    pub scale_count: usize,
    pub exemplar_size: usize,
    pub candidate_size: usize,
    pub cls_size: usize,
    /// Constant bias added to every similarity-map cell.
    pub bias: f32,
    pub embedding: EmbeddingConfig,
    pub classifier: ClassifierConfig,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            gamma_p: 0.75,
            gamma_m: 0.8,
            gamma_c: 0.6,
            n: 6,
            scale_step: 1.02,
            scale_count: 3,
            exemplar_size: 127,
            candidate_size: 255,
            cls_size: 107,
            bias: 0.0,
            embedding: EmbeddingConfig {
                name: "fixed_conv".into(),
                seed: 1,
            },
            classifier: ClassifierConfig {
                init_iters: 30,
                update_iters: 10,
                lr_init: 1e-2,
                lr_update: 1e-4,
                momentum: 0.9,
                pos_samples: 32,
                neg_samples: 96,
                pos_iou: 0.7,
                neg_iou: 0.3,
                seed: 2,
            },
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| CoreError::Config(format!("bad value '{value}' for key '{key}'")))
}

impl Hyperparams {
    /// Set one key to a string value. Unknown keys are errors.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key.trim() {
            "gate.gamma_p" => self.gamma_p = parse(key, value)?,
            "gate.gamma_m" => self.gamma_m = parse(key, value)?,
            "gate.gamma_c" => self.gamma_c = parse(key, value)?,
            "gate.n" => self.n = parse(key, value)?,
            "scales.step" => self.scale_step = parse(key, value)?,
            "scales.count" => self.scale_count = parse(key, value)?,
            "sizes.exemplar" => self.exemplar_size = parse(key, value)?,
            "sizes.candidate" => self.candidate_size = parse(key, value)?,
            "sizes.cls" => self.cls_size = parse(key, value)?,
            "matching.bias" => self.bias = parse(key, value)?,
            "embedding.name" => self.embedding.name = value.trim().to_string(),
            "embedding.seed" => self.embedding.seed = parse(key, value)?,
            "classifier.init_iters" => self.classifier.init_iters = parse(key, value)?,
            "classifier.update_iters" => self.classifier.update_iters = parse(key, value)?,
            "classifier.lr_init" => self.classifier.lr_init = parse(key, value)?,
            "classifier.lr_update" => self.classifier.lr_update = parse(key, value)?,
            "classifier.momentum" => self.classifier.momentum = parse(key, value)?,
            "classifier.pos_samples" => self.classifier.pos_samples = parse(key, value)?,
            "classifier.neg_samples" => self.classifier.neg_samples = parse(key, value)?,
            "classifier.pos_iou" => self.classifier.pos_iou = parse(key, value)?,
            "classifier.neg_iou" => self.classifier.neg_iou = parse(key, value)?,
            "classifier.seed" => self.classifier.seed = parse(key, value)?,
            other => {
                return Err(CoreError::Config(format!("unknown config key '{other}'")));
            }
        }
        Ok(())
    }

    /// Parse a `key = value` file over the defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CoreError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut hp = Hyperparams::default();
        hp.apply_text(&text)?;
        hp.validate()?;
        Ok(hp)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CoreError::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            self.apply(key, value)?;
        }
        Ok(())
    }

    /// Derive all seeds from a single master seed.
    pub fn set_master_seed(&mut self, seed: u64) {
        self.embedding.seed = seed;
        self.classifier.seed = seed.wrapping_add(1);
    }

    pub fn validate(&self) -> Result<()> {
        let ratio_ok = |v: f32| v > 0.0 && v <= 1.0;
        if !ratio_ok(self.gamma_p) || !ratio_ok(self.gamma_m) || !ratio_ok(self.gamma_c) {
            return Err(CoreError::Config(
                "gate ratios must lie in (0, 1]".into(),
            ));
        }
        if self.n < 1 {
            return Err(CoreError::Config("gate.n must be >= 1".into()));
        }
        if self.scale_count % 2 == 0 || self.scale_count == 0 {
            return Err(CoreError::Config(
                "scales.count must be odd so the center scale is 1".into(),
            ));
        }
        if self.scale_step <= 0.0 {
            return Err(CoreError::Config("scales.step must be positive".into()));
        }
        if self.exemplar_size < 1 || self.candidate_size < 1 || self.cls_size < 1 {
            return Err(CoreError::Config("sizes must be positive".into()));
        }
        if self.candidate_size <= self.exemplar_size {
            return Err(CoreError::Config(
                "sizes.candidate must exceed sizes.exemplar".into(),
            ));
        }
        if !ratio_ok(self.classifier.pos_iou) || self.classifier.neg_iou < 0.0 {
            return Err(CoreError::Config("classifier IoU thresholds invalid".into()));
        }
        if self.classifier.momentum < 0.0 || self.classifier.momentum >= 1.0 {
            return Err(CoreError::Config("classifier.momentum must be in [0, 1)".into()));
        }
        Ok(())
    }

    /// Canonical `(key, value)` listing, sorted by key; the basis of the
    /// config hash and the manifest snapshot.
    pub fn to_key_values(&self) -> Vec<(String, String)> {
        let mut kv = vec![
            ("gate.gamma_p".to_string(), self.gamma_p.to_string()),
            ("gate.gamma_m".to_string(), self.gamma_m.to_string()),
            ("gate.gamma_c".to_string(), self.gamma_c.to_string()),
            ("gate.n".to_string(), self.n.to_string()),
            ("scales.step".to_string(), self.scale_step.to_string()),
            ("scales.count".to_string(), self.scale_count.to_string()),
            ("sizes.exemplar".to_string(), self.exemplar_size.to_string()),
            ("sizes.candidate".to_string(), self.candidate_size.to_string()),
            ("sizes.cls".to_string(), self.cls_size.to_string()),
            ("matching.bias".to_string(), self.bias.to_string()),
            ("embedding.name".to_string(), self.embedding.name.clone()),
            ("embedding.seed".to_string(), self.embedding.seed.to_string()),
            ("classifier.init_iters".to_string(), self.classifier.init_iters.to_string()),
            ("classifier.update_iters".to_string(), self.classifier.update_iters.to_string()),
            ("classifier.lr_init".to_string(), self.classifier.lr_init.to_string()),
            ("classifier.lr_update".to_string(), self.classifier.lr_update.to_string()),
            ("classifier.momentum".to_string(), self.classifier.momentum.to_string()),
            ("classifier.pos_samples".to_string(), self.classifier.pos_samples.to_string()),
            ("classifier.neg_samples".to_string(), self.classifier.neg_samples.to_string()),
            ("classifier.pos_iou".to_string(), self.classifier.pos_iou.to_string()),
            ("classifier.neg_iou".to_string(), self.classifier.neg_iou.to_string()),
            ("classifier.seed".to_string(), self.classifier.seed.to_string()),
        ];
        kv.sort();
        kv
    }

    /// SHA-256 of the canonical key-value listing, hex-encoded.
    pub fn config_hash(&self) -> String {
        let mut canon = String::new();
        for (k, v) in self.to_key_values() {
            let _ = writeln!(canon, "{k}={v}");
        }
        let digest = Sha256::digest(canon.as_bytes());
        digest.iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}
