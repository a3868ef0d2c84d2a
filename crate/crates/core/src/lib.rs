//! Cascaded Siamese visual tracker.
//!
//! The pipeline runs two stages per frame: a fixed matching stage that
//! cross-correlates the first-frame exemplar against a search region and
//! proposes candidate positions at every qualifying score peak, and an
//! online-trained classifier that scores scaled candidate patches to pick
//! the optimal result. A score-fused gate decides each frame whether the
//! classifier's trainable layers may fine-tune.
//!
//! Modules follow the pipeline order:
//! - [`imaging`]: tensors, images, boxes, cross-correlation, crop/resize
//! - [`embedding`]: pluggable feature extractors for the matching stage
//! - [`matching`]: similarity maps, peak finding, coordinate mapping
//! - [`candidates`]: scale-pyramid candidate patch extraction
//! - [`classifier`]: foreground/background head with online SGD
//! - [`gate`]: score-history update gating
//! - [`tracker`]: per-frame orchestration and sequence driving
//! - [`sequence`] / [`metrics`]: dataset I/O, synthetic sequences, evaluation

pub mod candidates;
pub mod classifier;
pub mod config;
pub mod convnet;
pub mod embedding;
pub mod error;
pub mod gate;
pub mod imaging;
pub mod matching;
pub mod metrics;
pub mod sequence;
pub mod tracker;

pub use config::Hyperparams;
pub use error::CoreError;
pub use imaging::{BoundingBox, Image, Tensor3};
pub use tracker::{TrackResult, TrackerState, Variant};
