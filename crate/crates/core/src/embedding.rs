//! Feature extractors for the matching stage.
//!
//! The extractor is pluggable behind [`Embedding`]; both built-ins are
//! deterministic, so a full tracking run reproduces bit-for-bit given the
//! configured seed. Embeddings are immutable after construction and
//! `embed` is a pure function, so concurrent use is safe.

use crate::convnet::{image_to_tensor, normalize_patch, ConvLayer};
use crate::error::{CoreError, Result};
use crate::imaging::{Image, Tensor3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Published geometry of an embedding: how patch pixels map to feature cells.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpec {
    pub name: String,
    /// Pixels of input motion per cell of feature-map motion.
    pub total_stride: usize,
    pub out_channels: usize,
}

pub trait Embedding: Send + Sync {
    fn spec(&self) -> &EmbeddingSpec;

    /// Feature-map side length for a square input of side `n`, or None when
    /// the input is too small for this embedding.
    fn output_size(&self, n: usize) -> Option<usize>;

    /// Deterministic feature extraction; identical inputs give bit-identical
    /// outputs and the result dims obey `output_size`.
    fn embed(&self, patch: &Image) -> Result<Tensor3>;
}

/// Stride-1 single-channel embedding: grayscale, zero-mean, unit L2 norm
/// per patch. Exactly translation covariant, which makes it the reference
/// extractor for geometry tests.
pub struct IdentityEmbedding {
    spec: EmbeddingSpec,
}

impl IdentityEmbedding {
    pub fn new() -> Self {
        IdentityEmbedding {
            spec: EmbeddingSpec {
                name: "identity".into(),
                total_stride: 1,
                out_channels: 1,
            },
        }
    }
}

impl Default for IdentityEmbedding {
    fn default() -> Self {
        Self::new()
    }
}

impl Embedding for IdentityEmbedding {
    fn spec(&self) -> &EmbeddingSpec {
        &self.spec
    }

    fn output_size(&self, n: usize) -> Option<usize> {
        (n >= 1).then_some(n)
    }

    fn embed(&self, patch: &Image) -> Result<Tensor3> {
        let gray = patch.to_gray();
        let mut t = image_to_tensor(&gray, 1);
        // f64 accumulation keeps the statistics order-independent for
        // integer-valued pixels, which translation tests rely on.
        let mut sum = 0.0f64;
        for &v in t.data() {
            sum += v as f64;
        }
        let mean = sum / t.data().len() as f64;
        let mut sq = 0.0f64;
        for &v in t.data() {
            let d = v as f64 - mean;
            sq += d * d;
        }
        let norm = sq.sqrt().max(1e-6);
        for v in t.data_mut() {
            *v = ((*v as f64 - mean) / norm) as f32;
        }
        Ok(t)
    }
}

/// Two seeded conv+ReLU stages with total stride 8 and 16 output channels.
///
/// Geometry: side n -> (n - 11)/4 + 1 -> (m - 19)/2 + 1, so 127 -> 6 and
/// 255 -> 22, giving the 17x17 similarity map the tracker is sized for.
/// Weights are drawn once from the seeded generator and never change.
pub struct FixedConvEmbedding {
    spec: EmbeddingSpec,
    conv1: ConvLayer,
    conv2: ConvLayer,
}

pub const FIXED_CONV_STRIDE: usize = 8;

impl FixedConvEmbedding {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let conv1 = ConvLayer::seeded(1, 8, 11, 4, true, &mut rng);
        let conv2 = ConvLayer::seeded(8, 16, 19, 2, true, &mut rng);
        FixedConvEmbedding {
            spec: EmbeddingSpec {
                name: "fixed_conv".into(),
                total_stride: FIXED_CONV_STRIDE,
                out_channels: 16,
            },
            conv1,
            conv2,
        }
    }
}

impl Embedding for FixedConvEmbedding {
    fn spec(&self) -> &EmbeddingSpec {
        &self.spec
    }

    fn output_size(&self, n: usize) -> Option<usize> {
        self.conv1.out_size(n).and_then(|m| self.conv2.out_size(m))
    }

    fn embed(&self, patch: &Image) -> Result<Tensor3> {
        let n = patch.height().min(patch.width());
        if self.output_size(n).is_none() {
            return Err(CoreError::InvalidInput(format!(
                "patch {}x{} too small for {}",
                patch.height(),
                patch.width(),
                self.spec.name
            )));
        }
        let gray = patch.to_gray();
        let mut t = image_to_tensor(&gray, 1);
        normalize_patch(&mut t);
        let h1 = self.conv1.forward(&t)?;
        self.conv2.forward(&h1)
    }
}

/// Construct an embedding from the `embedding.name` / `embedding.seed`
/// config keys.
pub fn build_embedding(name: &str, seed: u64) -> Result<Box<dyn Embedding>> {
    match name {
        "identity" => Ok(Box::new(IdentityEmbedding::new())),
        "fixed_conv" => Ok(Box::new(FixedConvEmbedding::new(seed))),
        other => Err(CoreError::Config(format!(
            "unknown embedding '{other}' (expected identity or fixed_conv)"
        ))),
    }
}
