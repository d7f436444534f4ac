//! Matching backends.
//!
//! Two interfaces cover the supported model families:
//!
//! - [`DualEncoder`]: independent image and text encoders plus a learned log
//!   temperature. [`dual_match`] computes `exp(t) * <norm(I), norm(T)>`.
//! - [`QueryFusion`]: an image encoder producing token vectors and a query
//!   transformer that pools them against the text into one feature vector; a
//!   projection head maps features to a score ([`fusion_match`]). Backends may
//!   also carry a second head over [`merge_features`] output for two-pass
//!   guided scoring.
//!
//! Pretrained models plug in behind these traits (see [`plugin`]). The crate
//! itself ships [`ToyDualEncoder`] and [`ToyFusion`], small deterministic
//! backends with hand-written gradients that make training testable.

mod dual;
pub mod dump;
mod fusion;
pub mod params;
pub mod plugin;
pub mod tokenizer;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dual::{extend_positional_table, ToyDualConfig, ToyDualEncoder, BASE_TEXT_LEN, EXTENDED_TEXT_LEN};
pub use fusion::{ToyFusion, ToyFusionConfig};
pub use params::{Checkpoint, ParamStore, Tensor};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("text is empty or has no tokens")]
    EmptyText,
    #[error("cannot resolve image {0:?}")]
    ImageResolve(String),
    #[error("dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error("cannot shrink positional table from {current} to {requested} rows")]
    Shrink { current: usize, requested: usize },
    #[error("degenerate {0} embedding (zero or non-finite norm)")]
    DegenerateEmbedding(&'static str),
    #[error("backend has no guided projection head")]
    NoGuidedHead,
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Pretrained or toy dual encoder (image tower, text tower, temperature).
pub trait DualEncoder: Send + Sync {
    fn encode_image(&self, image_ref: &str) -> Result<Vec<f64>, BackendError>;
    fn encode_text(&self, text: &str) -> Result<Vec<f64>, BackendError>;
    /// The learned `t`; scores are scaled by `exp(t)`.
    fn log_temperature(&self) -> f64;
    fn max_text_len(&self) -> usize;
}

/// Image tokens produced by a fusion backend's (frozen) image encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTokens(pub Vec<Vec<f64>>);

/// Query-transformer backend.
pub trait QueryFusion: Send + Sync {
    fn encode_image(&self, image_ref: &str) -> Result<ImageTokens, BackendError>;
    /// Pools the image tokens against `text` through the learned queries.
    fn qformer(&self, image: &ImageTokens, text: &str) -> Result<Vec<f64>, BackendError>;
    fn feature_dim(&self) -> usize;
    fn project(&self, features: &[f64]) -> Result<f64, BackendError>;
    /// Head over merged `[x1, x2, x1 - x2, x1 * x2]` features.
    fn project_guided(&self, _merged: &[f64]) -> Result<f64, BackendError> {
        Err(BackendError::NoGuidedHead)
    }
    fn has_guided_head(&self) -> bool {
        false
    }
}

#[derive(Clone, Copy)]
pub enum BackendRef<'a> {
    Dual(&'a dyn DualEncoder),
    Fusion(&'a dyn QueryFusion),
}

impl BackendRef<'_> {
    pub fn kind(&self) -> BackendKind {
        match self {
            BackendRef::Dual(_) => BackendKind::Dual,
            BackendRef::Fusion(_) => BackendKind::Fusion,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Dual,
    Fusion,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendKind::Dual => "dual",
            BackendKind::Fusion => "fusion",
        })
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

pub fn l2_normalize(v: &[f64], what: &'static str) -> Result<Vec<f64>, BackendError> {
    let norm = l2_norm(v);
    if !(norm.is_finite() && norm > 0.0) {
        return Err(BackendError::DegenerateEmbedding(what));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

/// `rows x cols` row-major matrix times vector.
pub(crate) fn matvec(w: &[f64], cols: usize, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(x.len(), cols);
    w.chunks_exact(cols).map(|row| dot(row, x)).collect()
}

/// Temperature-scaled cosine between L2-normalized image and text embeddings.
pub fn dual_match(backend: &dyn DualEncoder, image_ref: &str, text: &str) -> Result<f64, BackendError> {
    if text.trim().is_empty() {
        return Err(BackendError::EmptyText);
    }
    let image = backend.encode_image(image_ref)?;
    let text = backend.encode_text(text)?;
    cosine_score(&image, &text, backend.log_temperature())
}

/// `exp(log_temperature) * <norm(image), norm(text)>`.
pub fn cosine_score(image: &[f64], text: &[f64], log_temperature: f64) -> Result<f64, BackendError> {
    if image.len() != text.len() {
        return Err(BackendError::DimMismatch {
            left: image.len(),
            right: text.len(),
        });
    }
    let image = l2_normalize(image, "image")?;
    let text = l2_normalize(text, "text")?;
    Ok(log_temperature.exp() * dot(&image, &text))
}

/// `Proj(Q(I(image), text, q))`.
pub fn fusion_match(backend: &dyn QueryFusion, image_ref: &str, text: &str) -> Result<f64, BackendError> {
    if text.trim().is_empty() {
        return Err(BackendError::EmptyText);
    }
    let image = backend.encode_image(image_ref)?;
    let features = backend.qformer(&image, text)?;
    backend.project(&features)
}

/// Two-pass guided fusion score: `Proj_guided(merge(Q(I, unguided), Q(I, guided)))`.
pub fn fusion_merged_match(
    backend: &dyn QueryFusion,
    image_ref: &str,
    unguided: &str,
    guided: &str,
) -> Result<f64, BackendError> {
    if !backend.has_guided_head() {
        return Err(BackendError::NoGuidedHead);
    }
    let image = backend.encode_image(image_ref)?;
    let x1 = backend.qformer(&image, unguided)?;
    let x2 = backend.qformer(&image, guided)?;
    backend.project_guided(&merge_features(&x1, &x2)?)
}

/// `[x1, x2, x1 - x2, x1 * x2]`.
pub fn merge_features(x1: &[f64], x2: &[f64]) -> Result<Vec<f64>, BackendError> {
    if x1.len() != x2.len() {
        return Err(BackendError::DimMismatch {
            left: x1.len(),
            right: x2.len(),
        });
    }
    let mut out = Vec::with_capacity(4 * x1.len());
    out.extend_from_slice(x1);
    out.extend_from_slice(x2);
    out.extend(x1.iter().zip(x2).map(|(a, b)| a - b));
    out.extend(x1.iter().zip(x2).map(|(a, b)| a * b));
    Ok(out)
}

/// Gradient of `merge_features` pulled back to `(x1, x2)`.
pub(crate) fn merge_features_backward(x1: &[f64], x2: &[f64], upstream: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = x1.len();
    let (g1, rest) = upstream.split_at(d);
    let (g2, rest) = rest.split_at(d);
    let (gdiff, gprod) = rest.split_at(d);
    let dx1 = (0..d).map(|i| g1[i] + gdiff[i] + gprod[i] * x2[i]).collect();
    let dx2 = (0..d).map(|i| g2[i] - gdiff[i] + gprod[i] * x1[i]).collect();
    (dx1, dx2)
}

/// Where image features for the toy backends come from.
#[derive(Debug, Clone, Default)]
pub enum ImageSource {
    /// Pseudo-features hashed from the reference's tokens.
    #[default]
    Hashed,
    /// Precomputed features; unknown references fail to resolve.
    Table(Arc<BTreeMap<String, Vec<f64>>>),
}

impl ImageSource {
    pub fn feature(&self, image_ref: &str, dim: usize) -> Result<Vec<f64>, BackendError> {
        match self {
            ImageSource::Hashed => tokenizer::image_pseudo_feature(image_ref, dim),
            ImageSource::Table(table) => {
                let v = table
                    .get(image_ref)
                    .ok_or_else(|| BackendError::ImageResolve(image_ref.to_string()))?;
                if v.len() != dim {
                    return Err(BackendError::DimMismatch {
                        left: v.len(),
                        right: dim,
                    });
                }
                Ok(v.clone())
            }
        }
    }
}

/// What a single differentiable score is computed from.
#[derive(Debug, Clone, Copy)]
pub enum MatchRoute<'a> {
    /// One text, scored by the backend's base matching function.
    Single(&'a str),
    /// Two passes whose features are merged (fusion backends only).
    Merged { unguided: &'a str, guided: &'a str },
}

/// A backend whose parameters can be trained with the crate's optimizer.
pub trait TrainableBackend: Send + Sync {
    fn kind(&self) -> BackendKind;
    fn scorer(&self) -> BackendRef<'_>;
    fn params(&self) -> &ParamStore;
    fn params_mut(&mut self) -> &mut ParamStore;
    /// Parameters making up the image encoder.
    fn image_encoder_params(&self) -> Vec<String>;
    /// Computes the score for `route` and adds `upstream * d score / d params`
    /// into `grads`. Returns the score.
    fn match_with_grad(
        &self,
        image_ref: &str,
        route: MatchRoute<'_>,
        upstream: f64,
        grads: &mut ParamStore,
    ) -> Result<f64, BackendError>;
    fn save_checkpoint(&self, path: &Path) -> Result<(), BackendError>;
}

/// Backend selector accepted on the command line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackendSpec {
    ToyDual,
    ToyFusion,
    Plugin(String),
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "toy-dual" => Ok(BackendSpec::ToyDual),
            "toy-fusion" => Ok(BackendSpec::ToyFusion),
            other => match other.strip_prefix("plugin:") {
                Some(name) if !name.is_empty() => Ok(BackendSpec::Plugin(name.to_string())),
                _ => Err(format!(
                    "unknown backend {other:?} (expected toy-dual, toy-fusion or plugin:<name>)"
                )),
            },
        }
    }
}

/// Either toy backend, behind one type for the CLI and training loop.
#[derive(Debug, Clone)]
pub enum ToyBackend {
    Dual(ToyDualEncoder),
    Fusion(ToyFusion),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ToyBackendConfig {
    ToyDual(ToyDualConfig),
    ToyFusion(ToyFusionConfig),
}

/// Deterministic toy backend of the requested kind.
pub fn toy_backend(kind: BackendKind, seed: u64, dim: usize) -> Result<ToyBackend, BackendError> {
    Ok(match kind {
        BackendKind::Dual => ToyBackend::Dual(ToyDualEncoder::new(seed, dim)?),
        BackendKind::Fusion => ToyBackend::Fusion(ToyFusion::new(seed, dim)?),
    })
}

impl ToyBackend {
    pub fn load_checkpoint(path: &Path) -> Result<Self, BackendError> {
        let ckpt: Checkpoint<ToyBackendConfig> = Checkpoint::load(path)?;
        let params = ckpt.params()?;
        match ckpt.backend {
            ToyBackendConfig::ToyDual(cfg) => Ok(ToyBackend::Dual(ToyDualEncoder::from_parts(cfg, params)?)),
            ToyBackendConfig::ToyFusion(cfg) => Ok(ToyBackend::Fusion(ToyFusion::from_parts(cfg, params)?)),
        }
    }

    pub fn set_image_source(&mut self, source: ImageSource) {
        match self {
            ToyBackend::Dual(b) => b.set_image_source(source),
            ToyBackend::Fusion(b) => b.set_image_source(source),
        }
    }

    fn inner(&self) -> &dyn TrainableBackend {
        match self {
            ToyBackend::Dual(b) => b,
            ToyBackend::Fusion(b) => b,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn TrainableBackend {
        match self {
            ToyBackend::Dual(b) => b,
            ToyBackend::Fusion(b) => b,
        }
    }
}

impl TrainableBackend for ToyBackend {
    fn kind(&self) -> BackendKind {
        self.inner().kind()
    }

    fn scorer(&self) -> BackendRef<'_> {
        self.inner().scorer()
    }

    fn params(&self) -> &ParamStore {
        self.inner().params()
    }

    fn params_mut(&mut self) -> &mut ParamStore {
        self.inner_mut().params_mut()
    }

    fn image_encoder_params(&self) -> Vec<String> {
        self.inner().image_encoder_params()
    }

    fn match_with_grad(
        &self,
        image_ref: &str,
        route: MatchRoute<'_>,
        upstream: f64,
        grads: &mut ParamStore,
    ) -> Result<f64, BackendError> {
        self.inner().match_with_grad(image_ref, route, upstream, grads)
    }

    fn save_checkpoint(&self, path: &Path) -> Result<(), BackendError> {
        self.inner().save_checkpoint(path)
    }
}
