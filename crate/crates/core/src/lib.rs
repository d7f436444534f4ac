//! Multi-choice visual question answering with language guidance.
//!
//! Questions are answered by scoring every `{question, answer[, guidance]}`
//! text against the image with a matching backend and taking the argmax.
//! Two backend families are supported:
//!
//! - dual encoders: temperature-scaled cosine between independent image and
//!   text embeddings;
//! - query fusion: learned queries attend over image tokens conditioned on the
//!   text, and a projection head turns the pooled feature into a score.
//!
//! Guidance (rationales, captions, scene graphs, object counts, lectures) is
//! either concatenated into the text or, for fusion backends, encoded in a
//! second pass and merged with the unguided features.
//!
//! The crate ships deterministic toy backends so that every stage, including
//! training, runs hermetically on a laptop.

pub mod backends;
pub mod data;
pub mod evalreport;
pub mod guidance;
pub mod scoring;
pub mod training;
pub mod types;

pub use types::{
    ChoiceScores, Dataset, Difficulty, GuidanceBundle, GuidanceKind, LossRecord,
    MultiChoiceInstance,
};
