//! Domain types shared across the pipeline.
//!
//! Everything here is immutable after construction and validated on the way
//! in, so downstream code can rely on the invariants without re-checking.

mod bundle;
mod instance;
mod scores;

pub use bundle::{sanitize_guidance, GuidanceBundle, GuidanceKind};
pub use instance::{
    normalize_whitespace, read_instances_jsonl, validate_instance, write_instances_jsonl, Dataset,
    Difficulty, MultiChoiceInstance, MAX_CHOICES, MIN_CHOICES,
};
pub use scores::{ChoiceScores, LossRecord};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("instance {id:?}: expected between 2 and 5 choices, got {count}")]
    ChoiceCount { id: String, count: usize },
    #[error("instance {id:?}: gold index {index} out of range for {count} choices")]
    GoldIndex { id: String, index: i64, count: usize },
    #[error("instance {id:?}: choices {first} and {second} are identical after normalization ({text:?})")]
    DuplicateChoice {
        id: String,
        first: usize,
        second: usize,
        text: String,
    },
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("guidance for {instance_id:?} kind {kind}: {message}")]
    InvalidGuidance {
        instance_id: String,
        kind: GuidanceKind,
        message: String,
    },
    #[error("cannot merge guidance for {left:?} into {right:?}")]
    BundleIdMismatch { left: String, right: String },
    #[error("guidance conflict for {instance_id:?}: kind {kind} present in both bundles")]
    BundleConflict {
        instance_id: String,
        kind: GuidanceKind,
    },
    #[error("choice scores: {0}")]
    Scores(String),
    #[error("gold index {0} is masked or out of range")]
    MaskedGold(usize),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
