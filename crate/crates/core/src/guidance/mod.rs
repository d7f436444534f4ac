//! Guidance text: construction, caching and combination.

mod cache;
mod generator;
pub mod ingest;
mod objects;
mod scene;

use thiserror::Error;

pub use cache::{CacheEntry, GuidanceCache};
pub use generator::{GeneratorContract, StubGenerator};
pub use objects::{count_word, parse_objects, pluralize, serialize_objects, DetectionSet};
pub use scene::{serialize_scene_graph, SceneTriplet, SEP_TOKEN};

use crate::types::{CoreError, GuidanceBundle, GuidanceKind};

#[derive(Debug, Error)]
pub enum GuidanceError {
    #[error("detection set is empty")]
    EmptyDetection,
    #[error("scene triplet has an empty field: {0:?}")]
    EmptyTripletField(SceneTriplet),
    #[error("none of the requested guidance kinds are available for {0:?}")]
    NoGuidanceAvailable(String),
    #[error("cache conflict for ({instance_id:?}, {kind}); pass --overwrite to replace")]
    CacheConflict { instance_id: String, kind: GuidanceKind },
    #[error("cache io on {path}: {message}")]
    CacheIo { path: String, message: String },
    #[error("generation input: {0}")]
    GenerationInput(String),
    #[error("cannot parse {what}: {message}")]
    Parse { what: String, message: String },
    #[error(transparent)]
    Core(#[from] CoreError),
}

/// Canonical "All" order.
pub const ALL_KINDS: [GuidanceKind; 5] = [
    GuidanceKind::Rationale,
    GuidanceKind::Explanation,
    GuidanceKind::Caption,
    GuidanceKind::SceneGraph,
    GuidanceKind::Objects,
];
pub const CSO_KINDS: [GuidanceKind; 3] = [GuidanceKind::Caption, GuidanceKind::SceneGraph, GuidanceKind::Objects];
pub const CSOL_KINDS: [GuidanceKind; 4] = [
    GuidanceKind::Caption,
    GuidanceKind::SceneGraph,
    GuidanceKind::Objects,
    GuidanceKind::Lecture,
];

/// Parses `all`, `cso`, `csol`, or a comma-separated list of kinds.
pub fn parse_kinds(spec: &str) -> Result<Vec<GuidanceKind>, GuidanceError> {
    match spec.trim().to_ascii_lowercase().as_str() {
        "all" => Ok(ALL_KINDS.to_vec()),
        "cso" => Ok(CSO_KINDS.to_vec()),
        "csol" => Ok(CSOL_KINDS.to_vec()),
        list => {
            let kinds = list
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| {
                    s.parse().map_err(|message| GuidanceError::Parse {
                        what: "guidance kinds".into(),
                        message,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            if kinds.is_empty() {
                return Err(GuidanceError::Parse {
                    what: "guidance kinds".into(),
                    message: "empty list".into(),
                });
            }
            Ok(kinds)
        }
    }
}

/// Result of [`combine`]: the joined text and the requested kinds that were
/// missing from the bundle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Combined {
    pub text: String,
    pub missing: Vec<GuidanceKind>,
}

/// Joins the bundle's entries for `kinds`, in the given order, with single
/// spaces. Missing kinds are skipped with a warning.
pub fn combine(bundle: &GuidanceBundle, kinds: &[GuidanceKind]) -> Result<Combined, GuidanceError> {
    let mut parts = Vec::with_capacity(kinds.len());
    let mut missing = Vec::new();
    for &kind in kinds {
        match bundle.get(kind) {
            Some(text) => parts.push(text),
            None => missing.push(kind),
        }
    }
    if parts.is_empty() {
        return Err(GuidanceError::NoGuidanceAvailable(bundle.instance_id().to_string()));
    }
    if !missing.is_empty() {
        log::warn!(
            "instance {}: skipping missing guidance kinds {:?}",
            bundle.instance_id(),
            missing.iter().map(|k| k.as_str()).collect::<Vec<_>>()
        );
    }
    Ok(Combined {
        text: parts.join(" "),
        missing,
    })
}
