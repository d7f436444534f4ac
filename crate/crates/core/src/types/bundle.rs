use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CoreError;

/// Kinds of language guidance. Declaration order is the canonical
/// combination order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceKind {
    Rationale,
    Explanation,
    Caption,
    SceneGraph,
    Objects,
    Lecture,
}

impl GuidanceKind {
    pub const ALL: [GuidanceKind; 6] = [
        GuidanceKind::Rationale,
        GuidanceKind::Explanation,
        GuidanceKind::Caption,
        GuidanceKind::SceneGraph,
        GuidanceKind::Objects,
        GuidanceKind::Lecture,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            GuidanceKind::Rationale => "rationale",
            GuidanceKind::Explanation => "explanation",
            GuidanceKind::Caption => "caption",
            GuidanceKind::SceneGraph => "scene_graph",
            GuidanceKind::Objects => "objects",
            GuidanceKind::Lecture => "lecture",
        }
    }
}

impl fmt::Display for GuidanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GuidanceKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "rationale" => Ok(GuidanceKind::Rationale),
            "explanation" => Ok(GuidanceKind::Explanation),
            "caption" | "captions" => Ok(GuidanceKind::Caption),
            "scene_graph" | "scenegraph" => Ok(GuidanceKind::SceneGraph),
            "objects" | "object" => Ok(GuidanceKind::Objects),
            "lecture" => Ok(GuidanceKind::Lecture),
            other => Err(format!("unknown guidance kind {other:?}")),
        }
    }
}

/// Replaces control characters with spaces and collapses whitespace, so the
/// result satisfies the bundle invariants (or is empty).
pub fn sanitize_guidance(text: &str) -> String {
    let cleaned: String = text
        .chars()
        .map(|c| if c.is_control() { ' ' } else { c })
        .collect();
    super::normalize_whitespace(&cleaned)
}

/// Guidance strings attached to one instance, at most one per kind.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GuidanceBundle {
    instance_id: String,
    entries: BTreeMap<GuidanceKind, String>,
}

impl GuidanceBundle {
    pub fn new(instance_id: impl Into<String>) -> Self {
        Self {
            instance_id: instance_id.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn with(mut self, kind: GuidanceKind, text: impl Into<String>) -> Result<Self, CoreError> {
        self.insert(kind, text)?;
        Ok(self)
    }

    pub fn instance_id(&self) -> &str {
        &self.instance_id
    }

    /// Inserts an entry, rejecting empty text, control characters and kinds
    /// that are already present.
    pub fn insert(&mut self, kind: GuidanceKind, text: impl Into<String>) -> Result<(), CoreError> {
        let text = text.into();
        let invalid = |message: &str| CoreError::InvalidGuidance {
            instance_id: self.instance_id.clone(),
            kind,
            message: message.to_string(),
        };
        if text.is_empty() {
            return Err(invalid("text must be non-empty"));
        }
        if text.chars().any(char::is_control) {
            return Err(invalid("text contains control characters"));
        }
        if self.entries.contains_key(&kind) {
            return Err(CoreError::BundleConflict {
                instance_id: self.instance_id.clone(),
                kind,
            });
        }
        self.entries.insert(kind, text);
        Ok(())
    }

    pub fn get(&self, kind: GuidanceKind) -> Option<&str> {
        self.entries.get(&kind).map(String::as_str)
    }

    pub fn contains(&self, kind: GuidanceKind) -> bool {
        self.entries.contains_key(&kind)
    }

    pub fn kinds(&self) -> impl Iterator<Item = GuidanceKind> + '_ {
        self.entries.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Union of two bundles for the same instance. Overlapping kinds are a
    /// conflict even when the texts agree.
    pub fn merge(&self, other: &GuidanceBundle) -> Result<GuidanceBundle, CoreError> {
        if self.instance_id != other.instance_id {
            return Err(CoreError::BundleIdMismatch {
                left: other.instance_id.clone(),
                right: self.instance_id.clone(),
            });
        }
        let mut out = self.clone();
        for (kind, text) in &other.entries {
            out.insert(*kind, text.clone())?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_disjoint_and_conflicting() {
        let a = GuidanceBundle::new("q1")
            .with(GuidanceKind::Caption, "a dog on a beach")
            .unwrap();
        let b = GuidanceBundle::new("q1")
            .with(GuidanceKind::Objects, "one dog")
            .unwrap();
        let m = a.merge(&b).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.get(GuidanceKind::Objects), Some("one dog"));

        let err = m.merge(&a).unwrap_err();
        assert!(matches!(
            err,
            CoreError::BundleConflict {
                kind: GuidanceKind::Caption,
                ..
            }
        ));
        let other = GuidanceBundle::new("q2");
        assert!(matches!(a.merge(&other), Err(CoreError::BundleIdMismatch { .. })));
    }

    #[test]
    fn rejects_empty_and_control_characters() {
        let mut b = GuidanceBundle::new("q");
        assert!(b.insert(GuidanceKind::Rationale, "").is_err());
        assert!(b.insert(GuidanceKind::Rationale, "line\nbreak").is_err());
        assert!(b.insert(GuidanceKind::Rationale, sanitize_guidance("line\nbreak")).is_ok());
        assert_eq!(b.get(GuidanceKind::Rationale), Some("line break"));
    }

    #[test]
    fn kind_names_round_trip() {
        for kind in GuidanceKind::ALL {
            assert_eq!(kind.as_str().parse::<GuidanceKind>().unwrap(), kind);
            let json = serde_json::to_string(&kind).unwrap();
            assert_eq!(json, format!("\"{}\"", kind.as_str()));
        }
    }
}
