//! Dataset adapters and synthetic data.
//!
//! Every adapter returns instances that passed [`validate_instance`]-level
//! checks, the guidance shipped with the dataset (A-OKVQA rationales,
//! ScienceQA lectures) and a list of skipped records with reasons.
//!
//! [`validate_instance`]: crate::types::validate_instance

mod aokvqa;
mod iconqa;
mod scienceqa;
mod synth;
mod vsr;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use aokvqa::load_aokvqa;
pub use iconqa::load_iconqa;
pub use scienceqa::load_scienceqa;
pub use synth::{synth_dataset, SynthDataset, CONCEPTS};
pub use vsr::{load_vsr, VSR_CHOICES, VSR_QUESTION_PREFIX};

use crate::types::{read_instances_jsonl, CoreError, GuidanceBundle, MultiChoiceInstance};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("record {id:?}: {source}")]
    Invalid {
        id: String,
        #[source]
        source: CoreError,
    },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("synthetic data: {0}")]
    Synth(String),
}

impl DataError {
    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        DataError::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: &Path, e: impl fmt::Display) -> Self {
        DataError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub id: String,
    pub reason: String,
}

/// Output of a dataset adapter.
#[derive(Debug, Clone, Default)]
pub struct LoadOutput {
    pub instances: Vec<MultiChoiceInstance>,
    pub bundles: BTreeMap<String, GuidanceBundle>,
    pub skipped: Vec<SkippedRecord>,
}

impl LoadOutput {
    pub(crate) fn skip(&mut self, id: impl Into<String>, reason: impl Into<String>) {
        self.skipped.push(SkippedRecord {
            id: id.into(),
            reason: reason.into(),
        });
    }
}

/// Input layout selector for `--adapter`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Adapter {
    /// Canonical instance JSONL.
    Canonical,
    Aokvqa,
    Scienceqa,
    Vsr,
    Iconqa,
}

impl FromStr for Adapter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "canonical" | "jsonl" => Ok(Adapter::Canonical),
            "aokvqa" | "a-okvqa" => Ok(Adapter::Aokvqa),
            "scienceqa" => Ok(Adapter::Scienceqa),
            "vsr" => Ok(Adapter::Vsr),
            "iconqa" => Ok(Adapter::Iconqa),
            other => Err(format!("unknown adapter {other:?}")),
        }
    }
}

/// Loads `path` with the given adapter.
pub fn load(adapter: Adapter, path: &Path) -> Result<LoadOutput, DataError> {
    match adapter {
        Adapter::Canonical => {
            let instances = read_instances_jsonl(path).map_err(|e| match e {
                CoreError::Io { path, source } => DataError::Io {
                    path,
                    message: source.to_string(),
                },
                other => DataError::Invalid {
                    id: path.display().to_string(),
                    source: other,
                },
            })?;
            Ok(LoadOutput {
                instances,
                ..LoadOutput::default()
            })
        }
        Adapter::Aokvqa => load_aokvqa(path, true),
        Adapter::Scienceqa => load_scienceqa(path),
        Adapter::Vsr => load_vsr(path),
        Adapter::Iconqa => load_iconqa(path),
    }
}

pub(crate) fn read_json(path: &Path) -> Result<serde_json::Value, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| DataError::schema(path.display().to_string(), e.to_string()))
}

/// Coarse question category used for per-type accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuestionType {
    What,
    Which,
    Why,
    How,
    Where,
    Other,
}

impl QuestionType {
    pub const ALL: [QuestionType; 6] = [
        QuestionType::What,
        QuestionType::Which,
        QuestionType::Why,
        QuestionType::How,
        QuestionType::Where,
        QuestionType::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            QuestionType::What => "what",
            QuestionType::Which => "which",
            QuestionType::Why => "why",
            QuestionType::How => "how",
            QuestionType::Where => "where",
            QuestionType::Other => "other",
        }
    }
}

impl fmt::Display for QuestionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Classifies by the leading letters of the first token, case-insensitively.
/// "At what time ..." is `Other`.
pub fn question_type(question: &str) -> QuestionType {
    let first = question.split_whitespace().next().unwrap_or("");
    let word: String = first
        .chars()
        .take_while(|c| c.is_alphabetic())
        .flat_map(char::to_lowercase)
        .collect();
    match word.as_str() {
        "what" => QuestionType::What,
        "which" => QuestionType::Which,
        "why" => QuestionType::Why,
        "how" => QuestionType::How,
        "where" => QuestionType::Where,
        _ => QuestionType::Other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn question_types() {
        assert_eq!(question_type("What is the man holding?"), QuestionType::What);
        assert_eq!(question_type("At what time of day are they skating?"), QuestionType::Other);
        assert_eq!(question_type("WHERE is the cat?"), QuestionType::Where);
        assert_eq!(question_type("What's on the table?"), QuestionType::What);
        assert_eq!(question_type("  how many dogs"), QuestionType::How);
        assert_eq!(question_type("Whatever"), QuestionType::Other);
        assert_eq!(question_type(""), QuestionType::Other);
    }

    proptest! {
        #[test]
        fn question_type_is_total_and_stable(q in "\\PC{0,40}") {
            let t = question_type(&q);
            prop_assert!(QuestionType::ALL.contains(&t));
            prop_assert_eq!(t, question_type(&q));
        }
    }
}
