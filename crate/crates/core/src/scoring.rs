//! Per-instance scoring: prompt assembly, raw choice scores, prediction.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{
    dual_match, fusion_match, fusion_merged_match, BackendError, BackendKind, BackendRef, MatchRoute,
};
use crate::guidance::combine;
use crate::data::{question_type, QuestionType};
use crate::types::{ChoiceScores, CoreError, Difficulty, GuidanceBundle, GuidanceKind, MultiChoiceInstance};

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("prompt field {0} is empty")]
    EmptyField(&'static str),
    #[error("mode {mode} requires guidance for instance {id:?}")]
    MissingGuidance { mode: ScoringMode, id: String },
    #[error("mode {mode} is not supported by a {backend} backend")]
    ModeBackendMismatch { mode: ScoringMode, backend: BackendKind },
    #[error("all choices are masked")]
    AllMasked,
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoringMode {
    ZeroShot,
    Unguided,
    GuidedConcat,
    GuidedMerge,
}

impl ScoringMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoringMode::ZeroShot => "zero_shot",
            ScoringMode::Unguided => "unguided",
            ScoringMode::GuidedConcat => "guided_concat",
            ScoringMode::GuidedMerge => "guided_merge",
        }
    }

    pub fn is_guided(self) -> bool {
        matches!(self, ScoringMode::GuidedConcat | ScoringMode::GuidedMerge)
    }
}

impl fmt::Display for ScoringMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoringMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('-', "_").as_str() {
            "zero_shot" => Ok(ScoringMode::ZeroShot),
            "unguided" => Ok(ScoringMode::Unguided),
            "guided_concat" => Ok(ScoringMode::GuidedConcat),
            "guided_merge" => Ok(ScoringMode::GuidedMerge),
            other => Err(format!(
                "unknown mode {other:?} (expected zero_shot, unguided, guided_concat or guided_merge)"
            )),
        }
    }
}

/// The text scored for one choice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptAssembly {
    pub question: String,
    pub choice: String,
    pub guidance: Option<String>,
    pub rendered: String,
}

/// Joins question, choice and optional guidance with single spaces. Empty
/// guidance is treated as absent.
pub fn assemble_prompt(question: &str, choice: &str, guidance: Option<&str>) -> Result<PromptAssembly, ScoringError> {
    if question.trim().is_empty() {
        return Err(ScoringError::EmptyField("question"));
    }
    if choice.trim().is_empty() {
        return Err(ScoringError::EmptyField("choice"));
    }
    let guidance = guidance.filter(|g| !g.is_empty()).map(str::to_string);
    let rendered = match &guidance {
        Some(g) => format!("{question} {choice} {g}"),
        None => format!("{question} {choice}"),
    };
    Ok(PromptAssembly {
        question: question.to_string(),
        choice: choice.to_string(),
        guidance,
        rendered,
    })
}

/// Unguided and (when the mode uses it) guided text for one choice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChoiceText {
    pub unguided: String,
    pub guided: Option<String>,
}

impl ChoiceText {
    /// The differentiable route a backend scores for this choice.
    pub fn route(&self, mode: ScoringMode) -> MatchRoute<'_> {
        match (mode, &self.guided) {
            (ScoringMode::GuidedMerge, Some(g)) => MatchRoute::Merged {
                unguided: &self.unguided,
                guided: g,
            },
            (ScoringMode::GuidedConcat, Some(g)) => MatchRoute::Single(g),
            _ => MatchRoute::Single(&self.unguided),
        }
    }
}

pub fn check_mode(kind: BackendKind, has_guided_head: bool, mode: ScoringMode) -> Result<(), ScoringError> {
    if mode == ScoringMode::GuidedMerge && (kind != BackendKind::Fusion || !has_guided_head) {
        return Err(ScoringError::ModeBackendMismatch { mode, backend: kind });
    }
    Ok(())
}

/// Builds the per-choice texts for `mode`.
pub fn choice_texts(
    instance: &MultiChoiceInstance,
    guidance: Option<&str>,
    mode: ScoringMode,
) -> Result<Vec<ChoiceText>, ScoringError> {
    let guidance = if mode.is_guided() {
        Some(guidance.ok_or_else(|| ScoringError::MissingGuidance {
            mode,
            id: instance.id.clone(),
        })?)
    } else {
        None
    };
    instance
        .choices
        .iter()
        .map(|choice| {
            let unguided = assemble_prompt(&instance.question, choice, None)?.rendered;
            let guided = match guidance {
                Some(g) => Some(assemble_prompt(&instance.question, choice, Some(g))?.rendered),
                None => None,
            };
            Ok(ChoiceText { unguided, guided })
        })
        .collect()
}

/// Raw and softmax-normalized scores of every choice of `instance`.
///
/// `guidance` is the combined guidance string; guided modes require it
/// (an empty string degenerates to unguided text).
pub fn score_instance(
    backend: BackendRef<'_>,
    instance: &MultiChoiceInstance,
    guidance: Option<&str>,
    mode: ScoringMode,
) -> Result<ChoiceScores, ScoringError> {
    let has_head = match backend {
        BackendRef::Dual(_) => false,
        BackendRef::Fusion(f) => f.has_guided_head(),
    };
    check_mode(backend.kind(), has_head, mode)?;
    let texts = choice_texts(instance, guidance, mode)?;
    let image_ref = instance.image_ref.as_str();
    let raw = texts
        .iter()
        .map(|t| match (backend, t.route(mode)) {
            (BackendRef::Dual(b), MatchRoute::Single(text)) => dual_match(b, image_ref, text),
            (BackendRef::Fusion(b), MatchRoute::Single(text)) => fusion_match(b, image_ref, text),
            (BackendRef::Fusion(b), MatchRoute::Merged { unguided, guided }) => {
                fusion_merged_match(b, image_ref, unguided, guided)
            }
            (BackendRef::Dual(_), MatchRoute::Merged { .. }) => Err(BackendError::NoGuidedHead),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ChoiceScores::from_raw(raw)?)
}

/// Argmax of raw scores over valid choices; ties go to the lowest index.
pub fn predict(scores: &ChoiceScores) -> Result<usize, ScoringError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &s) in scores.raw().iter().enumerate() {
        if !scores.is_valid(i) {
            continue;
        }
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i).ok_or(ScoringError::AllMasked)
}

/// Combined guidance for one instance, or `None` when the bundle is absent
/// or holds none of `kinds`.
pub fn guidance_text(bundle: Option<&GuidanceBundle>, kinds: &[GuidanceKind]) -> Option<String> {
    bundle.and_then(|b| combine(b, kinds).ok()).map(|c| c.text)
}

/// Scores and predicts every instance. `guidance[i]` pairs with `instances[i]`.
pub fn score_dataset(
    backend: BackendRef<'_>,
    instances: &[MultiChoiceInstance],
    guidance: &[Option<String>],
    mode: ScoringMode,
) -> Result<Vec<PredictionRecord>, ScoringError> {
    instances
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            let g = guidance.get(i).and_then(|g| g.as_deref());
            let scores = score_instance(backend, inst, g, mode)?;
            PredictionRecord::new(inst, mode, &scores)
        })
        .collect()
}

/// One line of a prediction dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub mode: ScoringMode,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    pub predicted_index: usize,
    pub gold_index: usize,
    #[serde(default)]
    pub difficulty: Difficulty,
    pub question_type: QuestionType,
}

impl PredictionRecord {
    pub fn new(instance: &MultiChoiceInstance, mode: ScoringMode, scores: &ChoiceScores) -> Result<Self, ScoringError> {
        Ok(Self {
            id: instance.id.clone(),
            mode,
            raw: scores.raw().to_vec(),
            normalized: scores.normalized().to_vec(),
            predicted_index: predict(scores)?,
            gold_index: instance.gold_index,
            difficulty: instance.difficulty,
            question_type: question_type(&instance.question),
        })
    }

    pub fn is_correct(&self) -> bool {
        self.predicted_index == self.gold_index
    }
}

pub fn write_predictions(path: &Path, records: &[PredictionRecord]) -> Result<(), ScoringError> {
    let err = |e: &dyn fmt::Display| ScoringError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let mut w = BufWriter::new(File::create(path).map_err(|e| err(&e))?);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| err(&e))?;
        writeln!(w, "{line}").map_err(|e| err(&e))?;
    }
    w.flush().map_err(|e| err(&e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRecord>, ScoringError> {
    let err = |e: &dyn fmt::Display| ScoringError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    let reader = BufReader::new(File::open(path).map_err(|e| err(&e))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| err(&e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| err(&format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}
