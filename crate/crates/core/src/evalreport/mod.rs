//! Accuracy reports sliced by difficulty and question type, mode
//! comparisons and run averaging.

mod reference;
mod render;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use reference::{PaperReference, ReferenceRow, ReferenceTable};
pub use render::{comparison_csv, render_comparison, render_report, report_csv};

use crate::data::QuestionType;
use crate::scoring::PredictionRecord;
use crate::types::Difficulty;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no predictions to evaluate")]
    EmptyPredictions,
    #[error("instance id sets differ between {left} and {right}: {only_left} only in the first, {only_right} only in the second")]
    IdSetMismatch {
        left: String,
        right: String,
        only_left: usize,
        only_right: usize,
    },
    #[error("reports have different slices: {0}")]
    SliceMismatch(String),
    #[error("comparison needs at least two reports, got {0}")]
    TooFewReports(usize),
    #[error("baseline {0:?} is not among the compared reports")]
    UnknownBaseline(String),
    #[error("unknown paper reference table {0:?}")]
    UnknownReference(String),
    #[error("reference file: {0}")]
    Reference(String),
}

/// Per-prediction input to [`accuracy`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub id: String,
    pub predicted_index: usize,
    pub gold_index: usize,
    pub difficulty: Difficulty,
    pub question_type: QuestionType,
}

impl From<&PredictionRecord> for Outcome {
    fn from(r: &PredictionRecord) -> Self {
        Self {
            id: r.id.clone(),
            predicted_index: r.predicted_index,
            gold_index: r.gold_index,
            difficulty: r.difficulty,
            question_type: r.question_type,
        }
    }
}

/// Accuracy of one slice. `min`/`max` span the runs that were averaged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceStats {
    pub total: usize,
    pub accuracy: f64,
    pub min: f64,
    pub max: f64,
    pub runs: usize,
}

impl SliceStats {
    fn single(correct: usize, total: usize) -> Self {
        let accuracy = correct as f64 / total as f64 * 100.0;
        Self {
            total,
            accuracy,
            min: accuracy,
            max: accuracy,
            runs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: SliceStats,
    /// Slices without members are absent.
    pub by_difficulty: BTreeMap<Difficulty, SliceStats>,
    pub by_question_type: BTreeMap<QuestionType, SliceStats>,
    /// Correctness per instance id; empty for averaged reports.
    #[serde(default)]
    pub outcomes: BTreeMap<String, bool>,
}

#[derive(Default)]
struct Counter {
    correct: usize,
    total: usize,
}

impl Counter {
    fn add(&mut self, ok: bool) {
        self.total += 1;
        self.correct += ok as usize;
    }
}

pub fn accuracy(outcomes: &[Outcome]) -> Result<EvalReport, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::EmptyPredictions);
    }
    let mut overall = Counter::default();
    let mut by_difficulty: BTreeMap<Difficulty, Counter> = BTreeMap::new();
    let mut by_type: BTreeMap<QuestionType, Counter> = BTreeMap::new();
    let mut per_id = BTreeMap::new();
    for o in outcomes {
        let ok = o.predicted_index == o.gold_index;
        overall.add(ok);
        by_difficulty.entry(o.difficulty).or_default().add(ok);
        by_type.entry(o.question_type).or_default().add(ok);
        per_id.insert(o.id.clone(), ok);
    }
    let finish = |c: &Counter| SliceStats::single(c.correct, c.total);
    Ok(EvalReport {
        overall: finish(&overall),
        by_difficulty: by_difficulty.iter().map(|(k, c)| (*k, finish(c))).collect(),
        by_question_type: by_type.iter().map(|(k, c)| (*k, finish(c))).collect(),
        outcomes: per_id,
    })
}

pub fn report_from_predictions(records: &[PredictionRecord]) -> Result<EvalReport, EvalError> {
    let outcomes: Vec<Outcome> = records.iter().map(Outcome::from).collect();
    accuracy(&outcomes)
}

/// Slice-wise arithmetic mean; `min`/`max` are taken over the run accuracies.
pub fn mean_of_runs(reports: &[EvalReport]) -> Result<EvalReport, EvalError> {
    let first = reports.first().ok_or(EvalError::EmptyPredictions)?;
    if reports.len() == 1 {
        return Ok(first.clone());
    }
    for r in &reports[1..] {
        let keys_d: Vec<_> = r.by_difficulty.keys().collect();
        let keys_q: Vec<_> = r.by_question_type.keys().collect();
        if keys_d != first.by_difficulty.keys().collect::<Vec<_>>() {
            return Err(EvalError::SliceMismatch("difficulty slices differ".into()));
        }
        if keys_q != first.by_question_type.keys().collect::<Vec<_>>() {
            return Err(EvalError::SliceMismatch("question type slices differ".into()));
        }
    }
    let combine = |slices: Vec<&SliceStats>| -> Result<SliceStats, EvalError> {
        let total = slices[0].total;
        if slices.iter().any(|s| s.total != total) {
            return Err(EvalError::SliceMismatch("slice sizes differ between runs".into()));
        }
        let n = slices.len() as f64;
        Ok(SliceStats {
            total,
            accuracy: slices.iter().map(|s| s.accuracy).sum::<f64>() / n,
            min: slices.iter().map(|s| s.min).fold(f64::INFINITY, f64::min),
            max: slices.iter().map(|s| s.max).fold(f64::NEG_INFINITY, f64::max),
            runs: slices.iter().map(|s| s.runs).sum(),
        })
    };
    let overall = combine(reports.iter().map(|r| &r.overall).collect())?;
    let mut by_difficulty = BTreeMap::new();
    for k in first.by_difficulty.keys() {
        by_difficulty.insert(*k, combine(reports.iter().map(|r| &r.by_difficulty[k]).collect())?);
    }
    let mut by_question_type = BTreeMap::new();
    for k in first.by_question_type.keys() {
        by_question_type.insert(*k, combine(reports.iter().map(|r| &r.by_question_type[k]).collect())?);
    }
    Ok(EvalReport {
        overall,
        by_difficulty,
        by_question_type,
        outcomes: BTreeMap::new(),
    })
}

/// One compared mode, relative to the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeDelta {
    pub mode: String,
    pub overall: f64,
    pub overall_delta: f64,
    pub by_difficulty: BTreeMap<Difficulty, f64>,
    pub by_question_type: BTreeMap<QuestionType, f64>,
    /// Instances wrong under the baseline and right under this mode.
    pub fixed: Vec<String>,
    /// Instances right under the baseline and wrong under this mode.
    pub broken: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeComparison {
    pub baseline: String,
    pub baseline_overall: f64,
    pub rows: Vec<ModeDelta>,
}

fn slice_deltas<K: Ord + Copy>(a: &BTreeMap<K, SliceStats>, b: &BTreeMap<K, SliceStats>) -> BTreeMap<K, f64> {
    a.iter()
        .filter_map(|(k, s)| b.get(k).map(|t| (*k, s.accuracy - t.accuracy)))
        .collect()
}

pub fn compare_modes(reports: &BTreeMap<String, EvalReport>, baseline: &str) -> Result<ModeComparison, EvalError> {
    if reports.len() < 2 {
        return Err(EvalError::TooFewReports(reports.len()));
    }
    let base = reports
        .get(baseline)
        .ok_or_else(|| EvalError::UnknownBaseline(baseline.to_string()))?;
    let base_ids: BTreeSet<&String> = base.outcomes.keys().collect();
    let mut rows = Vec::new();
    for (mode, report) in reports {
        if mode == baseline {
            continue;
        }
        let ids: BTreeSet<&String> = report.outcomes.keys().collect();
        if ids != base_ids {
            return Err(EvalError::IdSetMismatch {
                left: baseline.to_string(),
                right: mode.clone(),
                only_left: base_ids.difference(&ids).count(),
                only_right: ids.difference(&base_ids).count(),
            });
        }
        let mut fixed = Vec::new();
        let mut broken = Vec::new();
        for (id, &ok) in &report.outcomes {
            match (base.outcomes[id], ok) {
                (false, true) => fixed.push(id.clone()),
                (true, false) => broken.push(id.clone()),
                _ => {}
            }
        }
        rows.push(ModeDelta {
            mode: mode.clone(),
            overall: report.overall.accuracy,
            overall_delta: report.overall.accuracy - base.overall.accuracy,
            by_difficulty: slice_deltas(&report.by_difficulty, &base.by_difficulty),
            by_question_type: slice_deltas(&report.by_question_type, &base.by_question_type),
            fixed,
            broken,
        });
    }
    Ok(ModeComparison {
        baseline: baseline.to_string(),
        baseline_overall: base.overall.accuracy,
        rows,
    })
}
