//! IconQA multi-text-choice subtask: a JSON object keyed by problem id with
//! `question`, `choices`, `answer`, `ques_type` and optional `image`.
//! Records of other question types are skipped.

use std::path::Path;

use serde_json::Value;

use super::scienceqa::string_list;
use super::{read_json, DataError, LoadOutput};
use crate::types::{Dataset, Difficulty, MultiChoiceInstance};

const TEXT_CHOICE: &str = "choose_txt";

pub fn load_iconqa(path: &Path) -> Result<LoadOutput, DataError> {
    let root = read_json(path)?;
    let records = root
        .as_object()
        .ok_or_else(|| DataError::schema("$", "expected an object keyed by problem id"))?;
    let mut out = LoadOutput::default();
    for (pid, rec) in records {
        let at = |field: &str| format!("{pid}.{field}");
        let kind = rec
            .get("ques_type")
            .and_then(Value::as_str)
            .ok_or_else(|| DataError::schema(at("ques_type"), "missing or not a string"))?;
        if kind != TEXT_CHOICE {
            out.skip(pid, format!("unsupported question type {kind}"));
            continue;
        }
        let question = rec
            .get("question")
            .and_then(Value::as_str)
            .ok_or_else(|| DataError::schema(at("question"), "missing or not a string"))?;
        let choices = string_list(rec, "choices", &at)?;
        let answer = rec
            .get("answer")
            .and_then(Value::as_u64)
            .ok_or_else(|| DataError::schema(at("answer"), "missing or not an integer"))?;
        let image = rec.get("image").and_then(Value::as_str).unwrap_or("image.png");
        let inst = MultiChoiceInstance::new(
            pid.clone(),
            format!("iconqa/{pid}/{image}"),
            question,
            choices,
            answer as usize,
            Difficulty::Unspecified,
            Dataset::Iconqa,
        )
        .map_err(|source| DataError::Invalid { id: pid.clone(), source })?;
        out.instances.push(inst);
    }
    Ok(out)
}
