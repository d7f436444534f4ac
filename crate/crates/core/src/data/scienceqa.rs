//! ScienceQA: a JSON object keyed by problem id. Each record has `question`,
//! `choices`, `answer`, `image` (null when there is no image context),
//! optional `lecture` and `split`.

use std::path::Path;

use serde_json::Value;

use super::{read_json, DataError, LoadOutput};
use crate::types::{sanitize_guidance, Dataset, Difficulty, GuidanceBundle, GuidanceKind, MultiChoiceInstance};

pub fn load_scienceqa(path: &Path) -> Result<LoadOutput, DataError> {
    let root = read_json(path)?;
    let records = root
        .as_object()
        .ok_or_else(|| DataError::schema("$", "expected an object keyed by problem id"))?;
    let mut out = LoadOutput::default();
    for (pid, rec) in records {
        let at = |field: &str| format!("{pid}.{field}");
        let image = match rec.get("image") {
            Some(Value::String(s)) if !s.trim().is_empty() => s.as_str(),
            Some(Value::String(_)) | Some(Value::Null) | None => {
                out.skip(pid, "no image context");
                continue;
            }
            Some(_) => return Err(DataError::schema(at("image"), "expected a string or null")),
        };
        let question = rec
            .get("question")
            .and_then(Value::as_str)
            .ok_or_else(|| DataError::schema(at("question"), "missing or not a string"))?;
        let choices = string_list(rec, "choices", &at)?;
        let answer = rec
            .get("answer")
            .and_then(Value::as_u64)
            .ok_or_else(|| DataError::schema(at("answer"), "missing or not an integer"))?;
        let split = rec.get("split").and_then(Value::as_str).unwrap_or("all");
        let inst = MultiChoiceInstance::new(
            pid.clone(),
            format!("scienceqa/{split}/{pid}/{image}"),
            question,
            choices,
            answer as usize,
            Difficulty::Unspecified,
            Dataset::Scienceqa,
        )
        .map_err(|source| DataError::Invalid { id: pid.clone(), source })?;
        if let Some(lecture) = rec.get("lecture").and_then(Value::as_str) {
            let lecture = sanitize_guidance(lecture);
            if !lecture.is_empty() {
                let bundle = GuidanceBundle::new(pid)
                    .with(GuidanceKind::Lecture, lecture)
                    .map_err(|source| DataError::Invalid { id: pid.clone(), source })?;
                out.bundles.insert(pid.clone(), bundle);
            }
        }
        out.instances.push(inst);
    }
    Ok(out)
}

pub(crate) fn string_list(rec: &Value, field: &str, at: &dyn Fn(&str) -> String) -> Result<Vec<String>, DataError> {
    rec.get(field)
        .and_then(Value::as_array)
        .ok_or_else(|| DataError::schema(at(field), "missing or not an array"))?
        .iter()
        .enumerate()
        .map(|(j, c)| {
            c.as_str()
                .map(str::to_string)
                .ok_or_else(|| DataError::schema(at(&format!("{field}[{j}]")), "not a string"))
        })
        .collect()
}
