//! A-OKVQA: a JSON array of records with `question_id`, `image_id`,
//! `question`, `choices` (exactly four), `correct_choice_idx`,
//! `difficult_direct_answer` and `rationales`.

use std::path::Path;

use serde_json::Value;

use super::{read_json, DataError, LoadOutput};
use crate::types::{sanitize_guidance, CoreError, Dataset, Difficulty, GuidanceBundle, GuidanceKind, MultiChoiceInstance};

const CHOICES: usize = 4;

/// Loads A-OKVQA. With `attach_rationales`, the annotated rationales are
/// joined into a `rationale` guidance entry per instance.
pub fn load_aokvqa(path: &Path, attach_rationales: bool) -> Result<LoadOutput, DataError> {
    let root = read_json(path)?;
    let records = root
        .as_array()
        .ok_or_else(|| DataError::schema("$", "expected a JSON array of records"))?;
    let mut out = LoadOutput::default();
    for (i, rec) in records.iter().enumerate() {
        let at = |field: &str| format!("[{i}].{field}");
        let id = rec
            .get("question_id")
            .and_then(Value::as_str)
            .ok_or_else(|| DataError::schema(at("question_id"), "missing or not a string"))?
            .to_string();
        let question = rec
            .get("question")
            .and_then(Value::as_str)
            .ok_or_else(|| DataError::schema(at("question"), "missing or not a string"))?;
        let image_id = rec
            .get("image_id")
            .and_then(Value::as_u64)
            .ok_or_else(|| DataError::schema(at("image_id"), "missing or not an integer"))?;
        let choices: Vec<String> = rec
            .get("choices")
            .and_then(Value::as_array)
            .ok_or_else(|| DataError::schema(at("choices"), "missing or not an array"))?
            .iter()
            .enumerate()
            .map(|(j, c)| {
                c.as_str()
                    .map(str::to_string)
                    .ok_or_else(|| DataError::schema(at(&format!("choices[{j}]")), "not a string"))
            })
            .collect::<Result<_, _>>()?;
        if choices.len() != CHOICES {
            return Err(DataError::Invalid {
                id: id.clone(),
                source: CoreError::ChoiceCount {
                    id,
                    count: choices.len(),
                },
            });
        }
        let gold = rec
            .get("correct_choice_idx")
            .and_then(Value::as_u64)
            .ok_or_else(|| DataError::schema(at("correct_choice_idx"), "missing or not an integer"))?;
        let difficulty = match rec.get("difficult_direct_answer") {
            Some(Value::Bool(true)) => Difficulty::Hard,
            Some(Value::Bool(false)) => Difficulty::Easy,
            None | Some(Value::Null) => Difficulty::Unspecified,
            Some(_) => return Err(DataError::schema(at("difficult_direct_answer"), "expected a boolean")),
        };
        let image_ref = format!("coco/{image_id:012}.jpg");
        let inst = MultiChoiceInstance::new(
            id.clone(),
            image_ref,
            question,
            choices,
            gold as usize,
            difficulty,
            Dataset::Aokvqa,
        )
        .map_err(|source| DataError::Invalid { id: id.clone(), source })?;

        if attach_rationales {
            if let Some(rationales) = rec.get("rationales").and_then(Value::as_array) {
                let joined = rationales
                    .iter()
                    .filter_map(Value::as_str)
                    .map(sanitize_guidance)
                    .filter(|r| !r.is_empty())
                    .collect::<Vec<_>>()
                    .join(" ");
                if !joined.is_empty() {
                    let bundle = GuidanceBundle::new(&id)
                        .with(GuidanceKind::Rationale, joined)
                        .map_err(|source| DataError::Invalid { id: id.clone(), source })?;
                    out.bundles.insert(id.clone(), bundle);
                }
            }
        }
        out.instances.push(inst);
    }
    Ok(out)
}
