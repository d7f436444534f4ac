//! VSR: JSONL of `{image, caption, label}` with a boolean or 0/1 label.
//! Each caption becomes a two-choice question with choices `[true, false]`.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde_json::Value;

use super::{DataError, LoadOutput};
use crate::types::{Dataset, Difficulty, MultiChoiceInstance};

pub const VSR_CHOICES: [&str; 2] = ["true", "false"];
pub const VSR_QUESTION_PREFIX: &str = "Is this statement true or false?";

pub fn load_vsr(path: &Path) -> Result<LoadOutput, DataError> {
    let reader = BufReader::new(File::open(path).map_err(|e| DataError::io(path, e))?);
    let mut out = LoadOutput::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DataError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let at = |field: &str| format!("line {}.{field}", i + 1);
        let rec: Value = serde_json::from_str(&line).map_err(|e| DataError::schema(at("$"), e.to_string()))?;
        let image = rec
            .get("image")
            .or_else(|| rec.get("image_link"))
            .and_then(Value::as_str)
            .ok_or_else(|| DataError::schema(at("image"), "missing or not a string"))?;
        let caption = rec
            .get("caption")
            .and_then(Value::as_str)
            .ok_or_else(|| DataError::schema(at("caption"), "missing or not a string"))?;
        let label = match rec.get("label") {
            Some(Value::Bool(b)) => *b,
            Some(Value::Number(n)) if n.as_u64() == Some(1) => true,
            Some(Value::Number(n)) if n.as_u64() == Some(0) => false,
            Some(_) => return Err(DataError::schema(at("label"), "expected boolean or 0/1")),
            None => return Err(DataError::schema(at("label"), "missing")),
        };
        let id = format!("vsr-{}", i + 1);
        let inst = MultiChoiceInstance::new(
            id.clone(),
            format!("vsr/{image}"),
            format!("{VSR_QUESTION_PREFIX} {caption}"),
            VSR_CHOICES.iter().map(|c| c.to_string()).collect(),
            if label { 0 } else { 1 },
            Difficulty::Unspecified,
            Dataset::Vsr,
        )
        .map_err(|source| DataError::Invalid { id, source })?;
        out.instances.push(inst);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load_str(text: &str) -> Result<LoadOutput, DataError> {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vsr.jsonl");
        std::fs::write(&p, text).unwrap();
        load_vsr(&p)
    }

    #[test]
    fn labels_map_to_fixed_order() {
        let out = load_str(concat!(
            r#"{"image": "000000085637.jpg", "caption": "The cat is on the bench.", "label": 1}"#,
            "\n",
            r#"{"image": "000000085638.jpg", "caption": "The dog is under the car.", "label": false}"#,
            "\n"
        ))
        .unwrap();
        assert_eq!(out.instances[0].gold_index, 0);
        assert_eq!(out.instances[1].gold_index, 1);
        assert_eq!(out.instances[0].choices, ["true", "false"]);
        assert_eq!(
            out.instances[0].question,
            "Is this statement true or false? The cat is on the bench."
        );
    }

    #[test]
    fn missing_label() {
        let err = load_str(r#"{"image": "a.jpg", "caption": "x"}"#).unwrap_err();
        assert!(matches!(err, DataError::Schema { .. }));
    }
}
