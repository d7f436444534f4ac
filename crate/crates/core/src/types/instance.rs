use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::CoreError;

pub const MIN_CHOICES: usize = 2;
pub const MAX_CHOICES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Hard,
    #[default]
    Unspecified,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Hard, Difficulty::Unspecified];

    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Hard => "hard",
            Difficulty::Unspecified => "unspecified",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dataset {
    Aokvqa,
    Scienceqa,
    Vsr,
    Iconqa,
    Synthetic,
}

impl Dataset {
    pub fn as_str(self) -> &'static str {
        match self {
            Dataset::Aokvqa => "aokvqa",
            Dataset::Scienceqa => "scienceqa",
            Dataset::Vsr => "vsr",
            Dataset::Iconqa => "iconqa",
            Dataset::Synthetic => "synthetic",
        }
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dataset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "aokvqa" | "a-okvqa" => Ok(Dataset::Aokvqa),
            "scienceqa" => Ok(Dataset::Scienceqa),
            "vsr" => Ok(Dataset::Vsr),
            "iconqa" => Ok(Dataset::Iconqa),
            "synthetic" => Ok(Dataset::Synthetic),
            other => Err(format!("unknown dataset {other:?}")),
        }
    }
}

/// One multi-choice question about one image.
///
/// Construct through [`MultiChoiceInstance::new`] or [`validate_instance`];
/// both enforce the choice-count, gold-index and distinct-choice invariants.
/// Question and choices are stored whitespace-normalized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MultiChoiceInstance {
    pub id: String,
    pub image_ref: String,
    pub question: String,
    pub choices: Vec<String>,
    pub gold_index: usize,
    pub difficulty: Difficulty,
    pub dataset: Dataset,
}

impl MultiChoiceInstance {
    pub fn new(
        id: impl Into<String>,
        image_ref: impl Into<String>,
        question: impl AsRef<str>,
        choices: Vec<String>,
        gold_index: usize,
        difficulty: Difficulty,
        dataset: Dataset,
    ) -> Result<Self, CoreError> {
        let id = id.into();
        let choices: Vec<String> = choices.iter().map(|c| normalize_whitespace(c)).collect();
        check_choices(&id, &choices, gold_index as i64)?;
        let question = normalize_whitespace(question.as_ref());
        if question.is_empty() {
            return Err(schema(&id, "question", "must be non-empty"));
        }
        let image_ref = image_ref.into();
        if image_ref.trim().is_empty() {
            return Err(schema(&id, "image_ref", "must be non-empty"));
        }
        Ok(Self {
            id,
            image_ref,
            question,
            choices,
            gold_index,
            difficulty,
            dataset,
        })
    }

    pub fn n_choices(&self) -> usize {
        self.choices.len()
    }

    pub fn gold_choice(&self) -> &str {
        &self.choices[self.gold_index]
    }
}

impl<'de> Deserialize<'de> for MultiChoiceInstance {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = Value::deserialize(deserializer)?;
        validate_instance(&raw).map_err(serde::de::Error::custom)
    }
}

/// Collapses internal whitespace runs to one space and trims both ends.
pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn schema(id: &str, field: &str, message: &str) -> CoreError {
    CoreError::Schema {
        path: format!("{id}.{field}"),
        message: message.to_string(),
    }
}

fn check_choices(id: &str, choices: &[String], gold_index: i64) -> Result<(), CoreError> {
    let count = choices.len();
    if !(MIN_CHOICES..=MAX_CHOICES).contains(&count) {
        return Err(CoreError::ChoiceCount {
            id: id.to_string(),
            count,
        });
    }
    if gold_index < 0 || gold_index as usize >= count {
        return Err(CoreError::GoldIndex {
            id: id.to_string(),
            index: gold_index,
            count,
        });
    }
    for (i, a) in choices.iter().enumerate() {
        if a.is_empty() {
            return Err(schema(id, &format!("choices[{i}]"), "must be non-empty"));
        }
        for (j, b) in choices.iter().enumerate().skip(i + 1) {
            if a == b {
                return Err(CoreError::DuplicateChoice {
                    id: id.to_string(),
                    first: i,
                    second: j,
                    text: a.clone(),
                });
            }
        }
    }
    Ok(())
}

/// Validates an untyped record in the canonical instance layout.
///
/// Choice count and gold index are checked before the remaining fields, so a
/// record with a bad choice list reports that even when other keys are absent.
pub fn validate_instance(raw: &Value) -> Result<MultiChoiceInstance, CoreError> {
    let obj = raw.as_object().ok_or_else(|| CoreError::Schema {
        path: "$".into(),
        message: "expected a JSON object".into(),
    })?;
    let id = match obj.get("id") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => return Err(schema("?", "id", "expected string")),
        None => "<missing id>".to_string(),
    };

    let choices = match obj.get("choices") {
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, v)| {
                v.as_str()
                    .map(normalize_whitespace)
                    .ok_or_else(|| schema(&id, &format!("choices[{i}]"), "expected string"))
            })
            .collect::<Result<Vec<_>, _>>()?,
        Some(_) => return Err(schema(&id, "choices", "expected array of strings")),
        None => return Err(schema(&id, "choices", "missing")),
    };
    let gold_index = obj
        .get("gold_index")
        .ok_or_else(|| schema(&id, "gold_index", "missing"))?
        .as_i64()
        .ok_or_else(|| schema(&id, "gold_index", "expected integer"))?;
    check_choices(&id, &choices, gold_index)?;

    if !obj.contains_key("id") {
        return Err(schema(&id, "id", "missing"));
    }
    let str_field = |name: &str| -> Result<String, CoreError> {
        obj.get(name)
            .ok_or_else(|| schema(&id, name, "missing"))?
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| schema(&id, name, "expected string"))
    };
    let image_ref = str_field("image_ref")?;
    let question = str_field("question")?;
    let difficulty = match obj.get("difficulty") {
        None | Some(Value::Null) => Difficulty::Unspecified,
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|e| schema(&id, "difficulty", &e.to_string()))?,
    };
    let dataset: Dataset = serde_json::from_value(
        obj.get("dataset")
            .cloned()
            .ok_or_else(|| schema(&id, "dataset", "missing"))?,
    )
    .map_err(|e| schema(&id, "dataset", &e.to_string()))?;

    MultiChoiceInstance::new(
        id,
        image_ref,
        question,
        choices,
        gold_index as usize,
        difficulty,
        dataset,
    )
}

/// Reads the canonical JSONL encoding, one validated instance per line.
pub fn read_instances_jsonl(path: &Path) -> Result<Vec<MultiChoiceInstance>, CoreError> {
    let io_err = |source| CoreError::Io {
        path: path.display().to_string(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| CoreError::Schema {
            path: format!("{}:{}", path.display(), lineno + 1),
            message: e.to_string(),
        })?;
        out.push(validate_instance(&value)?);
    }
    Ok(out)
}

pub fn write_instances_jsonl(path: &Path, instances: &[MultiChoiceInstance]) -> Result<(), CoreError> {
    let io_err = |source| CoreError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    for inst in instances {
        let line = serde_json::to_string(inst).expect("instance serializes");
        writeln!(w, "{line}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}
