use serde::{Deserialize, Serialize};

use super::GuidanceError;

const COUNT_WORDS: [&str; 20] = [
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
    "thirteen", "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen", "twenty",
];

const IRREGULAR: [(&str, &str); 4] = [
    ("person", "people"),
    ("child", "children"),
    ("man", "men"),
    ("woman", "women"),
];

/// Detected object labels; repeated labels are repeated detections.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DetectionSet {
    pub labels: Vec<String>,
}

impl DetectionSet {
    pub fn new<S: AsRef<str>>(labels: &[S]) -> Self {
        Self {
            labels: labels
                .iter()
                .map(|l| l.as_ref().trim().to_string())
                .filter(|l| !l.is_empty())
                .collect(),
        }
    }

    /// `(label, count)` in order of first appearance.
    pub fn counts(&self) -> Vec<(String, usize)> {
        let mut out: Vec<(String, usize)> = Vec::new();
        for label in &self.labels {
            match out.iter_mut().find(|(l, _)| l == label) {
                Some((_, n)) => *n += 1,
                None => out.push((label.clone(), 1)),
            }
        }
        out
    }
}

/// English word for 1..=20, digits otherwise.
pub fn count_word(n: usize) -> String {
    match n {
        1..=20 => COUNT_WORDS[n - 1].to_string(),
        _ => n.to_string(),
    }
}

fn parse_count(word: &str) -> Option<usize> {
    COUNT_WORDS
        .iter()
        .position(|w| *w == word)
        .map(|i| i + 1)
        .or_else(|| word.parse().ok())
}

/// Pluralizes the last word of `label` when `count > 1`.
pub fn pluralize(label: &str, count: usize) -> String {
    if count <= 1 {
        return label.to_string();
    }
    let (head, last) = match label.rfind(' ') {
        Some(i) => label.split_at(i + 1),
        None => ("", label),
    };
    if let Some((_, plural)) = IRREGULAR.iter().find(|(s, _)| *s == last) {
        return format!("{head}{plural}");
    }
    let es = ["s", "x", "z", "sh", "ch"].iter().any(|suffix| last.ends_with(suffix));
    format!("{label}{}", if es { "es" } else { "s" })
}

fn singularize(word: &str) -> String {
    let (head, last) = match word.rfind(' ') {
        Some(i) => word.split_at(i + 1),
        None => ("", word),
    };
    if let Some((single, _)) = IRREGULAR.iter().find(|(_, p)| *p == last) {
        return format!("{head}{single}");
    }
    if let Some(stem) = last.strip_suffix("es") {
        if ["sh", "ch", "x", "z", "ss", "us"].iter().any(|s| stem.ends_with(s)) {
            return format!("{head}{stem}");
        }
    }
    match last.strip_suffix('s') {
        Some(stem) if !stem.is_empty() => format!("{head}{stem}"),
        _ => word.to_string(),
    }
}

/// `"two dogs, one girl, three toys"` style aggregation.
pub fn serialize_objects(det: &DetectionSet) -> Result<String, GuidanceError> {
    let counts = det.counts();
    if counts.is_empty() {
        return Err(GuidanceError::EmptyDetection);
    }
    Ok(counts
        .iter()
        .map(|(label, n)| format!("{} {}", count_word(*n), pluralize(label, *n)))
        .collect::<Vec<_>>()
        .join(", "))
}

/// Inverse of [`serialize_objects`]. Counts are exact; singular labels are
/// recovered heuristically since pluralization is not injective.
pub fn parse_objects(text: &str) -> Result<Vec<(String, usize)>, GuidanceError> {
    text.split(", ")
        .map(|term| {
            let err = || GuidanceError::Parse {
                what: "object term".into(),
                message: format!("{term:?}"),
            };
            let (count, label) = term.split_once(' ').ok_or_else(err)?;
            let count = parse_count(count).ok_or_else(err)?;
            let label = if count > 1 { singularize(label) } else { label.to_string() };
            Ok((label, count))
        })
        .collect()
}
