//! Published accuracy tables, kept as strings so they render exactly as
//! reported. These are reference rows for comparison only.

use std::collections::BTreeMap;
use std::fmt::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;

const EMBEDDED: &str = include_str!("../../data/paper_reference.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub label: String,
    /// `None` where the table has no entry.
    pub values: Vec<Option<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTable {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<ReferenceRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperReference {
    pub source: String,
    pub tables: BTreeMap<String, ReferenceTable>,
}

impl PaperReference {
    pub fn embedded() -> Self {
        Self::parse(EMBEDDED).expect("embedded reference file is valid")
    }

    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::Reference(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn parse(text: &str) -> Result<Self, EvalError> {
        let r: PaperReference = serde_json::from_str(text).map_err(|e| EvalError::Reference(e.to_string()))?;
        for (key, t) in &r.tables {
            if let Some(row) = t.rows.iter().find(|row| row.values.len() != t.columns.len()) {
                return Err(EvalError::Reference(format!(
                    "table {key}: row {:?} has {} values for {} columns",
                    row.label,
                    row.values.len(),
                    t.columns.len()
                )));
            }
        }
        Ok(r)
    }

    /// Accepts table keys and dataset names (`scienceqa`, `vsr` and `iconqa`
    /// share one table).
    pub fn table(&self, name: &str) -> Result<(&str, &ReferenceTable), EvalError> {
        let key = match name.to_ascii_lowercase().replace('-', "_").as_str() {
            "aokvqa" | "a_okvqa" => "aokvqa".to_string(),
            "scienceqa" | "vsr" | "iconqa" | "other" => "other".to_string(),
            "question_types" | "question_type" | "qtype" => "question_types".to_string(),
            other => other.to_string(),
        };
        self.tables
            .get_key_value(&key)
            .map(|(k, t)| (k.as_str(), t))
            .ok_or_else(|| EvalError::UnknownReference(name.to_string()))
    }

    pub fn render(&self, name: &str) -> Result<String, EvalError> {
        let (_, table) = self.table(name)?;
        Ok(table.render(&self.source))
    }
}

impl ReferenceTable {
    pub fn value(&self, row: &str, column: &str) -> Option<&str> {
        let c = self.columns.iter().position(|x| x == column)?;
        self.rows.iter().find(|r| r.label == row)?.values[c].as_deref()
    }

    /// `to - from` in percentage points, from the stored strings.
    pub fn delta(&self, from: &str, to: &str, column: &str) -> Option<f64> {
        let a: f64 = self.value(from, column)?.parse().ok()?;
        let b: f64 = self.value(to, column)?.parse().ok()?;
        Some(b - a)
    }

    pub fn render(&self, source: &str) -> String {
        let label_w = self.rows.iter().map(|r| r.label.len()).max().unwrap_or(0).max(4);
        let widths: Vec<usize> = self
            .columns
            .iter()
            .enumerate()
            .map(|(i, c)| {
                self.rows
                    .iter()
                    .map(|r| r.values[i].as_deref().unwrap_or("-").len())
                    .max()
                    .unwrap_or(0)
                    .max(c.len())
            })
            .collect();
        let mut out = String::new();
        let _ = writeln!(out, "[paper reference] {} ({source})", self.title);
        let _ = write!(out, "{:<label_w$}", "mode");
        for (c, w) in self.columns.iter().zip(&widths) {
            let _ = write!(out, "  {c:>w$}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{:<label_w$}", r.label);
            for (v, w) in r.values.iter().zip(&widths) {
                let _ = write!(out, "  {:>w$}", v.as_deref().unwrap_or("-"));
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_and_blip_rows() {
        let r = PaperReference::embedded();
        let (_, t) = r.table("aokvqa").unwrap();
        assert_eq!(t.value("Zero-Shot", "CLIP Overall"), Some("58.52"));
        assert_eq!(t.value("No Guidance", "CLIP Overall"), Some("68.30"));
        assert_eq!(t.value("All", "CLIP Overall"), Some("75.98"));
        assert_eq!(t.value("Zero-Shot", "BLIP-2 Overall"), Some("64.98"));
        assert_eq!(t.value("No Guidance", "BLIP-2 Overall"), Some("75.02"));
        assert_eq!(t.value("All", "BLIP-2 Overall"), Some("79.83"));
        let d = t.delta("No Guidance", "All", "CLIP Overall").unwrap();
        assert_eq!(format!("{d:+.2}"), "+7.68");
        let d = t.delta("No Guidance", "All", "BLIP-2 Overall").unwrap();
        assert_eq!(format!("{d:+.2}"), "+4.81");
    }

    #[test]
    fn lecture_only_for_scienceqa() {
        let r = PaperReference::embedded();
        let (key, t) = r.table("vsr").unwrap();
        assert_eq!(key, "other");
        assert_eq!(t.value("Lecture", "VSR CLIP"), None);
        assert_eq!(t.value("CSOL", "ScienceQA BLIP-2"), Some("86.56"));
        assert!(r.render("vsr").unwrap().contains(" -"));
    }

    #[test]
    fn question_type_values_are_verbatim() {
        let r = PaperReference::embedded();
        let text = r.render("question-types").unwrap();
        assert!(text.contains("66.0"));
        assert!(text.contains("90.16"));
        assert!(matches!(r.table("coco"), Err(EvalError::UnknownReference(_))));
    }
}
