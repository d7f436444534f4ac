use serde::{Deserialize, Serialize};

use super::CoreError;

/// Raw matching scores for one instance and their masked softmax.
///
/// Slots with `mask[i] == false` are padding: they are treated as `-inf`
/// before normalization and get probability exactly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceScores {
    raw: Vec<f64>,
    normalized: Vec<f64>,
    mask: Vec<bool>,
}

impl ChoiceScores {
    pub fn from_raw(raw: Vec<f64>) -> Result<Self, CoreError> {
        let mask = vec![true; raw.len()];
        Self::masked(raw, mask)
    }

    pub fn masked(raw: Vec<f64>, mask: Vec<bool>) -> Result<Self, CoreError> {
        if raw.len() != mask.len() {
            return Err(CoreError::Scores(format!(
                "{} scores but {} mask bits",
                raw.len(),
                mask.len()
            )));
        }
        if !mask.iter().any(|&m| m) {
            return Err(CoreError::Scores("every choice is masked".into()));
        }
        if raw.iter().zip(&mask).any(|(r, &m)| m && !r.is_finite()) {
            return Err(CoreError::Scores("non-finite raw score".into()));
        }
        let normalized = masked_softmax(&raw, &mask);
        Ok(Self {
            raw,
            normalized,
            mask,
        })
    }

    /// Pads to `width` slots with masked entries.
    pub fn padded(&self, width: usize) -> Self {
        let mut out = self.clone();
        while out.raw.len() < width {
            out.raw.push(0.0);
            out.normalized.push(0.0);
            out.mask.push(false);
        }
        out
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn normalized(&self) -> &[f64] {
        &self.normalized
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.mask.get(i).copied().unwrap_or(false)
    }

    /// `log(sum(exp(raw)))` over valid slots.
    pub fn log_partition(&self) -> f64 {
        log_sum_exp(&self.raw, &self.mask)
    }
}

fn log_sum_exp(raw: &[f64], mask: &[bool]) -> f64 {
    let max = raw
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(r, _)| *r)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = raw
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(r, _)| (r - max).exp())
        .sum();
    max + sum.ln()
}

fn masked_softmax(raw: &[f64], mask: &[bool]) -> Vec<f64> {
    let max = raw
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(r, _)| *r)
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = raw
        .iter()
        .zip(mask)
        .map(|(r, &m)| if m { (r - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Cross-entropy of one instance against its gold choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub value: f64,
    pub gold_index: usize,
    /// One-hot class labels over the (possibly padded) slots.
    pub class_labels: Vec<f64>,
}
