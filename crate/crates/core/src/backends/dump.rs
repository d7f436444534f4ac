//! JSONL embedding dumps for debugging and external recomputation.
//!
//! Each line is `{"text": ..., "image_ref": ..., "vector": [...]}` with
//! whichever of `text` / `image_ref` produced the vector. Query-transformer
//! features carry both.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BackendError, DualEncoder, QueryFusion};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    pub vector: Vec<f64>,
}

fn io(path: &Path, e: impl std::fmt::Display) -> BackendError {
    BackendError::Checkpoint(format!("{}: {e}", path.display()))
}

pub fn write_dump(path: &Path, records: &[EmbeddingRecord]) -> Result<(), BackendError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| io(path, e))?);
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| io(path, e))?;
        writeln!(w, "{line}").map_err(|e| io(path, e))?;
    }
    w.flush().map_err(|e| io(path, e))
}

pub fn read_dump(path: &Path) -> Result<Vec<EmbeddingRecord>, BackendError> {
    let reader = BufReader::new(File::open(path).map_err(|e| io(path, e))?);
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line.map_err(|e| io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line).map_err(|e| io(path, e))?);
        }
    }
    Ok(out)
}

/// Raw (pre-normalization) image and text embeddings of a dual encoder.
pub fn dual_embeddings(
    backend: &dyn DualEncoder,
    image_refs: &[&str],
    texts: &[&str],
) -> Result<Vec<EmbeddingRecord>, BackendError> {
    let mut out = Vec::with_capacity(image_refs.len() + texts.len());
    for image_ref in image_refs {
        out.push(EmbeddingRecord {
            text: None,
            image_ref: Some(image_ref.to_string()),
            vector: backend.encode_image(image_ref)?,
        });
    }
    for text in texts {
        out.push(EmbeddingRecord {
            text: Some(text.to_string()),
            image_ref: None,
            vector: backend.encode_text(text)?,
        });
    }
    Ok(out)
}

/// Query-transformer output features for each `(image_ref, text)` pair.
pub fn fusion_features(
    backend: &dyn QueryFusion,
    pairs: &[(&str, &str)],
) -> Result<Vec<EmbeddingRecord>, BackendError> {
    pairs
        .iter()
        .map(|(image_ref, text)| {
            let image = backend.encode_image(image_ref)?;
            Ok(EmbeddingRecord {
                text: Some(text.to_string()),
                image_ref: Some(image_ref.to_string()),
                vector: backend.qformer(&image, text)?,
            })
        })
        .collect()
}
