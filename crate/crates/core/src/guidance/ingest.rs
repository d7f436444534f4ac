//! Readers for detector outputs: scene-graph triplets and object labels,
//! both JSONL keyed by `image_ref`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use super::{DetectionSet, GuidanceError, SceneTriplet};

#[derive(Deserialize)]
struct TripletLine {
    image_ref: String,
    triplets: Vec<[String; 3]>,
}

#[derive(Deserialize)]
struct DetectionLine {
    image_ref: String,
    labels: Vec<String>,
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, GuidanceError> {
    let io = |message: String| GuidanceError::CacheIo {
        path: path.display().to_string(),
        message,
    };
    let reader = BufReader::new(File::open(path).map_err(|e| io(e.to_string()))?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| GuidanceError::Parse {
            what: format!("{}:{}", path.display(), i + 1),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Scene-graph triplets per image; repeated images accumulate.
pub fn read_triplet_file(path: &Path) -> Result<BTreeMap<String, Vec<SceneTriplet>>, GuidanceError> {
    let mut out: BTreeMap<String, Vec<SceneTriplet>> = BTreeMap::new();
    for line in read_lines::<TripletLine>(path)? {
        let entry = out.entry(line.image_ref).or_default();
        for [s, p, o] in &line.triplets {
            entry.push(SceneTriplet::new(s, p, o)?);
        }
    }
    Ok(out)
}

/// Detected labels per image, in file order.
pub fn read_detection_file(path: &Path) -> Result<BTreeMap<String, DetectionSet>, GuidanceError> {
    let mut out: BTreeMap<String, DetectionSet> = BTreeMap::new();
    for line in read_lines::<DetectionLine>(path)? {
        let set = DetectionSet::new(&line.labels);
        out.entry(line.image_ref).or_default().labels.extend(set.labels);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::guidance::{serialize_objects, serialize_scene_graph};
    use std::io::Write;

    #[test]
    fn reads_both_formats() {
        let dir = tempfile::tempdir().unwrap();
        let tp = dir.path().join("sg.jsonl");
        let mut f = File::create(&tp).unwrap();
        writeln!(f, r#"{{"image_ref": "a.jpg", "triplets": [["man", "riding", "horse"], ["horse", "on", "beach"]]}}"#).unwrap();
        writeln!(f, r#"{{"image_ref": "b.jpg", "triplets": []}}"#).unwrap();
        let sg = read_triplet_file(&tp).unwrap();
        assert_eq!(
            serialize_scene_graph(&sg["a.jpg"]).unwrap(),
            "man riding horse [SEP] horse on beach"
        );
        assert_eq!(serialize_scene_graph(&sg["b.jpg"]), None);

        let dp = dir.path().join("det.jsonl");
        let mut f = File::create(&dp).unwrap();
        writeln!(f, r#"{{"image_ref": "a.jpg", "labels": ["dog", "girl", "dog"]}}"#).unwrap();
        writeln!(f, r#"{{"image_ref": "a.jpg", "labels": ["toy"]}}"#).unwrap();
        let det = read_detection_file(&dp).unwrap();
        assert_eq!(serialize_objects(&det["a.jpg"]).unwrap(), "two dogs, one girl, one toy");
    }

    #[test]
    fn malformed_line_reports_location() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.jsonl");
        std::fs::write(&p, "{\"image_ref\": \"a\"}\n").unwrap();
        let err = read_triplet_file(&p).unwrap_err();
        assert!(err.to_string().contains("bad.jsonl:1"), "{err}");
    }
}
