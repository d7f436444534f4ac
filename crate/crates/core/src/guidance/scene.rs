use serde::{Deserialize, Serialize};

use super::GuidanceError;

/// Literal separator placed between serialized triplets.
pub const SEP_TOKEN: &str = "[SEP]";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneTriplet {
    pub subject: String,
    pub predicate: String,
    pub object: String,
}

impl SceneTriplet {
    pub fn new(subject: &str, predicate: &str, object: &str) -> Result<Self, GuidanceError> {
        let t = Self {
            subject: subject.trim().to_string(),
            predicate: predicate.trim().to_string(),
            object: object.trim().to_string(),
        };
        if t.subject.is_empty() || t.predicate.is_empty() || t.object.is_empty() {
            return Err(GuidanceError::EmptyTripletField(t));
        }
        Ok(t)
    }
}

/// `"s p o [SEP] s p o ..."`; `None` for an empty graph.
pub fn serialize_scene_graph(triplets: &[SceneTriplet]) -> Option<String> {
    if triplets.is_empty() {
        return None;
    }
    let parts: Vec<String> = triplets
        .iter()
        .map(|t| format!("{} {} {}", t.subject, t.predicate, t.object))
        .collect();
    Some(parts.join(&format!(" {SEP_TOKEN} ")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_triplets() {
        let g = [
            SceneTriplet::new("man", "riding", "horse").unwrap(),
            SceneTriplet::new("horse", "on", "beach").unwrap(),
        ];
        assert_eq!(
            serialize_scene_graph(&g).unwrap(),
            "man riding horse [SEP] horse on beach"
        );
    }

    #[test]
    fn empty_and_single() {
        assert_eq!(serialize_scene_graph(&[]), None);
        let one = serialize_scene_graph(&[SceneTriplet::new("cup", "on", "table").unwrap()]).unwrap();
        assert!(!one.contains(SEP_TOKEN));
        assert!(SceneTriplet::new("cup", " ", "table").is_err());
    }

    proptest! {
        #[test]
        fn separator_count(words in proptest::collection::vec(("[a-z]{1,6}", "[a-z]{1,6}", "[a-z]{1,6}"), 1..12)) {
            let triplets: Vec<_> = words.iter().map(|(s, p, o)| SceneTriplet::new(s, p, o).unwrap()).collect();
            let text = serialize_scene_graph(&triplets).unwrap();
            prop_assert_eq!(text.matches(SEP_TOKEN).count(), triplets.len() - 1);
        }
    }
}
