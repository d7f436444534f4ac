use super::GuidanceError;
use crate::backends::tokenizer::{fnv1a64, tokenize};
use crate::types::GuidanceKind;

/// Produces guidance text for an `(image, question)` pair, optionally
/// conditioned on a text prefix. Implementations must be deterministic for a
/// fixed decode seed and must never return empty text.
pub trait GeneratorContract: Send + Sync {
    fn kind(&self) -> GuidanceKind;
    /// Cache `source` tag, e.g. `"stub"` or `"plugin:<name>"`.
    fn source(&self) -> String;
    fn generate(&self, image_ref: &str, question: &str, prefix: Option<&str>) -> Result<String, GuidanceError>;
}

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "is", "are", "was", "were", "be", "of", "in", "on", "at", "to", "for", "and",
    "or", "what", "which", "why", "how", "where", "who", "when", "this", "that", "these", "those",
    "it", "its", "there", "here", "do", "does", "did", "can", "could", "would", "should", "will",
    "most", "likely", "probably", "s", "shown", "seen", "picture", "image", "photo",
];

/// Deterministic templated generator standing in for a trained one.
#[derive(Debug, Clone)]
pub struct StubGenerator {
    kind: GuidanceKind,
    seed: u64,
}

impl StubGenerator {
    pub fn new(kind: GuidanceKind, seed: u64) -> Self {
        Self { kind, seed }
    }

    fn templates(&self) -> [&'static str; 3] {
        match self.kind {
            GuidanceKind::Rationale => [
                "the image shows {}",
                "the {} in the scene point to the answer",
                "looking closely there are {}",
            ],
            GuidanceKind::Explanation => [
                "because of the {}",
                "since the {} are visible",
                "the answer follows from the {}",
            ],
            GuidanceKind::Caption => ["a picture of {}", "a photo showing {}", "an image with {}"],
            GuidanceKind::SceneGraph => ["{} near scene", "{} in scene", "{} with scene"],
            GuidanceKind::Objects => ["one {}", "some {}", "a few {}"],
            GuidanceKind::Lecture => [
                "this lesson covers {}",
                "background on {}",
                "facts about {}",
            ],
        }
    }
}

impl GeneratorContract for StubGenerator {
    fn kind(&self) -> GuidanceKind {
        self.kind
    }

    fn source(&self) -> String {
        "stub".to_string()
    }

    fn generate(&self, image_ref: &str, question: &str, prefix: Option<&str>) -> Result<String, GuidanceError> {
        if question.trim().is_empty() {
            return Err(GuidanceError::GenerationInput("question is empty".into()));
        }
        let mut keywords: Vec<String> = Vec::new();
        let pool = tokenize(prefix.unwrap_or_default())
            .into_iter()
            .chain(tokenize(question));
        for tok in pool {
            if !STOPWORDS.contains(&tok.as_str()) && !keywords.contains(&tok) {
                keywords.push(tok);
            }
        }
        keywords.truncate(4);
        let salient = if keywords.is_empty() {
            "the scene".to_string()
        } else {
            keywords.join(" ")
        };
        let key = format!("{}\u{1f}{image_ref}\u{1f}{question}", self.seed);
        let variant = (fnv1a64(key.as_bytes()) % 3) as usize;
        let body = self.templates()[variant].replace("{}", &salient);
        Ok(format!("{}: {body}", self.kind.as_str().replace('_', " ")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_kind_prefixed() {
        let r = StubGenerator::new(GuidanceKind::Rationale, 3);
        let c = StubGenerator::new(GuidanceKind::Caption, 3);
        let q = "What sport is the man on the beach playing?";
        let a = r.generate("img/1", q, None).unwrap();
        assert_eq!(a, r.generate("img/1", q, None).unwrap());
        assert!(a.starts_with("rationale: "));
        let b = c.generate("img/1", q, None).unwrap();
        assert!(b.starts_with("caption: "));
        assert!(a.contains("sport man beach playing"), "{a}");
        assert_eq!(r.source(), "stub");
    }

    #[test]
    fn empty_question_is_rejected() {
        let r = StubGenerator::new(GuidanceKind::Rationale, 0);
        assert!(matches!(
            r.generate("img", "  ", None),
            Err(GuidanceError::GenerationInput(_))
        ));
    }

    #[test]
    fn stopword_only_question_still_generates() {
        let r = StubGenerator::new(GuidanceKind::Caption, 0);
        let out = r.generate("img", "What is this?", None).unwrap();
        assert!(out.contains("the scene"));
    }
}
