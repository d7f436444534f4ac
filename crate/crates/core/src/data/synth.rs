//! Deterministic synthetic instances for desk-scale runs.
//!
//! Each image reference embeds the gold concept plus one extra concept, so
//! the hashed pseudo-feature of the image shares the gold choice's token.

use std::collections::BTreeMap;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DataError;
use crate::backends::tokenizer::{image_pseudo_feature, IMAGE_FEATURE_DIM};
use crate::types::{Dataset, Difficulty, MultiChoiceInstance, MAX_CHOICES, MIN_CHOICES};

pub const CONCEPTS: [&str; 24] = [
    "dog", "cat", "horse", "bicycle", "umbrella", "kite", "pizza", "guitar", "tree", "boat", "clock", "train",
    "apple", "chair", "bird", "surfboard", "laptop", "elephant", "giraffe", "skateboard", "banana", "bus",
    "sheep", "vase",
];

const TEMPLATES: [&str; 6] = [
    "What is shown in the picture?",
    "Which object is the focus of this image?",
    "What can be seen here?",
    "How would you name the main object?",
    "Where is the attention of this photo drawn to?",
    "Why might someone take this photo?",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub instances: Vec<MultiChoiceInstance>,
    /// Pseudo-features keyed by image reference, identical to what the toy
    /// backends compute from the reference itself.
    pub image_features: BTreeMap<String, Vec<f64>>,
}

pub fn synth_dataset(seed: u64, n: usize, n_choices: usize) -> Result<SynthDataset, DataError> {
    if n == 0 {
        return Err(DataError::Synth("n must be at least 1".into()));
    }
    if !(MIN_CHOICES..=MAX_CHOICES).contains(&n_choices) {
        return Err(DataError::Synth(format!(
            "n_choices must be in {MIN_CHOICES}..={MAX_CHOICES}, got {n_choices}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = Vec::with_capacity(n);
    let mut image_features = BTreeMap::new();
    for i in 0..n {
        let mut pool: Vec<&str> = CONCEPTS.to_vec();
        pool.shuffle(&mut rng);
        let gold = pool[0];
        let extra = pool[1];
        let mut choices: Vec<String> = pool[2..2 + n_choices - 1].iter().map(|s| s.to_string()).collect();
        let gold_index = rng.random_range(0..n_choices);
        choices.insert(gold_index, gold.to_string());
        let question = *TEMPLATES.choose(&mut rng).expect("templates are non-empty");
        let difficulty = if rng.random_bool(0.25) {
            Difficulty::Hard
        } else {
            Difficulty::Easy
        };
        let image_ref = format!("synth/{seed}/{i:04}/{gold}+{extra}");
        let feature = image_pseudo_feature(&image_ref, IMAGE_FEATURE_DIM)
            .map_err(|e| DataError::Synth(e.to_string()))?;
        image_features.insert(image_ref.clone(), feature);
        let id = format!("synth-{seed}-{i:04}");
        let inst = MultiChoiceInstance::new(
            id.clone(),
            image_ref,
            question,
            choices,
            gold_index,
            difficulty,
            Dataset::Synthetic,
        )
        .map_err(|source| DataError::Invalid { id, source })?;
        instances.push(inst);
    }
    Ok(SynthDataset {
        instances,
        image_features,
    })
}
