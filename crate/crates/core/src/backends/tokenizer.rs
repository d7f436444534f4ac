//! Hash-bucket tokenizer and image pseudo-features for the toy backends.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::BackendError;

pub const DEFAULT_BUCKETS: usize = 4096;
pub const IMAGE_FEATURE_DIM: usize = 32;

const IMAGE_SALT: u64 = 0x1a9e_5f0b_c3d2_7781;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

/// Lowercases and splits on anything that is not alphanumeric.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn bucket(token: &str, buckets: usize) -> usize {
    (fnv1a64(token.as_bytes()) % buckets as u64) as usize
}

/// Bucket ids for `text`, truncated to the first `max_len` tokens.
pub fn encode_buckets(text: &str, buckets: usize, max_len: usize) -> Result<Vec<usize>, BackendError> {
    let ids: Vec<usize> = tokenize(text)
        .iter()
        .take(max_len)
        .map(|t| bucket(t, buckets))
        .collect();
    if ids.is_empty() {
        return Err(BackendError::EmptyText);
    }
    Ok(ids)
}

/// Deterministic pseudo-feature for an image reference: the mean of
/// per-token random vectors, so references sharing tokens share signal.
pub fn image_pseudo_feature(image_ref: &str, dim: usize) -> Result<Vec<f64>, BackendError> {
    let tokens = tokenize(image_ref);
    if tokens.is_empty() {
        return Err(BackendError::ImageResolve(image_ref.to_string()));
    }
    let mut feature = vec![0.0; dim];
    for token in &tokens {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(token.as_bytes()) ^ IMAGE_SALT);
        for x in feature.iter_mut() {
            *x += rng.random_range(-1.0..1.0);
        }
    }
    let n = tokens.len() as f64;
    feature.iter_mut().for_each(|x| *x /= n);
    Ok(feature)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_lowercases_and_splits_punctuation() {
        assert_eq!(tokenize("What's on the  Beach?"), ["what", "s", "on", "the", "beach"]);
        assert_eq!(tokenize("man riding horse [SEP] horse"), ["man", "riding", "horse", "sep", "horse"]);
        assert!(tokenize(" ?! ").is_empty());
    }

    #[test]
    fn truncation_keeps_head() {
        let ids = encode_buckets("a b c d e", 64, 3).unwrap();
        assert_eq!(ids, encode_buckets("a b c", 64, 3).unwrap());
        assert!(matches!(encode_buckets("", 64, 3), Err(BackendError::EmptyText)));
    }

    #[test]
    fn pseudo_feature_is_deterministic() {
        let a = image_pseudo_feature("synth/7/0001/dog+tree", IMAGE_FEATURE_DIM).unwrap();
        let b = image_pseudo_feature("synth/7/0001/dog+tree", IMAGE_FEATURE_DIM).unwrap();
        let c = image_pseudo_feature("synth/7/0002/cat+tree", IMAGE_FEATURE_DIM).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(image_pseudo_feature("//", 8).is_err());
    }
}
