use crate::types::{ChoiceScores, CoreError, LossRecord};

/// `-log(normalized[gold])`, computed as `logsumexp(raw) - raw[gold]` over
/// valid slots.
pub fn choice_cross_entropy(scores: &ChoiceScores, gold_index: usize) -> Result<LossRecord, CoreError> {
    if !scores.is_valid(gold_index) {
        return Err(CoreError::MaskedGold(gold_index));
    }
    let value = (scores.log_partition() - scores.raw()[gold_index]).max(0.0);
    let class_labels = (0..scores.len())
        .map(|i| if i == gold_index { 1.0 } else { 0.0 })
        .collect();
    Ok(LossRecord {
        value,
        gold_index,
        class_labels,
    })
}

/// Gradient of [`choice_cross_entropy`] with respect to the raw scores:
/// `normalized - one_hot(gold)`, exactly zero on masked slots.
pub fn cross_entropy_grad(scores: &ChoiceScores, gold_index: usize) -> Result<Vec<f64>, CoreError> {
    if !scores.is_valid(gold_index) {
        return Err(CoreError::MaskedGold(gold_index));
    }
    Ok(scores
        .normalized()
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            if !scores.is_valid(i) {
                0.0
            } else if i == gold_index {
                p - 1.0
            } else {
                p
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_uniform() {
        let s = ChoiceScores::masked(vec![5.0, 1.0], vec![true, false]).unwrap();
        assert_eq!(choice_cross_entropy(&s, 0).unwrap().value, 0.0);
        let s = ChoiceScores::from_raw(vec![0.0; 4]).unwrap();
        let l = choice_cross_entropy(&s, 2).unwrap();
        assert!((l.value - 4f64.ln()).abs() < 1e-12);
        assert_eq!(l.class_labels, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn masked_gold_is_an_error() {
        let s = ChoiceScores::masked(vec![0.1, 0.2, 0.0], vec![true, true, false]).unwrap();
        assert!(matches!(choice_cross_entropy(&s, 2), Err(CoreError::MaskedGold(2))));
        assert!(matches!(cross_entropy_grad(&s, 7), Err(CoreError::MaskedGold(7))));
    }

    #[test]
    fn padded_slots_have_zero_gradient() {
        let s = ChoiceScores::from_raw(vec![0.3, -0.4, 1.2]).unwrap().padded(5);
        let g = cross_entropy_grad(&s, 1).unwrap();
        assert_eq!(&g[3..], &[0.0, 0.0]);
        assert!(g.iter().sum::<f64>().abs() < 1e-12);
    }
}
