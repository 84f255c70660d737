//! Token-level cross entropy: mean negative log-softmax of the gold class
//! over all non-ignored positions, computed with log-sum-exp stabilization.

use crate::error::{Error, Result};

use super::train::{Logits, TrainingBatch, IGNORE_LABEL};

/// `logsumexp` of one logit row.
#[inline]
pub(crate) fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Negative log-likelihood of `gold` under a softmax over `row`.
#[inline]
pub(crate) fn nll(row: &[f64], gold: usize) -> f64 {
    log_sum_exp(row) - row[gold]
}

/// Batch cross entropy. Padded (ignored) positions contribute nothing; a
/// batch with no effective positions is an error rather than 0/0.
pub fn cross_entropy(logits: &Logits, batch: &TrainingBatch) -> Result<f64> {
    if logits.n != batch.n || logits.max_len != batch.max_len {
        return Err(Error::Validation(format!(
            "logits shape ({}, {}) does not match batch ({}, {})",
            logits.n, logits.max_len, batch.n, batch.max_len
        )));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for item in 0..batch.n {
        for t in 0..batch.max_len {
            let label = batch.labels[item * batch.max_len + t];
            if label == IGNORE_LABEL {
                continue;
            }
            total += nll(logits.position(item, t), label as usize);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Validation("all batch positions are ignored".into()));
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch_of(labels: Vec<u32>, max_len: usize) -> TrainingBatch {
        let n = labels.len() / max_len;
        let effective = labels.iter().filter(|&&l| l != IGNORE_LABEL).count();
        TrainingBatch {
            n,
            max_len,
            token_ids: vec![0; labels.len()],
            labels,
            lengths: vec![max_len; n],
            effective_tokens: effective,
        }
    }

    fn logits_of(data: Vec<f64>, n: usize, max_len: usize, c: usize) -> Logits {
        Logits { n, max_len, n_classes: c, data }
    }

    #[test]
    fn uniform_logits_give_ln_c() {
        let c = 7;
        let logits = logits_of(vec![0.0; 2 * c], 1, 2, c);
        let batch = batch_of(vec![3, 0], 2);
        let loss = cross_entropy(&logits, &batch).unwrap();
        assert!((loss - (c as f64).ln()).abs() < 1e-6, "loss {loss}");
    }

    #[test]
    fn saturated_gold_logit_gives_near_zero_loss() {
        let mut data = vec![0.0; 7];
        data[2] = 1000.0;
        let logits = logits_of(data, 1, 1, 7);
        let batch = batch_of(vec![2], 1);
        let loss = cross_entropy(&logits, &batch).unwrap();
        assert!(loss < 1e-6 && loss >= 0.0, "loss {loss}");
    }

    /// Independent scalar reference: direct exp/sum in f64, no shared code
    /// with the stabilized path.
    fn reference_nll(row: &[f64], gold: usize) -> f64 {
        let sum: f64 = row.iter().map(|&v| v.exp()).sum();
        -(row[gold].exp() / sum).ln()
    }

    #[test]
    fn matches_independent_reference_to_1e9() {
        let row = vec![1.0, 2.0, 0.5, -1.25, 3.75, 0.0, -0.5];
        let logits = logits_of(row.clone(), 1, 1, 7);
        let batch = batch_of(vec![1], 1);
        let loss = cross_entropy(&logits, &batch).unwrap();
        assert!((loss - reference_nll(&row, 1)).abs() < 1e-9);
    }

    #[test]
    fn shift_invariance_per_position() {
        let rows = [vec![0.3, -1.0, 2.0, 0.0, 1.1, -0.4, 0.9], vec![5.0, 4.0, 3.0, 2.0, 1.0, 0.0, -1.0]];
        let mut data = Vec::new();
        for r in &rows {
            data.extend_from_slice(r);
        }
        let logits = logits_of(data.clone(), 1, 2, 7);
        let batch = batch_of(vec![2, 0], 2);
        let base = cross_entropy(&logits, &batch).unwrap();

        // Add a different constant to every class logit at each position.
        let mut shifted = data;
        for (t, shift) in [(0usize, 13.5f64), (1, -7.25)] {
            for c in 0..7 {
                shifted[t * 7 + c] += shift;
            }
        }
        let loss2 = cross_entropy(&logits_of(shifted, 1, 2, 7), &batch).unwrap();
        assert!((base - loss2).abs() < 1e-6);
    }

    #[test]
    fn all_ignored_is_an_error_not_zero_over_zero() {
        let logits = logits_of(vec![0.0; 7], 1, 1, 7);
        let batch = batch_of(vec![IGNORE_LABEL], 1);
        assert!(cross_entropy(&logits, &batch).is_err());
    }
}
