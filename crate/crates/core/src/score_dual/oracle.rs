//! Exhaustive reference value for small count-constrained assignments.

use crate::error::{Error, Result};
use crate::workload::ScoreMatrix;

use super::TargetCounts;

pub const DEFAULT_ORACLE_MAX_PROMPTS: usize = 12;

/// Exact maximum average score over every assignment whose per-model counts
/// equal `counts`, by enumeration. Requires integer counts and at most
/// [`DEFAULT_ORACLE_MAX_PROMPTS`] prompts.
pub fn exact_score_oracle(scores: &ScoreMatrix, counts: &TargetCounts) -> Result<f64> {
    exact_score_oracle_bounded(scores, counts, DEFAULT_ORACLE_MAX_PROMPTS)
}

pub fn exact_score_oracle_bounded(
    scores: &ScoreMatrix,
    counts: &TargetCounts,
    max_prompts: usize,
) -> Result<f64> {
    let n = scores.n_prompts();
    if n > max_prompts {
        return Err(Error::validation(format!(
            "oracle is limited to {max_prompts} prompts, got {n}"
        )));
    }
    if counts.len() != scores.n_models() {
        return Err(Error::validation(format!(
            "target counts have length {}, score matrix has {} models",
            counts.len(),
            scores.n_models()
        )));
    }
    if !counts.is_integral() {
        return Err(Error::validation("oracle requires integer target counts"));
    }
    let mut remaining: Vec<usize> = counts.as_slice().iter().map(|c| c.round() as usize).collect();
    let best = search(scores, 0, &mut remaining, 0.0);
    Ok(best / n as f64)
}

fn search(scores: &ScoreMatrix, j: usize, remaining: &mut [usize], acc: f64) -> f64 {
    if j == scores.n_prompts() {
        return acc;
    }
    let mut best = f64::NEG_INFINITY;
    for i in 0..remaining.len() {
        if remaining[i] == 0 {
            continue;
        }
        remaining[i] -= 1;
        best = best.max(search(scores, j + 1, remaining, acc + scores.get(j, i)));
        remaining[i] += 1;
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counts(v: &[f64], n: usize) -> TargetCounts {
        TargetCounts::new(v.to_vec(), n).unwrap()
    }

    #[test]
    fn enumerates_both_assignments() {
        let s = ScoreMatrix::from_rows(vec![vec![0.9, 0.8], vec![0.4, 0.7]]).unwrap();
        let v = exact_score_oracle(&s, &counts(&[1.0, 1.0], 2)).unwrap();
        assert!((v - 0.8).abs() < 1e-15);
    }

    #[test]
    fn forced_assignments() {
        let s = ScoreMatrix::from_rows(vec![vec![1.0, 0.0]; 3]).unwrap();
        assert_eq!(exact_score_oracle(&s, &counts(&[3.0, 0.0], 3)).unwrap(), 1.0);
        let s = ScoreMatrix::from_rows(vec![vec![0.6, 0.6]]).unwrap();
        assert_eq!(exact_score_oracle(&s, &counts(&[0.0, 1.0], 1)).unwrap(), 0.6);
    }

    #[test]
    fn rejects_fractional_and_large() {
        let s = ScoreMatrix::from_rows(vec![vec![0.5, 0.5]; 2]).unwrap();
        assert!(exact_score_oracle(&s, &counts(&[0.5, 1.5], 2)).is_err());
        let big = ScoreMatrix::from_rows(vec![vec![0.5, 0.5]; 13]).unwrap();
        assert!(exact_score_oracle(&big, &counts(&[6.0, 7.0], 13)).is_err());
    }
}
