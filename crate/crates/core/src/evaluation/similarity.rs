use serde::{Deserialize, Serialize};

use crate::memory::embed::{embed, unit_similarity};
use crate::memory::MemoryError;
use crate::text::collapse_lower;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityScore {
    pub string_sim: f64,
    pub semantic_sim: f64,
    /// Mean of the two measures.
    pub final_score: f64,
}

impl SimilarityScore {
    pub fn new(string_sim: f64, semantic_sim: f64) -> Self {
        Self {
            string_sim,
            semantic_sim,
            final_score: (string_sim + semantic_sim) / 2.0,
        }
    }

    pub const ZERO: SimilarityScore = SimilarityScore {
        string_sim: 0.0,
        semantic_sim: 0.0,
        final_score: 0.0,
    };
}

/// Character edit distance with unit costs.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - levenshtein / max_len` over lowercased, whitespace-collapsed text.
/// Two empty strings are identical.
pub fn string_similarity(expected: &str, received: &str) -> f64 {
    let a = collapse_lower(expected);
    let b = collapse_lower(received);
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(&a, &b) as f64 / longest as f64
}

/// `(1 + cos) / 2` of the deterministic embeddings.
pub fn semantic_similarity(expected: &str, received: &str) -> Result<f64, MemoryError> {
    Ok(unit_similarity(&embed(expected)?, &embed(received)?))
}

pub fn similarity(expected: &str, received: &str) -> Result<SimilarityScore, MemoryError> {
    Ok(SimilarityScore::new(
        string_similarity(expected, received),
        semantic_similarity(expected, received)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edit_distance_examples() {
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("flaw", "lawn"), 2);
        assert!((string_similarity("kitten", "sitting") - (1.0 - 3.0 / 7.0)).abs() < 1e-12);
        assert_eq!(string_similarity("", "x"), 0.0);
        assert_eq!(string_similarity("Guinea  Pig", "guinea pig"), 1.0);
    }

    #[test]
    fn identical_text_is_fully_similar() {
        let s = similarity("a guinea pig named Oscar", "a guinea pig named Oscar").unwrap();
        assert_eq!(s.string_sim, 1.0);
        assert!((s.semantic_sim - 1.0).abs() < 1e-12);
        assert!((s.final_score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_text_propagates() {
        assert_eq!(semantic_similarity("", "x"), Err(MemoryError::EmptyText));
    }
}
