//! Deterministic hashed character-trigram embedder.
//!
//! Text is lowercased, whitespace runs collapse to one space, and the result
//! is padded with a space on each side. Every character trigram is hashed
//! with 64-bit FNV-1a, counted in bucket `hash % 256`, and the count vector
//! is L2-normalised.

use std::hash::Hasher;

use super::MemoryError;
use crate::text::collapse_lower;

pub const EMBEDDING_DIM: usize = 256;

pub fn embed(text: &str) -> Result<Vec<f64>, MemoryError> {
    let norm = collapse_lower(text);
    if norm.is_empty() {
        return Err(MemoryError::EmptyText);
    }
    let chars: Vec<char> = std::iter::once(' ')
        .chain(norm.chars())
        .chain(std::iter::once(' '))
        .collect();
    let mut v = vec![0.0; EMBEDDING_DIM];
    let mut buf = [0u8; 12];
    for tri in chars.windows(3) {
        let mut h = fnv::FnvHasher::default();
        let mut len = 0;
        for c in tri {
            len += c.encode_utf8(&mut buf[len..]).len();
        }
        h.write(&buf[..len]);
        v[(h.finish() % EMBEDDING_DIM as u64) as usize] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    for x in &mut v {
        *x /= norm;
    }
    Ok(v)
}

/// Dot product of two unit vectors.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine mapped onto [0, 1] as `(1 + cos) / 2`.
pub fn unit_similarity(a: &[f64], b: &[f64]) -> f64 {
    ((1.0 + cosine(a, b)) / 2.0).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn deterministic_and_normalised() {
        let a = embed("Has a guinea pig named Oscar").unwrap();
        let b = embed("Has a guinea pig named Oscar").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), EMBEDDING_DIM);
        let n: f64 = a.iter().map(|x| x * x).sum();
        assert!((n.sqrt() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_text_is_rejected() {
        assert_eq!(embed(""), Err(MemoryError::EmptyText));
        assert_eq!(embed(" \t\n"), Err(MemoryError::EmptyText));
    }

    #[test]
    fn case_and_spacing_do_not_matter() {
        assert_eq!(embed("Guinea   Pig").unwrap(), embed("guinea pig").unwrap());
    }

    #[test]
    fn fnv_reference_value() {
        // FNV-1a 64 offset basis for the empty input.
        assert_eq!(fnv::FnvHasher::default().finish(), 0xcbf2_9ce4_8422_2325);
    }

    /// Plain trigram overlap count computed without hashing.
    fn shared_trigrams(a: &str, b: &str) -> usize {
        let grams = |s: &str| -> Vec<String> {
            let c: Vec<char> = format!(" {s} ").chars().collect();
            c.windows(3).map(|w| w.iter().collect()).collect()
        };
        let gb = grams(b);
        grams(a).iter().filter(|g| gb.contains(g)).count()
    }

    #[test]
    fn near_spellings_are_closer() {
        let pig = embed("guinea pig").unwrap();
        let pigs = embed("guinea pigs").unwrap();
        let stock = embed("stock market").unwrap();
        assert!(shared_trigrams("guinea pig", "guinea pigs") > shared_trigrams("guinea pig", "stock market"));
        assert!(cosine(&pig, &pigs) > cosine(&pig, &stock));
    }

    proptest! {
        #[test]
        fn unit_norm_for_any_text(s in "[a-zA-Z0-9 ,.!?']{1,80}") {
            prop_assume!(!s.trim().is_empty());
            let v = embed(&s).unwrap();
            let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((n - 1.0).abs() < 1e-6);
        }

        #[test]
        fn similarity_in_range(a in "[a-z ]{1,40}", b in "[a-z ]{1,40}") {
            prop_assume!(!a.trim().is_empty() && !b.trim().is_empty());
            let s = unit_similarity(&embed(&a).unwrap(), &embed(&b).unwrap());
            prop_assert!((0.0..=1.0).contains(&s));
        }
    }
}
