//! Answer scoring and the statistics behind the accuracy comparison.

pub mod pareto;
pub mod similarity;
pub mod stats;

use serde::{Deserialize, Serialize};

use crate::agents::prompts::IDK_SENTENCE;

pub use pareto::{pareto_decision, ParetoVerdict, Rationale, SystemOutcome};
pub use similarity::{
    levenshtein, semantic_similarity, similarity, string_similarity, SimilarityScore,
};
pub use stats::{normal_cdf, two_prop_z, wilson_ci, ConfidenceInterval, StatsError, ZTest, Z_95};

/// Default cut-off on the final similarity for a correct answer.
pub const DEFAULT_THRESHOLD: f64 = 0.7;
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Correct,
    Wrong,
    Idk,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Correct => "correct",
            Classification::Wrong => "wrong",
            Classification::Idk => "idk",
        }
    }
}

/// True when the answer is, or contains, the refusal sentence. Case and
/// apostrophe style are ignored.
pub fn is_idk(received: &str) -> bool {
    let norm = |s: &str| s.trim().replace('\u{2019}', "'").to_lowercase();
    norm(received).contains(&norm(IDK_SENTENCE))
}

/// Refusals are `idk` regardless of similarity. Otherwise the answer is
/// correct when the final similarity reaches `threshold`. Blank answers
/// score zero.
pub fn classify(expected: &str, received: &str, threshold: f64) -> (Classification, SimilarityScore) {
    let score = similarity(expected, received).unwrap_or(SimilarityScore::ZERO);
    let class = if is_idk(received) {
        Classification::Idk
    } else if score.final_score >= threshold {
        Classification::Correct
    } else {
        Classification::Wrong
    };
    (class, score)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyStats {
    pub n: u64,
    pub correct: u64,
    pub wrong: u64,
    pub idk: u64,
    pub accuracy: f64,
    pub idk_rate: f64,
    pub answer_rate: f64,
}

impl AccuracyStats {
    pub fn from_counts(correct: u64, wrong: u64, idk: u64) -> Result<Self, StatsError> {
        let n = correct + wrong + idk;
        if n == 0 {
            return Err(StatsError::InvalidCounts { k: 0, n: 0 });
        }
        let nf = n as f64;
        let idk_rate = idk as f64 / nf;
        Ok(Self {
            n,
            correct,
            wrong,
            idk,
            accuracy: correct as f64 / nf,
            idk_rate,
            answer_rate: 1.0 - idk_rate,
        })
    }

    pub fn from_classes<I: IntoIterator<Item = Classification>>(classes: I) -> Result<Self, StatsError> {
        let (mut c, mut w, mut i) = (0, 0, 0);
        for class in classes {
            match class {
                Classification::Correct => c += 1,
                Classification::Wrong => w += 1,
                Classification::Idk => i += 1,
            }
        }
        Self::from_counts(c, w, i)
    }

    pub fn wilson(&self) -> ConfidenceInterval {
        wilson_ci(self.correct, self.n, Z_95).expect("counts validated at construction")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refusal_detection() {
        assert!(is_idk("I don't know based on the given memories."));
        assert!(is_idk("  i DON\u{2019}T know based on the given memories.  "));
        assert!(is_idk("Sorry. I don't know based on the given memories."));
        assert!(!is_idk("I don't know."));
    }

    #[test]
    fn classification_examples() {
        let (c, _) = classify("sunsets", IDK_SENTENCE, 0.7);
        assert_eq!(c, Classification::Idk);
        // Refusal wins even at a threshold every answer passes.
        assert_eq!(classify("x", IDK_SENTENCE, 1e-9).0, Classification::Idk);
        assert_eq!(classify("at the lake", "at the lake", 0.99).0, Classification::Correct);
        let (c, s) = classify("guinea pig", "a hamster", 0.7);
        assert_eq!(c, Classification::Wrong);
        assert!(s.final_score < 0.7);
        assert_eq!(classify("sunsets", "", 0.7), (Classification::Wrong, SimilarityScore::ZERO));
    }

    #[test]
    fn accuracy_rates() {
        let s = AccuracyStats::from_counts(22, 150, 27).unwrap();
        assert_eq!(s.n, 199);
        assert!((s.accuracy - 22.0 / 199.0).abs() < 1e-15);
        assert!((s.answer_rate + s.idk_rate - 1.0).abs() < 1e-15);
        let s = AccuracyStats::from_classes([
            Classification::Correct,
            Classification::Idk,
            Classification::Wrong,
            Classification::Idk,
        ])
        .unwrap();
        assert_eq!((s.correct, s.wrong, s.idk), (1, 1, 2));
        assert!(AccuracyStats::from_counts(0, 0, 0).is_err());
    }
}
