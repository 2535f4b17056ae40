//! Cleaning and tokenization: Unicode word tokens, stopword removal and
//! document-frequency vocabulary pruning.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;
use thiserror::Error;

/// French stopword list shipped with the crate; injectable per run.
pub const DEFAULT_FRENCH_STOPWORDS: &str = include_str!("../data/stopwords_fr.txt");

#[derive(Debug, Error)]
pub enum TextError {
    #[error("document list is empty")]
    EmptyDocs,
    #[error("coverage bounds must satisfy 0 <= min <= max <= 1, got [{min}, {max}]")]
    InvalidBounds { min: f64, max: f64 },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizedText {
    pub original: String,
    pub tokens: Vec<String>,
}

/// Tokenization and pruning policy. Coverage bounds of `[0, 1]` disable
/// pruning entirely.
#[derive(Debug, Clone)]
pub struct VocabPolicy {
    pub min_doc_coverage: f64,
    pub max_doc_coverage: f64,
    pub stopwords: HashSet<String>,
}

impl VocabPolicy {
    pub fn new(
        min_doc_coverage: f64,
        max_doc_coverage: f64,
        stopwords: HashSet<String>,
    ) -> Result<Self, TextError> {
        if !(0.0..=1.0).contains(&min_doc_coverage)
            || !(0.0..=1.0).contains(&max_doc_coverage)
            || min_doc_coverage > max_doc_coverage
        {
            return Err(TextError::InvalidBounds {
                min: min_doc_coverage,
                max: max_doc_coverage,
            });
        }
        Ok(VocabPolicy {
            min_doc_coverage,
            max_doc_coverage,
            stopwords,
        })
    }

    /// Pruning disabled, bundled French stopword list.
    pub fn default_french() -> Self {
        VocabPolicy {
            min_doc_coverage: 0.0,
            max_doc_coverage: 1.0,
            stopwords: parse_stopwords(DEFAULT_FRENCH_STOPWORDS),
        }
    }

    pub fn with_stopwords_file(mut self, path: &Path) -> Result<Self, TextError> {
        let raw = std::fs::read_to_string(path)?;
        self.stopwords = parse_stopwords(&raw);
        Ok(self)
    }
}

/// One lowercase stopword per line; blank lines and `#` comments ignored.
pub fn parse_stopwords(raw: &str) -> HashSet<String> {
    raw.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.to_lowercase())
        .collect()
}

/// Unicode word tokenization keeping only alphanumeric tokens whose
/// lowercase form is not a stopword. Casing of surviving tokens is
/// preserved; accents are never folded.
pub fn tokenize_clean(text: &str, policy: &VocabPolicy) -> TokenizedText {
    let tokens = text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .filter(|t| !policy.stopwords.contains(&t.to_lowercase()))
        .map(str::to_string)
        .collect();
    TokenizedText {
        original: text.to_string(),
        tokens,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneOutcome {
    pub docs: Vec<TokenizedText>,
    pub dropped_low: BTreeSet<String>,
    pub dropped_high: BTreeSet<String>,
}

/// Drop tokens whose document frequency (fraction of docs containing the
/// token) falls below `min_doc_coverage` or above `max_doc_coverage`.
/// Token order within each surviving document is preserved.
pub fn prune_vocabulary(
    docs: &[TokenizedText],
    policy: &VocabPolicy,
) -> Result<PruneOutcome, TextError> {
    if docs.is_empty() {
        return Err(TextError::EmptyDocs);
    }
    let total = docs.len() as f64;
    let mut doc_counts: HashMap<&str, usize> = HashMap::new();
    for doc in docs {
        let distinct: HashSet<&str> = doc.tokens.iter().map(String::as_str).collect();
        for token in distinct {
            *doc_counts.entry(token).or_default() += 1;
        }
    }

    let mut dropped_low = BTreeSet::new();
    let mut dropped_high = BTreeSet::new();
    for (token, count) in &doc_counts {
        let df = *count as f64 / total;
        if df < policy.min_doc_coverage {
            dropped_low.insert(token.to_string());
        } else if df > policy.max_doc_coverage {
            dropped_high.insert(token.to_string());
        }
    }

    let docs = docs
        .iter()
        .map(|doc| TokenizedText {
            original: doc.original.clone(),
            tokens: doc
                .tokens
                .iter()
                .filter(|t| !dropped_low.contains(*t) && !dropped_high.contains(*t))
                .cloned()
                .collect(),
        })
        .collect();

    Ok(PruneOutcome {
        docs,
        dropped_low,
        dropped_high,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn policy_with(stopwords: &[&str]) -> VocabPolicy {
        VocabPolicy::new(
            0.0,
            1.0,
            stopwords.iter().map(|s| s.to_string()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn tokenize_drops_stopwords_keeps_casing() {
        let policy = policy_with(&["la", "en"]);
        let out = tokenize_clean("la paix en Ukraine", &policy);
        assert_eq!(out.tokens, vec!["paix", "Ukraine"]);
    }

    #[test]
    fn tokenize_splits_apostrophes_and_keeps_accents() {
        let policy = policy_with(&["de", "la", "l"]);
        let out = tokenize_clean("défaite de la Russie, défaite de l'Ukraine", &policy);
        assert_eq!(out.tokens, vec!["défaite", "Russie", "défaite", "Ukraine"]);
    }

    #[test]
    fn tokenize_empty_input() {
        let policy = policy_with(&[]);
        assert!(tokenize_clean("", &policy).tokens.is_empty());
    }

    #[test]
    fn stopword_filter_is_case_insensitive() {
        let policy = policy_with(&["la"]);
        let out = tokenize_clean("La Paix LA paix", &policy);
        assert_eq!(out.tokens, vec!["Paix", "paix"]);
    }

    #[test]
    fn default_french_list_covers_common_words() {
        let policy = VocabPolicy::default_french();
        for w in ["la", "en", "de", "l", "les", "et", "que"] {
            assert!(policy.stopwords.contains(w), "missing stopword {w}");
        }
    }

    fn docs(specs: &[&[&str]]) -> Vec<TokenizedText> {
        specs
            .iter()
            .map(|tokens| TokenizedText {
                original: tokens.join(" "),
                tokens: tokens.iter().map(|t| t.to_string()).collect(),
            })
            .collect()
    }

    #[test]
    fn token_in_every_doc_exceeds_max_coverage() {
        let docs = docs(&[
            &["x", "a"],
            &["x", "b"],
            &["x", "c"],
            &["x", "d"],
            &["x", "e"],
        ]);
        let policy = VocabPolicy::new(0.0, 0.8, HashSet::new()).unwrap();
        let out = prune_vocabulary(&docs, &policy).unwrap();
        assert!(out.dropped_high.contains("x"));
        assert!(out.dropped_low.is_empty());
        assert!(out.docs.iter().all(|d| !d.tokens.contains(&"x".to_string())));
    }

    #[test]
    fn rare_token_falls_below_min_coverage() {
        let docs = docs(&[&["y", "a"], &["a"], &["a"], &["a"]]);
        let policy = VocabPolicy::new(0.5, 1.0, HashSet::new()).unwrap();
        let out = prune_vocabulary(&docs, &policy).unwrap();
        assert!(out.dropped_low.contains("y")); // df = 0.25
        assert!(!out.dropped_low.contains("a"));
    }

    #[test]
    fn no_op_bounds_leave_docs_unchanged() {
        let input = docs(&[&["a", "b"], &["b", "c"]]);
        let policy = VocabPolicy::new(0.0, 1.0, HashSet::new()).unwrap();
        let out = prune_vocabulary(&input, &policy).unwrap();
        assert_eq!(out.docs, input);
        assert!(out.dropped_low.is_empty());
        assert!(out.dropped_high.is_empty());
    }

    #[test]
    fn empty_doc_list_is_an_error() {
        let policy = VocabPolicy::default_french();
        assert!(matches!(
            prune_vocabulary(&[], &policy),
            Err(TextError::EmptyDocs)
        ));
    }

    #[test]
    fn invalid_bounds_rejected() {
        assert!(VocabPolicy::new(0.9, 0.1, HashSet::new()).is_err());
        assert!(VocabPolicy::new(-0.1, 1.0, HashSet::new()).is_err());
        assert!(VocabPolicy::new(0.0, 1.5, HashSet::new()).is_err());
    }
}
