//! Aggregations over classification results: affinity distributions,
//! party-by-topic interest matrices, program topic distributions and
//! per-group distinctive-term lists.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};
use thiserror::Error;

use crate::classify::{ClassificationResult, PartyProgram};
use crate::corpus::Article;
use crate::labels::PartyLabel;
use crate::text::{tokenize_clean, VocabPolicy};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no results to aggregate")]
    EmptyResults,
    #[error("comment ref {0:?} does not resolve to any article")]
    DanglingRef(String),
    #[error("affinity groups overlap on {0}")]
    OverlappingGroups(PartyLabel),
    #[error("affinity group {0:?} is empty")]
    EmptyGroup(String),
    #[error("group may not contain Indeterminado")]
    IndeterminadoInGroup,
    #[error("program for {0} declares no topics")]
    NoTopics(PartyLabel),
}

/// Row-normalized counts of interest per party and topic category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterestMatrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
    pub shares: Vec<Vec<f64>>,
    /// Index of the flagged Indeterminado row, when present.
    pub indeterminate_row: Option<usize>,
}

impl InterestMatrix {
    fn from_counts(
        row_labels: Vec<String>,
        col_labels: Vec<String>,
        counts: Vec<Vec<u64>>,
        indeterminate_row: Option<usize>,
    ) -> Self {
        let shares = counts
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                row.iter()
                    .map(|c| {
                        if total == 0 {
                            0.0
                        } else {
                            *c as f64 / total as f64
                        }
                    })
                    .collect()
            })
            .collect();
        InterestMatrix {
            row_labels,
            col_labels,
            counts,
            shares,
            indeterminate_row,
        }
    }

    /// Each nonzero count row's shares must sum to 1 within 1e-9.
    pub fn check_invariants(&self) -> bool {
        self.counts.iter().zip(&self.shares).all(|(counts, shares)| {
            let total: u64 = counts.iter().sum();
            if total == 0 {
                shares.iter().all(|s| *s == 0.0)
            } else {
                (shares.iter().sum::<f64>() - 1.0).abs() < 1e-9
            }
        })
    }
}

/// Counts per party over all results, Indeterminado included.
pub fn affinity_distribution(
    results: &[ClassificationResult],
) -> Result<BTreeMap<PartyLabel, u64>, AnalysisError> {
    if results.is_empty() {
        return Err(AnalysisError::EmptyResults);
    }
    let mut counts = BTreeMap::new();
    for r in results {
        *counts.entry(r.party).or_default() += 1;
    }
    Ok(counts)
}

fn guid_of_ref(comment_ref: &str) -> &str {
    comment_ref.split('#').next().unwrap_or(comment_ref)
}

/// Party-by-article-category interest counts. Every result's comment must
/// resolve to an article; the Indeterminado row is kept but flagged.
pub fn topic_interest(
    results: &[ClassificationResult],
    articles: &[Article],
) -> Result<InterestMatrix, AnalysisError> {
    if results.is_empty() {
        return Err(AnalysisError::EmptyResults);
    }
    let category_by_guid: HashMap<&str, &str> = articles
        .iter()
        .map(|a| (a.guid.as_str(), a.category_label.as_str()))
        .collect();

    let mut cells: BTreeMap<(PartyLabel, String), u64> = BTreeMap::new();
    let mut categories: BTreeSet<String> = BTreeSet::new();
    for r in results {
        let guid = guid_of_ref(&r.comment_ref);
        let category = category_by_guid
            .get(guid)
            .ok_or_else(|| AnalysisError::DanglingRef(r.comment_ref.clone()))?;
        categories.insert(category.to_string());
        *cells.entry((r.party, category.to_string())).or_default() += 1;
    }

    let parties: Vec<PartyLabel> = PartyLabel::ALL
        .into_iter()
        .filter(|p| results.iter().any(|r| r.party == *p))
        .collect();
    let col_labels: Vec<String> = categories.into_iter().collect();
    let counts: Vec<Vec<u64>> = parties
        .iter()
        .map(|p| {
            col_labels
                .iter()
                .map(|c| *cells.get(&(*p, c.clone())).unwrap_or(&0))
                .collect()
        })
        .collect();
    let indeterminate_row = parties.iter().position(|p| *p == PartyLabel::Indeterminado);
    Ok(InterestMatrix::from_counts(
        parties.iter().map(|p| p.display_name().to_string()).collect(),
        col_labels,
        counts,
        indeterminate_row,
    ))
}

/// Topic distribution per party from the declared topics of each
/// electoral program.
pub fn program_topics(programs: &[PartyProgram]) -> Result<InterestMatrix, AnalysisError> {
    let mut topics: BTreeSet<String> = BTreeSet::new();
    for p in programs {
        if p.declared_topics.is_empty() {
            return Err(AnalysisError::NoTopics(p.party));
        }
        topics.extend(p.declared_topics.iter().cloned());
    }
    let col_labels: Vec<String> = topics.into_iter().collect();

    let mut ordered: Vec<&PartyProgram> = programs.iter().collect();
    ordered.sort_by_key(|p| p.party);
    let counts: Vec<Vec<u64>> = ordered
        .iter()
        .map(|p| {
            col_labels
                .iter()
                .map(|t| p.declared_topics.iter().filter(|d| *d == t).count() as u64)
                .collect()
        })
        .collect();
    Ok(InterestMatrix::from_counts(
        ordered
            .iter()
            .map(|p| p.party.display_name().to_string())
            .collect(),
        col_labels,
        counts,
        None,
    ))
}

/// A named coalition of parties for grouped term analysis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AffinityGroup {
    pub name: String,
    pub members: BTreeSet<PartyLabel>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TermRanking {
    /// Strict cross-group absence: a term is listed for a group only if it
    /// never occurs in any other group's comments.
    StrictUnique,
    /// Smoothed log-odds of in-group vs rest-of-groups frequency;
    /// positive-scoring terms only. Uniqueness is not guaranteed.
    LogOdds { alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistinctiveTermReport {
    /// Per group: (term, in-group frequency), ordered by descending
    /// frequency then lexicographically.
    pub groups: Vec<(String, Vec<(String, u64)>)>,
}

/// Per-group distinctive terms over cleaned comment tokens. Comments with
/// party Indeterminado, and parties outside every group, are excluded.
pub fn distinctive_terms(
    results: &[ClassificationResult],
    grouping: &[AffinityGroup],
    articles: &[Article],
    policy: &VocabPolicy,
) -> Result<DistinctiveTermReport, AnalysisError> {
    distinctive_terms_ranked(results, grouping, articles, policy, TermRanking::StrictUnique)
}

pub fn distinctive_terms_ranked(
    results: &[ClassificationResult],
    grouping: &[AffinityGroup],
    articles: &[Article],
    policy: &VocabPolicy,
    ranking: TermRanking,
) -> Result<DistinctiveTermReport, AnalysisError> {
    let mut seen: BTreeSet<PartyLabel> = BTreeSet::new();
    for g in grouping {
        if g.members.is_empty() {
            return Err(AnalysisError::EmptyGroup(g.name.clone()));
        }
        if g.members.contains(&PartyLabel::Indeterminado) {
            return Err(AnalysisError::IndeterminadoInGroup);
        }
        for m in &g.members {
            if !seen.insert(*m) {
                return Err(AnalysisError::OverlappingGroups(*m));
            }
        }
    }

    let body_by_ref: HashMap<String, &str> = articles
        .iter()
        .flat_map(|a| {
            a.comments
                .iter()
                .map(move |c| (a.comment_ref(c), c.body_text.as_str()))
        })
        .collect();

    // Term frequencies per group.
    let mut freqs: Vec<BTreeMap<String, u64>> = vec![BTreeMap::new(); grouping.len()];
    for r in results {
        if r.party == PartyLabel::Indeterminado {
            continue;
        }
        let Some(group_idx) = grouping.iter().position(|g| g.members.contains(&r.party)) else {
            continue;
        };
        let body = body_by_ref
            .get(&r.comment_ref)
            .ok_or_else(|| AnalysisError::DanglingRef(r.comment_ref.clone()))?;
        for token in tokenize_clean(body, policy).tokens {
            *freqs[group_idx].entry(token).or_default() += 1;
        }
    }

    let groups = grouping
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let mut terms: Vec<(String, u64)> = match ranking {
                TermRanking::StrictUnique => freqs[i]
                    .iter()
                    .filter(|(term, _)| {
                        freqs
                            .iter()
                            .enumerate()
                            .all(|(j, other)| j == i || !other.contains_key(*term))
                    })
                    .map(|(term, n)| (term.clone(), *n))
                    .collect(),
                TermRanking::LogOdds { alpha } => {
                    let in_total: u64 = freqs[i].values().sum();
                    let rest: BTreeMap<&String, u64> = freqs
                        .iter()
                        .enumerate()
                        .filter(|(j, _)| *j != i)
                        .flat_map(|(_, f)| f.iter())
                        .fold(BTreeMap::new(), |mut acc, (t, n)| {
                            *acc.entry(t).or_default() += n;
                            acc
                        });
                    let rest_total: u64 = rest.values().sum();
                    freqs[i]
                        .iter()
                        .filter(|(term, n)| {
                            let a = **n as f64 + alpha;
                            let b = *rest.get(term).unwrap_or(&0) as f64 + alpha;
                            let odds_in = a / (in_total as f64 - **n as f64 + alpha);
                            let odds_out = b / (rest_total as f64 - b + alpha).max(alpha);
                            (odds_in / odds_out).ln() > 0.0
                        })
                        .map(|(term, n)| (term.clone(), *n))
                        .collect()
                }
            };
            terms.sort_by(|(ta, na), (tb, nb)| nb.cmp(na).then_with(|| ta.cmp(tb)));
            (g.name.clone(), terms)
        })
        .collect();

    Ok(DistinctiveTermReport { groups })
}
