//! Opinion-trend mining for news-aggregator comment threads.
//!
//! The pipeline goes: discover trending articles through per-category RSS
//! backends ([`feed`]), fetch the pages under a politeness policy and pull
//! out sanitized article bodies plus threaded, vote-annotated comments
//! ([`fetch`], [`extract`]), persist everything as a deduplicated corpus
//! ([`corpus`]), clean and tokenize the text ([`text`]), label a seed set by
//! hand ([`annotate`]), classify every remaining comment's stance and party
//! affinity either through a few-shot-prompted completion endpoint or a
//! deterministic lexicon baseline ([`classify`]), and aggregate the results
//! into affinity distributions, party-by-topic interest matrices and
//! per-group distinctive-term lists ([`analysis`]).

pub mod analysis;
pub mod annotate;
pub mod classify;
pub mod corpus;
pub mod extract;
pub mod feed;
pub mod fetch;
pub mod labels;
pub mod text;

pub use labels::{PartyLabel, StanceLabel};
