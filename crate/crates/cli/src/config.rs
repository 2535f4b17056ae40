//! Run configuration: a TOML file describing feed sources, the collection
//! window, politeness and vocabulary policies, classifier settings, and
//! grouping definitions. Relative paths resolve against the config file's
//! directory. The endpoint credential never lives here; it comes from the
//! environment variable named in `credential_env`.

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use opiniontrend::fetch::FetchPolicy;
use opiniontrend::labels::PartyLabel;
use opiniontrend::text::VocabPolicy;
use serde::Deserialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub output_dir: PathBuf,
    pub collection_year: i32,
    pub window: Window,
    #[serde(default)]
    pub feeds: Vec<FeedEntry>,
    #[serde(default)]
    pub fetch: FetchSection,
    #[serde(default)]
    pub vocab: VocabSection,
    pub classifier: ClassifierSection,
    #[serde(default)]
    pub annotate: AnnotateSection,
    #[serde(default)]
    pub groups: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Deserialize)]
pub struct Window {
    pub since: NaiveDate,
    pub until: NaiveDate,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeedEntry {
    pub base_url: String,
    pub rubrique_id: u32,
    pub category_label: String,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct FetchSection {
    pub min_interval_ms: Option<u64>,
    pub timeout_ms: Option<u64>,
    pub max_retries: Option<u32>,
    pub backoff_base_ms: Option<u64>,
    pub user_agent: Option<String>,
    /// Directory of page snapshots; set for fully offline runs.
    pub snapshot_dir: Option<PathBuf>,
    pub respect_robots: Option<bool>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct VocabSection {
    pub min_doc_coverage: Option<f64>,
    pub max_doc_coverage: Option<f64>,
    pub stopwords_file: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSection {
    /// "lexicon" or "remote".
    pub mode: String,
    pub lexicon_dir: Option<PathBuf>,
    pub program_dir: Option<PathBuf>,
    /// Filled annotation table used as gold labels and few-shot seed.
    pub annotations_file: Option<PathBuf>,
    pub endpoint_url: Option<String>,
    pub model_id: Option<String>,
    pub credential_env: Option<String>,
    pub parallelism: Option<usize>,
    pub template_id: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotateSection {
    pub sample_size: usize,
    pub seed: u64,
}

impl Default for AnnotateSection {
    fn default() -> Self {
        AnnotateSection {
            sample_size: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierMode {
    Lexicon,
    Remote,
}

/// Validated configuration with paths resolved.
#[derive(Debug)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub collection_year: i32,
    pub since: NaiveDate,
    pub until: NaiveDate,
    pub feeds: Vec<FeedEntry>,
    pub fetch_policy: FetchPolicy,
    pub snapshot_dir: Option<PathBuf>,
    pub respect_robots: bool,
    pub vocab: VocabPolicy,
    pub mode: ClassifierMode,
    pub lexicon_dir: Option<PathBuf>,
    pub program_dir: Option<PathBuf>,
    pub annotations_file: Option<PathBuf>,
    pub endpoint_url: Option<String>,
    pub model_id: Option<String>,
    pub credential_env: Option<String>,
    pub parallelism: usize,
    pub template_id: String,
    pub sample_size: usize,
    pub sample_seed: u64,
    pub groups: Vec<(String, Vec<PartyLabel>)>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let raw_text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let raw: RawConfig = toml::from_str(&raw_text)
        .with_context(|| format!("config file {} is not valid", path.display()))?;
    let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();

    if raw.window.since > raw.window.until {
        bail!(
            "window.since ({}) is after window.until ({})",
            raw.window.since,
            raw.window.until
        );
    }

    let defaults = FetchPolicy::default();
    let fetch_policy = FetchPolicy {
        min_interval_per_host: raw
            .fetch
            .min_interval_ms
            .map(Duration::from_millis)
            .unwrap_or(defaults.min_interval_per_host),
        timeout: raw
            .fetch
            .timeout_ms
            .map(Duration::from_millis)
            .unwrap_or(defaults.timeout),
        max_retries: raw.fetch.max_retries.unwrap_or(defaults.max_retries),
        backoff_base: raw
            .fetch
            .backoff_base_ms
            .map(Duration::from_millis)
            .unwrap_or(defaults.backoff_base),
        user_agent: raw.fetch.user_agent.unwrap_or(defaults.user_agent),
    };
    if fetch_policy.timeout.is_zero() {
        bail!("fetch.timeout_ms must be positive");
    }

    let vocab = {
        let min = raw.vocab.min_doc_coverage.unwrap_or(0.0);
        let max = raw.vocab.max_doc_coverage.unwrap_or(1.0);
        let stopwords = match &raw.vocab.stopwords_file {
            Some(p) => {
                let p = resolve(&base, p);
                opiniontrend::text::parse_stopwords(
                    &std::fs::read_to_string(&p)
                        .with_context(|| format!("cannot read stopwords file {}", p.display()))?,
                )
            }
            None => opiniontrend::text::parse_stopwords(
                opiniontrend::text::DEFAULT_FRENCH_STOPWORDS,
            ),
        };
        VocabPolicy::new(min, max, stopwords)
            .map_err(|e| anyhow::anyhow!("vocab section invalid: {e}"))?
    };

    let mode = match raw.classifier.mode.as_str() {
        "lexicon" => ClassifierMode::Lexicon,
        "remote" => ClassifierMode::Remote,
        other => bail!("classifier.mode must be \"lexicon\" or \"remote\", got {other:?}"),
    };
    match mode {
        ClassifierMode::Lexicon if raw.classifier.lexicon_dir.is_none() => {
            bail!("classifier.mode = \"lexicon\" requires classifier.lexicon_dir")
        }
        ClassifierMode::Remote => {
            for (field, value) in [
                ("endpoint_url", raw.classifier.endpoint_url.is_some()),
                ("model_id", raw.classifier.model_id.is_some()),
                ("credential_env", raw.classifier.credential_env.is_some()),
                ("program_dir", raw.classifier.program_dir.is_some()),
                (
                    "annotations_file",
                    raw.classifier.annotations_file.is_some(),
                ),
            ] {
                if !value {
                    bail!("classifier.mode = \"remote\" requires classifier.{field}");
                }
            }
        }
        _ => {}
    }

    let mut groups = Vec::new();
    for (name, codes) in &raw.groups {
        let mut members = Vec::new();
        for code in codes {
            let party: PartyLabel = code
                .parse()
                .map_err(|_| anyhow::anyhow!("group {name:?}: unknown party code {code:?}"))?;
            members.push(party);
        }
        groups.push((name.clone(), members));
    }

    Ok(RunConfig {
        output_dir: resolve(&base, &raw.output_dir),
        collection_year: raw.collection_year,
        since: raw.window.since,
        until: raw.window.until,
        feeds: raw.feeds,
        fetch_policy,
        snapshot_dir: raw.fetch.snapshot_dir.as_deref().map(|p| resolve(&base, p)),
        respect_robots: raw.fetch.respect_robots.unwrap_or(true),
        vocab,
        mode,
        lexicon_dir: raw.classifier.lexicon_dir.as_deref().map(|p| resolve(&base, p)),
        program_dir: raw.classifier.program_dir.as_deref().map(|p| resolve(&base, p)),
        annotations_file: raw
            .classifier
            .annotations_file
            .as_deref()
            .map(|p| resolve(&base, p)),
        endpoint_url: raw.classifier.endpoint_url,
        model_id: raw.classifier.model_id,
        credential_env: raw.classifier.credential_env,
        parallelism: raw.classifier.parallelism.unwrap_or(4),
        template_id: raw
            .classifier
            .template_id
            .unwrap_or_else(|| "default".to_string()),
        sample_size: raw.annotate.sample_size,
        sample_seed: raw.annotate.seed,
        groups,
    })
}
