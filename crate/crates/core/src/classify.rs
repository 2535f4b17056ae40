//! Stance/affinity classification: few-shot prompting against a remote
//! completion endpoint with party programs injected as context, or a
//! deterministic lexicon baseline for offline runs.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;
use thiserror::Error;
use url::Url;

use crate::corpus::Article;
use crate::labels::{PartyLabel, StanceLabel};
use crate::text::{tokenize_clean, TokenizedText, VocabPolicy};

pub const LEXICON_SOURCE: &str = "lexicon";
pub const GOLD_SOURCE: &str = "gold";

#[derive(Debug, Error)]
pub enum ClassifyError {
    #[error("no party programs loaded")]
    NoPrograms,
    #[error("no few-shot seed examples")]
    NoSeedExamples,
    #[error("target comment is empty")]
    EmptyTarget,
    #[error("unknown prompt template {0:?}")]
    UnknownTemplate(String),
    #[error("duplicate program for party {0}")]
    DuplicateProgram(PartyLabel),
    #[error("program {0}: empty body")]
    EmptyProgramBody(String),
    #[error("lexicon {0}: no terms")]
    EmptyLexicon(String),
    #[error("need lexicons for at least two parties, got {0}")]
    TooFewLexicons(usize),
    #[error("endpoint credential not set: environment variable {0}")]
    MissingCredential(String),
    #[error("endpoint transport failed after retries: {0}")]
    Transport(String),
    #[error("malformed reply, cannot split fields: {0:?}")]
    MalformedReply(String),
    #[error("no results to compute coverage over")]
    EmptyResults,
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("results file line {line}: {source}")]
    ResultsFile {
        line: usize,
        source: serde_json::Error,
    },
}

/// A party's electoral program, used as injected prompt context.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartyProgram {
    pub party: PartyLabel,
    pub title: String,
    pub body: String,
    pub declared_topics: Vec<String>,
}

impl PartyProgram {
    /// Program file layout: title line, optional `Temas:` line with
    /// `;`-separated topic labels, blank line, body.
    pub fn parse(party: PartyLabel, raw: &str) -> Result<Self, ClassifyError> {
        let mut lines = raw.lines();
        let title = lines.next().unwrap_or("").trim().to_string();
        let mut declared_topics = Vec::new();
        let mut body_lines: Vec<&str> = Vec::new();
        for line in lines {
            if body_lines.is_empty() {
                if let Some(rest) = line.trim().strip_prefix("Temas:") {
                    declared_topics = rest
                        .split(';')
                        .map(str::trim)
                        .filter(|t| !t.is_empty())
                        .map(str::to_string)
                        .collect();
                    continue;
                }
                if line.trim().is_empty() {
                    continue;
                }
            }
            body_lines.push(line);
        }
        let body = body_lines.join("\n").trim().to_string();
        if body.is_empty() {
            return Err(ClassifyError::EmptyProgramBody(party.code().to_string()));
        }
        Ok(PartyProgram {
            party,
            title,
            body,
            declared_topics,
        })
    }
}

/// Load `<CODE>.txt` program files from a directory, in party order.
pub fn load_programs(dir: &Path) -> Result<Vec<PartyProgram>, ClassifyError> {
    let mut programs = Vec::new();
    for party in PartyLabel::PARTIES {
        let path = dir.join(format!("{}.txt", party.code()));
        if path.exists() {
            let raw = fs::read_to_string(&path)?;
            programs.push(PartyProgram::parse(party, &raw)?);
        }
    }
    Ok(programs)
}

/// A few-shot example: the comment text together with its gold labels.
#[derive(Debug, Clone)]
pub struct SeedExample {
    pub text: String,
    pub stance: StanceLabel,
    pub party: PartyLabel,
    pub keywords: Vec<String>,
}

pub const RESPONSE_SCHEMA: [&str; 3] = ["Tipo", "Inclinación", "Palabras_Clave"];

/// Deterministic rendering of one classification prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub system_preamble: String,
    pub context_docs: Vec<String>,
    pub few_shot_examples: Vec<String>,
    pub target: String,
    pub response_schema: [&'static str; 3],
}

const DEFAULT_PREAMBLE: &str = "Eres un analista político. A partir de los programas electorales \
incluidos como contexto y de los ejemplos anotados, clasifica el comentario final. Responde con \
una única línea con exactamente tres campos: \
`Tipo: <tipo> | Inclinación: <partido> | Palabras_Clave: <lista separada por comas>`.";

/// Assemble the prompt: programs in party order, seed examples in input
/// order. Rendering is byte-deterministic for identical inputs.
pub fn build_prompt(
    programs: &[PartyProgram],
    seed: &[SeedExample],
    comment: &str,
    template_id: &str,
) -> Result<PromptBundle, ClassifyError> {
    if programs.is_empty() {
        return Err(ClassifyError::NoPrograms);
    }
    if seed.is_empty() {
        return Err(ClassifyError::NoSeedExamples);
    }
    if comment.trim().is_empty() {
        return Err(ClassifyError::EmptyTarget);
    }
    if template_id != "default" {
        return Err(ClassifyError::UnknownTemplate(template_id.to_string()));
    }
    let mut seen = HashSet::new();
    for p in programs {
        if !seen.insert(p.party) {
            return Err(ClassifyError::DuplicateProgram(p.party));
        }
    }

    let mut ordered: Vec<&PartyProgram> = programs.iter().collect();
    ordered.sort_by_key(|p| p.party);
    let context_docs = ordered
        .iter()
        .map(|p| format!("Programa de {} — {}:\n{}", p.party.display_name(), p.title, p.body))
        .collect();

    let few_shot_examples = seed
        .iter()
        .map(|ex| {
            format!(
                "Comentario: {}\nTipo: {} | Inclinación: {} | Palabras_Clave: {}",
                ex.text,
                ex.stance.display_name(),
                ex.party.display_name(),
                ex.keywords.join(", ")
            )
        })
        .collect();

    Ok(PromptBundle {
        system_preamble: DEFAULT_PREAMBLE.to_string(),
        context_docs,
        few_shot_examples,
        target: comment.to_string(),
        response_schema: RESPONSE_SCHEMA,
    })
}

/// Render the bundle into the single prompt string sent to the endpoint.
pub fn render_prompt(bundle: &PromptBundle) -> String {
    let mut out = String::new();
    out.push_str(&bundle.system_preamble);
    out.push_str("\n\n== Contexto ==\n");
    for doc in &bundle.context_docs {
        out.push_str(doc);
        out.push_str("\n\n");
    }
    out.push_str("== Ejemplos ==\n");
    for ex in &bundle.few_shot_examples {
        out.push_str(ex);
        out.push_str("\n\n");
    }
    out.push_str("== Comentario a clasificar ==\nComentario: ");
    out.push_str(&bundle.target);
    out.push('\n');
    out
}

/// Predicted labels for one comment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub comment_ref: String,
    pub stance: StanceLabel,
    pub party: PartyLabel,
    pub keywords: Vec<String>,
    /// Remote model id, "lexicon" or "gold".
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
}

/// Text-in/text-out completion call. `complete` performs its own transport
/// retries; an error here means the comment stays unclassified.
pub trait CompletionEndpoint: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, ClassifyError>;
    fn model_id(&self) -> &str;
}

/// HTTP endpoint speaking a minimal JSON contract:
/// request `{"model": ..., "prompt": ...}`, reply `{"completion": ...}`.
/// The credential comes from an environment variable, never from config.
pub struct HttpEndpoint {
    url: Url,
    model_id: String,
    api_key: String,
    max_retries: u32,
    client: reqwest::blocking::Client,
}

impl HttpEndpoint {
    pub fn new(url: Url, model_id: &str, credential_env: &str) -> Result<Self, ClassifyError> {
        let api_key = std::env::var(credential_env)
            .map_err(|_| ClassifyError::MissingCredential(credential_env.to_string()))?;
        Ok(HttpEndpoint {
            url,
            model_id: model_id.to_string(),
            api_key,
            max_retries: 2,
            client: reqwest::blocking::Client::new(),
        })
    }
}

impl CompletionEndpoint for HttpEndpoint {
    fn complete(&self, prompt: &str) -> Result<String, ClassifyError> {
        let mut last_err = String::new();
        for _ in 0..=self.max_retries {
            let resp = self
                .client
                .post(self.url.clone())
                .bearer_auth(&self.api_key)
                .json(&serde_json::json!({ "model": self.model_id, "prompt": prompt }))
                .send();
            match resp {
                Ok(r) if r.status().is_success() => {
                    let value: serde_json::Value =
                        r.json().map_err(|e| ClassifyError::Transport(e.to_string()))?;
                    return value["completion"]
                        .as_str()
                        .map(str::to_string)
                        .ok_or_else(|| {
                            ClassifyError::Transport("reply lacks completion field".to_string())
                        });
                }
                Ok(r) => last_err = format!("status {}", r.status()),
                Err(e) => last_err = e.to_string(),
            }
        }
        Err(ClassifyError::Transport(last_err))
    }

    fn model_id(&self) -> &str {
        &self.model_id
    }
}

/// Parsed reply fields; `party_warning` is set when the party string was
/// unknown and fell back to Indeterminado.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReply {
    pub stance: StanceLabel,
    pub party: PartyLabel,
    pub keywords: Vec<String>,
    pub party_warning: Option<String>,
}

/// Parse the strict three-field reply line. A reply that cannot be split
/// into its labeled fields is an error; an unknown party inside an
/// otherwise well-formed reply degrades to Indeterminado with a warning.
pub fn parse_reply(raw: &str) -> Result<ParsedReply, ClassifyError> {
    let mut tipo = None;
    let mut inclinacion = None;
    let mut palabras = None;
    for line in raw.lines() {
        for field in line.split('|') {
            let field = field.trim();
            if let Some(v) = field.strip_prefix("Tipo:") {
                tipo = Some(v.trim().to_string());
            } else if let Some(v) = field.strip_prefix("Inclinación:") {
                inclinacion = Some(v.trim().to_string());
            } else if let Some(v) = field.strip_prefix("Palabras_Clave:") {
                palabras = Some(v.trim().to_string());
            }
        }
    }
    let (tipo, inclinacion, palabras) = match (tipo, inclinacion, palabras) {
        (Some(t), Some(i), Some(p)) => (t, i, p),
        _ => return Err(ClassifyError::MalformedReply(raw.to_string())),
    };
    let stance: StanceLabel = tipo
        .parse()
        .map_err(|_| ClassifyError::MalformedReply(raw.to_string()))?;
    let (party, party_warning) = match inclinacion.parse::<PartyLabel>() {
        Ok(p) => (p, None),
        Err(_) => (
            PartyLabel::Indeterminado,
            Some(format!("unknown party {inclinacion:?}")),
        ),
    };
    let keywords = palabras
        .split(',')
        .map(str::trim)
        .filter(|k| !k.is_empty())
        .map(str::to_string)
        .collect();
    Ok(ParsedReply {
        stance,
        party,
        keywords,
        party_warning,
    })
}

/// Send one prompt and parse the structured reply. The raw reply is kept
/// for audit; parse warnings are appended to it.
pub fn classify_remote(
    bundle: &PromptBundle,
    comment_ref: &str,
    endpoint: &dyn CompletionEndpoint,
) -> Result<ClassificationResult, ClassifyError> {
    let prompt = render_prompt(bundle);
    let raw = endpoint.complete(&prompt)?;
    let parsed = parse_reply(&raw)?;
    let raw_response = match &parsed.party_warning {
        Some(w) => format!("{raw}\n[warning: {w}]"),
        None => raw.clone(),
    };
    Ok(ClassificationResult {
        comment_ref: comment_ref.to_string(),
        stance: parsed.stance,
        party: parsed.party,
        keywords: parsed.keywords,
        source: endpoint.model_id().to_string(),
        raw_response: Some(raw_response),
    })
}

/// A party's term list for the lexicon baseline. Terms are matched
/// case-insensitively (accents preserved) as whole-token phrases.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartyLexicon {
    pub party: PartyLabel,
    /// Terms in file order; each is one or more whitespace-separated tokens.
    pub terms: Vec<String>,
}

impl PartyLexicon {
    pub fn parse(party: PartyLabel, raw: &str) -> Result<Self, ClassifyError> {
        let terms: Vec<String> = raw
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(str::to_string)
            .collect();
        if terms.is_empty() {
            return Err(ClassifyError::EmptyLexicon(party.code().to_string()));
        }
        Ok(PartyLexicon { party, terms })
    }
}

/// Load `<CODE>.txt` lexicon files from a directory, one term per line.
pub fn load_lexicons(dir: &Path) -> Result<Vec<PartyLexicon>, ClassifyError> {
    let mut lexicons = Vec::new();
    for party in PartyLabel::PARTIES {
        let path = dir.join(format!("{}.txt", party.code()));
        if path.exists() {
            let raw = fs::read_to_string(&path)?;
            lexicons.push(PartyLexicon::parse(party, &raw)?);
        }
    }
    Ok(lexicons)
}

fn phrase_tokens(term: &str) -> Vec<String> {
    term.split_whitespace().map(|t| t.to_lowercase()).collect()
}

fn count_phrase(tokens_lower: &[String], phrase: &[String]) -> usize {
    if phrase.is_empty() || phrase.len() > tokens_lower.len() {
        return 0;
    }
    tokens_lower
        .windows(phrase.len())
        .filter(|w| *w == phrase)
        .count()
}

/// Deterministic baseline: score each party by the number of lexicon
/// term/phrase occurrences in the comment; a unique maximum with at least
/// one match wins, anything else is Indeterminado. Stance is always
/// Información (the baseline does not infer stance).
pub fn classify_lexicon(
    comment: &TokenizedText,
    comment_ref: &str,
    lexicons: &[PartyLexicon],
) -> Result<ClassificationResult, ClassifyError> {
    let parties: HashSet<PartyLabel> = lexicons.iter().map(|l| l.party).collect();
    if parties.len() < 2 {
        return Err(ClassifyError::TooFewLexicons(parties.len()));
    }
    let tokens_lower: Vec<String> = comment.tokens.iter().map(|t| t.to_lowercase()).collect();

    // BTreeMap keys make the outcome independent of lexicon order.
    let mut scores: BTreeMap<PartyLabel, usize> = BTreeMap::new();
    let mut matched: BTreeMap<PartyLabel, Vec<String>> = BTreeMap::new();
    for lexicon in lexicons {
        let score = scores.entry(lexicon.party).or_default();
        let hits = matched.entry(lexicon.party).or_default();
        for term in &lexicon.terms {
            let n = count_phrase(&tokens_lower, &phrase_tokens(term));
            if n > 0 {
                *score += n;
                hits.push(term.clone());
            }
        }
    }

    let best = scores.iter().map(|(_, s)| *s).max().unwrap_or(0);
    let winners: Vec<PartyLabel> = scores
        .iter()
        .filter(|(_, s)| **s == best && best >= 1)
        .map(|(p, _)| *p)
        .collect();

    let (party, keywords) = match winners.as_slice() {
        [single] => {
            let mut hits = matched.remove(single).unwrap_or_default();
            hits.sort();
            hits.dedup();
            (*single, hits)
        }
        _ => (PartyLabel::Indeterminado, Vec::new()),
    };

    Ok(ClassificationResult {
        comment_ref: comment_ref.to_string(),
        stance: StanceLabel::Informacion,
        party,
        keywords,
        source: LEXICON_SOURCE.to_string(),
        raw_response: None,
    })
}

/// Fraction of results assigned a party other than Indeterminado.
/// Comments that errored out never reach the results list, so they are
/// excluded from both numerator and denominator by construction.
pub fn coverage(results: &[ClassificationResult]) -> Result<f64, ClassifyError> {
    if results.is_empty() {
        return Err(ClassifyError::EmptyResults);
    }
    let assigned = results
        .iter()
        .filter(|r| r.party != PartyLabel::Indeterminado)
        .count();
    Ok(assigned as f64 / results.len() as f64)
}

pub enum ClassifyMode<'a> {
    Remote {
        endpoint: &'a dyn CompletionEndpoint,
        programs: &'a [PartyProgram],
        seed: &'a [(String, SeedExample)],
        template_id: &'a str,
        parallelism: usize,
    },
    Lexicon {
        lexicons: &'a [PartyLexicon],
    },
}

#[derive(Debug, Default, Serialize)]
pub struct RunSummary {
    pub total_comments: usize,
    pub classified: usize,
    pub gold: usize,
    pub resumed: usize,
    pub failures: Vec<(String, String)>,
}

/// Classify every comment in the corpus, persisting results incrementally
/// as JSON lines so an interrupted run resumes without re-sending anything
/// already classified. Seed comments carry their gold labels forward.
pub fn classify_corpus(
    articles: &[Article],
    gold: &[crate::annotate::AnnotatedComment],
    mode: &ClassifyMode<'_>,
    policy: &VocabPolicy,
    results_path: &Path,
) -> Result<RunSummary, ClassifyError> {
    let existing = if results_path.exists() {
        read_results(results_path)?
    } else {
        Vec::new()
    };
    let done: HashSet<String> = existing.iter().map(|r| r.comment_ref.clone()).collect();
    let gold_by_ref: BTreeMap<&str, &crate::annotate::AnnotatedComment> =
        gold.iter().map(|a| (a.comment_ref.as_str(), a)).collect();

    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(results_path)?;

    let mut summary = RunSummary::default();
    let mut pending: Vec<(String, String)> = Vec::new(); // (ref, body)
    for article in articles {
        for comment in &article.comments {
            let r = article.comment_ref(comment);
            summary.total_comments += 1;
            if done.contains(&r) {
                summary.resumed += 1;
                continue;
            }
            if let Some(g) = gold_by_ref.get(r.as_str()) {
                let result = ClassificationResult {
                    comment_ref: r,
                    stance: g.stance,
                    party: g.party,
                    keywords: g.keywords.clone(),
                    source: GOLD_SOURCE.to_string(),
                    raw_response: None,
                };
                writeln!(file, "{}", serde_json::to_string(&result).unwrap())?;
                summary.gold += 1;
                summary.classified += 1;
                continue;
            }
            pending.push((r, comment.body_text.clone()));
        }
    }

    match mode {
        ClassifyMode::Lexicon { lexicons } => {
            for (r, body) in &pending {
                let tokenized = tokenize_clean(body, policy);
                let result = classify_lexicon(&tokenized, r, lexicons)?;
                writeln!(file, "{}", serde_json::to_string(&result).unwrap())?;
                summary.classified += 1;
            }
        }
        ClassifyMode::Remote {
            endpoint,
            programs,
            seed,
            template_id,
            parallelism,
        } => {
            let examples: Vec<SeedExample> = seed.iter().map(|(_, ex)| ex.clone()).collect();
            let workers = (*parallelism).max(1);
            // Bounded in-flight requests; chunk results land in input order.
            for chunk in pending.chunks(workers) {
                let outcomes: Vec<Result<ClassificationResult, ClassifyError>> =
                    std::thread::scope(|scope| {
                        let handles: Vec<_> = chunk
                            .iter()
                            .map(|(r, body)| {
                                let examples = &examples;
                                scope.spawn(move || {
                                    let bundle =
                                        build_prompt(programs, examples, body, template_id)?;
                                    classify_remote(&bundle, r, *endpoint)
                                })
                            })
                            .collect();
                        handles.into_iter().map(|h| h.join().unwrap()).collect()
                    });
                for ((r, _), outcome) in chunk.iter().zip(outcomes) {
                    match outcome {
                        Ok(result) => {
                            writeln!(file, "{}", serde_json::to_string(&result).unwrap())?;
                            summary.classified += 1;
                        }
                        Err(e) => summary.failures.push((r.clone(), e.to_string())),
                    }
                }
            }
        }
    }
    file.flush()?;
    Ok(summary)
}

/// Read a JSON-lines results file.
pub fn read_results(path: &Path) -> Result<Vec<ClassificationResult>, ClassifyError> {
    let raw = fs::read_to_string(path)?;
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|source| ClassifyError::ResultsFile {
                line: i + 1,
                source,
            })
        })
        .collect()
}
