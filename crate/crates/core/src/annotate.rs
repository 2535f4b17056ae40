//! Seed-set sampling and gold-annotation import/export.
//!
//! Annotations travel as tab-delimited UTF-8 with a header row so they can
//! be filled in with any spreadsheet tool and re-imported.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{Read, Write};
use thiserror::Error;

use crate::corpus::Article;
use crate::labels::{PartyLabel, StanceLabel};

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("corpus has no comments")]
    EmptyCorpus,
    #[error("unresolved comment ref {0:?}")]
    DanglingRef(String),
    #[error("missing mandatory column {0:?}")]
    MissingColumn(&'static str),
    #[error("line {line}: {message}")]
    Row { line: usize, message: String },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// One manually labeled comment (the Ilustración-10-style table row).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatedComment {
    pub comment_ref: String,
    pub article_title: String,
    pub author: String,
    pub stance: StanceLabel,
    pub party: PartyLabel,
    pub keywords: Vec<String>,
}

/// Pick up to `n` comment refs, stratified round-robin across articles so
/// the seed set spans many articles. Deterministic for a fixed seed.
pub fn sample_seed_set(
    articles: &[Article],
    n: usize,
    seed: u64,
) -> Result<Vec<String>, AnnotateError> {
    let total: usize = articles.iter().map(|a| a.comments.len()).sum();
    if total == 0 {
        return Err(AnnotateError::EmptyCorpus);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Per-article ref queues, comment order shuffled inside each article.
    let mut queues: Vec<Vec<String>> = articles
        .iter()
        .map(|a| {
            let mut refs: Vec<String> = a.comments.iter().map(|c| a.comment_ref(c)).collect();
            refs.shuffle(&mut rng);
            refs.reverse(); // pop() takes the shuffled front
            refs
        })
        .collect();

    let target = n.min(total);
    let mut picked = Vec::with_capacity(target);
    while picked.len() < target {
        let mut advanced = false;
        for queue in queues.iter_mut() {
            if picked.len() == target {
                break;
            }
            if let Some(r) = queue.pop() {
                picked.push(r);
                advanced = true;
            }
        }
        if !advanced {
            break;
        }
    }
    Ok(picked)
}

pub const TEMPLATE_COLUMNS: [&str; 7] = [
    "Comment_Ref",
    "Titulo",
    "Usuario",
    "Extracto",
    "Tipo",
    "Inclinación",
    "Palabras_Clave",
];

/// Write a fill-in annotation template for the given refs: context columns
/// plus empty Tipo/Inclinación/Palabras_Clave columns.
pub fn export_annotation_template(
    refs: &[String],
    articles: &[Article],
    out: impl Write,
) -> Result<(), AnnotateError> {
    let by_ref = index_comments(articles);
    let mut writer = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
    writer.write_record(TEMPLATE_COLUMNS)?;
    for r in refs {
        let (article, comment) = by_ref
            .get(r.as_str())
            .ok_or_else(|| AnnotateError::DanglingRef(r.clone()))?;
        writer.write_record([
            r.as_str(),
            &article.title,
            &comment.author,
            &excerpt(&comment.body_text, 80),
            "",
            "",
            "",
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Parse a filled annotation table. Accepts unaccented header variants and
/// `Palabras Clave` with a space. Label strings are normalized to enums;
/// an unknown label fails with its line number.
pub fn import_annotations(input: impl Read) -> Result<Vec<AnnotatedComment>, AnnotateError> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .flexible(true)
        .from_reader(input);

    let headers = reader.headers()?.clone();
    let col = |names: &[&str], label: &'static str| -> Result<usize, AnnotateError> {
        headers
            .iter()
            .position(|h| names.iter().any(|n| h.trim().eq_ignore_ascii_case(n)))
            .ok_or(AnnotateError::MissingColumn(label))
    };
    let usuario = col(&["Usuario"], "Usuario")?;
    let tipo = col(&["Tipo"], "Tipo")?;
    let inclinacion = col(&["Inclinación", "Inclinacion"], "Inclinación")?;
    let palabras = col(&["Palabras_Clave", "Palabras Clave"], "Palabras_Clave")?;
    let comment_ref = headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case("Comment_Ref"));
    let titulo = headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case("Titulo"));

    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2; // header is line 1
        let record = record?;
        let get = |idx: usize| record.get(idx).unwrap_or("").trim().to_string();

        let stance: StanceLabel = get(tipo).parse().map_err(|e| AnnotateError::Row {
            line,
            message: format!("{e}"),
        })?;
        let party: PartyLabel = get(inclinacion).parse().map_err(|e| AnnotateError::Row {
            line,
            message: format!("{e}"),
        })?;
        let keywords: Vec<String> = get(palabras)
            .split(',')
            .map(str::trim)
            .filter(|k| !k.is_empty())
            .map(str::to_string)
            .collect();

        out.push(AnnotatedComment {
            comment_ref: comment_ref.map(get).unwrap_or_default(),
            article_title: titulo.map(get).unwrap_or_default(),
            author: get(usuario),
            stance,
            party,
            keywords,
        });
    }
    Ok(out)
}

/// Serialize annotations back to the canonical TSV layout.
pub fn export_annotations(
    annotations: &[AnnotatedComment],
    out: impl Write,
) -> Result<(), AnnotateError> {
    let mut writer = csv::WriterBuilder::new().delimiter(b'\t').from_writer(out);
    writer.write_record([
        "Comment_Ref",
        "Titulo",
        "Usuario",
        "Tipo",
        "Inclinación",
        "Palabras_Clave",
    ])?;
    for a in annotations {
        writer.write_record([
            a.comment_ref.as_str(),
            &a.article_title,
            &a.author,
            a.stance.display_name(),
            a.party.display_name(),
            &a.keywords.join(", "),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

fn index_comments(
    articles: &[Article],
) -> HashMap<String, (&Article, &crate::extract::CommentRecord)> {
    let mut map = HashMap::new();
    for a in articles {
        for c in &a.comments {
            map.insert(a.comment_ref(c), (a, c));
        }
    }
    map
}

fn excerpt(text: &str, max_chars: usize) -> String {
    let flat: String = text
        .chars()
        .map(|c| if c == '\t' || c == '\n' { ' ' } else { c })
        .collect();
    flat.chars().take(max_chars).collect()
}
