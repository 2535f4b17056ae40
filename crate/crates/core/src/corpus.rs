//! Corpus persistence: article store with guid deduplication, the corpus
//! XML schema (NOTICIA/TITULO/CATEGORIA/FECHA/RESUMEN/COMENTARIOS) and a
//! line-delimited export for analysis tools.

use chrono::{NaiveDate, NaiveDateTime};
use quick_xml::events::Event;
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;
use url::Url;

use crate::extract::CommentRecord;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed corpus XML at byte offset {offset}: {source}")]
    Xml {
        offset: u64,
        source: quick_xml::Error,
    },
    #[error("article {index}: missing mandatory element {element}")]
    MissingElement { index: usize, element: &'static str },
    #[error("article {index}: invalid {element} value {value:?}")]
    InvalidValue {
        index: usize,
        element: &'static str,
        value: String,
    },
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// One scraped article with its comments, keyed by feed guid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Article {
    pub guid: String,
    pub title: String,
    pub category_label: String,
    pub published_date: NaiveDate,
    pub summary: String,
    pub comments: Vec<CommentRecord>,
}

impl Article {
    /// Corpus-wide comment reference: guid and comment id joined by `#`.
    pub fn comment_ref(&self, comment: &CommentRecord) -> String {
        format!("{}#{}", self.guid, comment.comment_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpsertOutcome {
    Stored,
    Duplicate,
    Revised,
}

/// In-memory article store with single-writer semantics. Re-inserting an
/// identical article is a no-op; differing content under the same guid
/// updates in place and records a revision note.
#[derive(Debug, Default)]
pub struct ArticleStore {
    articles: Vec<Article>,
    index: HashMap<String, usize>,
    revisions: Vec<String>,
}

impl ArticleStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn upsert_article(&mut self, article: Article) -> UpsertOutcome {
        match self.index.get(&article.guid) {
            None => {
                self.index.insert(article.guid.clone(), self.articles.len());
                self.articles.push(article);
                UpsertOutcome::Stored
            }
            Some(&i) if self.articles[i] == article => UpsertOutcome::Duplicate,
            Some(&i) => {
                self.revisions
                    .push(format!("guid {}: content revised", article.guid));
                self.articles[i] = article;
                UpsertOutcome::Revised
            }
        }
    }

    pub fn articles(&self) -> &[Article] {
        &self.articles
    }

    pub fn revisions(&self) -> &[String] {
        &self.revisions
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn into_articles(self) -> Vec<Article> {
        self.articles
    }
}

const COMMENT_TIME_FMT: &str = "%Y-%m-%dT%H:%M:%S";

/// Serialize articles into the corpus XML schema. Output is deterministic
/// and stable under one serialize/parse/serialize round.
pub fn serialize_corpus(articles: &[Article]) -> Vec<u8> {
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<CORPUS>\n");
    for article in articles {
        out.push_str(&format!("  <NOTICIA guid=\"{}\">\n", xml_escape(&article.guid)));
        out.push_str(&format!("    <TITULO>{}</TITULO>\n", xml_escape(&article.title)));
        out.push_str(&format!(
            "    <CATEGORIA>{}</CATEGORIA>\n",
            xml_escape(&article.category_label)
        ));
        out.push_str(&format!(
            "    <FECHA>{}</FECHA>\n",
            article.published_date.format("%Y-%m-%d")
        ));
        out.push_str(&format!(
            "    <RESUMEN>{}</RESUMEN>\n",
            xml_escape(&article.summary)
        ));
        out.push_str("    <COMENTARIOS>\n");
        for c in &article.comments {
            out.push_str("      <COMENTARIO");
            out.push_str(&format!(" id=\"{}\"", xml_escape(&c.comment_id)));
            out.push_str(&format!(" autor=\"{}\"", xml_escape(&c.author)));
            if let Some(ts) = c.posted_at {
                out.push_str(&format!(" fecha=\"{}\"", ts.format(COMMENT_TIME_FMT)));
            }
            if let Some(stars) = c.star_rating {
                out.push_str(&format!(" estrellas=\"{stars}\""));
            }
            if let Some(votes) = c.vote_count {
                out.push_str(&format!(" votos=\"{votes}\""));
            }
            if let Some(reply) = &c.reply_to_author {
                out.push_str(&format!(" respuesta_a=\"{}\"", xml_escape(reply)));
            }
            if let Some(link) = &c.permalink {
                out.push_str(&format!(" permalink=\"{}\"", xml_escape(link.as_str())));
            }
            out.push('>');
            out.push_str(&xml_escape(&c.body_text));
            out.push_str("</COMENTARIO>\n");
        }
        out.push_str("    </COMENTARIOS>\n");
        out.push_str("  </NOTICIA>\n");
    }
    out.push_str("</CORPUS>\n");
    out.into_bytes()
}

#[derive(Debug, Default)]
struct ArticleDraft {
    guid: Option<String>,
    title: Option<String>,
    category: Option<String>,
    date: Option<String>,
    summary: Option<String>,
    comments: Vec<CommentRecord>,
}

/// Parse corpus XML back into articles. Inverse of [`serialize_corpus`].
pub fn parse_corpus(bytes: &[u8]) -> Result<Vec<Article>, CorpusError> {
    let mut reader = Reader::from_reader(bytes);
    reader.config_mut().trim_text(true);

    let mut articles = Vec::new();
    let mut draft: Option<ArticleDraft> = None;
    let mut field: Option<String> = None;
    let mut comment: Option<CommentRecord> = None;
    let mut buf = Vec::new();

    loop {
        let pos = reader.buffer_position();
        match reader.read_event_into(&mut buf) {
            Err(e) => return Err(CorpusError::Xml { offset: pos, source: e }),
            Ok(Event::Eof) => break,
            Ok(Event::Start(ref e)) => {
                let name = String::from_utf8_lossy(e.name().as_ref()).into_owned();
                match name.as_str() {
                    "NOTICIA" => {
                        let mut d = ArticleDraft::default();
                        for attr in e.attributes().flatten() {
                            if attr.key.as_ref() == b"guid" {
                                d.guid = Some(
                                    attr.decode_and_unescape_value(reader.decoder())
                                        .map_err(|err| CorpusError::Xml {
                                            offset: pos,
                                            source: err,
                                        })?
                                        .into_owned(),
                                );
                            }
                        }
                        draft = Some(d);
                    }
                    "COMENTARIO" => {
                        let index = articles.len();
                        comment = Some(parse_comment_attrs(e, &reader, index, pos)?);
                    }
                    _ => {
                        // Mandatory children may legitimately be empty
                        // elements; seeing the tag at all counts as present.
                        if let Some(d) = draft.as_mut() {
                            match name.as_str() {
                                "TITULO" => {
                                    d.title.get_or_insert_with(String::new);
                                }
                                "CATEGORIA" => {
                                    d.category.get_or_insert_with(String::new);
                                }
                                "FECHA" => {
                                    d.date.get_or_insert_with(String::new);
                                }
                                "RESUMEN" => {
                                    d.summary.get_or_insert_with(String::new);
                                }
                                _ => {}
                            }
                        }
                        field = Some(name);
                    }
                }
            }
            Ok(Event::Empty(ref e)) => {
                if e.name().as_ref() == b"COMENTARIO" {
                    // empty body is invalid; surface it at finalize time
                    let index = articles.len();
                    let mut c = parse_comment_attrs(e, &reader, index, pos)?;
                    c.body_text = String::new();
                    if let Some(d) = draft.as_mut() {
                        d.comments.push(c);
                    }
                }
            }
            Ok(Event::Text(ref t)) => {
                let text = t
                    .unescape()
                    .map_err(|e| CorpusError::Xml { offset: pos, source: e })?
                    .into_owned();
                if let Some(c) = comment.as_mut() {
                    c.body_text.push_str(&text);
                } else if let (Some(d), Some(f)) = (draft.as_mut(), field.as_ref()) {
                    let slot = match f.as_str() {
                        "TITULO" => Some(&mut d.title),
                        "CATEGORIA" => Some(&mut d.category),
                        "FECHA" => Some(&mut d.date),
                        "RESUMEN" => Some(&mut d.summary),
                        _ => None,
                    };
                    if let Some(slot) = slot {
                        match slot {
                            Some(existing) => existing.push_str(&text),
                            None => *slot = Some(text),
                        }
                    }
                }
            }
            Ok(Event::End(ref e)) => match e.name().as_ref() {
                b"COMENTARIO" => {
                    if let (Some(d), Some(c)) = (draft.as_mut(), comment.take()) {
                        d.comments.push(c);
                    }
                }
                b"NOTICIA" => {
                    if let Some(d) = draft.take() {
                        articles.push(finalize_article(d, articles.len())?);
                    }
                }
                _ => field = None,
            },
            Ok(_) => {}
        }
        buf.clear();
    }
    Ok(articles)
}

fn parse_comment_attrs(
    e: &quick_xml::events::BytesStart<'_>,
    reader: &Reader<&[u8]>,
    index: usize,
    pos: u64,
) -> Result<CommentRecord, CorpusError> {
    let mut c = CommentRecord {
        comment_id: String::new(),
        author: String::new(),
        posted_at: None,
        star_rating: None,
        vote_count: None,
        body_text: String::new(),
        reply_to_author: None,
        permalink: None,
    };
    for attr in e.attributes().flatten() {
        let value = attr
            .decode_and_unescape_value(reader.decoder())
            .map_err(|err| CorpusError::Xml { offset: pos, source: err })?
            .into_owned();
        match attr.key.as_ref() {
            b"id" => c.comment_id = value,
            b"autor" => c.author = value,
            b"fecha" => {
                c.posted_at = Some(
                    NaiveDateTime::parse_from_str(&value, COMMENT_TIME_FMT).map_err(|_| {
                        CorpusError::InvalidValue {
                            index,
                            element: "COMENTARIO fecha",
                            value: value.clone(),
                        }
                    })?,
                )
            }
            b"estrellas" => {
                c.star_rating = Some(value.parse().map_err(|_| CorpusError::InvalidValue {
                    index,
                    element: "COMENTARIO estrellas",
                    value: value.clone(),
                })?)
            }
            b"votos" => {
                c.vote_count = Some(value.parse().map_err(|_| CorpusError::InvalidValue {
                    index,
                    element: "COMENTARIO votos",
                    value: value.clone(),
                })?)
            }
            b"respuesta_a" => c.reply_to_author = Some(value),
            b"permalink" => {
                c.permalink = Some(Url::parse(&value).map_err(|_| CorpusError::InvalidValue {
                    index,
                    element: "COMENTARIO permalink",
                    value: value.clone(),
                })?)
            }
            _ => {}
        }
    }
    Ok(c)
}

fn finalize_article(d: ArticleDraft, index: usize) -> Result<Article, CorpusError> {
    let guid = d.guid.ok_or(CorpusError::MissingElement {
        index,
        element: "NOTICIA guid",
    })?;
    let title = d.title.ok_or(CorpusError::MissingElement {
        index,
        element: "TITULO",
    })?;
    let category_label = d.category.ok_or(CorpusError::MissingElement {
        index,
        element: "CATEGORIA",
    })?;
    let date_raw = d.date.ok_or(CorpusError::MissingElement {
        index,
        element: "FECHA",
    })?;
    let published_date =
        NaiveDate::parse_from_str(&date_raw, "%Y-%m-%d").map_err(|_| CorpusError::InvalidValue {
            index,
            element: "FECHA",
            value: date_raw.clone(),
        })?;
    let summary = d.summary.ok_or(CorpusError::MissingElement {
        index,
        element: "RESUMEN",
    })?;
    Ok(Article {
        guid,
        title,
        category_label,
        published_date,
        summary,
        comments: d.comments,
    })
}

/// One comment per line with its article context, as JSON records.
pub fn export_records(articles: &[Article]) -> String {
    let mut out = String::new();
    for article in articles {
        for c in &article.comments {
            let record = serde_json::json!({
                "ref": article.comment_ref(c),
                "titulo": article.title,
                "categoria": article.category_label,
                "fecha": article.published_date.format("%Y-%m-%d").to_string(),
                "resumen": article.summary,
                "usuario": c.author,
                "comentario": c.body_text,
                "estrellas": c.star_rating,
                "votos": c.vote_count,
                "respuesta_a": c.reply_to_author,
            });
            out.push_str(&record.to_string());
            out.push('\n');
        }
    }
    out
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn article(guid: &str) -> Article {
        Article {
            guid: guid.to_string(),
            title: "Macron: Il a vendu la France aux Américains".to_string(),
            category_label: "Política francesa".to_string(),
            published_date: NaiveDate::from_ymd_opt(2024, 6, 20).unwrap(),
            summary: "\"Il a vendu la France aux Américains\" : Révélations".to_string(),
            comments: vec![CommentRecord {
                comment_id: "c0".to_string(),
                author: "Eric F".to_string(),
                posted_at: NaiveDate::from_ymd_opt(2024, 6, 26)
                    .unwrap()
                    .and_hms_opt(14, 23, 0),
                star_rating: Some(1),
                vote_count: Some(3),
                body_text: "il est naturel & <prudent>".to_string(),
                reply_to_author: Some("Fergus".to_string()),
                permalink: None,
            }],
        }
    }

    #[test]
    fn upsert_is_idempotent_on_identical_guid() {
        let mut store = ArticleStore::new();
        assert_eq!(store.upsert_article(article("g1")), UpsertOutcome::Stored);
        assert_eq!(store.upsert_article(article("g1")), UpsertOutcome::Duplicate);
        assert_eq!(store.len(), 1);
    }

    #[test]
    fn distinct_guids_both_stored() {
        let mut store = ArticleStore::new();
        store.upsert_article(article("g1"));
        store.upsert_article(article("g2"));
        assert_eq!(store.len(), 2);
    }

    #[test]
    fn edited_content_updates_and_records_revision() {
        let mut store = ArticleStore::new();
        store.upsert_article(article("g1"));
        let mut edited = article("g1");
        edited.summary = "résumé édité".to_string();
        assert_eq!(store.upsert_article(edited), UpsertOutcome::Revised);
        assert_eq!(store.len(), 1);
        assert_eq!(store.revisions().len(), 1);
        assert_eq!(store.articles()[0].summary, "résumé édité");
    }

    #[test]
    fn round_trip_preserves_structure() {
        let articles = vec![article("g1")];
        let bytes = serialize_corpus(&articles);
        let parsed = parse_corpus(&bytes).unwrap();
        assert_eq!(parsed, articles);
    }

    #[test]
    fn serialization_is_byte_stable_after_one_pass() {
        let articles = vec![article("g1")];
        let first = serialize_corpus(&articles);
        let second = serialize_corpus(&parse_corpus(&first).unwrap());
        assert_eq!(first, second);
    }

    #[test]
    fn empty_corpus_round_trips() {
        let bytes = serialize_corpus(&[]);
        assert!(String::from_utf8_lossy(&bytes).contains("<CORPUS>"));
        assert!(parse_corpus(&bytes).unwrap().is_empty());
    }

    #[test]
    fn missing_mandatory_child_names_article_index() {
        let xml = br#"<?xml version="1.0"?><CORPUS>
<NOTICIA guid="g1"><TITULO>t</TITULO><CATEGORIA>c</CATEGORIA><FECHA>2024-06-20</FECHA><RESUMEN>r</RESUMEN><COMENTARIOS></COMENTARIOS></NOTICIA>
<NOTICIA guid="g2"><CATEGORIA>c</CATEGORIA><FECHA>2024-06-20</FECHA><RESUMEN>r</RESUMEN></NOTICIA>
</CORPUS>"#;
        match parse_corpus(xml) {
            Err(CorpusError::MissingElement { index, element }) => {
                assert_eq!(index, 1);
                assert_eq!(element, "TITULO");
            }
            other => panic!("expected missing element, got {other:?}"),
        }
    }

    #[test]
    fn export_records_one_line_per_comment() {
        let articles = vec![article("g1"), article("g2")];
        let export = export_records(&articles);
        assert_eq!(export.lines().count(), 2);
        let first: serde_json::Value = serde_json::from_str(export.lines().next().unwrap()).unwrap();
        assert_eq!(first["ref"], "g1#c0");
        assert_eq!(first["usuario"], "Eric F");
    }
}
