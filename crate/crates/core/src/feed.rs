//! Category feed URL construction and RSS "backend" document parsing.
//!
//! The platform exposes one RSS backend per category, addressed as
//! `spip.php?page=backend&id_rubrique=<id>`. Items carry `dc:` metadata
//! (creator, date, language) alongside the usual title/link/guid triple.

use chrono::{DateTime, NaiveDateTime, Utc};
use quick_xml::events::Event;
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use url::Url;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeedError {
    #[error("invalid base url {url:?}: {reason}")]
    InvalidBaseUrl { url: String, reason: String },
    #[error("rubrique id must be >= 1")]
    InvalidRubrique,
    #[error("malformed XML at byte offset {offset}: {source}")]
    Xml {
        offset: u64,
        source: quick_xml::Error,
    },
}

/// One per-category feed endpoint from the run configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeedSource {
    pub base_url: Url,
    pub rubrique_id: u32,
    pub category_label: String,
}

impl FeedSource {
    pub fn new(base_url: &str, rubrique_id: u32, category_label: &str) -> Result<Self, FeedError> {
        let url = Url::parse(base_url).map_err(|e| FeedError::InvalidBaseUrl {
            url: base_url.to_string(),
            reason: e.to_string(),
        })?;
        if url.host_str().is_none() {
            return Err(FeedError::InvalidBaseUrl {
                url: base_url.to_string(),
                reason: "url has no host".to_string(),
            });
        }
        if rubrique_id == 0 {
            return Err(FeedError::InvalidRubrique);
        }
        Ok(FeedSource {
            base_url: url,
            rubrique_id,
            category_label: category_label.to_string(),
        })
    }
}

/// One RSS entry, normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedItem {
    pub title: String,
    pub link: Url,
    pub guid: String,
    pub guid_is_permalink: bool,
    pub published_at: Option<DateTime<Utc>>,
    pub author: Option<String>,
    /// Plain text: entities decoded, markup stripped (anchor text kept).
    pub description: String,
    pub language: String,
    pub category_label: String,
    pub category_url: Option<Url>,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedFeed {
    pub items: Vec<FeedItem>,
    pub warnings: Vec<String>,
}

/// Join the backend path and category query onto the source's base URL.
pub fn build_feed_url(source: &FeedSource) -> Url {
    let mut url = source
        .base_url
        .join("spip.php")
        .expect("base url with host always joins a relative path");
    url.set_query(Some(&format!(
        "page=backend&id_rubrique={}",
        source.rubrique_id
    )));
    url
}

#[derive(Debug, Default)]
struct ItemDraft {
    title: Option<String>,
    link: Option<String>,
    guid: Option<String>,
    guid_is_permalink: bool,
    date: Option<String>,
    creator: Option<String>,
    language: Option<String>,
    xml_lang: Option<String>,
    description: Option<String>,
}

/// Parse an RSS backend document into feed items, in document order.
///
/// Items missing a link or guid are skipped with a warning; timestamps in
/// any format other than ISO-8601 `...Z` are treated as absent with a
/// warning. Encoding comes from the XML declaration (UTF-8 default).
pub fn parse_feed(document: &[u8], source: &FeedSource) -> Result<ParsedFeed, FeedError> {
    let mut reader = Reader::from_reader(document);
    reader.config_mut().trim_text(true);

    let mut out = ParsedFeed::default();
    let mut draft: Option<ItemDraft> = None;
    let mut field: Option<String> = None;
    let mut buf = Vec::new();

    loop {
        let pos = reader.buffer_position();
        match reader.read_event_into(&mut buf) {
            Err(e) => return Err(FeedError::Xml { offset: pos, source: e }),
            Ok(Event::Eof) => break,
            Ok(Event::Start(ref e)) => {
                let name = local_name(e.name().as_ref(), &reader);
                if name == "item" {
                    let mut d = ItemDraft::default();
                    for attr in e.attributes().flatten() {
                        if attr.key.as_ref() == b"xml:lang" {
                            d.xml_lang =
                                Some(attr.decode_and_unescape_value(reader.decoder())
                                    .unwrap_or_default()
                                    .into_owned());
                        }
                    }
                    draft = Some(d);
                } else if let Some(d) = draft.as_mut() {
                    let qname = qualified_name(e.name().as_ref(), &reader);
                    field = Some(qname.clone());
                    if qname == "guid" {
                        for attr in e.attributes().flatten() {
                            if attr.key.as_ref().eq_ignore_ascii_case(b"ispermalink") {
                                let v = attr
                                    .decode_and_unescape_value(reader.decoder())
                                    .unwrap_or_default();
                                d.guid_is_permalink = v.eq_ignore_ascii_case("true");
                            }
                        }
                    }
                }
            }
            Ok(Event::Text(ref t)) => {
                if let (Some(d), Some(f)) = (draft.as_mut(), field.as_ref()) {
                    let text = t
                        .unescape()
                        .map_err(|e| FeedError::Xml { offset: pos, source: e })?
                        .into_owned();
                    let slot = match f.as_str() {
                        "title" => Some(&mut d.title),
                        "link" => Some(&mut d.link),
                        "guid" => Some(&mut d.guid),
                        "dc:date" => Some(&mut d.date),
                        "dc:creator" => Some(&mut d.creator),
                        "dc:language" | "language" => Some(&mut d.language),
                        "description" => Some(&mut d.description),
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
            Ok(Event::End(ref e)) => {
                let name = local_name(e.name().as_ref(), &reader);
                if name == "item" {
                    if let Some(d) = draft.take() {
                        finalize_item(d, source, &mut out);
                    }
                } else {
                    field = None;
                }
            }
            Ok(_) => {}
        }
        buf.clear();
    }
    Ok(out)
}

fn finalize_item(draft: ItemDraft, source: &FeedSource, out: &mut ParsedFeed) {
    let title = draft.title.unwrap_or_default();
    let link = match draft.link.as_deref().and_then(|l| Url::parse(l).ok()) {
        Some(l) => l,
        None => {
            out.warnings
                .push(format!("item {:?}: missing or invalid link, skipped", title));
            return;
        }
    };
    let guid = match draft.guid {
        Some(g) if !g.is_empty() => g,
        _ => {
            out.warnings
                .push(format!("item {:?}: missing guid, skipped", title));
            return;
        }
    };
    let published_at = match draft.date.as_deref() {
        None => None,
        Some(raw) => match parse_utc_timestamp(raw) {
            Some(ts) => Some(ts),
            None => {
                out.warnings.push(format!(
                    "item {:?}: unrecognized timestamp {:?}, treated as absent",
                    title, raw
                ));
                None
            }
        },
    };
    let raw_description = draft.description.unwrap_or_default();
    let category_url = extract_directory_link(&raw_description);
    let description = strip_markup(&raw_description);
    let language = draft
        .language
        .or(draft.xml_lang)
        .unwrap_or_else(|| "und".to_string());

    out.items.push(FeedItem {
        title,
        link,
        guid,
        guid_is_permalink: draft.guid_is_permalink,
        published_at,
        author: draft.creator,
        description,
        language,
        category_label: source.category_label.clone(),
        category_url,
    });
}

/// Only ISO-8601 with a `Z` suffix is accepted; anything else is absent.
fn parse_utc_timestamp(raw: &str) -> Option<DateTime<Utc>> {
    NaiveDateTime::parse_from_str(raw.trim(), "%Y-%m-%dT%H:%M:%SZ")
        .ok()
        .map(|naive| naive.and_utc())
}

fn local_name(raw: &[u8], reader: &Reader<&[u8]>) -> String {
    let full = reader.decoder().decode(raw).unwrap_or_default();
    full.rsplit(':').next().unwrap_or_default().to_string()
}

fn qualified_name(raw: &[u8], reader: &Reader<&[u8]>) -> String {
    reader.decoder().decode(raw).unwrap_or_default().into_owned()
}

/// Pull the `rel="directory"` anchor target out of a description's raw
/// (entity-decoded) markup, if present.
fn extract_directory_link(markup: &str) -> Option<Url> {
    let re = regex::Regex::new(r#"<a\s+href="([^"]+)"\s+rel="directory""#).expect("static regex");
    re.captures(markup)
        .and_then(|c| Url::parse(c.get(1).unwrap().as_str()).ok())
}

/// Strip markup tags from decoded description text, keeping inner text
/// (anchor labels survive). Whitespace is collapsed.
fn strip_markup(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut in_tag = false;
    for ch in text.chars() {
        match ch {
            '<' => in_tag = true,
            '>' => in_tag = false,
            c if !in_tag => out.push(c),
            _ => {}
        }
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn source() -> FeedSource {
        FeedSource::new("https://www.agoravox.fr", 31, "Política francesa").unwrap()
    }

    #[test]
    fn feed_url_matches_backend_pattern() {
        assert_eq!(
            build_feed_url(&source()).as_str(),
            "https://www.agoravox.fr/spip.php?page=backend&id_rubrique=31"
        );
        let other = FeedSource::new("https://example.org", 1, "x").unwrap();
        assert_eq!(
            build_feed_url(&other).as_str(),
            "https://example.org/spip.php?page=backend&id_rubrique=1"
        );
    }

    #[test]
    fn feed_url_injective_over_rubrique() {
        let urls: Vec<String> = (1..=20)
            .map(|id| {
                build_feed_url(&FeedSource::new("https://example.org", id, "x").unwrap())
                    .to_string()
            })
            .collect();
        let mut dedup = urls.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), urls.len());
    }

    #[test]
    fn invalid_base_url_is_rejected() {
        assert!(FeedSource::new("not-a-url", 31, "x").is_err());
        assert!(FeedSource::new("mailto:someone", 31, "x").is_err());
        assert!(FeedSource::new("https://example.org", 0, "x").is_err());
    }

    #[test]
    fn empty_channel_yields_no_items_and_no_warnings() {
        let doc = br#"<?xml version="1.0" encoding="UTF-8"?>
<rss version="2.0"><channel><title>empty</title></channel></rss>"#;
        let parsed = parse_feed(doc, &source()).unwrap();
        assert!(parsed.items.is_empty());
        assert!(parsed.warnings.is_empty());
    }

    #[test]
    fn item_without_guid_is_skipped_with_warning() {
        let doc = br#"<?xml version="1.0"?>
<rss version="2.0"><channel>
  <item><title>a</title><link>https://e.org/a</link><guid>g-a</guid></item>
  <item><title>b</title><link>https://e.org/b</link><guid>g-b</guid></item>
  <item><title>c</title><link>https://e.org/c</link></item>
  <item><title>d</title><link>https://e.org/d</link><guid>g-d</guid></item>
  <item><title>e</title><link>https://e.org/e</link><guid>g-e</guid></item>
</channel></rss>"#;
        let parsed = parse_feed(doc, &source()).unwrap();
        assert_eq!(parsed.items.len(), 4);
        assert_eq!(parsed.warnings.len(), 1);
        assert!(parsed.warnings[0].contains("guid"));
    }

    #[test]
    fn malformed_xml_reports_offset() {
        let doc = b"<rss><channel><item><title>x</wrong></item></channel></rss>";
        let err = parse_feed(doc, &source()).unwrap_err();
        match err {
            FeedError::Xml { offset, .. } => assert!(offset > 0),
            other => panic!("expected xml error, got {other:?}"),
        }
    }

    #[test]
    fn entities_decoded_and_markup_stripped() {
        let doc = br#"<rss version="2.0"><channel><item>
  <title>t</title><link>https://e.org/t</link><guid>g</guid>
  <description>c&#39;est &lt;a href="https://e.org/cat/" rel="directory"&gt;Politique&lt;/a&gt; &amp; co</description>
</item></channel></rss>"#;
        let parsed = parse_feed(doc, &source()).unwrap();
        let item = &parsed.items[0];
        assert_eq!(item.description, "c'est Politique & co");
        assert_eq!(
            item.category_url.as_ref().map(|u| u.as_str()),
            Some("https://e.org/cat/")
        );
    }

    #[test]
    fn non_iso_timestamp_becomes_absent_with_warning() {
        let doc = br#"<rss version="2.0"><channel><item>
  <title>t</title><link>https://e.org/t</link><guid>g</guid>
  <dc:date>Mon, 01 Jul 2024 10:00:00 GMT</dc:date>
</item></channel></rss>"#;
        let parsed = parse_feed(doc, &source()).unwrap();
        assert_eq!(parsed.items[0].published_at, None);
        assert_eq!(parsed.warnings.len(), 1);
    }

    #[test]
    fn determinism_same_bytes_same_items() {
        let doc = br#"<rss version="2.0"><channel>
  <item><title>a</title><link>https://e.org/a</link><guid>g-a</guid>
    <dc:date>2024-06-26T16:48:16Z</dc:date><dc:creator>A</dc:creator></item>
</channel></rss>"#;
        let a = parse_feed(doc, &source()).unwrap();
        let b = parse_feed(doc, &source()).unwrap();
        assert_eq!(a.items, b.items);
    }
}
