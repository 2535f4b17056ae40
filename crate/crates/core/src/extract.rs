//! Article body and comment-thread extraction from fetched pages.
//!
//! The article lives in a container identified by `article`; scripts and
//! styles are stripped from it. Comments are blocks carrying the `comment`
//! class whose header line follows the pattern
//! `<author> <day> <month> <HH:MM> ★☆☆ (<n> votes)`.

use chrono::{NaiveDate, NaiveDateTime};
use regex::Regex;
use scraper::{ElementRef, Html, Node, Selector};
use serde::{Deserialize, Serialize};
use std::sync::OnceLock;
use thiserror::Error;
use url::Url;

use crate::fetch::RawPage;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("no article container found in {0}")]
    NoArticleContainer(Url),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleContent {
    pub url: Url,
    pub title: String,
    pub body_text: String,
    pub body_html_sanitized: String,
}

/// One comment with its vote metadata. `posted_at` is absent when the
/// header line could not be parsed (pages omit the year; it comes from the
/// collection window).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommentRecord {
    pub comment_id: String,
    pub author: String,
    pub posted_at: Option<NaiveDateTime>,
    pub star_rating: Option<u8>,
    pub vote_count: Option<u32>,
    pub body_text: String,
    pub reply_to_author: Option<String>,
    pub permalink: Option<Url>,
}

#[derive(Debug, Clone, Default)]
pub struct ExtractedComments {
    pub records: Vec<CommentRecord>,
    pub warnings: Vec<String>,
}

const FRENCH_MONTHS: [(&str, u32); 12] = [
    ("janvier", 1),
    ("février", 2),
    ("mars", 3),
    ("avril", 4),
    ("mai", 5),
    ("juin", 6),
    ("juillet", 7),
    ("août", 8),
    ("septembre", 9),
    ("octobre", 10),
    ("novembre", 11),
    ("décembre", 12),
];

fn month_number(name: &str) -> Option<u32> {
    let lower = name.to_lowercase();
    FRENCH_MONTHS
        .iter()
        .find(|(n, _)| *n == lower)
        .map(|(_, m)| *m)
}

fn header_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"^(?P<author>.+?)\s+(?P<day>\d{1,2})\s+(?P<month>\p{L}+)\s+(?P<h>\d{1,2}):(?P<m>\d{2})(?:\s+(?P<stars>[★☆]+)\s*\((?P<votes>\d+)\s+votes?\))?\s*$",
        )
        .expect("static regex")
    })
}

fn footer_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"^(Répondre|Signaler un abus|Lien permanent)(\s+(Répondre|Signaler un abus|Lien permanent))*$",
        )
        .expect("static regex")
    })
}

/// Locate the article container, drop script/style elements and return the
/// sanitized markup plus its plain text.
pub fn extract_article(page: &RawPage) -> Result<ArticleContent, ExtractError> {
    let html = String::from_utf8_lossy(&page.body);
    let doc = Html::parse_document(&html);

    let container = find_article_container(&doc)
        .ok_or_else(|| ExtractError::NoArticleContainer(page.url.clone()))?;

    let mut sanitized = String::new();
    serialize_sanitized(container, &mut sanitized);

    let title = select_first_text(container, "h1")
        .or_else(|| {
            let sel = Selector::parse("title").unwrap();
            doc.select(&sel).next().map(|t| normalize_ws(&t.text().collect::<String>()))
        })
        .unwrap_or_default();

    Ok(ArticleContent {
        url: page.url.clone(),
        title,
        body_text: element_plain_text(container, false),
        body_html_sanitized: sanitized,
    })
}

/// Pull comment blocks out of a page, in document order. Blocks whose
/// header cannot be parsed are still emitted, with the vote and time
/// fields absent and a warning recorded.
pub fn extract_comments(page: &RawPage, collection_year: i32) -> ExtractedComments {
    let html = String::from_utf8_lossy(&page.body);
    let doc = Html::parse_document(&html);
    let sel = Selector::parse(".comment").unwrap();

    let mut out = ExtractedComments::default();
    let blocks: Vec<ElementRef> = doc.select(&sel).collect();

    for (index, block) in blocks.iter().enumerate() {
        let text = element_lines_text(*block);
        let mut lines: Vec<&str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !footer_regex().is_match(l))
            .collect();
        if lines.is_empty() {
            out.warnings
                .push(format!("comment block {index}: empty, skipped"));
            continue;
        }
        let header = lines.remove(0);

        let author;
        let mut posted_at = None;
        let mut star_rating = None;
        let mut vote_count = None;

        if let Some(caps) = header_regex().captures(header) {
            author = caps["author"].trim().to_string();
            let day: u32 = caps["day"].parse().unwrap_or(0);
            let hour: u32 = caps["h"].parse().unwrap_or(0);
            let minute: u32 = caps["m"].parse().unwrap_or(0);
            match month_number(&caps["month"]) {
                Some(month) => {
                    posted_at = NaiveDate::from_ymd_opt(collection_year, month, day)
                        .and_then(|d| d.and_hms_opt(hour, minute, 0));
                    if posted_at.is_none() {
                        out.warnings.push(format!(
                            "comment block {index}: invalid date in header {header:?}"
                        ));
                    }
                }
                None => {
                    out.warnings.push(format!(
                        "comment block {index}: unknown month in header {header:?}"
                    ));
                }
            }
            if let (Some(stars), Some(votes)) = (caps.name("stars"), caps.name("votes")) {
                star_rating = Some(stars.as_str().chars().filter(|c| *c == '★').count() as u8);
                vote_count = votes.as_str().parse().ok();
            }
        } else {
            out.warnings.push(format!(
                "comment block {index}: unparseable header {header:?}"
            ));
            author = header.to_string();
        }

        // Leading @mention addresses another commenter; DOM nesting is the
        // fallback for thread linkage.
        let mut reply_to_author = None;
        if let Some(first) = lines.first() {
            if let Some(name) = first.strip_prefix('@') {
                if !name.trim().is_empty() {
                    reply_to_author = Some(name.trim().to_string());
                    lines.remove(0);
                }
            }
        }
        if reply_to_author.is_none() {
            reply_to_author = enclosing_comment_author(*block, &out.records);
        }

        let body_text = lines.join("\n");
        if author.is_empty() || body_text.trim().is_empty() {
            out.warnings.push(format!(
                "comment block {index}: missing author or body, skipped"
            ));
            continue;
        }

        let permalink = find_permalink(*block, &page.url);
        let comment_id = block
            .value()
            .attr("id")
            .map(str::to_string)
            .or_else(|| {
                permalink
                    .as_ref()
                    .and_then(|u| u.fragment().map(str::to_string))
            })
            .unwrap_or_else(|| format!("c{index}"));

        out.records.push(CommentRecord {
            comment_id,
            author,
            posted_at,
            star_rating,
            vote_count,
            body_text,
            reply_to_author,
            permalink,
        });
    }
    out
}

fn find_article_container(doc: &Html) -> Option<ElementRef<'_>> {
    let by_id = Selector::parse("#article").unwrap();
    if let Some(el) = doc.select(&by_id).next() {
        return Some(el);
    }
    let by_tag = Selector::parse("article").unwrap();
    doc.select(&by_tag).next()
}

fn select_first_text(root: ElementRef<'_>, selector: &str) -> Option<String> {
    let sel = Selector::parse(selector).unwrap();
    root.select(&sel)
        .next()
        .map(|el| normalize_ws(&el.text().collect::<String>()))
}

fn find_permalink(block: ElementRef<'_>, base: &Url) -> Option<Url> {
    let sel = Selector::parse("a").unwrap();
    for a in block.select(&sel) {
        let text = normalize_ws(&a.text().collect::<String>());
        if text.contains("Lien permanent") {
            if let Some(href) = a.value().attr("href") {
                return base.join(href).ok();
            }
        }
    }
    None
}

/// When a comment block is nested inside another block, the enclosing
/// comment's author is the implicit reply target.
fn enclosing_comment_author(
    block: ElementRef<'_>,
    previous: &[CommentRecord],
) -> Option<String> {
    let mut node = block.parent()?;
    loop {
        if let Some(el) = ElementRef::wrap(node) {
            if has_class(&el, "comment") {
                // The parent block was emitted before this nested one.
                let header = element_lines_text(el);
                let header_line = header.lines().map(str::trim).find(|l| !l.is_empty())?;
                return previous
                    .iter()
                    .find(|r| header_line.starts_with(&r.author))
                    .map(|r| r.author.clone());
            }
        }
        node = node.parent()?;
    }
}

fn has_class(el: &ElementRef<'_>, class: &str) -> bool {
    el.value()
        .attr("class")
        .map(|c| c.split_whitespace().any(|x| x == class))
        .unwrap_or(false)
}

const DROP_TAGS: [&str; 2] = ["script", "style"];
const LINE_TAGS: [&str; 8] = ["p", "div", "li", "br", "h1", "h2", "h3", "blockquote"];

/// Serialize an element subtree, dropping script and style elements.
/// Attribute order follows the source document.
fn serialize_sanitized(el: ElementRef<'_>, out: &mut String) {
    let name = el.value().name();
    if DROP_TAGS.contains(&name) {
        return;
    }
    out.push('<');
    out.push_str(name);
    for (k, v) in el.value().attrs() {
        out.push(' ');
        out.push_str(k);
        out.push_str("=\"");
        out.push_str(&escape_attr(v));
        out.push('"');
    }
    out.push('>');
    for child in el.children() {
        match child.value() {
            Node::Text(t) => out.push_str(&escape_text(t)),
            Node::Element(_) => {
                if let Some(child_el) = ElementRef::wrap(child) {
                    serialize_sanitized(child_el, out);
                }
            }
            _ => {}
        }
    }
    out.push_str("</");
    out.push_str(name);
    out.push('>');
}

/// Plain text of a subtree with block elements turned into line breaks and
/// whitespace normalized per line. Scripts/styles are excluded; nested
/// comment blocks are excluded when `skip_nested_comments` is set.
fn lines_text_inner(el: ElementRef<'_>, out: &mut String, skip_nested_comments: bool, root: bool) {
    let name = el.value().name();
    if DROP_TAGS.contains(&name) {
        return;
    }
    if skip_nested_comments && !root && has_class(&el, "comment") {
        return;
    }
    if name == "br" {
        out.push('\n');
        return;
    }
    for child in el.children() {
        match child.value() {
            Node::Text(t) => out.push_str(t),
            Node::Element(_) => {
                if let Some(child_el) = ElementRef::wrap(child) {
                    lines_text_inner(child_el, out, skip_nested_comments, false);
                }
            }
            _ => {}
        }
    }
    if LINE_TAGS.contains(&name) {
        out.push('\n');
    }
}

fn element_lines_text(el: ElementRef<'_>) -> String {
    let mut raw = String::new();
    lines_text_inner(el, &mut raw, true, true);
    normalize_lines(&raw)
}

fn element_plain_text(el: ElementRef<'_>, skip_nested: bool) -> String {
    let mut raw = String::new();
    lines_text_inner(el, &mut raw, skip_nested, true);
    normalize_lines(&raw)
}

fn normalize_lines(raw: &str) -> String {
    raw.lines()
        .map(normalize_ws)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}

fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn escape_text(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn escape_attr(s: &str) -> String {
    escape_text(s).replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::Utc;

    fn page(html: &str) -> RawPage {
        RawPage {
            url: Url::parse("https://example.org/article/1").unwrap(),
            fetched_at: Utc::now(),
            status: 200,
            body: html.as_bytes().to_vec(),
            content_type: "text/html".to_string(),
        }
    }

    const ARTICLE_PAGE: &str = r#"<html><head><title>doc title</title></head><body>
<div id="article">
  <h1>Macron: Il a vendu la France aux Américains</h1>
  <script>var tracker = 1;</script>
  <p>Révélations sur les réseaux américains.</p>
  <style>p { color: red; }</style>
  <p>Deuxième paragraphe.</p>
</div>
</body></html>"#;

    #[test]
    fn article_scripts_and_styles_removed() {
        let content = extract_article(&page(ARTICLE_PAGE)).unwrap();
        assert!(!content.body_html_sanitized.contains("script"));
        assert!(!content.body_html_sanitized.contains("tracker"));
        assert!(!content.body_html_sanitized.contains("color: red"));
        assert_eq!(content.title, "Macron: Il a vendu la France aux Américains");
        assert!(content.body_text.contains("Révélations"));
        assert!(!content.body_text.contains("tracker"));
    }

    #[test]
    fn missing_container_is_an_error() {
        let err = extract_article(&page("<html><body><p>rien</p></body></html>")).unwrap_err();
        assert!(matches!(err, ExtractError::NoArticleContainer(_)));
    }

    #[test]
    fn sanitization_is_idempotent_on_body_text() {
        let first = extract_article(&page(ARTICLE_PAGE)).unwrap();
        let again = extract_article(&page(&first.body_html_sanitized)).unwrap();
        assert_eq!(first.body_text, again.body_text);
        assert_eq!(first.body_html_sanitized, again.body_html_sanitized);
    }

    const COMMENTS_PAGE: &str = r#"<html><body>
<div class="comments">
  <div class="comment" id="comment-101">
    <p class="header">Eric F 26 juin 14:23 ★☆☆ (3 votes)</p>
    <p>@Fergus</p>
    <p>il est naturel que les instituts de sondage fassent leur job.</p>
    <p><a href="/article/1#comment-101">Lien permanent</a> Répondre Signaler un abus</p>
  </div>
  <div class="comment" id="comment-102">
    <p class="header">Fergus 26 juin 16:33 ★☆☆ (2 votes)</p>
    <p>Bonjour, Eric F. Ce scénario est possible.</p>
  </div>
</div>
</body></html>"#;

    #[test]
    fn parses_header_time_stars_votes_and_mention() {
        let out = extract_comments(&page(COMMENTS_PAGE), 2024);
        assert_eq!(out.records.len(), 2);
        assert!(out.warnings.is_empty());

        let first = &out.records[0];
        assert_eq!(first.author, "Eric F");
        assert_eq!(
            first.posted_at,
            NaiveDate::from_ymd_opt(2024, 6, 26).unwrap().and_hms_opt(14, 23, 0)
        );
        assert_eq!(first.star_rating, Some(1));
        assert_eq!(first.vote_count, Some(3));
        assert_eq!(first.reply_to_author.as_deref(), Some("Fergus"));
        assert_eq!(first.comment_id, "comment-101");
        assert!(first.permalink.is_some());

        let second = &out.records[1];
        assert_eq!(second.author, "Fergus");
        assert_eq!(second.star_rating, Some(1));
        assert_eq!(second.vote_count, Some(2));
        assert_eq!(second.reply_to_author, None);
    }

    #[test]
    fn page_without_comments_yields_empty_list() {
        let out = extract_comments(&page("<html><body><p>rien</p></body></html>"), 2024);
        assert!(out.records.is_empty());
    }

    #[test]
    fn garbled_header_emits_record_with_warning() {
        let html = r#"<div class="comment">
            <p>quelqu'un un jour</p>
            <p>contenu sans en-tête valable</p>
        </div>
        <div class="comment">
            <p>Anne 3 juin 09:12 ★★☆ (5 votes)</p>
            <p>texte</p>
        </div>
        <div class="comment">
            <p>Luc 4 juin 10:00</p>
            <p>sans votes</p>
        </div>
        <div class="comment">
            <p>Zoé 5 brumaire 11:00 ★☆☆ (1 votes)</p>
            <p>mois inconnu</p>
        </div>"#;
        let out = extract_comments(&page(html), 2024);
        assert_eq!(out.records.len(), 4);
        // garbled header + unknown month
        assert_eq!(out.warnings.len(), 2);
        let garbled = &out.records[0];
        assert_eq!(garbled.star_rating, None);
        assert_eq!(garbled.vote_count, None);
        assert_eq!(garbled.posted_at, None);
        let no_votes = &out.records[2];
        assert_eq!(no_votes.author, "Luc");
        assert!(no_votes.posted_at.is_some());
        assert_eq!(no_votes.star_rating, None);
        let bad_month = &out.records[3];
        assert_eq!(bad_month.posted_at, None);
        assert_eq!(bad_month.star_rating, Some(1));
    }

    #[test]
    fn nested_comment_falls_back_to_dom_parent_author() {
        let html = r#"<div class="comment">
            <p>Parent 1 juin 08:00 ★☆☆ (1 votes)</p>
            <p>premier</p>
            <div class="comment">
                <p>Enfant 1 juin 09:00 ★☆☆ (1 votes)</p>
                <p>réponse imbriquée</p>
            </div>
        </div>"#;
        let out = extract_comments(&page(html), 2024);
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.records[0].author, "Parent");
        assert!(!out.records[0].body_text.contains("imbriquée"));
        assert_eq!(out.records[1].reply_to_author.as_deref(), Some("Parent"));
    }

    #[test]
    fn extraction_is_deterministic() {
        let a = extract_comments(&page(COMMENTS_PAGE), 2024);
        let b = extract_comments(&page(COMMENTS_PAGE), 2024);
        assert_eq!(a.records, b.records);
    }

    #[test]
    fn vote_count_present_whenever_star_rating_present() {
        let out = extract_comments(&page(COMMENTS_PAGE), 2024);
        for r in &out.records {
            assert_eq!(r.star_rating.is_some(), r.vote_count.is_some());
        }
    }
}
