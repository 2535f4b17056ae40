//! Round-trip properties of the corpus XML schema over generated corpora.

use chrono::NaiveDate;
use opiniontrend::corpus::{parse_corpus, serialize_corpus, Article};
use opiniontrend::extract::CommentRecord;
use proptest::prelude::*;
use url::Url;

fn text_strategy() -> impl Strategy<Value = String> {
    // Includes XML-hostile characters and accented French text.
    proptest::string::string_regex("[a-zA-Zéèàçû&<>\" ]{0,40}")
        .unwrap()
        .prop_map(|s| s.trim().to_string())
}

fn comment_strategy() -> impl Strategy<Value = CommentRecord> {
    (
        "[a-z0-9-]{1,12}",
        "[A-Za-zéè ]{1,16}",
        proptest::option::of((0u8..=3, 0u32..100)),
        text_strategy().prop_filter("non-empty body", |s| !s.trim().is_empty()),
        proptest::option::of("[A-Za-z]{1,10}"),
        proptest::option::of(0i64..2000),
        proptest::bool::ANY,
    )
        .prop_map(
            |(id, author, stars_votes, body, reply, minutes, with_permalink)| CommentRecord {
                comment_id: id,
                author: author.trim().to_string() + "x",
                posted_at: minutes.map(|m| {
                    NaiveDate::from_ymd_opt(2024, 6, 24)
                        .unwrap()
                        .and_hms_opt(0, 0, 0)
                        .unwrap()
                        + chrono::Duration::minutes(m)
                }),
                star_rating: stars_votes.map(|(s, _)| s),
                vote_count: stars_votes.map(|(_, v)| v),
                body_text: body,
                reply_to_author: reply,
                permalink: with_permalink
                    .then(|| Url::parse("https://example.org/a#c1").unwrap()),
            },
        )
}

fn article_strategy(index: usize) -> impl Strategy<Value = Article> {
    (
        text_strategy(),
        text_strategy(),
        text_strategy(),
        0i64..1000,
        proptest::collection::vec(comment_strategy(), 0..5),
    )
        .prop_map(move |(title, category, summary, day_offset, comments)| Article {
            guid: format!("guid-{index}"),
            title,
            category_label: category,
            published_date: NaiveDate::from_ymd_opt(2023, 1, 1).unwrap()
                + chrono::Duration::days(day_offset),
            summary,
            comments,
        })
}

fn corpus_strategy() -> impl Strategy<Value = Vec<Article>> {
    (0usize..5).prop_flat_map(|n| {
        let articles: Vec<_> = (0..n).map(article_strategy).collect();
        articles
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(250))]

    #[test]
    fn parse_serialize_is_identity(corpus in corpus_strategy()) {
        let bytes = serialize_corpus(&corpus);
        let parsed = parse_corpus(&bytes).expect("serialized corpus parses");
        prop_assert_eq!(parsed, corpus);
    }

    #[test]
    fn reserialization_is_byte_stable(corpus in corpus_strategy()) {
        let first = serialize_corpus(&corpus);
        let second = serialize_corpus(&parse_corpus(&first).unwrap());
        prop_assert_eq!(first, second);
    }
}
