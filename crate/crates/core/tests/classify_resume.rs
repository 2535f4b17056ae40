//! Remote classification against a scripted endpoint stub: scripted replies
//! come back verbatim, a resumed run re-sends nothing (checked by counting
//! stub invocations), malformed replies degrade to Indeterminado with a
//! warning, and transport failures leave the comment unclassified.

use chrono::NaiveDate;
use opiniontrend::annotate::AnnotatedComment;
use opiniontrend::classify::{
    classify_corpus, read_results, ClassifyError, ClassifyMode, CompletionEndpoint, PartyProgram,
    SeedExample,
};
use opiniontrend::corpus::Article;
use opiniontrend::extract::CommentRecord;
use opiniontrend::labels::{PartyLabel, StanceLabel};
use opiniontrend::text::VocabPolicy;
use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Replies keyed on a marker token inside the prompt; every call counted.
struct ScriptedEndpoint {
    script: HashMap<&'static str, Result<&'static str, ()>>,
    calls: AtomicUsize,
    prompts: Mutex<Vec<String>>,
}

impl ScriptedEndpoint {
    fn new(script: HashMap<&'static str, Result<&'static str, ()>>) -> Self {
        ScriptedEndpoint {
            script,
            calls: AtomicUsize::new(0),
            prompts: Mutex::new(Vec::new()),
        }
    }

    fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl CompletionEndpoint for ScriptedEndpoint {
    fn complete(&self, prompt: &str) -> Result<String, ClassifyError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.prompts.lock().unwrap().push(prompt.to_string());
        for (marker, reply) in &self.script {
            if prompt.contains(marker) {
                return match reply {
                    Ok(text) => Ok(text.to_string()),
                    Err(()) => Err(ClassifyError::Transport("connection reset".into())),
                };
            }
        }
        panic!("no scripted reply matches prompt");
    }

    fn model_id(&self) -> &str {
        "stub-model"
    }
}

fn comment(id: &str, body: &str) -> CommentRecord {
    CommentRecord {
        comment_id: id.to_string(),
        author: "lecteur".to_string(),
        posted_at: None,
        star_rating: None,
        vote_count: None,
        body_text: body.to_string(),
        reply_to_author: None,
        permalink: None,
    }
}

fn fixture_articles() -> Vec<Article> {
    vec![Article {
        guid: "a1".to_string(),
        title: "Titre".to_string(),
        category_label: "Politique".to_string(),
        published_date: NaiveDate::from_ymd_opt(2024, 6, 24).unwrap(),
        summary: "Résumé".to_string(),
        comments: vec![
            comment("c1", "marqueur-un texte"),
            comment("c2", "marqueur-deux texte"),
            comment("c3", "marqueur-trois texte"),
            comment("c4", "marqueur-quatre texte"),
        ],
    }]
}

fn fixture_programs() -> Vec<PartyProgram> {
    vec![
        PartyProgram::parse(PartyLabel::Lfi, "Programme A\nTemas: paz\n\ncorps").unwrap(),
        PartyProgram::parse(PartyLabel::Rn, "Programme B\nTemas: nación\n\ncorps").unwrap(),
    ]
}

fn fixture_seed() -> Vec<(String, SeedExample)> {
    vec![(
        "a1#c4".to_string(),
        SeedExample {
            text: "marqueur-quatre texte".to_string(),
            stance: StanceLabel::Apoyo,
            party: PartyLabel::Ps,
            keywords: vec!["exemple".to_string()],
        },
    )]
}

fn fixture_gold() -> Vec<AnnotatedComment> {
    vec![AnnotatedComment {
        comment_ref: "a1#c4".to_string(),
        article_title: "Titre".to_string(),
        author: "lecteur".to_string(),
        stance: StanceLabel::Apoyo,
        party: PartyLabel::Ps,
        keywords: vec!["exemple".to_string()],
    }]
}

fn policy() -> VocabPolicy {
    VocabPolicy::new(0.0, 1.0, Default::default()).unwrap()
}

#[test]
fn scripted_replies_resume_and_failure_handling() {
    let script = HashMap::from([
        (
            "marqueur-un",
            Ok("Tipo: de apoyo | Inclinación: La Francia Insumisa (LFI) | Palabras_Clave: paix, ukraine"),
        ),
        // Unknown party: degrades to Indeterminado with a warning.
        (
            "marqueur-deux",
            Ok("Tipo: crítica | Inclinación: Parti Pirate | Palabras_Clave: abordage"),
        ),
        // Transport failure: the comment stays unclassified.
        ("marqueur-trois", Err(())),
    ]);
    let endpoint = ScriptedEndpoint::new(script);
    let articles = fixture_articles();
    let programs = fixture_programs();
    let seed = fixture_seed();
    let mode = ClassifyMode::Remote {
        endpoint: &endpoint,
        programs: &programs,
        seed: &seed,
        template_id: "default",
        parallelism: 2,
    };

    let dir = tempfile::tempdir().unwrap();
    let results_path = dir.path().join("results.jsonl");

    let summary = classify_corpus(&articles, &fixture_gold(), &mode, &policy(), &results_path)
        .unwrap();
    // Three non-gold comments hit the endpoint; the gold one never does.
    assert_eq!(endpoint.calls(), 3);
    assert_eq!(summary.total_comments, 4);
    assert_eq!(summary.classified, 3); // c1, c2, gold c4
    assert_eq!(summary.gold, 1);
    assert_eq!(summary.resumed, 0);
    assert_eq!(summary.failures.len(), 1);
    assert_eq!(summary.failures[0].0, "a1#c3");

    let results = read_results(&results_path).unwrap();
    assert_eq!(results.len(), 3);
    let by_ref: HashMap<&str, _> = results.iter().map(|r| (r.comment_ref.as_str(), r)).collect();

    let r1 = by_ref["a1#c1"];
    assert_eq!(r1.stance, StanceLabel::Apoyo);
    assert_eq!(r1.party, PartyLabel::Lfi);
    assert_eq!(r1.keywords, vec!["paix", "ukraine"]);
    assert_eq!(r1.source, "stub-model");

    let r2 = by_ref["a1#c2"];
    assert_eq!(r2.stance, StanceLabel::Critica);
    assert_eq!(r2.party, PartyLabel::Indeterminado);
    assert!(r2.raw_response.as_deref().unwrap().contains("warning"));

    let gold = by_ref["a1#c4"];
    assert_eq!(gold.source, "gold");
    assert_eq!(gold.party, PartyLabel::Ps);

    // Resume: the failed comment now succeeds, nothing else is re-sent.
    let script2 = HashMap::from([(
        "marqueur-trois",
        Ok("Tipo: pregunta | Inclinación: Agrupación Nacional (RN) | Palabras_Clave: vote"),
    )]);
    let endpoint2 = ScriptedEndpoint::new(script2);
    let mode2 = ClassifyMode::Remote {
        endpoint: &endpoint2,
        programs: &programs,
        seed: &seed,
        template_id: "default",
        parallelism: 2,
    };
    let summary2 =
        classify_corpus(&articles, &fixture_gold(), &mode2, &policy(), &results_path).unwrap();
    assert_eq!(endpoint2.calls(), 1);
    assert_eq!(summary2.resumed, 3);
    assert_eq!(summary2.classified, 1);
    assert!(summary2.failures.is_empty());

    let results = read_results(&results_path).unwrap();
    assert_eq!(results.len(), 4);

    // A third run with everything present sends zero requests.
    let endpoint3 = ScriptedEndpoint::new(HashMap::new());
    let mode3 = ClassifyMode::Remote {
        endpoint: &endpoint3,
        programs: &programs,
        seed: &seed,
        template_id: "default",
        parallelism: 2,
    };
    let summary3 =
        classify_corpus(&articles, &fixture_gold(), &mode3, &policy(), &results_path).unwrap();
    assert_eq!(endpoint3.calls(), 0);
    assert_eq!(summary3.resumed, 4);
    assert_eq!(summary3.classified, 0);
}

#[test]
fn prompts_embed_programs_and_examples() {
    let script = HashMap::from([(
        "marqueur",
        Ok("Tipo: información | Inclinación: Indeterminado | Palabras_Clave: "),
    )]);
    let endpoint = ScriptedEndpoint::new(script);
    let mut articles = fixture_articles();
    articles[0].comments.truncate(1);
    let programs = fixture_programs();
    let seed = fixture_seed();
    let mode = ClassifyMode::Remote {
        endpoint: &endpoint,
        programs: &programs,
        seed: &seed,
        template_id: "default",
        parallelism: 1,
    };
    let dir = tempfile::tempdir().unwrap();
    classify_corpus(&articles, &[], &mode, &policy(), &dir.path().join("r.jsonl")).unwrap();

    let prompts = endpoint.prompts.lock().unwrap();
    assert_eq!(prompts.len(), 1);
    let p = &prompts[0];
    assert!(p.contains("Programme A"));
    assert!(p.contains("Programme B"));
    assert!(p.contains("marqueur-quatre texte"), "seed example embedded");
    assert!(p.contains("== Comentario a clasificar =="));
}
