//! Pipeline stages. Each stage reads its predecessor's artifact from the
//! output directory and writes its own, so every intermediate step is
//! inspectable and each subcommand is idempotent over unchanged inputs.
//! Timestamps are confined to run.log.

use crate::config::{ClassifierMode, RunConfig};
use crate::robots::RobotsGate;
use crate::tables::{emit_tables, Product, TableFormat};
use anyhow::{anyhow, bail, Context, Result};
use chrono::Utc;
use opiniontrend::analysis::{
    affinity_distribution, distinctive_terms, program_topics, topic_interest, AffinityGroup,
    InterestMatrix,
};
use opiniontrend::annotate::{
    export_annotation_template, export_annotations, import_annotations, sample_seed_set,
    AnnotatedComment,
};
use opiniontrend::classify::{
    classify_corpus, coverage, load_lexicons, load_programs, read_results, ClassifyMode,
    HttpEndpoint, SeedExample,
};
use opiniontrend::corpus::{export_records, parse_corpus, serialize_corpus, Article, ArticleStore};
use opiniontrend::extract::{extract_article, extract_comments};
use opiniontrend::feed::{build_feed_url, parse_feed, FeedItem, FeedSource};
use opiniontrend::fetch::{
    fetch_page, FileTransport, HttpTransport, RateLimiter, SystemClock, Transport,
};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use url::Url;

pub struct Paths {
    pub feed_items: PathBuf,
    pub articles: PathBuf,
    pub corpus: PathBuf,
    pub corpus_records: PathBuf,
    pub template: PathBuf,
    pub annotations: PathBuf,
    pub results: PathBuf,
    pub analysis: PathBuf,
    pub tables_dir: PathBuf,
    pub run_log: PathBuf,
}

impl Paths {
    pub fn new(out: &Path) -> Self {
        Paths {
            feed_items: out.join("feed_items.jsonl"),
            articles: out.join("articles.jsonl"),
            corpus: out.join("corpus.xml"),
            corpus_records: out.join("corpus_records.jsonl"),
            template: out.join("annotation_template.tsv"),
            annotations: out.join("annotations.tsv"),
            results: out.join("results.jsonl"),
            analysis: out.join("analysis.json"),
            tables_dir: out.join("tables"),
            run_log: out.join("run.log"),
        }
    }
}

fn require(path: &Path, produced_by: &str) -> Result<()> {
    if !path.exists() {
        bail!(
            "missing artifact {}: run `opiniontrend {produced_by}` first",
            path.display()
        );
    }
    Ok(())
}

fn log_line(paths: &Paths, stage: &str, message: &str) -> Result<()> {
    let mut file = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&paths.run_log)?;
    writeln!(file, "{} [{stage}] {message}", Utc::now().to_rfc3339())?;
    Ok(())
}

fn make_transport(cfg: &RunConfig) -> Box<dyn Transport> {
    match &cfg.snapshot_dir {
        Some(dir) => Box::new(FileTransport::new(dir)),
        None => Box::new(HttpTransport::new()),
    }
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut body = String::new();
    for item in items {
        body.push_str(&serde_json::to_string(item)?);
        body.push('\n');
    }
    fs::write(path, body).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let raw =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    raw.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l)
                .with_context(|| format!("{} line {}: bad record", path.display(), i + 1))
        })
        .collect()
}

pub fn fetch_feeds(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.output_dir)?;
    let paths = Paths::new(&cfg.output_dir);
    if cfg.feeds.is_empty() {
        bail!("no [[feeds]] entries in the config");
    }
    let transport = make_transport(cfg);
    let clock = SystemClock::new();
    let limiter = RateLimiter::new(cfg.fetch_policy.min_interval_per_host);
    let mut robots = RobotsGate::new(cfg.respect_robots);

    let mut all_items: Vec<FeedItem> = Vec::new();
    let mut skipped_by_window = 0usize;
    for entry in &cfg.feeds {
        let source = FeedSource::new(&entry.base_url, entry.rubrique_id, &entry.category_label)
            .map_err(|e| anyhow!("feed {}: {e}", entry.base_url))?;
        let url = build_feed_url(&source);
        if !robots.allows(&url, &cfg.fetch_policy, &limiter, transport.as_ref(), &clock) {
            log_line(&paths, "fetch-feeds", &format!("robots exclusion skips {url}"))?;
            continue;
        }
        let fetched = fetch_page(&url, &cfg.fetch_policy, &limiter, transport.as_ref(), &clock)
            .with_context(|| format!("fetching feed {url}"))?;
        let parsed = parse_feed(&fetched.page.body, &source)
            .with_context(|| format!("parsing feed {url}"))?;
        for w in &parsed.warnings {
            log_line(&paths, "fetch-feeds", &format!("{url}: {w}"))?;
        }
        for item in parsed.items {
            let in_window = item
                .published_at
                .map(|t| (cfg.since..=cfg.until).contains(&t.date_naive()))
                .unwrap_or(true);
            if in_window {
                all_items.push(item);
            } else {
                skipped_by_window += 1;
            }
        }
    }
    write_jsonl(&paths.feed_items, &all_items)?;
    log_line(
        &paths,
        "fetch-feeds",
        &format!(
            "{} items kept, {skipped_by_window} outside {}..{}",
            all_items.len(),
            cfg.since,
            cfg.until
        ),
    )?;
    println!("fetch-feeds: {} items -> {}", all_items.len(), paths.feed_items.display());
    Ok(())
}

pub fn scrape(cfg: &RunConfig) -> Result<()> {
    let paths = Paths::new(&cfg.output_dir);
    require(&paths.feed_items, "fetch-feeds")?;
    let items: Vec<FeedItem> = read_jsonl(&paths.feed_items)?;

    let transport = make_transport(cfg);
    let clock = SystemClock::new();
    let limiter = RateLimiter::new(cfg.fetch_policy.min_interval_per_host);
    let mut robots = RobotsGate::new(cfg.respect_robots);

    let mut articles: Vec<Article> = Vec::new();
    for item in &items {
        if !robots.allows(
            &item.link,
            &cfg.fetch_policy,
            &limiter,
            transport.as_ref(),
            &clock,
        ) {
            log_line(&paths, "scrape", &format!("robots exclusion skips {}", item.link))?;
            continue;
        }
        let fetched = match fetch_page(
            &item.link,
            &cfg.fetch_policy,
            &limiter,
            transport.as_ref(),
            &clock,
        ) {
            Ok(f) => f,
            Err(e) => {
                log_line(&paths, "scrape", &format!("{}: {e}", item.link))?;
                continue;
            }
        };
        let content = match extract_article(&fetched.page) {
            Ok(c) => c,
            Err(e) => {
                log_line(&paths, "scrape", &format!("{}: {e}", item.link))?;
                continue;
            }
        };
        let extracted = extract_comments(&fetched.page, cfg.collection_year);
        for w in &extracted.warnings {
            log_line(&paths, "scrape", &format!("{}: {w}", item.link))?;
        }
        let title = if content.title.is_empty() {
            item.title.clone()
        } else {
            content.title
        };
        articles.push(Article {
            guid: item.guid.clone(),
            title,
            category_label: item.category_label.clone(),
            published_date: item.published_at.map(|t| t.date_naive()).unwrap_or(cfg.since),
            summary: item.description.clone(),
            comments: extracted.records,
        });
    }
    write_jsonl(&paths.articles, &articles)?;
    log_line(
        &paths,
        "scrape",
        &format!("{} of {} articles scraped", articles.len(), items.len()),
    )?;
    println!("scrape: {} articles -> {}", articles.len(), paths.articles.display());
    Ok(())
}

pub fn build_corpus(cfg: &RunConfig) -> Result<()> {
    let paths = Paths::new(&cfg.output_dir);
    require(&paths.articles, "scrape")?;
    let articles: Vec<Article> = read_jsonl(&paths.articles)?;

    let mut store = ArticleStore::new();
    for article in articles {
        store.upsert_article(article);
    }
    for note in store.revisions() {
        log_line(&paths, "build-corpus", note)?;
    }
    let deduped = store.into_articles();
    fs::write(&paths.corpus, serialize_corpus(&deduped))?;
    fs::write(&paths.corpus_records, export_records(&deduped))?;
    let comments: usize = deduped.iter().map(|a| a.comments.len()).sum();
    log_line(
        &paths,
        "build-corpus",
        &format!("{} articles, {comments} comments", deduped.len()),
    )?;
    println!(
        "build-corpus: {} articles, {comments} comments -> {}",
        deduped.len(),
        paths.corpus.display()
    );
    Ok(())
}

fn load_corpus(paths: &Paths) -> Result<Vec<Article>> {
    require(&paths.corpus, "build-corpus")?;
    let bytes = fs::read(&paths.corpus)?;
    parse_corpus(&bytes).with_context(|| format!("parsing {}", paths.corpus.display()))
}

pub fn sample_annotate(cfg: &RunConfig) -> Result<()> {
    let paths = Paths::new(&cfg.output_dir);
    let articles = load_corpus(&paths)?;
    let refs = sample_seed_set(&articles, cfg.sample_size, cfg.sample_seed)?;
    let file = fs::File::create(&paths.template)?;
    export_annotation_template(&refs, &articles, file)?;
    log_line(&paths, "sample-annotate", &format!("{} refs sampled", refs.len()))?;
    println!(
        "sample-annotate: {} rows -> {}",
        refs.len(),
        paths.template.display()
    );
    Ok(())
}

pub fn import_annotations_cmd(cfg: &RunConfig, input: Option<&Path>) -> Result<()> {
    let paths = Paths::new(&cfg.output_dir);
    fs::create_dir_all(&cfg.output_dir)?;
    let input = input
        .map(Path::to_path_buf)
        .or_else(|| cfg.annotations_file.clone())
        .ok_or_else(|| {
            anyhow!("no annotation file given: pass a path or set classifier.annotations_file")
        })?;
    require(&input, "sample-annotate (then fill the template)")?;
    let annotations = import_annotations(fs::File::open(&input)?)
        .with_context(|| format!("importing {}", input.display()))?;
    let out = fs::File::create(&paths.annotations)?;
    export_annotations(&annotations, out)?;
    log_line(
        &paths,
        "import-annotations",
        &format!("{} annotations from {}", annotations.len(), input.display()),
    )?;
    println!(
        "import-annotations: {} rows -> {}",
        annotations.len(),
        paths.annotations.display()
    );
    Ok(())
}

fn load_gold(cfg: &RunConfig, paths: &Paths) -> Result<Vec<AnnotatedComment>> {
    let source = if paths.annotations.exists() {
        Some(paths.annotations.clone())
    } else {
        cfg.annotations_file.clone()
    };
    match source {
        Some(p) if p.exists() => Ok(import_annotations(fs::File::open(&p)?)
            .with_context(|| format!("importing {}", p.display()))?),
        _ => Ok(Vec::new()),
    }
}

pub fn classify(cfg: &RunConfig) -> Result<()> {
    let paths = Paths::new(&cfg.output_dir);
    let articles = load_corpus(&paths)?;
    let gold = load_gold(cfg, &paths)?;

    let summary = match cfg.mode {
        ClassifierMode::Lexicon => {
            let dir = cfg.lexicon_dir.as_ref().expect("validated at load");
            let lexicons = load_lexicons(dir)
                .with_context(|| format!("loading lexicons from {}", dir.display()))?;
            if lexicons.len() < 2 {
                bail!(
                    "lexicon mode needs term files for at least two parties in {}",
                    dir.display()
                );
            }
            classify_corpus(
                &articles,
                &gold,
                &ClassifyMode::Lexicon { lexicons: &lexicons },
                &cfg.vocab,
                &paths.results,
            )?
        }
        ClassifierMode::Remote => {
            let program_dir = cfg.program_dir.as_ref().expect("validated at load");
            let programs = load_programs(program_dir)
                .with_context(|| format!("loading programs from {}", program_dir.display()))?;
            let url: Url = cfg
                .endpoint_url
                .as_ref()
                .expect("validated at load")
                .parse()
                .context("classifier.endpoint_url is not a valid URL")?;
            let endpoint = HttpEndpoint::new(
                url,
                cfg.model_id.as_ref().expect("validated at load"),
                cfg.credential_env.as_ref().expect("validated at load"),
            )?;
            let body_by_ref: HashMap<String, &str> = articles
                .iter()
                .flat_map(|a| {
                    a.comments
                        .iter()
                        .map(|c| (a.comment_ref(c), c.body_text.as_str()))
                })
                .collect();
            let seed: Vec<(String, SeedExample)> = gold
                .iter()
                .map(|g| {
                    let text = body_by_ref
                        .get(&g.comment_ref)
                        .ok_or_else(|| {
                            anyhow!("annotation ref {} not found in the corpus", g.comment_ref)
                        })?
                        .to_string();
                    Ok((
                        g.comment_ref.clone(),
                        SeedExample {
                            text,
                            stance: g.stance,
                            party: g.party,
                            keywords: g.keywords.clone(),
                        },
                    ))
                })
                .collect::<Result<_>>()?;
            if seed.is_empty() {
                bail!("remote mode needs a filled annotation file as the few-shot seed set");
            }
            classify_corpus(
                &articles,
                &gold,
                &ClassifyMode::Remote {
                    endpoint: &endpoint,
                    programs: &programs,
                    seed: &seed,
                    template_id: &cfg.template_id,
                    parallelism: cfg.parallelism,
                },
                &cfg.vocab,
                &paths.results,
            )?
        }
    };

    log_line(
        &paths,
        "classify",
        &format!(
            "{} total, {} classified, {} gold, {} resumed, {} failed",
            summary.total_comments,
            summary.classified,
            summary.gold,
            summary.resumed,
            summary.failures.len()
        ),
    )?;
    for (r, e) in &summary.failures {
        log_line(&paths, "classify", &format!("unclassified {r}: {e}"))?;
    }
    println!(
        "classify: {} classified, {} resumed, {} failed -> {}",
        summary.classified,
        summary.resumed,
        summary.failures.len(),
        paths.results.display()
    );
    if !summary.failures.is_empty() {
        eprintln!(
            "classify: {} comments left unclassified; rerun to retry them",
            summary.failures.len()
        );
    }
    Ok(())
}

/// Everything `analyze` computes, persisted as one JSON document.
#[derive(Debug, Serialize, Deserialize)]
pub struct AnalysisOutput {
    pub coverage: f64,
    /// Party code -> result count, Indeterminado included.
    pub affinity_distribution: BTreeMap<String, u64>,
    pub topic_interest: InterestMatrix,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program_topics: Option<InterestMatrix>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distinctive_terms: Option<Vec<(String, Vec<(String, u64)>)>>,
}

pub fn analyze(cfg: &RunConfig) -> Result<()> {
    let paths = Paths::new(&cfg.output_dir);
    let articles = load_corpus(&paths)?;
    require(&paths.results, "classify")?;
    let results = read_results(&paths.results)?;

    let coverage = coverage(&results)?;
    let distribution: BTreeMap<String, u64> = affinity_distribution(&results)?
        .into_iter()
        .map(|(party, count)| (party.code().to_string(), count))
        .collect();
    let topic = topic_interest(&results, &articles)?;

    let programs_matrix = match &cfg.program_dir {
        Some(dir) if dir.exists() => {
            let programs = load_programs(dir)?;
            if programs.is_empty() {
                None
            } else {
                Some(program_topics(&programs)?)
            }
        }
        _ => None,
    };

    let terms = if cfg.groups.is_empty() {
        None
    } else {
        let grouping: Vec<AffinityGroup> = cfg
            .groups
            .iter()
            .map(|(name, members)| AffinityGroup {
                name: name.clone(),
                members: members.iter().copied().collect(),
            })
            .collect();
        let report = distinctive_terms(&results, &grouping, &articles, &cfg.vocab)?;
        Some(report.groups)
    };

    let output = AnalysisOutput {
        coverage,
        affinity_distribution: distribution,
        topic_interest: topic,
        program_topics: programs_matrix,
        distinctive_terms: terms,
    };
    fs::write(&paths.analysis, serde_json::to_string_pretty(&output)? + "\n")?;
    log_line(&paths, "analyze", &format!("coverage {coverage:.4}"))?;
    println!("analyze: coverage {coverage:.4} -> {}", paths.analysis.display());
    Ok(())
}

pub fn report(cfg: &RunConfig, format: TableFormat) -> Result<()> {
    let paths = Paths::new(&cfg.output_dir);
    require(&paths.analysis, "analyze")?;
    let output: AnalysisOutput = serde_json::from_str(&fs::read_to_string(&paths.analysis)?)
        .with_context(|| format!("parsing {}", paths.analysis.display()))?;

    let mut products = vec![
        Product::Scalar {
            name: "coverage".to_string(),
            label: "coverage".to_string(),
            value: output.coverage,
        },
        Product::Distribution {
            name: "affinity_distribution".to_string(),
            rows: output.affinity_distribution.into_iter().collect(),
        },
        Product::Matrix {
            name: "topic_interest".to_string(),
            matrix: output.topic_interest,
        },
    ];
    if let Some(matrix) = output.program_topics {
        products.push(Product::Matrix {
            name: "program_topics".to_string(),
            matrix,
        });
    }
    if let Some(groups) = output.distinctive_terms {
        products.push(Product::TermLists {
            name: "distinctive_terms".to_string(),
            groups,
        });
    }

    let written = emit_tables(&products, format, &paths.tables_dir)?;
    // Self-check: matrix counts files must re-parse to consistent matrices.
    for path in &written {
        if path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with("_counts.tsv"))
        {
            let matrix = crate::tables::read_matrix(path)?;
            if !matrix.check_invariants() {
                bail!("emitted table {} violates share normalization", path.display());
            }
        }
    }
    log_line(&paths, "report", &format!("{} table files", written.len()))?;
    println!("report: {} files -> {}", written.len(), paths.tables_dir.display());
    Ok(())
}

pub fn run_all(cfg: &RunConfig) -> Result<()> {
    fetch_feeds(cfg)?;
    scrape(cfg)?;
    build_corpus(cfg)?;
    if cfg.annotations_file.is_some() {
        import_annotations_cmd(cfg, None)?;
    }
    classify(cfg)?;
    analyze(cfg)?;
    report(cfg, TableFormat::Delimited)?;
    Ok(())
}
