//! Command-line entry point. Exit codes: 0 success, 1 usage or
//! configuration error, 2 runtime failure.

mod config;
mod pipeline;
mod robots;
mod tables;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;
use tables::TableFormat;

#[derive(Parser)]
#[command(
    name = "opiniontrend",
    about = "Collect news-aggregator comments, classify their political stance and affinity, and report trend tables",
    version
)]
struct Cli {
    /// Path to the run configuration file.
    #[arg(short, long, global = true, default_value = "config.toml")]
    config: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Delimited,
    StructuredRecord,
}

#[derive(Subcommand)]
enum Command {
    /// Fetch the configured category feeds and keep items in the date window.
    FetchFeeds,
    /// Fetch the article pages behind the feed items and extract comments.
    Scrape,
    /// Deduplicate scraped articles into the corpus XML and record export.
    BuildCorpus,
    /// Sample a seed set of comments and write an annotation template.
    SampleAnnotate,
    /// Import a filled annotation table as gold labels.
    ImportAnnotations {
        /// Filled annotation TSV; defaults to classifier.annotations_file.
        file: Option<PathBuf>,
    },
    /// Classify every corpus comment (lexicon baseline or remote endpoint).
    Classify,
    /// Aggregate classification results into distributions and term lists.
    Analyze,
    /// Emit one chart-ready table file per analysis product.
    Report {
        #[arg(long, value_enum, default_value = "delimited")]
        format: FormatArg,
    },
    /// Run the whole pipeline end to end.
    RunAll,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Keep clap's help/version on stdout with success status.
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };

    let cfg = match config::load_config(&cli.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };

    let result = match cli.command {
        Command::FetchFeeds => pipeline::fetch_feeds(&cfg),
        Command::Scrape => pipeline::scrape(&cfg),
        Command::BuildCorpus => pipeline::build_corpus(&cfg),
        Command::SampleAnnotate => pipeline::sample_annotate(&cfg),
        Command::ImportAnnotations { file } => {
            pipeline::import_annotations_cmd(&cfg, file.as_deref())
        }
        Command::Classify => pipeline::classify(&cfg),
        Command::Analyze => pipeline::analyze(&cfg),
        Command::Report { format } => pipeline::report(
            &cfg,
            match format {
                FormatArg::Delimited => TableFormat::Delimited,
                FormatArg::StructuredRecord => TableFormat::StructuredRecord,
            },
        ),
        Command::RunAll => pipeline::run_all(&cfg),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
