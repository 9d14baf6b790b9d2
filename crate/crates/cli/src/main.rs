//! Command-line front end for the annotation engine: build a knowledge
//! source, translate and annotate corpora, evaluate against a gold
//! standard, and replay the two checked-in experiment pipelines.

mod commands;
mod config;
mod output;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{annotate, build_ks, evaluate, repro, translate};

/// Multilingual medical concept annotation over a thesaurus subset, with a
/// translate-then-annotate path and an exact-match evaluation harness.
#[derive(Parser)]
#[command(name = "annotare", version, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an indexed knowledge source from concept records.
    BuildKs(build_ks::BuildKsArgs),
    /// Annotate a corpus with concepts from a knowledge source.
    Annotate(annotate::AnnotateArgs),
    /// Translate a corpus with a glossary or an external service.
    Translate(translate::TranslateArgs),
    /// Score annotations against a gold standard and profile failures.
    Evaluate(evaluate::EvaluateArgs),
    /// Run the source-language fixture pipeline and diff expected outputs.
    ReproExp2(repro::ReproArgs),
    /// Run the translate-then-annotate fixture pipeline and diff expected
    /// outputs.
    ReproExp3(repro::ReproArgs),
}

/// Exit codes: 0 success, 1 contract violation (bad input content,
/// mismatched languages, failed diffs), 2 I/O failure (missing or
/// unreadable files).
fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::BuildKs(args) => build_ks::run(args),
        Command::Annotate(args) => annotate::run(args),
        Command::Translate(args) => translate::run(args),
        Command::Evaluate(args) => evaluate::run(args),
        Command::ReproExp2(args) => repro::run(repro::Experiment::Exp2, args),
        Command::ReproExp3(args) => repro::run(repro::Experiment::Exp3, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

/// I/O problems exit 2; everything else is a contract violation and exits 1.
fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    1
}
