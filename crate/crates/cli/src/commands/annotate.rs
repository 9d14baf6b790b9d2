//! `annotate`: run the matching pipeline over a corpus and write one
//! annotation per mapped concept as JSON Lines.

use std::path::PathBuf;

use anyhow::Result;
use clap::Args;

use annotare_core::matcher::{annotate_with_analysis, Annotation, MatchOptions, PhraseAnalysis};
use annotare_core::textprep::Document;
use annotare_core::thesaurus::KnowledgeSource;
use annotare_core::variants::VariantGenerator;

use crate::config::{required, FileConfig};
use crate::output::write_atomic;

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    /// key = value defaults for any flag below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Knowledge source file produced by build-ks.
    #[arg(long)]
    pub ks: Option<PathBuf>,
    /// Input corpus (JSON Lines documents).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Sentence normalization table (TSV) applied before matching.
    #[arg(long)]
    pub norm_table: Option<PathBuf>,
    /// Suffix-rule table (TSV) for variant generation.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    /// Word lexicon (TSV) for variant generation.
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    /// Candidate filter mode: relaxed | strict.
    #[arg(long)]
    pub filter_mode: Option<String>,
    /// Let term words match in any order.
    #[arg(long)]
    pub ignore_word_order: bool,
    /// Minimum aggregate score a mapping must reach (0..=1000).
    #[arg(long)]
    pub score_threshold: Option<u32>,
    /// Phrase head position: first | last.
    #[arg(long)]
    pub head_position: Option<String>,
    /// Also write every phrase's ranked mappings (JSON Lines) here.
    #[arg(long)]
    pub all_mappings: Option<PathBuf>,
    /// Output annotations file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Runs the matcher over every document, concatenating annotations (and
/// phrase analyses) in corpus order.
pub fn annotate_corpus(
    ks: &KnowledgeSource,
    docs: &[Document],
    generator: &VariantGenerator,
    options: &MatchOptions,
) -> Result<(Vec<Annotation>, Vec<PhraseAnalysis>)> {
    let mut annotations = Vec::new();
    let mut analyses = Vec::new();
    for doc in docs {
        let (mut doc_annotations, mut doc_analyses) =
            annotate_with_analysis(ks, doc, generator, options)?;
        annotations.append(&mut doc_annotations);
        analyses.append(&mut doc_analyses);
    }
    Ok((annotations, analyses))
}

pub fn annotations_bytes(annotations: &[Annotation]) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    annotare_core::matcher::write_annotations(&mut bytes, annotations)?;
    Ok(bytes)
}

pub fn analyses_bytes(analyses: &[PhraseAnalysis]) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    for analysis in analyses {
        serde_json::to_writer(&mut bytes, analysis)?;
        bytes.push(b'\n');
    }
    Ok(bytes)
}

pub fn run(args: AnnotateArgs) -> Result<()> {
    let cfg = FileConfig::load_optional(args.config.as_deref())?;
    let ks_path = required(cfg.resolve_path(args.ks, "ks"), "ks")?;
    let corpus_path = required(cfg.resolve_path(args.corpus, "corpus"), "corpus")?;
    let out_path = required(cfg.resolve_path(args.out, "out"), "out")?;
    let norm_table = cfg.resolve_path(args.norm_table, "norm-table");
    let rules = cfg.resolve_path(args.rules, "rules");
    let lexicon = cfg.resolve_path(args.lexicon, "lexicon");
    let all_mappings = cfg.resolve_path(args.all_mappings, "all-mappings");
    let options = super::assemble_match_options(
        cfg.resolve(args.filter_mode, "filter-mode")?,
        cfg.resolve_switch(args.ignore_word_order, "ignore-word-order")?,
        cfg.resolve(args.score_threshold, "score-threshold")?,
        cfg.resolve(args.head_position, "head-position")?,
    )?;

    let ks = super::load_ks(&ks_path)?;
    let docs = super::normalized_corpus(super::load_corpus(&corpus_path)?, norm_table.as_deref())?;
    let generator = super::build_generator(ks.language(), rules.as_deref(), lexicon.as_deref())?;

    let (annotations, analyses) = annotate_corpus(&ks, &docs, &generator, &options)?;

    write_atomic(&out_path, &annotations_bytes(&annotations)?)?;
    if let Some(path) = all_mappings {
        write_atomic(&path, &analyses_bytes(&analyses)?)?;
    }

    println!(
        "annotated {} document(s): {} annotation(s) -> {}",
        docs.len(),
        annotations.len(),
        out_path.display()
    );
    Ok(())
}
