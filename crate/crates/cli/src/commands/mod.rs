pub mod annotate;
pub mod build_ks;
pub mod evaluate;
pub mod repro;
pub mod translate;

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{anyhow, Context, Result};

use annotare_core::matcher::{FilterMode, HeadPosition, MatchOptions};
use annotare_core::textprep::{normalize, read_corpus, Document, NormalizationTable};
use annotare_core::thesaurus::KnowledgeSource;
use annotare_core::variants::VariantGenerator;

pub(crate) fn open_buffered(path: &Path) -> Result<BufReader<File>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(BufReader::new(file))
}

pub(crate) fn load_ks(path: &Path) -> Result<KnowledgeSource> {
    KnowledgeSource::load(path)
        .with_context(|| format!("loading knowledge source {}", path.display()))
}

pub(crate) fn load_corpus(path: &Path) -> Result<Vec<Document>> {
    read_corpus(open_buffered(path)?).with_context(|| format!("reading corpus {}", path.display()))
}

/// Applies the sentence normalization table to every document, if one is
/// given; otherwise the corpus passes through untouched.
pub(crate) fn normalized_corpus(
    docs: Vec<Document>,
    table_path: Option<&Path>,
) -> Result<Vec<Document>> {
    let Some(path) = table_path else {
        return Ok(docs);
    };
    let table = NormalizationTable::from_tsv(open_buffered(path)?)
        .with_context(|| format!("reading normalization table {}", path.display()))?;
    Ok(docs
        .into_iter()
        .map(|doc| normalize(&doc, &table).0)
        .collect())
}

/// A variant generator for `language`, loaded from optional suffix-rule and
/// lexicon files. With neither file this is the identity generator.
pub(crate) fn build_generator(
    language: &str,
    rules: Option<&Path>,
    lexicon: Option<&Path>,
) -> Result<VariantGenerator> {
    let mut generator = VariantGenerator::identity(language);
    if let Some(path) = rules {
        generator
            .load_rules_tsv(open_buffered(path)?)
            .with_context(|| format!("reading variant rules {}", path.display()))?;
    }
    if let Some(path) = lexicon {
        generator
            .load_lexicon_tsv(open_buffered(path)?)
            .with_context(|| format!("reading variant lexicon {}", path.display()))?;
    }
    Ok(generator)
}

pub(crate) fn parse_filter_mode(s: &str) -> Result<FilterMode> {
    match s {
        "relaxed" => Ok(FilterMode::Relaxed),
        "strict" => Ok(FilterMode::Strict),
        other => Err(anyhow!("unknown filter mode {other:?} (want relaxed|strict)")),
    }
}

pub(crate) fn parse_head_position(s: &str) -> Result<HeadPosition> {
    match s {
        "first" => Ok(HeadPosition::First),
        "last" => Ok(HeadPosition::Last),
        other => Err(anyhow!("unknown head position {other:?} (want first|last)")),
    }
}

/// Match options assembled from resolved settings; `filter_mode` fixes the
/// default score threshold, which `score_threshold` may then override.
pub(crate) fn assemble_match_options(
    filter_mode: Option<String>,
    ignore_word_order: bool,
    score_threshold: Option<u32>,
    head_position: Option<String>,
) -> Result<MatchOptions> {
    let mode = match filter_mode.as_deref() {
        Some(name) => parse_filter_mode(name)?,
        None => FilterMode::Relaxed,
    };
    let mut options = MatchOptions::with_mode(mode);
    options.ignore_word_order = ignore_word_order;
    if let Some(threshold) = score_threshold {
        options.score_threshold = threshold;
    }
    if let Some(name) = head_position.as_deref() {
        options.head_position = parse_head_position(name)?;
    }
    options.validate()?;
    Ok(options)
}
