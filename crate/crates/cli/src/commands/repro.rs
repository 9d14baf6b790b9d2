//! `repro-exp2` / `repro-exp3`: run the two checked-in experiment
//! pipelines end to end from the fixtures directory and byte-compare every
//! artifact against the expected outputs. `--bless` regenerates the
//! expected files instead.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use clap::Args;

use annotare_core::eval::{check_alignment, load_gold_tsv, BackTranslationCheck, SlangList};
use annotare_core::matcher::MatchOptions;
use annotare_core::thesaurus::{
    build_knowledge_source, parse_concept_records, BuildOptions, KnowledgeSource, SemanticGroupDef,
};
use annotare_core::translation::GlossaryTranslator;

use crate::config::FileConfig;
use crate::output::write_atomic;

use super::annotate::{annotate_corpus, annotations_bytes};
use super::evaluate::{evaluate_run, failures_tsv_bytes, report_json_bytes};
use super::translate::{corpus_bytes, translate_corpus};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Exp2,
    Exp3,
}

impl Experiment {
    fn name(&self) -> &'static str {
        match self {
            Experiment::Exp2 => "exp2",
            Experiment::Exp3 => "exp3",
        }
    }
}

#[derive(Debug, Args)]
pub struct ReproArgs {
    /// key = value defaults for any flag below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory holding the experiment inputs and expected outputs.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Directory the artifacts are written to.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Rewrite the expected outputs from this run instead of comparing.
    #[arg(long)]
    pub bless: bool,
}

const TRANSLATION_SEED: u64 = 17;
const ALPHA: f64 = 0.5;

fn build_ks_from(
    records_path: &Path,
    language: &str,
    group: Option<&SemanticGroupDef>,
) -> Result<KnowledgeSource> {
    let records = parse_concept_records(super::open_buffered(records_path)?)
        .with_context(|| format!("parsing {}", records_path.display()))?;
    Ok(build_knowledge_source(
        &records,
        language,
        group,
        &BuildOptions {
            fold_accents: false,
        },
    )?)
}

/// Runs one experiment pipeline, returning `(file name, bytes)` artifacts
/// in a fixed order.
fn run_pipeline(experiment: Experiment, fixtures: &Path) -> Result<Vec<(String, Vec<u8>)>> {
    let fixture = |name: &str| fixtures.join(name);
    let options = MatchOptions::relaxed();

    let it_ks = build_ks_from(
        &fixture("it_concepts.psv"),
        "it",
        Some(&SemanticGroupDef::disorders()),
    )?;
    let docs = super::normalized_corpus(
        super::load_corpus(&fixture("exp2_corpus.jsonl"))?,
        Some(&fixture("it_norm_table.tsv")),
    )?;

    let mut artifacts: Vec<(String, Vec<u8>)> = Vec::new();
    match experiment {
        Experiment::Exp2 => {
            let identity = super::build_generator("it", None, None)?;
            let (annotations, _) = annotate_corpus(&it_ks, &docs, &identity, &options)?;

            let gold = load_gold_tsv(&fixture("exp2_gold.tsv"))?;
            check_alignment(&gold, &docs)
                .context("exp2 gold standard does not align with the normalized corpus")?;

            let alt = super::build_generator("it", Some(&fixture("it_rules.tsv")), None)?;
            let slang = SlangList::load(&fixture("it_slang.txt"))?;
            let outcome = evaluate_run(
                &gold,
                &annotations,
                &it_ks,
                ALPHA,
                annotare_core::eval::RecallDenominator::All,
                &alt,
                None,
                &slang,
                &options,
            )?;

            artifacts.push(("normalized.jsonl".into(), corpus_bytes(&docs)?));
            artifacts.push(("annotations.jsonl".into(), annotations_bytes(&annotations)?));
            artifacts.push(("report.json".into(), report_json_bytes(&outcome.report)?));
            artifacts.push(("failures.tsv".into(), failures_tsv_bytes(&outcome.failures)));
        }
        Experiment::Exp3 => {
            let en_ks = build_ks_from(&fixture("en_concepts.psv"), "en", None)?;
            let glossary =
                GlossaryTranslator::load_tsv("it", "en", &fixture("glossary_it_en.tsv"))?;
            let (translated, _) = translate_corpus(&docs, &glossary, TRANSLATION_SEED)?;

            let generator = super::build_generator("en", Some(&fixture("en_rules.tsv")), None)?;
            let (annotations, _) = annotate_corpus(&en_ks, &translated, &generator, &options)?;

            let gold = load_gold_tsv(&fixture("exp3_gold.tsv"))?;
            check_alignment(&gold, &translated)
                .context("exp3 gold standard does not align with the translated corpus")?;

            let back_glossary =
                GlossaryTranslator::load_tsv("en", "it", &fixture("back_glossary_en_it.tsv"))?;
            let back_check = BackTranslationCheck {
                glossary: &back_glossary,
                source_ks: &it_ks,
            };
            let slang = SlangList::load(&fixture("en_slang.txt"))?;
            let outcome = evaluate_run(
                &gold,
                &annotations,
                &en_ks,
                ALPHA,
                annotare_core::eval::RecallDenominator::All,
                &generator,
                Some(&back_check),
                &slang,
                &options,
            )?;

            artifacts.push(("translated.jsonl".into(), corpus_bytes(&translated)?));
            artifacts.push(("annotations.jsonl".into(), annotations_bytes(&annotations)?));
            artifacts.push(("report.json".into(), report_json_bytes(&outcome.report)?));
            artifacts.push(("failures.tsv".into(), failures_tsv_bytes(&outcome.failures)));
        }
    }
    Ok(artifacts)
}

pub fn run(experiment: Experiment, args: ReproArgs) -> Result<()> {
    let cfg = FileConfig::load_optional(args.config.as_deref())?;
    let fixtures = cfg
        .resolve_path(args.fixtures, "fixtures")
        .unwrap_or_else(|| PathBuf::from("fixtures"));
    let out_dir = cfg
        .resolve_path(args.out, "out")
        .unwrap_or_else(|| PathBuf::from("repro-out").join(experiment.name()));
    let bless = cfg.resolve_switch(args.bless, "bless")?;
    let expected_dir = fixtures.join("expected").join(experiment.name());

    let artifacts = run_pipeline(experiment, &fixtures)?;

    for (name, bytes) in &artifacts {
        write_atomic(&out_dir.join(name), bytes)?;
    }

    if bless {
        for (name, bytes) in &artifacts {
            write_atomic(&expected_dir.join(name), bytes)?;
        }
        println!(
            "{}: blessed {} expected file(s) into {}",
            experiment.name(),
            artifacts.len(),
            expected_dir.display()
        );
        return Ok(());
    }

    let mut mismatches = Vec::new();
    for (name, bytes) in &artifacts {
        let expected_path = expected_dir.join(name);
        let expected = std::fs::read(&expected_path)
            .with_context(|| format!("reading expected output {}", expected_path.display()))?;
        if &expected == bytes {
            println!("{}: {name} matches expected", experiment.name());
        } else {
            println!("{}: {name} DIFFERS from expected", experiment.name());
            mismatches.push(name.clone());
        }
    }
    if mismatches.is_empty() {
        println!(
            "{}: reproduction verified against {} file(s) in {}",
            experiment.name(),
            artifacts.len(),
            expected_dir.display()
        );
        Ok(())
    } else {
        Err(anyhow!(
            "{}: {} artifact(s) differ from expected: {}",
            experiment.name(),
            mismatches.len(),
            mismatches.join(", ")
        ))
    }
}
