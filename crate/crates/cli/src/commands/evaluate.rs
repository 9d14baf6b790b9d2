//! `evaluate`: compare system annotations against a gold standard and
//! produce metrics, coverage, failure reasons, and a machine-readable
//! report.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{anyhow, Context, Result};
use clap::Args;
use serde::Serialize;

use annotare_core::eval::{
    check_alignment, classify_document_set, compute_metrics, failure_profile, load_gold_tsv,
    preferred_term_breakdown, suggest_failure_reason, BackTranslationCheck, FailureProfile,
    FailureReason, GoldAnnotation, MetricsReport, MetricsRow, PreferredBreakdown,
    RecallDenominator, ReasonKind, SlangList, VerdictKind,
};
use annotare_core::matcher::{Annotation, MatchOptions};
use annotare_core::thesaurus::{coverage_report, CoverageReport, KnowledgeSource};
use annotare_core::translation::GlossaryTranslator;
use annotare_core::variants::VariantGenerator;

use crate::config::{required, FileConfig};
use crate::output::{render_table, write_atomic};

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// key = value defaults for any flag below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// System annotations (JSON Lines), as written by annotate.
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    /// Gold standard TSV.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Knowledge source the annotations were produced against.
    #[arg(long)]
    pub ks: Option<PathBuf>,
    /// Corpus the offsets refer to; when given, every gold span is checked
    /// against it before anything is computed.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Normalization table the corpus was annotated with, if any.
    #[arg(long)]
    pub norm_table: Option<PathBuf>,
    /// Recall/F weight on precision, strictly between 0 and 1.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Recall denominator: all | in-meta.
    #[arg(long)]
    pub recall_denominator: Option<String>,
    /// Suffix rules for the alternate-variants failure check.
    #[arg(long)]
    pub alt_rules: Option<PathBuf>,
    /// Lexicon for the alternate-variants failure check.
    #[arg(long)]
    pub alt_lexicon: Option<PathBuf>,
    /// Back-glossary (annotation language -> source language) for the
    /// bad-translation failure check; requires --source-ks.
    #[arg(long)]
    pub back_glossary: Option<PathBuf>,
    /// Source-language knowledge source for the bad-translation check.
    #[arg(long)]
    pub source_ks: Option<PathBuf>,
    /// Informal-term list for the slang failure check.
    #[arg(long)]
    pub slang: Option<PathBuf>,
    /// Candidate filter mode used when re-running the matcher: relaxed | strict.
    #[arg(long)]
    pub filter_mode: Option<String>,
    /// Let term words match in any order in the re-run.
    #[arg(long)]
    pub ignore_word_order: bool,
    /// Minimum aggregate score in the re-run (0..=1000).
    #[arg(long)]
    pub score_threshold: Option<u32>,
    /// Phrase head position in the re-run: first | last.
    #[arg(long)]
    pub head_position: Option<String>,
    /// Write the JSON report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Write the per-failure TSV (with a trailing manual-override column) here.
    #[arg(long)]
    pub failures: Option<PathBuf>,
}

/// Everything the evaluation computes, bundled for serialization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub metrics: MetricsReport,
    pub verdict_counts: BTreeMap<VerdictKind, usize>,
    pub preferred_breakdown: PreferredBreakdown,
    pub coverage: CoverageReport,
    pub failure_profile: FailureProfile,
}

pub struct EvalOutcome {
    pub failures: Vec<FailureReason>,
    pub report: EvalReport,
}

/// Shared evaluation pipeline: classify, compute metrics and breakdowns,
/// then suggest a reason for every non-exact verdict in gold order.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_run(
    gold: &[GoldAnnotation],
    annotations: &[Annotation],
    ks: &KnowledgeSource,
    alpha: f64,
    denominator: RecallDenominator,
    alt_generator: &VariantGenerator,
    back_check: Option<&BackTranslationCheck<'_>>,
    slang: &SlangList,
    options: &MatchOptions,
) -> Result<EvalOutcome> {
    let verdicts = classify_document_set(gold, annotations);
    let metrics = compute_metrics(&verdicts, annotations, alpha, denominator)?;

    let mut verdict_counts = BTreeMap::new();
    for v in &verdicts {
        *verdict_counts.entry(v.verdict).or_insert(0usize) += 1;
    }

    let failures: Vec<FailureReason> = verdicts
        .iter()
        .filter(|v| v.verdict != VerdictKind::Exact)
        .map(|v| suggest_failure_reason(v, ks, alt_generator, back_check, slang, options))
        .collect();

    let report = EvalReport {
        metrics,
        verdict_counts,
        preferred_breakdown: preferred_term_breakdown(&verdicts, ks),
        coverage: coverage_report(gold, ks),
        failure_profile: failure_profile(&failures),
    };
    Ok(EvalOutcome { failures, report })
}

pub fn report_json_bytes(report: &EvalReport) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(report)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// One row per failure, gold order. The final column is reserved for a
/// manual override of the suggested reason and is left empty.
pub fn failures_tsv_bytes(failures: &[FailureReason]) -> Vec<u8> {
    let mut out = String::from(
        "doc_id\tsentence\tstart\tend\tsurface\tcui\tdomain\tverdict\treason\tevidence\tmanual_override\n",
    );
    for f in failures {
        let g = &f.gold;
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t\n",
            g.doc_id,
            g.sentence,
            g.start,
            g.end,
            g.surface,
            g.cui,
            g.domain.as_str(),
            f.verdict,
            f.reason,
            f.evidence.replace(['\t', '\n'], " "),
        ));
    }
    out.into_bytes()
}

fn fmt_opt(x: Option<f64>, decimals: usize) -> String {
    match x {
        Some(v) => format!("{v:.decimals$}"),
        None => "-".to_string(),
    }
}

fn metrics_row_cells(name: &str, row: &MetricsRow) -> Vec<String> {
    vec![
        name.to_string(),
        row.exact.to_string(),
        row.gold_total.to_string(),
        row.parsed_total.to_string(),
        row.system_total.to_string(),
        fmt_opt(row.recall, 2),
        fmt_opt(row.precision, 2),
        fmt_opt(row.f_measure, 2),
    ]
}

/// Human-readable rendering of the full report.
pub fn render_report(report: &EvalReport) -> String {
    let mut out = String::new();

    let mut rows: Vec<Vec<String>> = report
        .metrics
        .per_domain
        .iter()
        .map(|(domain, row)| metrics_row_cells(domain.as_str(), row))
        .collect();
    rows.push(metrics_row_cells("overall", &report.metrics.overall));
    out.push_str(&render_table(
        &["domain", "exact", "gold", "parsed", "system", "R", "P", "F"],
        &rows,
    ));

    out.push_str("\nverdicts: ");
    let verdict_bits: Vec<String> = report
        .verdict_counts
        .iter()
        .map(|(kind, n)| format!("{kind}={n}"))
        .collect();
    out.push_str(&verdict_bits.join(" "));
    out.push('\n');

    out.push_str(&format!(
        "exact matches via preferred term: {} of {}\n",
        report.preferred_breakdown.preferred,
        report.preferred_breakdown.total()
    ));

    out.push('\n');
    let mut coverage_rows: Vec<Vec<String>> = report
        .coverage
        .per_domain
        .iter()
        .map(|(domain, row)| {
            vec![
                domain.as_str().to_string(),
                row.found.to_string(),
                row.total.to_string(),
                fmt_opt(row.percent(), 1),
            ]
        })
        .collect();
    coverage_rows.push(vec![
        "overall".to_string(),
        report.coverage.overall.found.to_string(),
        report.coverage.overall.total.to_string(),
        fmt_opt(report.coverage.overall.percent(), 1),
    ]);
    out.push_str(&render_table(
        &["coverage", "found", "total", "%"],
        &coverage_rows,
    ));

    if report.failure_profile.overall.total > 0 {
        out.push('\n');
        let cell = &report.failure_profile.overall;
        let reason_rows: Vec<Vec<String>> = [
            ReasonKind::NoVariantsGeneration,
            ReasonKind::BadTranslation,
            ReasonKind::MedicalSlang,
            ReasonKind::Other,
        ]
        .iter()
        .map(|reason| {
            vec![
                reason.to_string(),
                cell.by_reason.get(reason).copied().unwrap_or(0).to_string(),
                fmt_opt(cell.reason_pct(*reason), 1),
            ]
        })
        .collect();
        out.push_str(&render_table(
            &["failure reason", "count", "%"],
            &reason_rows,
        ));
    }

    out
}

pub fn run(args: EvaluateArgs) -> Result<()> {
    let cfg = FileConfig::load_optional(args.config.as_deref())?;
    let annotations_path = required(
        cfg.resolve_path(args.annotations, "annotations"),
        "annotations",
    )?;
    let gold_path = required(cfg.resolve_path(args.gold, "gold"), "gold")?;
    let ks_path = required(cfg.resolve_path(args.ks, "ks"), "ks")?;
    let corpus = cfg.resolve_path(args.corpus, "corpus");
    let norm_table = cfg.resolve_path(args.norm_table, "norm-table");
    let alpha = cfg.resolve(args.alpha, "alpha")?.unwrap_or(0.5);
    let denominator: RecallDenominator = cfg
        .resolve(args.recall_denominator, "recall-denominator")?
        .as_deref()
        .map(str::parse)
        .transpose()
        .map_err(|e: String| anyhow!(e))?
        .unwrap_or(RecallDenominator::All);
    let alt_rules = cfg.resolve_path(args.alt_rules, "alt-rules");
    let alt_lexicon = cfg.resolve_path(args.alt_lexicon, "alt-lexicon");
    let back_glossary = cfg.resolve_path(args.back_glossary, "back-glossary");
    let source_ks_path = cfg.resolve_path(args.source_ks, "source-ks");
    let slang_path = cfg.resolve_path(args.slang, "slang");
    let report_path = cfg.resolve_path(args.report, "report");
    let failures_path = cfg.resolve_path(args.failures, "failures");
    let options = super::assemble_match_options(
        cfg.resolve(args.filter_mode, "filter-mode")?,
        cfg.resolve_switch(args.ignore_word_order, "ignore-word-order")?,
        cfg.resolve(args.score_threshold, "score-threshold")?,
        cfg.resolve(args.head_position, "head-position")?,
    )?;

    let ks = super::load_ks(&ks_path)?;
    let annotations = annotare_core::matcher::read_annotations(super::open_buffered(
        &annotations_path,
    )?)
    .with_context(|| format!("reading annotations {}", annotations_path.display()))?;
    let gold = load_gold_tsv(&gold_path)
        .with_context(|| format!("reading gold standard {}", gold_path.display()))?;

    if let Some(corpus_path) = &corpus {
        let docs =
            super::normalized_corpus(super::load_corpus(corpus_path)?, norm_table.as_deref())?;
        check_alignment(&gold, &docs).context("gold standard does not align with the corpus")?;
    }

    let alt_generator =
        super::build_generator(ks.language(), alt_rules.as_deref(), alt_lexicon.as_deref())?;

    let back_pair: Option<(GlossaryTranslator, KnowledgeSource)> =
        match (&back_glossary, &source_ks_path) {
            (Some(glossary_path), Some(ks_path)) => {
                let source_ks = super::load_ks(ks_path)?;
                let glossary = GlossaryTranslator::load_tsv(
                    ks.language(),
                    source_ks.language(),
                    glossary_path,
                )
                .with_context(|| format!("reading back-glossary {}", glossary_path.display()))?;
                Some((glossary, source_ks))
            }
            (None, None) => None,
            _ => {
                return Err(anyhow!(
                    "--back-glossary and --source-ks must be given together"
                ))
            }
        };
    let back_check = back_pair
        .as_ref()
        .map(|(glossary, source_ks)| BackTranslationCheck { glossary, source_ks });

    let slang = match &slang_path {
        Some(path) => SlangList::load(path)
            .with_context(|| format!("reading slang list {}", path.display()))?,
        None => SlangList::default(),
    };

    let outcome = evaluate_run(
        &gold,
        &annotations,
        &ks,
        alpha,
        denominator,
        &alt_generator,
        back_check.as_ref(),
        &slang,
        &options,
    )?;

    print!("{}", render_report(&outcome.report));

    if let Some(path) = report_path {
        write_atomic(&path, &report_json_bytes(&outcome.report)?)?;
    }
    if let Some(path) = failures_path {
        write_atomic(&path, &failures_tsv_bytes(&outcome.failures))?;
    }
    Ok(())
}
