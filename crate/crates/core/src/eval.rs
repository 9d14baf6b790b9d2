//! Gold-standard handling and evaluation: exact-match verdict
//! classification, recall/precision/F-measure, preferred-term breakdown,
//! inter-annotator agreement, and heuristic failure-reason suggestion.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::matcher::{
    construct_mappings, evaluate_candidate, retrieve_candidates, Annotation, MatchOptions,
};
use crate::textprep::{tokenize, Domain};
use crate::thesaurus::{normalize_term, normalize_word, valid_cui, KnowledgeSource};
use crate::translation::GlossaryTranslator;
use crate::variants::{expand_phrase, VariantGenerator};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("gold file line {line}: {reason}")]
    GoldRow { line: usize, reason: String },
    #[error("gold annotation {doc_id}:{sentence} [{start}..{end}]: {reason}")]
    GoldSpan {
        doc_id: String,
        sentence: usize,
        start: usize,
        end: usize,
        reason: String,
    },
    #[error("annotator sets are misaligned: {detail}")]
    Misaligned { detail: String },
    #[error("alpha must lie strictly between 0 and 1, got {alpha}")]
    InvalidAlpha { alpha: f64 },
}

/// One manually annotated concept mention. `in_metathesaurus` records
/// whether the annotators considered a suitable concept to exist in the
/// knowledge source under test; the recall denominator can be restricted
/// to rows where it is true.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnnotation {
    pub doc_id: String,
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub cui: String,
    pub domain: Domain,
    pub in_metathesaurus: bool,
}

/// Reads gold annotations from TSV:
/// `doc_id  sentence  start  end  surface  cui  domain  in_meta`
/// with `#` comments and blank lines skipped.
pub fn parse_gold_tsv<R: BufRead>(reader: R) -> Result<Vec<GoldAnnotation>, EvalError> {
    let mut gold = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
            continue;
        }
        let row = |reason: String| EvalError::GoldRow {
            line: i + 1,
            reason,
        };
        let fields: Vec<&str> = trimmed.split('\t').collect();
        if fields.len() != 8 {
            return Err(row(format!(
                "expected 8 tab-separated fields, got {}",
                fields.len()
            )));
        }
        let sentence: usize = fields[1]
            .parse()
            .map_err(|_| row(format!("bad sentence index {:?}", fields[1])))?;
        let start: usize = fields[2]
            .parse()
            .map_err(|_| row(format!("bad start offset {:?}", fields[2])))?;
        let end: usize = fields[3]
            .parse()
            .map_err(|_| row(format!("bad end offset {:?}", fields[3])))?;
        if start >= end {
            return Err(row(format!("empty or inverted span {start}..{end}")));
        }
        let surface = fields[4].to_string();
        if surface.trim().is_empty() {
            return Err(row("empty surface".into()));
        }
        let cui = fields[5].to_string();
        if !valid_cui(&cui) {
            return Err(row(format!("malformed concept id {cui:?}")));
        }
        let domain: Domain = fields[6]
            .parse()
            .map_err(|e| row(format!("{e}")))?;
        let in_metathesaurus = match fields[7] {
            "true" => true,
            "false" => false,
            other => return Err(row(format!("bad in_meta flag {other:?}, want true|false"))),
        };
        gold.push(GoldAnnotation {
            doc_id: fields[0].to_string(),
            sentence,
            start,
            end,
            surface,
            cui,
            domain,
            in_metathesaurus,
        });
    }
    Ok(gold)
}

pub fn load_gold_tsv(path: &std::path::Path) -> Result<Vec<GoldAnnotation>, EvalError> {
    let file = std::fs::File::open(path)?;
    parse_gold_tsv(std::io::BufReader::new(file))
}

/// Verifies every gold span against its corpus document: the document and
/// sentence must exist and the span must slice the sentence to exactly the
/// recorded surface.
pub fn check_alignment(
    gold: &[GoldAnnotation],
    docs: &[crate::textprep::Document],
) -> Result<(), EvalError> {
    let by_id: HashMap<&str, &crate::textprep::Document> =
        docs.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    for g in gold {
        let span_err = |reason: String| EvalError::GoldSpan {
            doc_id: g.doc_id.clone(),
            sentence: g.sentence,
            start: g.start,
            end: g.end,
            reason,
        };
        let doc = by_id
            .get(g.doc_id.as_str())
            .ok_or_else(|| span_err("document not in corpus".into()))?;
        let sentence = doc
            .sentences
            .get(g.sentence)
            .ok_or_else(|| span_err("sentence index out of range".into()))?;
        if g.end > sentence.len() || !sentence.is_char_boundary(g.start)
            || !sentence.is_char_boundary(g.end)
        {
            return Err(span_err("span exceeds sentence".into()));
        }
        let slice = &sentence[g.start..g.end];
        if slice != g.surface {
            return Err(span_err(format!(
                "surface {:?} does not match sentence slice {:?}",
                g.surface, slice
            )));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Verdicts
// ---------------------------------------------------------------------------

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum VerdictKind {
    Exact,
    Boundary,
    WordSenseAmbiguity,
    MissedTerm,
}

impl VerdictKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            VerdictKind::Exact => "exact",
            VerdictKind::Boundary => "boundary",
            VerdictKind::WordSenseAmbiguity => "word_sense_ambiguity",
            VerdictKind::MissedTerm => "missed_term",
        }
    }
}

impl std::fmt::Display for VerdictKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One gold mention's outcome, with the system annotations that overlapped
/// its span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchVerdict {
    pub gold: GoldAnnotation,
    pub verdict: VerdictKind,
    pub system: Vec<Annotation>,
}

/// Byte span with the surface's leading/trailing whitespace shaved off,
/// so span comparisons are insensitive to how generously a span was drawn.
fn trimmed_span(start: usize, surface: &str) -> (usize, usize) {
    let leading = surface.len() - surface.trim_start().len();
    let trailing = surface.len() - surface.trim_end().len();
    (start + leading, start + surface.len() - trailing)
}

/// Classifies one gold mention against the system annotations overlapping
/// its span, producing exactly one verdict:
///
/// * exact — some annotation covers the full gold phrase (equal spans
///   after whitespace trimming) and carries the gold concept id;
/// * word_sense_ambiguity — a full-phrase annotation exists but none
///   carries the gold concept id;
/// * boundary — no full-phrase annotation, and every overlapping
///   annotation covers a proper sub-span of the gold phrase;
/// * missed_term — anything else (in particular, no overlap at all).
pub fn classify_match(gold: &GoldAnnotation, system: &[Annotation]) -> MatchVerdict {
    let (g_start, g_end) = trimmed_span(gold.start, &gold.surface);
    let mut any_full_span = false;
    let mut full_span_cui_match = false;
    let mut all_proper_subspans = !system.is_empty();
    for a in system {
        let (a_start, a_end) = trimmed_span(a.start, &a.surface);
        let full = a_start == g_start && a_end == g_end;
        if full {
            any_full_span = true;
            if a.cui == gold.cui {
                full_span_cui_match = true;
            }
        }
        let proper_subspan = a_start >= g_start && a_end <= g_end && !full;
        if !proper_subspan {
            all_proper_subspans = false;
        }
    }
    let verdict = if any_full_span && full_span_cui_match {
        VerdictKind::Exact
    } else if any_full_span {
        VerdictKind::WordSenseAmbiguity
    } else if all_proper_subspans {
        VerdictKind::Boundary
    } else {
        VerdictKind::MissedTerm
    };
    MatchVerdict {
        gold: gold.clone(),
        verdict,
        system: system.to_vec(),
    }
}

/// Classifies every gold mention against a system annotation set, pairing
/// each with the annotations that overlap it (same document, same
/// sentence, intersecting byte spans). Output order follows the gold list.
pub fn classify_document_set(
    gold: &[GoldAnnotation],
    system: &[Annotation],
) -> Vec<MatchVerdict> {
    let mut by_sentence: HashMap<(&str, usize), Vec<&Annotation>> = HashMap::new();
    for a in system {
        by_sentence
            .entry((a.doc_id.as_str(), a.sentence))
            .or_default()
            .push(a);
    }
    gold.iter()
        .map(|g| {
            let overlapping: Vec<Annotation> = by_sentence
                .get(&(g.doc_id.as_str(), g.sentence))
                .map(|anns| {
                    anns.iter()
                        .filter(|a| a.start < g.end && g.start < a.end)
                        .map(|a| (*a).clone())
                        .collect()
                })
                .unwrap_or_default();
            classify_match(g, &overlapping)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Which gold mentions count toward the recall denominator: all of them,
/// or only those marked as having a suitable concept in the knowledge
/// source (`in_metathesaurus`). The restriction applies to every count in
/// the report, numerators included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecallDenominator {
    All,
    InMeta,
}

impl std::str::FromStr for RecallDenominator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "all" => Ok(RecallDenominator::All),
            "in-meta" => Ok(RecallDenominator::InMeta),
            other => Err(format!(
                "unknown recall denominator {other:?}, want all|in-meta"
            )),
        }
    }
}

/// Counts and derived metrics for one slice of the corpus. A metric whose
/// denominator is zero is `None` (undefined), never 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub exact: usize,
    pub gold_total: usize,
    /// Gold mentions the system parsed as a full phrase (exact +
    /// word-sense); the precision denominator.
    pub parsed_total: usize,
    /// Raw system annotation count over this slice.
    pub system_total: usize,
    pub recall: Option<f64>,
    pub precision: Option<f64>,
    pub f_measure: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub alpha: f64,
    pub denominator: RecallDenominator,
    pub overall: MetricsRow,
    pub per_domain: BTreeMap<Domain, MetricsRow>,
}

/// F = 1/(α/P + (1−α)/R); undefined when either input is undefined or
/// zero (the harmonic form divides by them).
pub fn f_measure(precision: Option<f64>, recall: Option<f64>, alpha: f64) -> Option<f64> {
    match (precision, recall) {
        (Some(p), Some(r)) if p > 0.0 && r > 0.0 => Some(1.0 / (alpha / p + (1.0 - alpha) / r)),
        _ => None,
    }
}

#[derive(Default)]
struct Tally {
    exact: usize,
    gold_total: usize,
    parsed_total: usize,
    system_total: usize,
}

impl Tally {
    fn into_row(self, alpha: f64) -> MetricsRow {
        let recall = (self.gold_total > 0).then(|| self.exact as f64 / self.gold_total as f64);
        let precision =
            (self.parsed_total > 0).then(|| self.exact as f64 / self.parsed_total as f64);
        MetricsRow {
            exact: self.exact,
            gold_total: self.gold_total,
            parsed_total: self.parsed_total,
            system_total: self.system_total,
            recall,
            precision,
            f_measure: f_measure(precision, recall, alpha),
        }
    }
}

/// Aggregates verdicts into recall (exact / gold total), precision
/// (exact / full-phrase-parsed total), and the weighted harmonic
/// F-measure, overall and per domain. System annotations are attributed
/// to a domain through the gold rows' document ids; annotations on
/// documents without gold rows count only toward the overall total.
pub fn compute_metrics(
    verdicts: &[MatchVerdict],
    system: &[Annotation],
    alpha: f64,
    denominator: RecallDenominator,
) -> Result<MetricsReport, EvalError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(EvalError::InvalidAlpha { alpha });
    }
    let mut overall = Tally::default();
    let mut per_domain: BTreeMap<Domain, Tally> = BTreeMap::new();
    let mut doc_domain: HashMap<&str, Domain> = HashMap::new();
    for v in verdicts {
        doc_domain.insert(v.gold.doc_id.as_str(), v.gold.domain);
        if denominator == RecallDenominator::InMeta && !v.gold.in_metathesaurus {
            continue;
        }
        let domain_tally = per_domain.entry(v.gold.domain).or_default();
        overall.gold_total += 1;
        domain_tally.gold_total += 1;
        match v.verdict {
            VerdictKind::Exact => {
                overall.exact += 1;
                overall.parsed_total += 1;
                domain_tally.exact += 1;
                domain_tally.parsed_total += 1;
            }
            VerdictKind::WordSenseAmbiguity => {
                overall.parsed_total += 1;
                domain_tally.parsed_total += 1;
            }
            VerdictKind::Boundary | VerdictKind::MissedTerm => {}
        }
    }
    overall.system_total = system.len();
    for a in system {
        if let Some(domain) = doc_domain.get(a.doc_id.as_str()) {
            if let Some(t) = per_domain.get_mut(domain) {
                t.system_total += 1;
            }
        }
    }
    Ok(MetricsReport {
        alpha,
        denominator,
        overall: overall.into_row(alpha),
        per_domain: per_domain
            .into_iter()
            .map(|(d, t)| (d, t.into_row(alpha)))
            .collect(),
    })
}

/// Rounds to two decimals, the precision used in human-readable reports.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Percentage of `count` in `total`, one decimal; undefined for an empty
/// total.
pub fn pct1(count: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| (count as f64 / total as f64 * 1000.0).round() / 10.0)
}

// ---------------------------------------------------------------------------
// Preferred-term breakdown
// ---------------------------------------------------------------------------

/// How many exact matches were written using the knowledge source's
/// preferred term for the concept, versus any other synonym or variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreferredBreakdown {
    pub preferred: usize,
    pub other: usize,
}

impl PreferredBreakdown {
    pub fn total(&self) -> usize {
        self.preferred + self.other
    }
}

/// Partitions the exact verdicts by whether the gold surface, normalized,
/// equals the concept's preferred term in `ks`. Counts sum to the number
/// of exact verdicts.
pub fn preferred_term_breakdown(
    verdicts: &[MatchVerdict],
    ks: &KnowledgeSource,
) -> PreferredBreakdown {
    let mut breakdown = PreferredBreakdown {
        preferred: 0,
        other: 0,
    };
    for v in verdicts {
        if v.verdict != VerdictKind::Exact {
            continue;
        }
        let surface = normalize_term(&v.gold.surface, ks.fold_accents());
        match ks.preferred_term(&v.gold.cui) {
            Some(preferred) if preferred == surface => breakdown.preferred += 1,
            _ => breakdown.other += 1,
        }
    }
    breakdown
}

// ---------------------------------------------------------------------------
// Inter-annotator agreement
// ---------------------------------------------------------------------------

/// Raw percentage agreement between two annotators over the same mention
/// set: the fraction of mentions (aligned by document, sentence, and span)
/// where both assigned the same concept id. Mentions present on only one
/// side are an alignment error, not a disagreement.
pub fn inter_annotator_agreement(
    a: &[GoldAnnotation],
    b: &[GoldAnnotation],
) -> Result<f64, EvalError> {
    fn keyed(
        side: &[GoldAnnotation],
        name: &str,
    ) -> Result<BTreeMap<(String, usize, usize, usize), String>, EvalError> {
        let mut map = BTreeMap::new();
        for g in side {
            let key = (g.doc_id.clone(), g.sentence, g.start, g.end);
            if map.insert(key, g.cui.clone()).is_some() {
                return Err(EvalError::Misaligned {
                    detail: format!(
                        "annotator {name} has duplicate mention {}:{} [{}..{}]",
                        g.doc_id, g.sentence, g.start, g.end
                    ),
                });
            }
        }
        Ok(map)
    }
    let map_a = keyed(a, "a")?;
    let map_b = keyed(b, "b")?;
    let keys_a: BTreeSet<_> = map_a.keys().collect();
    let keys_b: BTreeSet<_> = map_b.keys().collect();
    if keys_a != keys_b {
        let orphans: Vec<String> = keys_a
            .symmetric_difference(&keys_b)
            .take(5)
            .map(|(doc, sentence, start, end)| format!("{doc}:{sentence} [{start}..{end}]"))
            .collect();
        return Err(EvalError::Misaligned {
            detail: format!("mentions without a counterpart: {}", orphans.join(", ")),
        });
    }
    if map_a.is_empty() {
        return Ok(1.0);
    }
    let agreed = map_a
        .iter()
        .filter(|(key, cui)| map_b.get(*key) == Some(cui))
        .count();
    Ok(agreed as f64 / map_a.len() as f64)
}

// ---------------------------------------------------------------------------
// Failure reasons
// ---------------------------------------------------------------------------

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum ReasonKind {
    NoVariantsGeneration,
    BadTranslation,
    MedicalSlang,
    Other,
}

impl ReasonKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReasonKind::NoVariantsGeneration => "no_variants_generation",
            ReasonKind::BadTranslation => "bad_translation",
            ReasonKind::MedicalSlang => "medical_slang",
            ReasonKind::Other => "other",
        }
    }
}

impl std::fmt::Display for ReasonKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A suggested explanation for one non-exact verdict, with the evidence
/// that decided it. `manual_override`, when set by a reviewer, supersedes
/// the suggestion in reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureReason {
    pub gold: GoldAnnotation,
    pub verdict: VerdictKind,
    pub reason: ReasonKind,
    pub evidence: String,
    pub manual_override: Option<ReasonKind>,
}

impl FailureReason {
    pub fn effective_reason(&self) -> ReasonKind {
        self.manual_override.unwrap_or(self.reason)
    }
}

/// Surfaces known to be informal clinical shorthand; normalized terms,
/// one per line in the file form.
#[derive(Debug, Clone, Default)]
pub struct SlangList {
    terms: BTreeSet<String>,
}

impl SlangList {
    pub fn new<I: IntoIterator<Item = S>, S: AsRef<str>>(terms: I) -> Self {
        SlangList {
            terms: terms
                .into_iter()
                .map(|t| normalize_term(t.as_ref(), false))
                .filter(|t| !t.is_empty())
                .collect(),
        }
    }

    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, EvalError> {
        let mut terms = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            terms.push(trimmed.to_string());
        }
        Ok(SlangList::new(terms))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, EvalError> {
        let file = std::fs::File::open(path)?;
        SlangList::from_reader(std::io::BufReader::new(file))
    }

    pub fn contains(&self, surface: &str) -> bool {
        self.terms.contains(&normalize_term(surface, false))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Inputs for the bad-translation check on a translated corpus: a
/// target→source glossary and the source-language knowledge source whose
/// preferred terms the back-translation must contain.
pub struct BackTranslationCheck<'a> {
    pub glossary: &'a GlossaryTranslator,
    pub source_ks: &'a KnowledgeSource,
}

/// Suggests why a non-exact verdict failed, trying the checks in a fixed
/// order and stopping at the first that fires:
///
/// 1. Re-run matching on the gold phrase alone with `alt_generator`
///    (typically one with richer variant rules); if the top mapping now
///    contains a full-phrase member carrying the gold concept id, the
///    original run lacked the variants — `no_variants_generation`.
/// 2. If a back-translation check is configured, back-translate the gold
///    surface; if the result does not contain the concept's
///    source-language preferred term, the forward translation drifted —
///    `bad_translation`.
/// 3. If the gold surface is on the slang list — `medical_slang`.
/// 4. Otherwise `other`.
pub fn suggest_failure_reason(
    verdict: &MatchVerdict,
    ks: &KnowledgeSource,
    alt_generator: &VariantGenerator,
    back_check: Option<&BackTranslationCheck<'_>>,
    slang: &SlangList,
    options: &MatchOptions,
) -> FailureReason {
    debug_assert_ne!(verdict.verdict, VerdictKind::Exact);
    let gold = &verdict.gold;
    let make = |reason, evidence| FailureReason {
        gold: gold.clone(),
        verdict: verdict.verdict,
        reason,
        evidence,
        manual_override: None,
    };

    if let Some(score) = variant_rerun_recovers(gold, ks, alt_generator, options) {
        return make(
            ReasonKind::NoVariantsGeneration,
            format!(
                "re-run with {} variant rules matched the full phrase to {} (score {})",
                alt_generator.language(),
                gold.cui,
                score
            ),
        );
    }

    if let Some(check) = back_check {
        if let Some(preferred) = check.source_ks.preferred_term(&gold.cui) {
            let back = check.glossary.translate_sentence(&gold.surface);
            let back_norm = normalize_term(&back, check.source_ks.fold_accents());
            if !back_norm.contains(preferred) {
                return make(
                    ReasonKind::BadTranslation,
                    format!(
                        "back-translation {back:?} does not contain the source preferred term {preferred:?}"
                    ),
                );
            }
        }
    }

    if slang.contains(&gold.surface) {
        return make(
            ReasonKind::MedicalSlang,
            format!("surface {:?} is on the slang list", gold.surface),
        );
    }

    make(
        ReasonKind::Other,
        "no configured check explains this failure".into(),
    )
}

/// Re-matches the gold phrase in isolation with the alternate variant
/// generator; Some(score) iff the top mapping contains a member that
/// covers every phrase word and carries the gold concept id (i.e. the
/// phrase would now annotate exactly).
fn variant_rerun_recovers(
    gold: &GoldAnnotation,
    ks: &KnowledgeSource,
    alt_generator: &VariantGenerator,
    options: &MatchOptions,
) -> Option<u32> {
    let words: Vec<String> = tokenize(&gold.surface)
        .iter()
        .map(|t| normalize_word(&t.surface, ks.fold_accents()))
        .collect();
    if words.is_empty() {
        return None;
    }
    let variant_sets = expand_phrase(&words, alt_generator);
    let candidates = retrieve_candidates(ks, &words, &variant_sets, options);
    let scored: Vec<_> = candidates
        .into_iter()
        .map(|c| evaluate_candidate(c, &words, options))
        .collect();
    let mappings = construct_mappings(&scored, &words, options);
    let top = mappings.first()?;
    top.candidates
        .iter()
        .find(|m| {
            m.candidate.cui == gold.cui && m.candidate.matched_positions.len() == words.len()
        })
        .map(|m| m.score)
}

// ---------------------------------------------------------------------------
// Failure profile
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FailureCell {
    pub total: usize,
    pub by_verdict: BTreeMap<VerdictKind, usize>,
    pub by_reason: BTreeMap<ReasonKind, usize>,
}

impl FailureCell {
    fn add(&mut self, reason: &FailureReason) {
        self.total += 1;
        *self.by_verdict.entry(reason.verdict).or_default() += 1;
        *self.by_reason.entry(reason.effective_reason()).or_default() += 1;
    }

    pub fn verdict_pct(&self, verdict: VerdictKind) -> Option<f64> {
        pct1(self.by_verdict.get(&verdict).copied().unwrap_or(0), self.total)
    }

    pub fn reason_pct(&self, reason: ReasonKind) -> Option<f64> {
        pct1(self.by_reason.get(&reason).copied().unwrap_or(0), self.total)
    }
}

/// Failure counts by verdict type and by reason, overall and per domain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FailureProfile {
    pub overall: FailureCell,
    pub per_domain: BTreeMap<Domain, FailureCell>,
}

pub fn failure_profile(reasons: &[FailureReason]) -> FailureProfile {
    let mut profile = FailureProfile::default();
    for r in reasons {
        profile.overall.add(r);
        profile.per_domain.entry(r.gold.domain).or_default().add(r);
    }
    profile
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::Document;
    use crate::thesaurus::{build_knowledge_source, BuildOptions, ConceptRecord};
    use crate::variants::{SuffixRule, Transform};

    fn gold(
        doc: &str,
        sentence: usize,
        start: usize,
        end: usize,
        surface: &str,
        cui: &str,
    ) -> GoldAnnotation {
        GoldAnnotation {
            doc_id: doc.into(),
            sentence,
            start,
            end,
            surface: surface.into(),
            cui: cui.into(),
            domain: Domain::Cardiology,
            in_metathesaurus: true,
        }
    }

    fn ann(doc: &str, sentence: usize, start: usize, end: usize, surface: &str, cui: &str) -> Annotation {
        Annotation {
            doc_id: doc.into(),
            sentence,
            start,
            end,
            surface: surface.into(),
            cui: cui.into(),
            score: 1000,
            language: "it".into(),
        }
    }

    #[test]
    fn gold_tsv_parses_and_reports_line_errors() {
        let tsv = "# header comment\n\
                   doc-1\t0\t13\t20\tstenosi\tC0947637\tcardiology\ttrue\n\
                   doc-2\t1\t0\t5\tedemi\tC0013604\tnephrology\tfalse\n";
        let rows = parse_gold_tsv(tsv.as_bytes()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].cui, "C0947637");
        assert_eq!(rows[1].domain, Domain::Nephrology);
        assert!(!rows[1].in_metathesaurus);

        for (bad, needle) in [
            ("doc\t0\t0\t5\tedemi\tC0013604\tcardiology", "8 tab-separated"),
            ("doc\tx\t0\t5\tedemi\tC0013604\tcardiology\ttrue", "sentence"),
            ("doc\t0\t5\t5\tedemi\tC0013604\tcardiology\ttrue", "span"),
            ("doc\t0\t0\t5\tedemi\tBADCUI12\tcardiology\ttrue", "concept id"),
            ("doc\t0\t0\t5\tedemi\tC0013604\tastrology\ttrue", "domain"),
            ("doc\t0\t0\t5\tedemi\tC0013604\tcardiology\tyes", "in_meta"),
        ] {
            let err = parse_gold_tsv(bad.as_bytes()).unwrap_err();
            match err {
                EvalError::GoldRow { line, reason } => {
                    assert_eq!(line, 1);
                    assert!(reason.contains(needle), "{reason:?} missing {needle:?}");
                }
                other => panic!("unexpected error: {other}"),
            }
        }
    }

    #[test]
    fn alignment_check_verifies_spans_against_corpus() {
        let docs = vec![Document {
            doc_id: "doc-1".into(),
            domain: Domain::Cardiology,
            language: "it".into(),
            sentences: vec!["Paziente con stenosi.".into()],
        }];
        let ok = gold("doc-1", 0, 13, 20, "stenosi", "C0947637");
        check_alignment(&[ok.clone()], &docs).unwrap();

        let mut wrong_surface = ok.clone();
        wrong_surface.surface = "stenosX".into();
        assert!(check_alignment(&[wrong_surface], &docs).is_err());

        let mut bad_sentence = ok.clone();
        bad_sentence.sentence = 3;
        assert!(check_alignment(&[bad_sentence], &docs).is_err());

        let mut unknown_doc = ok;
        unknown_doc.doc_id = "ghost".into();
        assert!(check_alignment(&[unknown_doc], &docs).is_err());
    }

    #[test]
    fn classify_boundary_on_subspan_only() {
        let g = gold("d", 0, 0, 17, "stenosi vascolari", "C0679403");
        let v = classify_match(&g, &[ann("d", 0, 0, 7, "stenosi", "C0947637")]);
        assert_eq!(v.verdict, VerdictKind::Boundary);
    }

    #[test]
    fn classify_word_sense_on_full_span_wrong_cui() {
        let g = gold("d", 0, 0, 9, "vertigini", "C0042571");
        let v = classify_match(&g, &[ann("d", 0, 0, 9, "vertigini", "C0220870")]);
        assert_eq!(v.verdict, VerdictKind::WordSenseAmbiguity);
    }

    #[test]
    fn classify_missed_on_no_overlap() {
        let g = gold("d", 0, 0, 5, "edemi", "C0013604");
        let v = classify_match(&g, &[]);
        assert_eq!(v.verdict, VerdictKind::MissedTerm);
    }

    #[test]
    fn classify_exact_on_full_span_and_cui() {
        let g = gold("d", 0, 0, 7, "dispnea", "C0013404");
        let v = classify_match(&g, &[ann("d", 0, 0, 7, "dispnea", "C0013404")]);
        assert_eq!(v.verdict, VerdictKind::Exact);
    }

    #[test]
    fn classify_missed_when_overlap_extends_beyond_gold() {
        // Neither a full-span parse nor a pure sub-span split.
        let g = gold("d", 0, 4, 11, "stenosi", "C0947637");
        let v = classify_match(&g, &[ann("d", 0, 0, 11, "con stenosi", "C0947637")]);
        assert_eq!(v.verdict, VerdictKind::MissedTerm);
    }

    #[test]
    fn classify_trims_whitespace_before_comparing_spans() {
        let g = gold("d", 0, 0, 8, "stenosi ", "C0947637");
        let v = classify_match(&g, &[ann("d", 0, 0, 7, "stenosi", "C0947637")]);
        assert_eq!(v.verdict, VerdictKind::Exact);
    }

    #[test]
    fn document_set_classification_pairs_by_sentence_and_overlap() {
        let golds = vec![
            gold("d", 0, 0, 7, "dispnea", "C0013404"),
            gold("d", 1, 0, 7, "dispnea", "C0013404"),
            gold("e", 0, 0, 5, "edemi", "C0013604"),
        ];
        let system = vec![
            ann("d", 0, 0, 7, "dispnea", "C0013404"),
            // Same doc, different sentence: must not leak across.
            ann("d", 1, 0, 7, "dispnea", "C0011849"),
        ];
        let verdicts = classify_document_set(&golds, &system);
        assert_eq!(
            verdicts.iter().map(|v| v.verdict).collect::<Vec<_>>(),
            vec![
                VerdictKind::Exact,
                VerdictKind::WordSenseAmbiguity,
                VerdictKind::MissedTerm
            ]
        );
        // Partition invariant: every gold row got exactly one verdict.
        assert_eq!(verdicts.len(), golds.len());
    }

    fn verdicts_with(counts: (usize, usize, usize, usize)) -> Vec<MatchVerdict> {
        let (exact, boundary, word_sense, missed) = counts;
        let mut out = Vec::new();
        let mut n = 0;
        let mut push = |verdict: VerdictKind, n: &mut usize| {
            let g = gold("d", *n, 0, 5, "parola", "C0000001");
            *n += 1;
            out.push(MatchVerdict {
                gold: g,
                verdict,
                system: vec![],
            });
        };
        for _ in 0..exact {
            push(VerdictKind::Exact, &mut n);
        }
        for _ in 0..boundary {
            push(VerdictKind::Boundary, &mut n);
        }
        for _ in 0..word_sense {
            push(VerdictKind::WordSenseAmbiguity, &mut n);
        }
        for _ in 0..missed {
            push(VerdictKind::MissedTerm, &mut n);
        }
        out
    }

    #[test]
    fn metrics_formula_example() {
        // 3 exact of 4 gold, all parsed full-phrase matches exact.
        let verdicts = verdicts_with((3, 0, 0, 1));
        let report =
            compute_metrics(&verdicts, &[], 0.5, RecallDenominator::All).unwrap();
        assert_eq!(report.overall.exact, 3);
        assert_eq!(report.overall.gold_total, 4);
        assert_eq!(report.overall.parsed_total, 3);
        assert_eq!(report.overall.recall, Some(0.75));
        assert_eq!(report.overall.precision, Some(1.0));
        let f = report.overall.f_measure.unwrap();
        assert!((f - 6.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn metrics_match_published_fixture_counts() {
        let r: f64 = 0.53;
        let p: f64 = 0.98;
        let f = f_measure(Some(p), Some(r), 0.5).unwrap();
        assert!((f - 0.688).abs() < 0.001);
        let f = f_measure(Some(0.93), Some(0.75), 0.5).unwrap();
        assert!((round2(f) - 0.83).abs() < 1e-12);
    }

    #[test]
    fn undefined_metrics_are_none_not_zero() {
        let report = compute_metrics(&[], &[], 0.5, RecallDenominator::All).unwrap();
        assert_eq!(report.overall.recall, None);
        assert_eq!(report.overall.precision, None);
        assert_eq!(report.overall.f_measure, None);

        // Gold exists but nothing parsed: recall 0, precision undefined.
        let verdicts = verdicts_with((0, 1, 0, 1));
        let report = compute_metrics(&verdicts, &[], 0.5, RecallDenominator::All).unwrap();
        assert_eq!(report.overall.recall, Some(0.0));
        assert_eq!(report.overall.precision, None);
        assert_eq!(report.overall.f_measure, None);
    }

    #[test]
    fn in_meta_denominator_restricts_both_sides() {
        let mut verdicts = verdicts_with((1, 0, 0, 0));
        let mut missed = verdicts_with((0, 0, 0, 1)).remove(0);
        missed.gold.in_metathesaurus = false;
        verdicts.push(missed);
        let all = compute_metrics(&verdicts, &[], 0.5, RecallDenominator::All).unwrap();
        assert_eq!(all.overall.recall, Some(0.5));
        let in_meta =
            compute_metrics(&verdicts, &[], 0.5, RecallDenominator::InMeta).unwrap();
        assert_eq!(in_meta.overall.recall, Some(1.0));
        assert_eq!(in_meta.overall.gold_total, 1);
    }

    #[test]
    fn alpha_must_be_strictly_inside_unit_interval() {
        for alpha in [0.0, 1.0, -0.1, 1.5] {
            assert!(matches!(
                compute_metrics(&[], &[], alpha, RecallDenominator::All),
                Err(EvalError::InvalidAlpha { .. })
            ));
        }
    }

    #[test]
    fn f_measure_is_harmonic_mean_at_equal_weight() {
        for (p, r) in [(0.98, 0.53), (0.93, 0.75), (1.0, 1.0), (0.2, 0.9)] {
            let f = f_measure(Some(p), Some(r), 0.5).unwrap();
            assert!((f - 2.0 * p * r / (p + r)).abs() < 1e-12);
        }
        assert_eq!(f_measure(Some(0.0), Some(0.5), 0.5), None);
        assert_eq!(f_measure(None, Some(0.5), 0.5), None);
    }

    #[test]
    fn per_domain_rows_split_system_totals_by_gold_docs() {
        let mut verdicts = verdicts_with((1, 0, 0, 0));
        verdicts[0].gold.domain = Domain::Nephrology;
        verdicts[0].gold.doc_id = "nefro-doc".into();
        let system = vec![
            ann("nefro-doc", 0, 0, 5, "x", "C0000001"),
            ann("unrelated-doc", 0, 0, 5, "x", "C0000002"),
        ];
        let report =
            compute_metrics(&verdicts, &system, 0.5, RecallDenominator::All).unwrap();
        assert_eq!(report.overall.system_total, 2);
        assert_eq!(report.per_domain[&Domain::Nephrology].system_total, 1);
    }

    fn test_ks(records: &[(&str, &str, bool)]) -> KnowledgeSource {
        let concept_records: Vec<ConceptRecord> = records
            .iter()
            .map(|(cui, term, preferred)| ConceptRecord {
                cui: cui.to_string(),
                language: "it".into(),
                term: term.to_string(),
                is_preferred: *preferred,
                semantic_type: "Finding".into(),
                source_vocabulary: "TEST".into(),
            })
            .collect();
        build_knowledge_source(&concept_records, "it", None, &BuildOptions::default()).unwrap()
    }

    #[test]
    fn preferred_breakdown_partitions_exact_matches() {
        let ks = test_ks(&[
            ("C0011849", "Diabete Mellito", true),
            ("C0011849", "diabete", false),
            ("C0018681", "Cefalea", true),
        ]);
        let verdicts = vec![
            MatchVerdict {
                gold: gold("d", 0, 0, 15, "diabete mellito", "C0011849"),
                verdict: VerdictKind::Exact,
                system: vec![],
            },
            MatchVerdict {
                gold: gold("d", 1, 0, 7, "diabete", "C0011849"),
                verdict: VerdictKind::Exact,
                system: vec![],
            },
            MatchVerdict {
                gold: gold("d", 2, 0, 7, "Cefalea", "C0018681"),
                verdict: VerdictKind::Exact,
                system: vec![],
            },
            // Non-exact rows are ignored.
            MatchVerdict {
                gold: gold("d", 3, 0, 7, "cefalea", "C0018681"),
                verdict: VerdictKind::Boundary,
                system: vec![],
            },
        ];
        let breakdown = preferred_term_breakdown(&verdicts, &ks);
        assert_eq!((breakdown.preferred, breakdown.other), (2, 1));
        assert_eq!(breakdown.total(), 3);

        // Brute-force cross-check over the same data.
        let brute = verdicts
            .iter()
            .filter(|v| v.verdict == VerdictKind::Exact)
            .filter(|v| {
                ks.preferred_term(&v.gold.cui)
                    == Some(normalize_term(&v.gold.surface, false)).as_deref()
            })
            .count();
        assert_eq!(breakdown.preferred, brute);
    }

    #[test]
    fn agreement_counts_equal_cuis_over_aligned_mentions() {
        let a = vec![
            gold("d", 0, 0, 5, "edemi", "C0013604"),
            gold("d", 0, 7, 14, "dispnea", "C0013404"),
            gold("d", 1, 0, 9, "vertigini", "C0042571"),
            gold("e", 0, 0, 6, "febbre", "C0015967"),
        ];
        let mut b = a.clone();
        assert_eq!(inter_annotator_agreement(&a, &b).unwrap(), 1.0);
        b[2].cui = "C0220870".into();
        assert_eq!(inter_annotator_agreement(&a, &b).unwrap(), 0.75);
        for m in &mut b {
            m.cui = "C9999999".into();
        }
        assert_eq!(inter_annotator_agreement(&a, &b).unwrap(), 0.0);
        assert_eq!(inter_annotator_agreement(&[], &[]).unwrap(), 1.0);
    }

    #[test]
    fn agreement_rejects_orphan_mentions() {
        let a = vec![gold("d", 0, 0, 5, "edemi", "C0013604")];
        let err = inter_annotator_agreement(&a, &[]).unwrap_err();
        match err {
            EvalError::Misaligned { detail } => assert!(detail.contains("d:0 [0..5]")),
            other => panic!("unexpected error: {other}"),
        }
    }

    fn missed(surface: &str, cui: &str) -> MatchVerdict {
        MatchVerdict {
            gold: gold("d", 0, 0, surface.len(), surface, cui),
            verdict: VerdictKind::MissedTerm,
            system: vec![],
        }
    }

    #[test]
    fn failure_reason_prefers_variant_rerun_recovery() {
        let ks = test_ks(&[("C0013604", "Edema", true)]);
        let with_rules = VariantGenerator::new(
            "it",
            vec![SuffixRule {
                suffix: "i".into(),
                replacement: "a".into(),
                cost: 1,
                tag: Transform::Inflection,
            }],
            vec![],
        )
        .unwrap();
        let slang = SlangList::new(["edemi"]);
        // Slang would match, but the variant re-run fires first.
        let reason = suggest_failure_reason(
            &missed("edemi", "C0013604"),
            &ks,
            &with_rules,
            None,
            &slang,
            &MatchOptions::relaxed(),
        );
        assert_eq!(reason.reason, ReasonKind::NoVariantsGeneration);
        assert!(reason.evidence.contains("C0013604"));
    }

    #[test]
    fn failure_reason_flags_bad_translation_via_back_glossary() {
        let en_ks = test_ks(&[]);
        let it_ks = test_ks(&[("C0333138", "Stasi", true)]);
        let back = GlossaryTranslator::new(
            "en",
            "it",
            &[("stagnation".to_string(), "ristagno".to_string())],
        )
        .unwrap();
        let check = BackTranslationCheck {
            glossary: &back,
            source_ks: &it_ks,
        };
        let reason = suggest_failure_reason(
            &missed("stagnation", "C0333138"),
            &en_ks,
            &VariantGenerator::identity("it"),
            Some(&check),
            &SlangList::default(),
            &MatchOptions::relaxed(),
        );
        assert_eq!(reason.reason, ReasonKind::BadTranslation);
        assert!(reason.evidence.contains("ristagno"));
    }

    #[test]
    fn faithful_back_translation_passes_the_check() {
        let en_ks = test_ks(&[]);
        let it_ks = test_ks(&[("C0238074", "cuore polmonare cronico", true)]);
        let back = GlossaryTranslator::new(
            "en",
            "it",
            &[(
                "chronic pulmonary heart".to_string(),
                "cuore polmonare cronico".to_string(),
            )],
        )
        .unwrap();
        let check = BackTranslationCheck {
            glossary: &back,
            source_ks: &it_ks,
        };
        let reason = suggest_failure_reason(
            &missed("chronic pulmonary heart", "C0238074"),
            &en_ks,
            &VariantGenerator::identity("it"),
            Some(&check),
            &SlangList::default(),
            &MatchOptions::relaxed(),
        );
        assert_eq!(reason.reason, ReasonKind::Other);
    }

    #[test]
    fn failure_reason_falls_back_to_slang_then_other() {
        let ks = test_ks(&[]);
        let slang = SlangList::new(["cardiopalmo"]);
        let reason = suggest_failure_reason(
            &missed("cardiopalmo", "C0030252"),
            &ks,
            &VariantGenerator::identity("it"),
            None,
            &slang,
            &MatchOptions::relaxed(),
        );
        assert_eq!(reason.reason, ReasonKind::MedicalSlang);

        let reason = suggest_failure_reason(
            &missed("astenia", "C0004093"),
            &ks,
            &VariantGenerator::identity("it"),
            None,
            &slang,
            &MatchOptions::relaxed(),
        );
        assert_eq!(reason.reason, ReasonKind::Other);
    }

    #[test]
    fn manual_override_supersedes_suggestion() {
        let ks = test_ks(&[]);
        let mut reason = suggest_failure_reason(
            &missed("astenia", "C0004093"),
            &ks,
            &VariantGenerator::identity("it"),
            None,
            &SlangList::default(),
            &MatchOptions::relaxed(),
        );
        assert_eq!(reason.effective_reason(), ReasonKind::Other);
        reason.manual_override = Some(ReasonKind::MedicalSlang);
        assert_eq!(reason.effective_reason(), ReasonKind::MedicalSlang);
    }

    #[test]
    fn slang_list_parses_and_normalizes() {
        let list =
            SlangList::from_reader("# informal terms\ncardiopalmo\n  Batticuore  \n".as_bytes())
                .unwrap();
        assert_eq!(list.len(), 2);
        assert!(list.contains("CARDIOPALMO"));
        assert!(list.contains("batticuore"));
        assert!(!list.contains("dispnea"));
    }

    #[test]
    fn failure_profile_tallies_by_verdict_reason_and_domain() {
        let mut reasons = Vec::new();
        let mut add = |verdict, reason_kind, domain| {
            let mut g = gold("d", reasons.len(), 0, 5, "factum", "C0000001");
            g.domain = domain;
            reasons.push(FailureReason {
                gold: g,
                verdict,
                reason: reason_kind,
                evidence: String::new(),
                manual_override: None,
            });
        };
        // A 59/39/2-style split: 59 missed, 39 boundary, 2 word-sense.
        for _ in 0..59 {
            add(
                VerdictKind::MissedTerm,
                ReasonKind::NoVariantsGeneration,
                Domain::Cardiology,
            );
        }
        for _ in 0..39 {
            add(VerdictKind::Boundary, ReasonKind::Other, Domain::Nephrology);
        }
        for _ in 0..2 {
            add(
                VerdictKind::WordSenseAmbiguity,
                ReasonKind::Other,
                Domain::Oncology,
            );
        }
        let profile = failure_profile(&reasons);
        assert_eq!(profile.overall.total, 100);
        assert_eq!(profile.overall.verdict_pct(VerdictKind::MissedTerm), Some(59.0));
        assert_eq!(profile.overall.verdict_pct(VerdictKind::Boundary), Some(39.0));
        assert_eq!(
            profile.overall.verdict_pct(VerdictKind::WordSenseAmbiguity),
            Some(2.0)
        );
        assert_eq!(
            profile.overall.reason_pct(ReasonKind::NoVariantsGeneration),
            Some(59.0)
        );
        assert_eq!(profile.per_domain[&Domain::Cardiology].total, 59);
        // Brute-force tally cross-check.
        let brute = reasons
            .iter()
            .filter(|r| r.verdict == VerdictKind::Boundary)
            .count();
        assert_eq!(
            profile.overall.by_verdict[&VerdictKind::Boundary], brute
        );
        // Percentages over all verdict kinds sum to 100 within rounding.
        let sum: f64 = profile
            .overall
            .by_verdict
            .keys()
            .map(|k| profile.overall.verdict_pct(*k).unwrap())
            .sum();
        assert!((sum - 100.0).abs() < 0.2);
    }

    #[test]
    fn rounding_helpers() {
        assert_eq!(round2(0.6879), 0.69);
        assert_eq!(round2(0.825), 0.83);
        assert_eq!(pct1(940, 1107), Some(84.9));
        assert_eq!(pct1(0, 0), None);
    }
}
