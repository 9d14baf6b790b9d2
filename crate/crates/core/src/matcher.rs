//! Candidate retrieval against the knowledge-source index, four-metric
//! candidate evaluation, and disjoint-candidate mapping construction —
//! plus the document-level annotation pipeline that ties the stages
//! together.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::textprep::{tokenize, Phrase, PhraseChunker, Document};
use crate::thesaurus::{normalize_word, KnowledgeSource, StringId};
use crate::variants::{expand_phrase, Variant, VariantGenerator};

/// Phrases longer than this are split into consecutive chunks before
/// matching; candidate-set size is exponential in phrase length.
pub const MAX_PHRASE_WORDS: usize = 12;
/// Up to this many candidates per phrase, disjoint sets are enumerated
/// exactly; above it a deterministic beam takes over.
const EXACT_ENUMERATION_LIMIT: usize = 16;
const BEAM_WIDTH: usize = 64;
/// Memo-size cap for the unordered assignment search; past it the search
/// degrades to a deterministic greedy sweep.
const MAX_ASSIGNMENT_STATES: usize = 100_000;

#[derive(Debug, thiserror::Error)]
pub enum MatcherError {
    #[error(
        "language mismatch: document is {doc:?}, variant generator is {generator:?}, knowledge source is {ks:?}"
    )]
    LanguageMismatch {
        doc: String,
        generator: String,
        ks: String,
    },
    #[error("invalid match options: {reason}")]
    InvalidOptions { reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterMode {
    Relaxed,
    Strict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadPosition {
    First,
    Last,
}

pub const RELAXED_THRESHOLD: u32 = 0;
pub const STRICT_THRESHOLD: u32 = 800;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchOptions {
    pub ignore_word_order: bool,
    pub filter_mode: FilterMode,
    /// Mappings scoring below this are dropped. The mode constructors set
    /// it to 0 (relaxed) or 800 (strict).
    pub score_threshold: u32,
    pub head_position: HeadPosition,
}

impl MatchOptions {
    pub fn relaxed() -> Self {
        MatchOptions {
            ignore_word_order: false,
            filter_mode: FilterMode::Relaxed,
            score_threshold: RELAXED_THRESHOLD,
            head_position: HeadPosition::Last,
        }
    }

    pub fn strict() -> Self {
        MatchOptions {
            filter_mode: FilterMode::Strict,
            score_threshold: STRICT_THRESHOLD,
            ..MatchOptions::relaxed()
        }
    }

    pub fn with_mode(mode: FilterMode) -> Self {
        match mode {
            FilterMode::Relaxed => MatchOptions::relaxed(),
            FilterMode::Strict => MatchOptions::strict(),
        }
    }

    pub fn validate(&self) -> Result<(), MatcherError> {
        if self.score_threshold > 1000 {
            return Err(MatcherError::InvalidOptions {
                reason: format!("score threshold {} exceeds 1000", self.score_threshold),
            });
        }
        Ok(())
    }
}

impl Default for MatchOptions {
    fn default() -> Self {
        MatchOptions::relaxed()
    }
}

// ---------------------------------------------------------------------------
// Candidates
// ---------------------------------------------------------------------------

/// A knowledge-source term retrieved for a phrase, with the word-level
/// assignment that connected them. `matched_positions[i]` (phrase side) is
/// matched to `matched_term_positions[i]` (term side) through a variant at
/// `variant_distances[i]`. Phrase positions are strictly increasing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Candidate {
    pub string_id: StringId,
    pub cui: String,
    pub term: String,
    pub term_word_count: usize,
    pub matched_positions: Vec<usize>,
    pub matched_term_positions: Vec<usize>,
    pub variant_distances: Vec<u32>,
}

/// The four evaluation metrics, each in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub centrality: f64,
    pub variation: f64,
    pub coverage: f64,
    pub cohesiveness: f64,
}

/// A candidate with its metrics and integer score filled in.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub candidate: Candidate,
    pub metrics: Metrics,
    pub score: u32,
}

/// A maximal set of position-disjoint candidates covering parts of one
/// phrase, scored as a whole.
#[derive(Debug, Clone, PartialEq)]
pub struct Mapping {
    pub candidates: Vec<ScoredCandidate>,
    pub metrics: Metrics,
    pub aggregate_score: u32,
}

impl Mapping {
    /// All phrase positions covered by members, ascending.
    pub fn covered_positions(&self) -> Vec<usize> {
        let mut positions: Vec<usize> = self
            .candidates
            .iter()
            .flat_map(|c| c.candidate.matched_positions.iter().copied())
            .collect();
        positions.sort_unstable();
        positions
    }

    fn cui_set(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self
            .candidates
            .iter()
            .map(|c| c.candidate.cui.as_str())
            .collect();
        set.into_iter().collect()
    }
}

/// One concept emitted for a document: the span of the matched words, the
/// concept id, and the candidate's score.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub doc_id: String,
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub cui: String,
    pub score: u32,
    pub language: String,
}

/// Turns `metrics` into the integer score:
/// round(1000·(centrality + variation + 2·coverage + 2·cohesiveness)/6).
pub fn score_from_metrics(metrics: &Metrics) -> u32 {
    let weighted = metrics.centrality
        + metrics.variation
        + 2.0 * metrics.coverage
        + 2.0 * metrics.cohesiveness;
    (1000.0 * weighted / 6.0).round() as u32
}

// ---------------------------------------------------------------------------
// Candidate retrieval
// ---------------------------------------------------------------------------

/// Retrieves every knowledge-source term containing at least one variant of
/// at least one phrase word, with the best word-level assignment under the
/// ordering rule: with `ignore_word_order` unset, matched phrase words must
/// appear in the same relative order as the term words they match; set, any
/// one-to-one assignment counts. Among assignments the matcher maximizes
/// matched word count, then minimizes total variant distance, then takes
/// the earliest-position choice. Candidates come back sorted by string id.
pub fn retrieve_candidates(
    ks: &KnowledgeSource,
    phrase_words: &[String],
    variant_sets: &[Vec<Variant>],
    options: &MatchOptions,
) -> Vec<Candidate> {
    debug_assert_eq!(phrase_words.len(), variant_sets.len());
    if phrase_words.is_empty() {
        return Vec::new();
    }
    // string id -> phrase position -> term position -> min distance
    let mut edges: BTreeMap<StringId, BTreeMap<usize, BTreeMap<usize, u32>>> = BTreeMap::new();
    for (position, variants) in variant_sets.iter().enumerate() {
        for variant in variants {
            for &id in ks.lookup_word(&variant.text) {
                let row = match ks.row(id) {
                    Some(row) => row,
                    None => continue,
                };
                let by_position = edges.entry(id).or_default().entry(position).or_default();
                for (term_position, word) in row.words.iter().enumerate() {
                    if word == &variant.text {
                        by_position
                            .entry(term_position)
                            .and_modify(|d| *d = (*d).min(variant.distance))
                            .or_insert(variant.distance);
                    }
                }
            }
        }
    }
    let mut candidates = Vec::with_capacity(edges.len());
    for (id, by_position) in edges {
        let row = ks.row(id).expect("edge ids come from the index");
        let edges_by_position: Vec<(usize, Vec<(usize, u32)>)> = by_position
            .into_iter()
            .map(|(p, terms)| (p, terms.into_iter().collect()))
            .collect();
        let assignment = if options.ignore_word_order && row.words.len() <= 64 {
            assign_unordered(&edges_by_position, row.words.len())
        } else {
            assign_ordered(&edges_by_position, row.words.len())
        };
        if assignment.is_empty() {
            continue;
        }
        let mut matched_positions = Vec::with_capacity(assignment.len());
        let mut matched_term_positions = Vec::with_capacity(assignment.len());
        let mut variant_distances = Vec::with_capacity(assignment.len());
        for (p, t, d) in assignment {
            matched_positions.push(p);
            matched_term_positions.push(t);
            variant_distances.push(d);
        }
        candidates.push(Candidate {
            string_id: id,
            cui: row.cui.clone(),
            term: row.term.clone(),
            term_word_count: row.words.len(),
            matched_positions,
            matched_term_positions,
            variant_distances,
        });
    }
    candidates
}

/// Order-respecting assignment: an LCS-style search over (phrase position,
/// minimum free term position) maximizing matched count, then minimizing
/// total distance, preferring earlier matches on exact ties.
fn assign_ordered(
    edges_by_position: &[(usize, Vec<(usize, u32)>)],
    term_len: usize,
) -> Vec<(usize, usize, u32)> {
    #[derive(Clone, Copy)]
    struct Cell {
        count: u32,
        dist: u64,
        // Edge index taken at this state, or usize::MAX for skip.
        choice: usize,
        solved: bool,
    }
    let n = edges_by_position.len();
    let mut memo = vec![
        Cell {
            count: 0,
            dist: 0,
            choice: usize::MAX,
            solved: false
        };
        n * (term_len + 1)
    ];
    fn solve(
        i: usize,
        t_min: usize,
        edges: &[(usize, Vec<(usize, u32)>)],
        term_len: usize,
        memo: &mut [Cell],
    ) -> (u32, u64) {
        if i == edges.len() {
            return (0, 0);
        }
        let key = i * (term_len + 1) + t_min;
        if memo[key].solved {
            let c = memo[key];
            return (c.count, c.dist);
        }
        let mut best = (0u32, 0u64, usize::MAX);
        // Matches first (ascending term position), skip last, so exact
        // ties resolve to the earliest match.
        for (edge_idx, &(t, d)) in edges[i].1.iter().enumerate() {
            if t < t_min {
                continue;
            }
            let (count, dist) = solve(i + 1, t + 1, edges, term_len, memo);
            let total = (count + 1, dist + u64::from(d), edge_idx);
            if total.0 > best.0 || (total.0 == best.0 && best.2 != usize::MAX && total.1 < best.1)
            {
                best = total;
            } else if best.2 == usize::MAX && best.0 == 0 {
                // First viable option beats the unset sentinel.
                best = total;
            }
        }
        let (count, dist) = solve(i + 1, t_min, edges, term_len, memo);
        if count > best.0 || (count == best.0 && dist < best.1) {
            best = (count, dist, usize::MAX);
        }
        memo[key] = Cell {
            count: best.0,
            dist: best.1,
            choice: best.2,
            solved: true,
        };
        (best.0, best.1)
    }
    solve(0, 0, edges_by_position, term_len, &mut memo);
    // Walk the memoized choices back into an assignment.
    let mut out = Vec::new();
    let mut i = 0;
    let mut t_min = 0usize;
    while i < n {
        let cell = memo[i * (term_len + 1) + t_min];
        if cell.choice == usize::MAX {
            i += 1;
            continue;
        }
        let (p, ref edge_list) = edges_by_position[i];
        let (t, d) = edge_list[cell.choice];
        out.push((p, t, d));
        t_min = t + 1;
        i += 1;
    }
    out
}

/// Bag-of-words assignment over a term-position bitmask, same objective as
/// the ordered search. Falls back to a greedy sweep if the memo grows past
/// `MAX_ASSIGNMENT_STATES` (only reachable with pathologically repetitive
/// terms).
fn assign_unordered(
    edges_by_position: &[(usize, Vec<(usize, u32)>)],
    term_len: usize,
) -> Vec<(usize, usize, u32)> {
    debug_assert!(term_len <= 64);
    type Memo = HashMap<(usize, u64), (u32, u64, usize)>;
    fn solve(
        i: usize,
        used: u64,
        edges: &[(usize, Vec<(usize, u32)>)],
        memo: &mut Memo,
        overflow: &mut bool,
    ) -> (u32, u64) {
        if i == edges.len() {
            return (0, 0);
        }
        if let Some(&(count, dist, _)) = memo.get(&(i, used)) {
            return (count, dist);
        }
        if memo.len() > MAX_ASSIGNMENT_STATES {
            *overflow = true;
            return (0, 0);
        }
        let mut best = (0u32, 0u64, usize::MAX);
        let mut have_match = false;
        for (edge_idx, &(t, d)) in edges[i].1.iter().enumerate() {
            if used & (1u64 << t) != 0 {
                continue;
            }
            let (count, dist) = solve(i + 1, used | (1u64 << t), edges, memo, overflow);
            let total = (count + 1, dist + u64::from(d));
            if !have_match || total.0 > best.0 || (total.0 == best.0 && total.1 < best.1) {
                best = (total.0, total.1, edge_idx);
                have_match = true;
            }
        }
        let (count, dist) = solve(i + 1, used, edges, memo, overflow);
        if !have_match || count > best.0 || (count == best.0 && dist < best.1) {
            best = (count, dist, usize::MAX);
        }
        memo.insert((i, used), best);
        (best.0, best.1)
    }
    let mut memo: Memo = HashMap::new();
    let mut overflow = false;
    solve(0, 0, edges_by_position, &mut memo, &mut overflow);
    if overflow {
        return assign_greedy(edges_by_position);
    }
    let mut out = Vec::new();
    let mut i = 0;
    let mut used = 0u64;
    while i < edges_by_position.len() {
        let &(count, dist, choice) = memo
            .get(&(i, used))
            .expect("walked states were memoized");
        let _ = (count, dist);
        if choice == usize::MAX {
            i += 1;
            continue;
        }
        let (p, ref edge_list) = edges_by_position[i];
        let (t, d) = edge_list[choice];
        out.push((p, t, d));
        used |= 1u64 << t;
        i += 1;
    }
    out
}

fn assign_greedy(edges_by_position: &[(usize, Vec<(usize, u32)>)]) -> Vec<(usize, usize, u32)> {
    let mut used = vec![false; 64];
    let mut out = Vec::new();
    for &(p, ref edge_list) in edges_by_position {
        let pick = edge_list
            .iter()
            .filter(|&&(t, _)| !used[t])
            .min_by_key(|&&(t, d)| (d, t));
        if let Some(&(t, d)) = pick {
            used[t] = true;
            out.push((p, t, d));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Candidate evaluation
// ---------------------------------------------------------------------------

/// Scores one candidate against its phrase using the four metrics:
///
/// * centrality — 1 if the head word (by `head_position`) is matched at
///   variant distance 0, else 0;
/// * variation — mean over matched words of 4/(d+4);
/// * coverage — mean of matched-word fractions on the phrase and term side;
/// * cohesiveness — mean over both sides of Σ(run length²)/length², where
///   runs are maximal contiguous blocks of matched positions.
///
/// Score = round(1000·(centrality + variation + 2·coverage +
/// 2·cohesiveness)/6); a perfect single-term match of the whole phrase at
/// distance 0 scores exactly 1000.
pub fn evaluate_candidate(
    candidate: Candidate,
    phrase_words: &[String],
    options: &MatchOptions,
) -> ScoredCandidate {
    let phrase_len = phrase_words.len();
    let matched = candidate.matched_positions.len();
    debug_assert!(matched > 0, "retrieval never yields empty assignments");
    let head = match options.head_position {
        HeadPosition::First => 0,
        HeadPosition::Last => phrase_len.saturating_sub(1),
    };
    let centrality = if candidate
        .matched_positions
        .iter()
        .zip(&candidate.variant_distances)
        .any(|(&p, &d)| p == head && d == 0)
    {
        1.0
    } else {
        0.0
    };
    let variation = candidate
        .variant_distances
        .iter()
        .map(|&d| 4.0 / (f64::from(d) + 4.0))
        .sum::<f64>()
        / matched as f64;
    let coverage = (matched as f64 / phrase_len as f64
        + matched as f64 / candidate.term_word_count as f64)
        / 2.0;
    let cohesiveness = (runs_cohesiveness(&candidate.matched_positions, phrase_len)
        + runs_cohesiveness(&candidate.matched_term_positions, candidate.term_word_count))
        / 2.0;
    let metrics = Metrics {
        centrality,
        variation,
        coverage,
        cohesiveness,
    };
    ScoredCandidate {
        score: score_from_metrics(&metrics),
        candidate,
        metrics,
    }
}

/// Σ(maximal contiguous run length)² / total², over a set of positions.
fn runs_cohesiveness(positions: &[usize], total_len: usize) -> f64 {
    if total_len == 0 {
        return 0.0;
    }
    let mut sorted: Vec<usize> = positions.to_vec();
    sorted.sort_unstable();
    let mut sum = 0f64;
    let mut run = 0usize;
    let mut prev: Option<usize> = None;
    for &p in &sorted {
        match prev {
            Some(q) if p == q + 1 => run += 1,
            _ => {
                sum += (run * run) as f64;
                run = 1;
            }
        }
        prev = Some(p);
    }
    sum += (run * run) as f64;
    sum / (total_len * total_len) as f64
}

// ---------------------------------------------------------------------------
// Mapping construction
// ---------------------------------------------------------------------------

/// Enumerates maximal sets of position-disjoint candidates, scores each set
/// by recomputing the four metrics over the union of matched positions,
/// drops sets below the score threshold, and ranks the rest: aggregate
/// score descending, more covered positions first, fewer members first,
/// then lexicographically smallest CUI set. The ranking is a total order,
/// so permuting the input candidates never changes the output.
pub fn construct_mappings(
    candidates: &[ScoredCandidate],
    phrase_words: &[String],
    options: &MatchOptions,
) -> Vec<Mapping> {
    if candidates.is_empty() || phrase_words.is_empty() {
        return Vec::new();
    }
    // Canonical candidate order makes both enumeration strategies
    // input-permutation independent.
    let mut ordered: Vec<&ScoredCandidate> = candidates.iter().collect();
    ordered.sort_by(|a, b| {
        a.candidate
            .string_id
            .cmp(&b.candidate.string_id)
            .then_with(|| a.candidate.matched_positions.cmp(&b.candidate.matched_positions))
            .then_with(|| {
                a.candidate
                    .matched_term_positions
                    .cmp(&b.candidate.matched_term_positions)
            })
            .then_with(|| a.candidate.variant_distances.cmp(&b.candidate.variant_distances))
    });
    ordered.dedup_by(|a, b| {
        a.candidate.string_id == b.candidate.string_id
            && a.candidate.matched_positions == b.candidate.matched_positions
            && a.candidate.matched_term_positions == b.candidate.matched_term_positions
            && a.candidate.variant_distances == b.candidate.variant_distances
    });

    let masks: Vec<u64> = ordered
        .iter()
        .map(|c| position_mask(&c.candidate.matched_positions))
        .collect();

    let sets: Vec<Vec<usize>> = if ordered.len() <= EXACT_ENUMERATION_LIMIT {
        enumerate_exact(&masks)
    } else {
        enumerate_beam(&ordered, &masks, phrase_words, options)
    };

    let mut mappings: Vec<Mapping> = sets
        .into_iter()
        .filter(|set| is_maximal(set, &masks))
        .map(|set| build_mapping(&set, &ordered, phrase_words, options))
        .filter(|m| m.aggregate_score >= options.score_threshold)
        .collect();

    mappings.sort_by(|a, b| {
        b.aggregate_score
            .cmp(&a.aggregate_score)
            .then_with(|| b.covered_positions().len().cmp(&a.covered_positions().len()))
            .then_with(|| a.candidates.len().cmp(&b.candidates.len()))
            .then_with(|| a.cui_set().cmp(&b.cui_set()))
            .then_with(|| {
                let ka: Vec<(StringId, &[usize])> = a
                    .candidates
                    .iter()
                    .map(|c| (c.candidate.string_id, c.candidate.matched_positions.as_slice()))
                    .collect();
                let kb: Vec<(StringId, &[usize])> = b
                    .candidates
                    .iter()
                    .map(|c| (c.candidate.string_id, c.candidate.matched_positions.as_slice()))
                    .collect();
                ka.cmp(&kb)
            })
    });
    mappings
}

fn position_mask(positions: &[usize]) -> u64 {
    positions.iter().fold(0u64, |m, &p| m | (1u64 << p))
}

/// All disjoint subsets (as sorted index lists) of the candidate list.
/// Maximality is filtered later.
fn enumerate_exact(masks: &[u64]) -> Vec<Vec<usize>> {
    let mut sets = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    fn rec(
        i: usize,
        used: u64,
        masks: &[u64],
        current: &mut Vec<usize>,
        sets: &mut Vec<Vec<usize>>,
    ) {
        if i == masks.len() {
            if !current.is_empty() {
                sets.push(current.clone());
            }
            return;
        }
        if masks[i] & used == 0 {
            current.push(i);
            rec(i + 1, used | masks[i], masks, current, sets);
            current.pop();
        }
        rec(i + 1, used, masks, current, sets);
    }
    rec(0, 0, masks, &mut current, &mut sets);
    sets
}

/// Deterministic beam over candidates in canonical order, keeping the
/// `BEAM_WIDTH` best partial sets by aggregate score at each step.
fn enumerate_beam(
    ordered: &[&ScoredCandidate],
    masks: &[u64],
    phrase_words: &[String],
    options: &MatchOptions,
) -> Vec<Vec<usize>> {
    let mut beam: Vec<(Vec<usize>, u64)> = vec![(Vec::new(), 0)];
    for (i, &mask) in masks.iter().enumerate() {
        let mut next = beam.clone();
        for (set, used) in &beam {
            if mask & used == 0 {
                let mut grown = set.clone();
                grown.push(i);
                next.push((grown, used | mask));
            }
        }
        next.sort_by(|a, b| {
            let score_a = partial_score(&a.0, ordered, phrase_words, options);
            let score_b = partial_score(&b.0, ordered, phrase_words, options);
            score_b.cmp(&score_a).then_with(|| a.0.cmp(&b.0))
        });
        next.dedup_by(|a, b| a.0 == b.0);
        next.truncate(BEAM_WIDTH);
        beam = next;
    }
    beam.into_iter()
        .filter(|(set, _)| !set.is_empty())
        .map(|(set, _)| set)
        .collect()
}

fn partial_score(
    set: &[usize],
    ordered: &[&ScoredCandidate],
    phrase_words: &[String],
    options: &MatchOptions,
) -> u32 {
    if set.is_empty() {
        return 0;
    }
    build_mapping(set, ordered, phrase_words, options).aggregate_score
}

fn is_maximal(set: &[usize], masks: &[u64]) -> bool {
    let used: u64 = set.iter().fold(0, |m, &i| m | masks[i]);
    masks
        .iter()
        .enumerate()
        .all(|(i, &mask)| set.contains(&i) || mask & used != 0)
}

/// Recomputes the four metrics over the union of the members' matched
/// positions. Phrase-side coverage and cohesiveness use the union; the
/// term side averages the members' own term-side values. A single-member
/// mapping therefore scores exactly its candidate's score.
fn build_mapping(
    set: &[usize],
    ordered: &[&ScoredCandidate],
    phrase_words: &[String],
    options: &MatchOptions,
) -> Mapping {
    let phrase_len = phrase_words.len();
    let members: Vec<ScoredCandidate> = set.iter().map(|&i| ordered[i].clone()).collect();
    let mut union: BTreeMap<usize, u32> = BTreeMap::new();
    for member in &members {
        for (&p, &d) in member
            .candidate
            .matched_positions
            .iter()
            .zip(&member.candidate.variant_distances)
        {
            union.insert(p, d);
        }
    }
    let head = match options.head_position {
        HeadPosition::First => 0,
        HeadPosition::Last => phrase_len.saturating_sub(1),
    };
    let centrality = if union.get(&head) == Some(&0) { 1.0 } else { 0.0 };
    let variation = union
        .values()
        .map(|&d| 4.0 / (f64::from(d) + 4.0))
        .sum::<f64>()
        / union.len() as f64;
    let term_coverage = members
        .iter()
        .map(|m| {
            m.candidate.matched_positions.len() as f64 / m.candidate.term_word_count as f64
        })
        .sum::<f64>()
        / members.len() as f64;
    let coverage = (union.len() as f64 / phrase_len as f64 + term_coverage) / 2.0;
    let union_positions: Vec<usize> = union.keys().copied().collect();
    let term_cohesiveness = members
        .iter()
        .map(|m| {
            runs_cohesiveness(
                &m.candidate.matched_term_positions,
                m.candidate.term_word_count,
            )
        })
        .sum::<f64>()
        / members.len() as f64;
    let cohesiveness =
        (runs_cohesiveness(&union_positions, phrase_len) + term_cohesiveness) / 2.0;
    let metrics = Metrics {
        centrality,
        variation,
        coverage,
        cohesiveness,
    };
    Mapping {
        aggregate_score: score_from_metrics(&metrics),
        candidates: members,
        metrics,
    }
}

// ---------------------------------------------------------------------------
// Document annotation
// ---------------------------------------------------------------------------

/// Ranked mappings for one phrase, kept for debugging dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseAnalysis {
    pub doc_id: String,
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    pub phrase_words: Vec<String>,
    pub mappings: Vec<MappingSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingSummary {
    pub aggregate_score: u32,
    pub members: Vec<MappingMember>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingMember {
    pub cui: String,
    pub term: String,
    pub score: u32,
    pub matched_positions: Vec<usize>,
}

/// Runs the full pipeline over one document: chunk each sentence into
/// phrases, expand words into variants, retrieve and evaluate candidates,
/// construct mappings, and emit one annotation per candidate of each
/// phrase's top mapping. Output is in document order (sentence, then span).
pub fn annotate(
    ks: &KnowledgeSource,
    doc: &Document,
    generator: &VariantGenerator,
    options: &MatchOptions,
) -> Result<Vec<Annotation>, MatcherError> {
    Ok(annotate_with_analysis(ks, doc, generator, options)?.0)
}

/// As [`annotate`], but also returns the ranked mapping lists per phrase.
pub fn annotate_with_analysis(
    ks: &KnowledgeSource,
    doc: &Document,
    generator: &VariantGenerator,
    options: &MatchOptions,
) -> Result<(Vec<Annotation>, Vec<PhraseAnalysis>), MatcherError> {
    options.validate()?;
    if !doc.language.eq_ignore_ascii_case(generator.language())
        || !doc.language.eq_ignore_ascii_case(ks.language())
    {
        return Err(MatcherError::LanguageMismatch {
            doc: doc.language.clone(),
            generator: generator.language().to_string(),
            ks: ks.language().to_string(),
        });
    }
    let chunker = PhraseChunker::for_language(&doc.language.to_lowercase());
    let mut annotations = Vec::new();
    let mut analyses = Vec::new();
    for (sentence_index, sentence) in doc.sentences.iter().enumerate() {
        let tokens = tokenize(sentence);
        for phrase in chunker.chunk(&tokens) {
            for part in split_phrase(&phrase) {
                annotate_phrase(
                    ks,
                    doc,
                    generator,
                    options,
                    sentence_index,
                    sentence,
                    &part,
                    &mut annotations,
                    &mut analyses,
                );
            }
        }
    }
    Ok((annotations, analyses))
}

/// Splits an over-long phrase into consecutive chunks of at most
/// `MAX_PHRASE_WORDS` tokens.
fn split_phrase(phrase: &Phrase) -> Vec<Phrase> {
    if phrase.tokens.len() <= MAX_PHRASE_WORDS {
        return vec![phrase.clone()];
    }
    phrase
        .tokens
        .chunks(MAX_PHRASE_WORDS)
        .map(|chunk| Phrase {
            tokens: chunk.to_vec(),
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn annotate_phrase(
    ks: &KnowledgeSource,
    doc: &Document,
    generator: &VariantGenerator,
    options: &MatchOptions,
    sentence_index: usize,
    sentence: &str,
    phrase: &Phrase,
    annotations: &mut Vec<Annotation>,
    analyses: &mut Vec<PhraseAnalysis>,
) {
    let words: Vec<String> = phrase
        .tokens
        .iter()
        .map(|t| normalize_word(&t.surface, ks.fold_accents()))
        .collect();
    let variant_sets = expand_phrase(&words, generator);
    let candidates = retrieve_candidates(ks, &words, &variant_sets, options);
    if candidates.is_empty() {
        return;
    }
    let scored: Vec<ScoredCandidate> = candidates
        .into_iter()
        .map(|c| evaluate_candidate(c, &words, options))
        .collect();
    let mappings = construct_mappings(&scored, &words, options);
    if let Some(top) = mappings.first() {
        for member in &top.candidates {
            let first = *member
                .candidate
                .matched_positions
                .first()
                .expect("candidates cover at least one position");
            let last = *member
                .candidate
                .matched_positions
                .last()
                .expect("candidates cover at least one position");
            let start = phrase.tokens[first].start;
            let end = phrase.tokens[last].end;
            annotations.push(Annotation {
                doc_id: doc.doc_id.clone(),
                sentence: sentence_index,
                start,
                end,
                surface: sentence[start..end].to_string(),
                cui: member.candidate.cui.clone(),
                score: member.score,
                language: ks.language().to_string(),
            });
        }
    }
    analyses.push(PhraseAnalysis {
        doc_id: doc.doc_id.clone(),
        sentence: sentence_index,
        start: phrase.start(),
        end: phrase.end(),
        phrase_words: words,
        mappings: mappings
            .iter()
            .map(|m| MappingSummary {
                aggregate_score: m.aggregate_score,
                members: m
                    .candidates
                    .iter()
                    .map(|c| MappingMember {
                        cui: c.candidate.cui.clone(),
                        term: c.candidate.term.clone(),
                        score: c.score,
                        matched_positions: c.candidate.matched_positions.clone(),
                    })
                    .collect(),
            })
            .collect(),
    });
}

/// Reads annotations from JSON Lines (one per line, blank lines skipped).
pub fn read_annotations<R: std::io::BufRead>(
    reader: R,
) -> std::io::Result<Vec<Annotation>> {
    let mut annotations = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        annotations.push(serde_json::from_str(&line).map_err(std::io::Error::from)?);
    }
    Ok(annotations)
}

/// Writes annotations as JSON Lines.
pub fn write_annotations<W: std::io::Write>(
    mut writer: W,
    annotations: &[Annotation],
) -> std::io::Result<()> {
    for annotation in annotations {
        serde_json::to_writer(&mut writer, annotation)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::Domain;
    use crate::thesaurus::{build_knowledge_source, BuildOptions, ConceptRecord};
    use crate::variants::{generate_variants, SuffixRule, Transform};

    fn record(cui: &str, term: &str) -> ConceptRecord {
        ConceptRecord {
            cui: cui.into(),
            language: "it".into(),
            term: term.into(),
            is_preferred: true,
            semantic_type: "Finding".into(),
            source_vocabulary: "TEST".into(),
        }
    }

    fn ks(terms: &[(&str, &str)]) -> KnowledgeSource {
        let records: Vec<ConceptRecord> =
            terms.iter().map(|(cui, term)| record(cui, term)).collect();
        build_knowledge_source(&records, "it", None, &BuildOptions::default()).unwrap()
    }

    fn words(items: &[&str]) -> Vec<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    fn identity_sets(phrase: &[String]) -> Vec<Vec<Variant>> {
        expand_phrase(phrase, &VariantGenerator::identity("it"))
    }

    #[test]
    fn retrieval_misses_unknown_inflections_without_variants() {
        let ks = ks(&[("C0013604", "Edema")]);
        let phrase = words(&["edemi"]);
        let candidates =
            retrieve_candidates(&ks, &phrase, &identity_sets(&phrase), &MatchOptions::relaxed());
        assert!(candidates.is_empty());
    }

    #[test]
    fn retrieval_returns_partial_and_full_matches() {
        let ks = ks(&[("C0679403", "Stenosi vascolare"), ("C0947637", "Stenosi")]);
        let phrase = words(&["stenosi", "vascolari"]);
        let candidates =
            retrieve_candidates(&ks, &phrase, &identity_sets(&phrase), &MatchOptions::relaxed());
        assert_eq!(candidates.len(), 2);
        // Both terms match only through the shared word "stenosi".
        for c in &candidates {
            assert_eq!(c.matched_positions, vec![0]);
            assert_eq!(c.variant_distances, vec![0]);
        }
        let two_word = candidates.iter().find(|c| c.cui == "C0679403").unwrap();
        assert_eq!(two_word.term_word_count, 2);
        assert_eq!(two_word.matched_term_positions, vec![0]);
    }

    #[test]
    fn word_order_flag_gates_reversed_matches() {
        let ks = ks(&[("C0679403", "Stenosi vascolare")]);
        let phrase = words(&["vascolare", "stenosi"]);
        let sets = identity_sets(&phrase);

        let ordered =
            retrieve_candidates(&ks, &phrase, &sets, &MatchOptions::relaxed());
        assert_eq!(ordered.len(), 1);
        assert_eq!(ordered[0].matched_positions, vec![0]);

        let mut opts = MatchOptions::relaxed();
        opts.ignore_word_order = true;
        let unordered = retrieve_candidates(&ks, &phrase, &sets, &opts);
        assert_eq!(unordered[0].matched_positions, vec![0, 1]);
        assert_eq!(unordered[0].matched_term_positions, vec![1, 0]);
    }

    #[test]
    fn unordered_candidates_contain_ordered_ones() {
        let ks = ks(&[
            ("C0000001", "alfa beta gamma"),
            ("C0000002", "beta alfa"),
            ("C0000003", "gamma"),
        ]);
        let phrase = words(&["gamma", "beta", "alfa"]);
        let sets = identity_sets(&phrase);
        let ordered =
            retrieve_candidates(&ks, &phrase, &sets, &MatchOptions::relaxed());
        let mut opts = MatchOptions::relaxed();
        opts.ignore_word_order = true;
        let unordered = retrieve_candidates(&ks, &phrase, &sets, &opts);
        for c in &ordered {
            let bigger = unordered
                .iter()
                .find(|u| u.string_id == c.string_id)
                .expect("every ordered candidate retrieved unordered too");
            assert!(bigger.matched_positions.len() >= c.matched_positions.len());
        }
    }

    fn evaluate_on(
        ks: &KnowledgeSource,
        phrase: &[String],
        sets: &[Vec<Variant>],
        opts: &MatchOptions,
    ) -> Vec<ScoredCandidate> {
        retrieve_candidates(ks, phrase, sets, opts)
            .into_iter()
            .map(|c| evaluate_candidate(c, phrase, opts))
            .collect()
    }

    #[test]
    fn perfect_match_scores_one_thousand() {
        let ks = ks(&[("C0013604", "Edema")]);
        let phrase = words(&["edema"]);
        let scored = evaluate_on(&ks, &phrase, &identity_sets(&phrase), &MatchOptions::relaxed());
        assert_eq!(scored.len(), 1);
        assert_eq!(scored[0].score, 1000);
        let m = scored[0].metrics;
        assert_eq!(
            (m.centrality, m.variation, m.coverage, m.cohesiveness),
            (1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn partial_head_missing_match_scores_625() {
        let ks = ks(&[("C0947637", "Stenosi")]);
        let phrase = words(&["stenosi", "vascolari"]);
        let scored = evaluate_on(&ks, &phrase, &identity_sets(&phrase), &MatchOptions::relaxed());
        assert_eq!(scored[0].score, 625);
        let m = scored[0].metrics;
        assert_eq!(m.centrality, 0.0);
        assert_eq!(m.variation, 1.0);
        assert!((m.coverage - 0.75).abs() < 1e-12);
        assert!((m.cohesiveness - 0.625).abs() < 1e-12);
    }

    #[test]
    fn distance_one_match_scores_800() {
        let ks = ks(&[("C0013604", "Edema")]);
        let phrase = words(&["edemi"]);
        let generator = VariantGenerator::new(
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
        let sets = expand_phrase(&phrase, &generator);
        let scored = evaluate_on(&ks, &phrase, &sets, &MatchOptions::relaxed());
        assert_eq!(scored.len(), 1);
        assert_eq!(scored[0].score, 800);
        let m = scored[0].metrics;
        assert_eq!(m.centrality, 0.0);
        assert!((m.variation - 0.8).abs() < 1e-12);
        assert_eq!((m.coverage, m.cohesiveness), (1.0, 1.0));
    }

    #[test]
    fn scores_are_recomputable_from_metrics() {
        let ks = ks(&[
            ("C0679403", "Stenosi vascolare"),
            ("C0947637", "Stenosi"),
            ("C0013604", "Edema"),
        ]);
        let phrase = words(&["stenosi", "vascolari", "edema"]);
        for sc in evaluate_on(&ks, &phrase, &identity_sets(&phrase), &MatchOptions::relaxed()) {
            assert_eq!(sc.score, score_from_metrics(&sc.metrics));
            assert!(sc.score <= 1000);
        }
    }

    #[test]
    fn boundary_case_prefers_partial_single_word_term() {
        let ks = ks(&[("C0679403", "Stenosi vascolare"), ("C0947637", "Stenosi")]);
        let phrase = words(&["stenosi", "vascolari"]);
        let opts = MatchOptions::relaxed();
        let scored = evaluate_on(&ks, &phrase, &identity_sets(&phrase), &opts);
        let mappings = construct_mappings(&scored, &phrase, &opts);
        assert!(!mappings.is_empty());
        let top = &mappings[0];
        assert_eq!(top.candidates.len(), 1);
        assert_eq!(top.candidates[0].candidate.cui, "C0947637");
        assert_eq!(top.aggregate_score, 625);
    }

    #[test]
    fn singleton_mapping_score_equals_candidate_score() {
        let ks = ks(&[("C0679403", "Stenosi vascolare"), ("C0947637", "Stenosi")]);
        let phrase = words(&["stenosi", "vascolari", "gravi"]);
        let opts = MatchOptions::relaxed();
        let scored = evaluate_on(&ks, &phrase, &identity_sets(&phrase), &opts);
        for sc in &scored {
            let single = construct_mappings(std::slice::from_ref(sc), &phrase, &opts);
            assert_eq!(single[0].aggregate_score, sc.score);
        }
    }

    #[test]
    fn word_bag_of_singles_outranks_shorter_coverage() {
        // Three single-word concepts covering the whole phrase beat a
        // four-word term matching only three words.
        let ks = ks(&[
            ("C0205191", "cronico"),
            ("C0024109", "polmonare"),
            ("C1281570", "cuore"),
            ("C0238074", "cuore polmonare cronico grave"),
        ]);
        let phrase = words(&["cuore", "polmonare", "cronico"]);
        let mut opts = MatchOptions::relaxed();
        opts.ignore_word_order = true;
        let scored = evaluate_on(&ks, &phrase, &identity_sets(&phrase), &opts);
        let mappings = construct_mappings(&scored, &phrase, &opts);
        let top = &mappings[0];
        assert_eq!(top.aggregate_score, 1000);
        assert_eq!(top.candidates.len(), 3);
        let four_word = mappings
            .iter()
            .find(|m| m.candidates.iter().any(|c| c.candidate.cui == "C0238074"))
            .unwrap();
        assert_eq!(four_word.aggregate_score, 885);
    }

    #[test]
    fn exact_full_term_beats_equal_scoring_bag_of_singles() {
        let ks = ks(&[
            ("C0000001", "alfa"),
            ("C0000002", "beta"),
            ("C0900000", "alfa beta"),
        ]);
        let phrase = words(&["alfa", "beta"]);
        let opts = MatchOptions::relaxed();
        let scored = evaluate_on(&ks, &phrase, &identity_sets(&phrase), &opts);
        let mappings = construct_mappings(&scored, &phrase, &opts);
        assert_eq!(mappings[0].aggregate_score, 1000);
        assert_eq!(mappings[1].aggregate_score, 1000);
        // The two-member bag ties at 1000 but loses on member count,
        // despite its lexicographically smaller CUI set.
        assert_eq!(mappings[0].candidates.len(), 1);
        assert_eq!(mappings[0].candidates[0].candidate.cui, "C0900000");
    }

    #[test]
    fn mappings_enumerate_maximal_disjoint_sets() {
        let ks = ks(&[
            ("C0000001", "alfa"),
            ("C0000002", "beta"),
            ("C0000003", "alfa beta"),
            ("C0000004", "gamma"),
        ]);
        let phrase = words(&["alfa", "beta", "gamma"]);
        let opts = MatchOptions::relaxed();
        let scored = evaluate_on(&ks, &phrase, &identity_sets(&phrase), &opts);
        let mappings = construct_mappings(&scored, &phrase, &opts);
        // Maximal sets: {alfa, beta, gamma} and {alfa beta, gamma}.
        assert_eq!(mappings.len(), 2);
        for m in &mappings {
            let covered = m.covered_positions();
            assert_eq!(covered, vec![0, 1, 2]);
            // Disjointness within each mapping.
            let mask: u64 = m
                .candidates
                .iter()
                .map(|c| position_mask(&c.candidate.matched_positions))
                .fold(0, |acc, x| {
                    assert_eq!(acc & x, 0);
                    acc | x
                });
            assert_eq!(mask, 0b111);
        }
    }

    #[test]
    fn strict_mode_drops_low_scoring_mappings() {
        let ks = ks(&[("C0947637", "Stenosi")]);
        let phrase = words(&["stenosi", "vascolari"]);
        let relaxed = MatchOptions::relaxed();
        let strict = MatchOptions::strict();
        let scored = evaluate_on(&ks, &phrase, &identity_sets(&phrase), &relaxed);
        assert_eq!(construct_mappings(&scored, &phrase, &relaxed).len(), 1);
        assert!(construct_mappings(&scored, &phrase, &strict).is_empty());
    }

    #[test]
    fn mapping_output_ignores_candidate_input_order() {
        let ks = ks(&[
            ("C0000001", "alfa"),
            ("C0000002", "beta"),
            ("C0000003", "alfa beta"),
        ]);
        let phrase = words(&["alfa", "beta"]);
        let opts = MatchOptions::relaxed();
        let mut scored = evaluate_on(&ks, &phrase, &identity_sets(&phrase), &opts);
        let forward = construct_mappings(&scored, &phrase, &opts);
        scored.reverse();
        let backward = construct_mappings(&scored, &phrase, &opts);
        assert_eq!(forward, backward);
    }

    fn doc(sentences: &[&str]) -> Document {
        Document {
            doc_id: "doc-1".into(),
            domain: Domain::Cardiology,
            language: "it".into(),
            sentences: sentences.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn annotate_emits_expected_concept() {
        let ks = ks(&[("C0013604", "Edema")]);
        let anns = annotate(
            &ks,
            &doc(&["Edema."]),
            &VariantGenerator::identity("it"),
            &MatchOptions::relaxed(),
        )
        .unwrap();
        assert_eq!(anns.len(), 1);
        assert_eq!(anns[0].cui, "C0013604");
        assert_eq!(anns[0].score, 1000);
        assert_eq!(anns[0].surface, "Edema");
        assert_eq!((anns[0].sentence, anns[0].start, anns[0].end), (0, 0, 5));
        assert_eq!(anns[0].language, "it");
    }

    #[test]
    fn annotate_misses_inflected_form_without_variants() {
        let ks = ks(&[("C0013604", "Edema")]);
        let anns = annotate(
            &ks,
            &doc(&["Edemi."]),
            &VariantGenerator::identity("it"),
            &MatchOptions::relaxed(),
        )
        .unwrap();
        assert!(anns.is_empty());
    }

    #[test]
    fn annotate_finds_inflected_form_with_rules() {
        let ks = ks(&[("C0013604", "Edema")]);
        let generator = VariantGenerator::new(
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
        let anns = annotate(
            &ks,
            &doc(&["Edemi."]),
            &generator,
            &MatchOptions::relaxed(),
        )
        .unwrap();
        assert_eq!(anns.len(), 1);
        assert_eq!(anns[0].cui, "C0013604");
        assert_eq!(anns[0].score, 800);
        assert_eq!(anns[0].surface, "Edemi");
    }

    #[test]
    fn annotate_spans_slice_the_sentence() {
        let ks = ks(&[("C0679403", "Stenosi vascolare"), ("C0947637", "Stenosi")]);
        let anns = annotate(
            &ks,
            &doc(&["Paziente con stenosi vascolari diffuse."]),
            &VariantGenerator::identity("it"),
            &MatchOptions::relaxed(),
        )
        .unwrap();
        assert_eq!(anns.len(), 1);
        assert_eq!(anns[0].cui, "C0947637");
        assert_eq!(anns[0].surface, "stenosi");
        assert_eq!(
            &doc(&["Paziente con stenosi vascolari diffuse."]).sentences[0]
                [anns[0].start..anns[0].end],
            "stenosi"
        );
    }

    #[test]
    fn annotate_rejects_language_mismatches() {
        let ks = ks(&[("C0013604", "Edema")]);
        let mut document = doc(&["Edema."]);
        document.language = "en".into();
        let err = annotate(
            &ks,
            &document,
            &VariantGenerator::identity("en"),
            &MatchOptions::relaxed(),
        )
        .unwrap_err();
        assert!(matches!(err, MatcherError::LanguageMismatch { .. }));

        let err = annotate(
            &ks,
            &doc(&["Edema."]),
            &VariantGenerator::identity("en"),
            &MatchOptions::relaxed(),
        )
        .unwrap_err();
        assert!(matches!(err, MatcherError::LanguageMismatch { .. }));
    }

    #[test]
    fn annotate_splits_very_long_phrases() {
        let ks = ks(&[("C0013604", "zz")]);
        // 13 identical words with no stopwords or punctuation in between:
        // the 13th lands in a second chunk and still gets annotated.
        let sentence = format!("{}.", vec!["zz"; 13].join(" "));
        let anns = annotate(
            &ks,
            &doc(&[&sentence]),
            &VariantGenerator::identity("it"),
            &MatchOptions::relaxed(),
        )
        .unwrap();
        assert_eq!(anns.len(), 2);
        assert!(anns[0].start < anns[1].start);
    }

    #[test]
    fn annotations_round_trip_as_json_lines() {
        let ks = ks(&[("C0013604", "Edema")]);
        let anns = annotate(
            &ks,
            &doc(&["Edema."]),
            &VariantGenerator::identity("it"),
            &MatchOptions::relaxed(),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_annotations(&mut buf, &anns).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"doc_id\""));
        assert!(text.contains("\"cui\":\"C0013604\""));
        let read = read_annotations(buf.as_slice()).unwrap();
        assert_eq!(read, anns);
    }

    #[test]
    fn analysis_lists_ranked_mappings() {
        let ks = ks(&[("C0679403", "Stenosi vascolare"), ("C0947637", "Stenosi")]);
        let (_, analyses) = annotate_with_analysis(
            &ks,
            &doc(&["Stenosi vascolari."]),
            &VariantGenerator::identity("it"),
            &MatchOptions::relaxed(),
        )
        .unwrap();
        assert_eq!(analyses.len(), 1);
        let scores: Vec<u32> = analyses[0]
            .mappings
            .iter()
            .map(|m| m.aggregate_score)
            .collect();
        assert_eq!(scores, vec![625, 417]);
    }

    #[test]
    fn variant_distance_feeds_variation_metric() {
        let gen = VariantGenerator::new(
            "it",
            vec![SuffixRule {
                suffix: "i".into(),
                replacement: "e".into(),
                cost: 1,
                tag: Transform::Inflection,
            }],
            vec![],
        )
        .unwrap();
        let variants = generate_variants("vascolari", &gen);
        assert!(variants.iter().any(|v| v.text == "vascolare" && v.distance == 1));
        let ks = ks(&[("C0679403", "Stenosi vascolare")]);
        let phrase = words(&["stenosi", "vascolari"]);
        let sets = expand_phrase(&phrase, &gen);
        let opts = MatchOptions::relaxed();
        let scored = evaluate_on(&ks, &phrase, &sets, &opts);
        assert_eq!(scored.len(), 1);
        // Head matched at distance 1: centrality 0, variation mean(1, 0.8).
        assert_eq!(scored[0].metrics.centrality, 0.0);
        assert!((scored[0].metrics.variation - 0.9).abs() < 1e-12);
        assert_eq!(scored[0].score, 817);
    }
}
