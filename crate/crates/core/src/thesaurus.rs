//! Knowledge-source construction: concept record ingestion, language and
//! semantic-group subsetting, term normalization, the inverted word index
//! used by candidate retrieval, and concept-coverage reporting.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::eval::GoldAnnotation;
use crate::textprep::{tokenize, Domain, TokenKind};

pub const KS_FORMAT: &str = "annotare-ks";
pub const KS_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ThesaurusError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("concept file line {line}: {reason}")]
    Record { line: usize, reason: String },
    #[error("concept {cui}: term {term:?} contains no indexable words")]
    EmptyTermWords { cui: String, term: String },
    #[error("concept {cui}: more than one preferred term after normalization")]
    PreferredConflict { cui: String },
    #[error("knowledge source header: {reason}")]
    Header { reason: String },
    #[error("knowledge source line {line}: {reason}")]
    SerializedRow { line: usize, reason: String },
    #[error("knowledge source line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
}

// ---------------------------------------------------------------------------
// Word/term normalization
// ---------------------------------------------------------------------------

/// Canonical matching form of a single word: lowercased and NFC-normalized,
/// with combining diacritics stripped when `fold_accents` is set.
pub fn normalize_word(word: &str, fold_accents: bool) -> String {
    let lowered = word.to_lowercase();
    if fold_accents {
        lowered
            .nfd()
            .filter(|c| !('\u{0300}'..='\u{036f}').contains(c))
            .nfc()
            .collect()
    } else {
        lowered.nfc().collect()
    }
}

/// Canonical matching form of a whole term: per-word normalization with
/// whitespace runs collapsed to single spaces.
pub fn normalize_term(term: &str, fold_accents: bool) -> String {
    term.split_whitespace()
        .map(|w| normalize_word(w, fold_accents))
        .collect::<Vec<_>>()
        .join(" ")
}

fn term_words(term: &str) -> Vec<String> {
    tokenize(term)
        .into_iter()
        .filter(|t| matches!(t.kind, TokenKind::Word | TokenKind::Number))
        .map(|t| t.surface)
        .collect()
}

/// A concept id is `C` followed by exactly seven digits.
pub fn valid_cui(cui: &str) -> bool {
    cui.len() == 8
        && cui.starts_with('C')
        && cui.bytes().skip(1).all(|b| b.is_ascii_digit())
}

// ---------------------------------------------------------------------------
// Concept records
// ---------------------------------------------------------------------------

/// One row of the pipe-delimited concept format:
/// `CUI|LANG|TERM|PREF|SEMTYPE|SOURCE`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptRecord {
    pub cui: String,
    pub language: String,
    pub term: String,
    pub is_preferred: bool,
    pub semantic_type: String,
    pub source_vocabulary: String,
}

/// Parses concept records. Blank lines and `#` comments are skipped; errors
/// carry 1-based line numbers. CUIs must match `C` + 7 digits, the preferred
/// flag must be `Y` or `N`, and no field except the source may be empty.
pub fn parse_concept_records<R: BufRead>(reader: R) -> Result<Vec<ConceptRecord>, ThesaurusError> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('|').collect();
        if fields.len() != 6 {
            return Err(ThesaurusError::Record {
                line: idx + 1,
                reason: format!("expected 6 pipe-separated fields, found {}", fields.len()),
            });
        }
        let cui = fields[0].trim();
        if !valid_cui(cui) {
            return Err(ThesaurusError::Record {
                line: idx + 1,
                reason: format!("malformed CUI {cui:?} (expected C followed by 7 digits)"),
            });
        }
        let language = fields[1].trim();
        if language.is_empty() {
            return Err(ThesaurusError::Record {
                line: idx + 1,
                reason: "empty language".into(),
            });
        }
        let term = fields[2].trim();
        if term.is_empty() {
            return Err(ThesaurusError::Record {
                line: idx + 1,
                reason: "empty term".into(),
            });
        }
        let is_preferred = match fields[3].trim() {
            "Y" => true,
            "N" => false,
            other => {
                return Err(ThesaurusError::Record {
                    line: idx + 1,
                    reason: format!("preferred flag must be Y or N, got {other:?}"),
                })
            }
        };
        let semantic_type = fields[4].trim();
        if semantic_type.is_empty() {
            return Err(ThesaurusError::Record {
                line: idx + 1,
                reason: "empty semantic type".into(),
            });
        }
        records.push(ConceptRecord {
            cui: cui.to_string(),
            language: language.to_string(),
            term: term.to_string(),
            is_preferred,
            semantic_type: semantic_type.to_string(),
            source_vocabulary: fields[5].trim().to_string(),
        });
    }
    Ok(records)
}

// ---------------------------------------------------------------------------
// Semantic groups
// ---------------------------------------------------------------------------

/// A named set of semantic types. Membership tests are case-insensitive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticGroupDef {
    name: String,
    members: BTreeSet<String>,
}

impl SemanticGroupDef {
    pub fn new<I, S>(name: impl Into<String>, members: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        SemanticGroupDef {
            name: name.into(),
            members: members
                .into_iter()
                .map(|m| m.as_ref().to_lowercase())
                .collect(),
        }
    }

    /// The "Disorders" group: the twelve semantic types covering pathologic
    /// findings, diseases, and related abnormalities.
    pub fn disorders() -> Self {
        SemanticGroupDef::new(
            "Disorders",
            [
                "Acquired Abnormality",
                "Anatomical Abnormality",
                "Cell or Molecular Dysfunction",
                "Congenital Abnormality",
                "Disease or Syndrome",
                "Finding",
                "Injury or Poisoning",
                "Mental or Behavioral Dysfunction",
                "Neoplastic Process",
                "Pathologic Function",
                "Sign or Symptom",
                "Virus/Bacterium",
            ],
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn members(&self) -> impl Iterator<Item = &str> {
        self.members.iter().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, semantic_type: &str) -> bool {
        self.members.contains(&semantic_type.to_lowercase())
    }
}

// ---------------------------------------------------------------------------
// Knowledge source
// ---------------------------------------------------------------------------

/// Stable identifier of one term row inside a knowledge source. Ids are
/// dense and equal to the row position.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct StringId(pub u32);

/// One indexed term: its concept, normalized text, and word split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermRow {
    pub id: StringId,
    pub cui: String,
    pub term: String,
    pub preferred: bool,
    pub semantic_type: String,
    pub words: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BuildOptions {
    pub fold_accents: bool,
}

/// Provenance and size counters recorded when a knowledge source is built.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildManifest {
    pub language: String,
    pub semantic_group: Option<String>,
    pub group_members: Vec<String>,
    pub fold_accents: bool,
    pub input_records: usize,
    pub matched_records: usize,
    pub retained_terms: usize,
    pub duplicates_merged: usize,
    pub distinct_cuis: usize,
}

/// Immutable, language-specific term store with an inverted word index.
///
/// Rows are sorted by (cui, term) and ids equal row positions, so a build
/// from the same record multiset always produces the identical structure
/// regardless of input order.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeSource {
    language: String,
    fold_accents: bool,
    rows: Vec<TermRow>,
    index: BTreeMap<String, BTreeSet<StringId>>,
    cuis: BTreeSet<String>,
    preferred: BTreeMap<String, StringId>,
    manifest: BuildManifest,
}

static EMPTY_IDS: BTreeSet<StringId> = BTreeSet::new();

impl KnowledgeSource {
    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn fold_accents(&self) -> bool {
        self.fold_accents
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[TermRow] {
        &self.rows
    }

    pub fn row(&self, id: StringId) -> Option<&TermRow> {
        self.rows.get(id.0 as usize)
    }

    /// Ids of every term containing `word` (already normalized) as one of
    /// its words.
    pub fn lookup_word(&self, word: &str) -> &BTreeSet<StringId> {
        self.index.get(word).unwrap_or(&EMPTY_IDS)
    }

    /// Normalizes `word` with this source's accent policy, then looks it up.
    pub fn lookup_surface(&self, surface: &str) -> &BTreeSet<StringId> {
        self.lookup_word(&normalize_word(surface, self.fold_accents))
    }

    pub fn contains_cui(&self, cui: &str) -> bool {
        self.cuis.contains(cui)
    }

    pub fn cuis(&self) -> impl Iterator<Item = &str> {
        self.cuis.iter().map(|s| s.as_str())
    }

    /// The preferred term of `cui`, if the source marks one.
    pub fn preferred_term(&self, cui: &str) -> Option<&str> {
        self.preferred
            .get(cui)
            .and_then(|id| self.row(*id))
            .map(|r| r.term.as_str())
    }

    /// CUIs having at least one row whose semantic type belongs to `group`.
    pub fn cuis_in_group(&self, group: &SemanticGroupDef) -> BTreeSet<String> {
        self.rows
            .iter()
            .filter(|r| group.contains(&r.semantic_type))
            .map(|r| r.cui.clone())
            .collect()
    }

    pub fn manifest(&self) -> &BuildManifest {
        &self.manifest
    }

    /// Serializes as JSON Lines: a header line with format, version, and
    /// manifest, then one line per term row in id order.
    pub fn to_writer<W: Write>(&self, mut writer: W) -> Result<(), ThesaurusError> {
        let header = SerializedHeader {
            format: KS_FORMAT.to_string(),
            version: KS_VERSION,
            manifest: self.manifest.clone(),
        };
        serde_json::to_writer(&mut writer, &header).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
        for row in &self.rows {
            let line = SerializedRow {
                id: row.id.0,
                cui: row.cui.clone(),
                term: row.term.clone(),
                preferred: row.preferred,
                semantic_type: row.semantic_type.clone(),
            };
            serde_json::to_writer(&mut writer, &line).map_err(std::io::Error::from)?;
            writer.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Reads a serialized knowledge source, rebuilding the word index and
    /// re-validating ids, CUIs, and the one-preferred-per-concept rule.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self, ThesaurusError> {
        let mut lines = reader.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| ThesaurusError::Header {
                reason: "empty input".into(),
            })??;
        let header: SerializedHeader =
            serde_json::from_str(&header_line).map_err(|source| ThesaurusError::Json {
                line: 1,
                source,
            })?;
        if header.format != KS_FORMAT {
            return Err(ThesaurusError::Header {
                reason: format!("unknown format {:?}", header.format),
            });
        }
        if header.version != KS_VERSION {
            return Err(ThesaurusError::Header {
                reason: format!(
                    "unsupported version {} (expected {KS_VERSION})",
                    header.version
                ),
            });
        }
        let mut rows = Vec::new();
        for (idx, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: SerializedRow =
                serde_json::from_str(&line).map_err(|source| ThesaurusError::Json {
                    line: idx + 2,
                    source,
                })?;
            if raw.id as usize != rows.len() {
                return Err(ThesaurusError::SerializedRow {
                    line: idx + 2,
                    reason: format!("id {} out of order (expected {})", raw.id, rows.len()),
                });
            }
            if !valid_cui(&raw.cui) {
                return Err(ThesaurusError::SerializedRow {
                    line: idx + 2,
                    reason: format!("malformed CUI {:?}", raw.cui),
                });
            }
            let words = term_words(&raw.term);
            if words.is_empty() {
                return Err(ThesaurusError::SerializedRow {
                    line: idx + 2,
                    reason: format!("term {:?} contains no indexable words", raw.term),
                });
            }
            rows.push(TermRow {
                id: StringId(raw.id),
                cui: raw.cui,
                term: raw.term,
                preferred: raw.preferred,
                semantic_type: raw.semantic_type,
                words,
            });
        }
        assemble(rows, header.manifest)
    }

    pub fn save(&self, path: &Path) -> Result<(), ThesaurusError> {
        let file = std::fs::File::create(path)?;
        let mut writer = std::io::BufWriter::new(file);
        self.to_writer(&mut writer)?;
        use std::io::Write as _;
        writer.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ThesaurusError> {
        let file = std::fs::File::open(path)?;
        KnowledgeSource::from_reader(std::io::BufReader::new(file))
    }
}

#[derive(Serialize, Deserialize)]
struct SerializedHeader {
    format: String,
    version: u32,
    manifest: BuildManifest,
}

#[derive(Serialize, Deserialize)]
struct SerializedRow {
    id: u32,
    cui: String,
    term: String,
    preferred: bool,
    semantic_type: String,
}

/// Filters `records` to `language` (case-insensitive code comparison) and,
/// when given, to semantic types inside `group`; normalizes terms; merges
/// duplicate (cui, term) rows; and builds the indexed source.
pub fn build_knowledge_source(
    records: &[ConceptRecord],
    language: &str,
    group: Option<&SemanticGroupDef>,
    options: &BuildOptions,
) -> Result<KnowledgeSource, ThesaurusError> {
    let mut matched = 0usize;
    // (cui, normalized term) -> (preferred-any, lexicographically first semtype)
    let mut merged: BTreeMap<(String, String), (bool, String)> = BTreeMap::new();
    for record in records {
        if !record.language.eq_ignore_ascii_case(language) {
            continue;
        }
        if let Some(group) = group {
            if !group.contains(&record.semantic_type) {
                continue;
            }
        }
        matched += 1;
        let term = normalize_term(&record.term, options.fold_accents);
        if term_words(&term).is_empty() {
            return Err(ThesaurusError::EmptyTermWords {
                cui: record.cui.clone(),
                term: record.term.clone(),
            });
        }
        merged
            .entry((record.cui.clone(), term))
            .and_modify(|(pref, semtype)| {
                *pref |= record.is_preferred;
                if record.semantic_type < *semtype {
                    *semtype = record.semantic_type.clone();
                }
            })
            .or_insert_with(|| (record.is_preferred, record.semantic_type.clone()));
    }
    let rows: Vec<TermRow> = merged
        .into_iter()
        .enumerate()
        .map(|(i, ((cui, term), (preferred, semantic_type)))| TermRow {
            id: StringId(i as u32),
            words: term_words(&term),
            cui,
            term,
            preferred,
            semantic_type,
        })
        .collect();
    let retained = rows.len();
    let manifest = BuildManifest {
        language: language.to_lowercase(),
        semantic_group: group.map(|g| g.name().to_string()),
        group_members: group
            .map(|g| g.members().map(str::to_string).collect())
            .unwrap_or_default(),
        fold_accents: options.fold_accents,
        input_records: records.len(),
        matched_records: matched,
        retained_terms: retained,
        duplicates_merged: matched - retained,
        distinct_cuis: 0, // filled by assemble
    };
    assemble(rows, manifest)
}

fn assemble(rows: Vec<TermRow>, mut manifest: BuildManifest) -> Result<KnowledgeSource, ThesaurusError> {
    let mut index: BTreeMap<String, BTreeSet<StringId>> = BTreeMap::new();
    let mut cuis = BTreeSet::new();
    let mut preferred: BTreeMap<String, StringId> = BTreeMap::new();
    for row in &rows {
        for word in &row.words {
            index.entry(word.clone()).or_default().insert(row.id);
        }
        cuis.insert(row.cui.clone());
        if row.preferred {
            if preferred.insert(row.cui.clone(), row.id).is_some() {
                return Err(ThesaurusError::PreferredConflict {
                    cui: row.cui.clone(),
                });
            }
        }
    }
    manifest.distinct_cuis = cuis.len();
    manifest.retained_terms = rows.len();
    Ok(KnowledgeSource {
        language: manifest.language.clone(),
        fold_accents: manifest.fold_accents,
        rows,
        index,
        cuis,
        preferred,
        manifest,
    })
}

// ---------------------------------------------------------------------------
// Concept coverage
// ---------------------------------------------------------------------------

/// Found/total counts for one slice of a gold standard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub found: usize,
    pub total: usize,
}

impl CoverageRow {
    /// Percentage found, or `None` for an empty slice (never reported as 0).
    pub fn percent(&self) -> Option<f64> {
        if self.total == 0 {
            None
        } else {
            Some(self.found as f64 * 100.0 / self.total as f64)
        }
    }
}

/// Per-domain and overall counts of gold mentions whose concept exists in
/// the knowledge source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub per_domain: BTreeMap<Domain, CoverageRow>,
    pub overall: CoverageRow,
}

/// Counts, per domain and overall, how many gold mentions point at a CUI
/// present in `ks`. Every gold row lands in exactly one domain bucket, so
/// the per-domain counts sum to the overall counts.
pub fn coverage_report(gold: &[GoldAnnotation], ks: &KnowledgeSource) -> CoverageReport {
    let mut per_domain: BTreeMap<Domain, CoverageRow> = BTreeMap::new();
    let mut overall = CoverageRow { found: 0, total: 0 };
    for g in gold {
        let row = per_domain
            .entry(g.domain)
            .or_insert(CoverageRow { found: 0, total: 0 });
        row.total += 1;
        overall.total += 1;
        if ks.contains_cui(&g.cui) {
            row.found += 1;
            overall.found += 1;
        }
    }
    CoverageReport {
        per_domain,
        overall,
    }
}
