//! Text preparation: tokenization, sentence splitting, corpus I/O,
//! surface normalization (acronyms / abbreviations / misspellings), and
//! noun-phrase-style chunking.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Maximum number of fixpoint passes when applying a normalization table.
/// Validated tables converge long before this; the cap only guards
/// pathological boundary compositions.
const MAX_NORMALIZE_PASSES: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum TextprepError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus line {line}: {source}")]
    CorpusJson {
        line: usize,
        source: serde_json::Error,
    },
    #[error("corpus line {line}: duplicate doc_id {doc_id:?}")]
    DuplicateDocId { line: usize, doc_id: String },
    #[error("normalization table line {line}: expected 3 tab-separated fields, found {found}")]
    TableRow { line: usize, found: usize },
    #[error("normalization table line {line}: unknown tag {tag:?} (expected acronym, abbreviation, or misspelling)")]
    TableTag { line: usize, tag: String },
    #[error("normalization table line {line}: key {key:?} contains no tokens")]
    TableEmptyKey { line: usize, key: String },
    #[error("normalization table line {line}: duplicate key {key:?}")]
    TableDuplicateKey { line: usize, key: String },
    #[error("normalization table: entry {key:?} maps to itself")]
    TableSelfMap { key: String },
    #[error("normalization table: replacement {replacement:?} contains key {key:?}, which would re-trigger")]
    TableRetrigger { key: String, replacement: String },
    #[error("unknown domain {0:?}")]
    UnknownDomain(String),
}

// ---------------------------------------------------------------------------
// Tokenization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Word,
    Number,
    Punctuation,
}

/// A token with byte offsets into the sentence it was cut from.
/// `surface` always equals `sentence[start..end]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub start: usize,
    pub end: usize,
    pub kind: TokenKind,
}

/// Cuts a sentence into word, number, and punctuation tokens.
///
/// Word tokens are maximal runs of alphabetic characters (any script),
/// number tokens are maximal runs of numeric characters, and every other
/// non-whitespace character becomes a single punctuation token. Whitespace
/// only separates tokens. Token spans are strictly increasing and
/// non-overlapping.
pub fn tokenize(sentence: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut chars = sentence.char_indices().peekable();
    while let Some(&(start, ch)) = chars.peek() {
        if ch.is_whitespace() {
            chars.next();
            continue;
        }
        let kind = if ch.is_alphabetic() {
            TokenKind::Word
        } else if ch.is_numeric() {
            TokenKind::Number
        } else {
            TokenKind::Punctuation
        };
        let mut end = start + ch.len_utf8();
        chars.next();
        if kind != TokenKind::Punctuation {
            while let Some(&(pos, next)) = chars.peek() {
                let same = match kind {
                    TokenKind::Word => next.is_alphabetic(),
                    TokenKind::Number => next.is_numeric(),
                    TokenKind::Punctuation => false,
                };
                if !same {
                    break;
                }
                end = pos + next.len_utf8();
                chars.next();
            }
        }
        tokens.push(Token {
            surface: sentence[start..end].to_string(),
            start,
            end,
            kind,
        });
    }
    tokens
}

// ---------------------------------------------------------------------------
// Sentence splitting
// ---------------------------------------------------------------------------

/// Rule-based sentence splitter. A run of `. ! ?` ends a sentence unless the
/// period sits inside a decimal number or directly after a protected
/// abbreviation.
#[derive(Debug, Clone)]
pub struct SentenceSplitter {
    protected: BTreeSet<String>,
}

impl SentenceSplitter {
    pub fn new<I, S>(protected_abbreviations: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        SentenceSplitter {
            protected: protected_abbreviations
                .into_iter()
                .map(|s| s.as_ref().to_lowercase())
                .collect(),
        }
    }

    /// Splitter with a small protected-abbreviation list for the given
    /// language code; unknown codes get an empty list.
    pub fn for_language(language: &str) -> Self {
        let protected: &[&str] = match language {
            "it" => &["dott", "prof", "sig", "dr", "es", "ecc", "art"],
            "en" => &["dr", "mr", "mrs", "ms", "prof", "vs", "etc", "fig"],
            _ => &[],
        };
        SentenceSplitter::new(protected.iter().copied())
    }

    /// Byte spans of the sentences in `text`, trimmed of surrounding
    /// whitespace. Spans are strictly increasing and non-overlapping; text
    /// between spans is only whitespace or terminator runs.
    pub fn split_spans(&self, text: &str) -> Vec<(usize, usize)> {
        let mut spans = Vec::new();
        let mut sentence_start = 0usize;
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let mut i = 0;
        while i < chars.len() {
            let (pos, ch) = chars[i];
            if matches!(ch, '.' | '!' | '?') {
                // Consume the whole terminator run ("...", "?!").
                let mut j = i;
                while j + 1 < chars.len() && matches!(chars[j + 1].1, '.' | '!' | '?') {
                    j += 1;
                }
                let run_len = j - i + 1;
                let boundary = if run_len > 1 {
                    true
                } else if ch == '.' {
                    !self.is_decimal_point(&chars, i) && !self.follows_protected(text, pos)
                } else {
                    true
                };
                if boundary {
                    let end = chars[j].0 + chars[j].1.len_utf8();
                    push_trimmed(text, sentence_start, end, &mut spans);
                    sentence_start = end;
                }
                i = j + 1;
            } else {
                i += 1;
            }
        }
        push_trimmed(text, sentence_start, text.len(), &mut spans);
        spans
    }

    /// The sentences of `text` as owned strings (see [`split_spans`]).
    ///
    /// [`split_spans`]: SentenceSplitter::split_spans
    pub fn split(&self, text: &str) -> Vec<String> {
        self.split_spans(text)
            .into_iter()
            .map(|(s, e)| text[s..e].to_string())
            .collect()
    }

    fn is_decimal_point(&self, chars: &[(usize, char)], i: usize) -> bool {
        i > 0
            && i + 1 < chars.len()
            && chars[i - 1].1.is_numeric()
            && chars[i + 1].1.is_numeric()
    }

    fn follows_protected(&self, text: &str, period_pos: usize) -> bool {
        if self.protected.is_empty() {
            return false;
        }
        let before = &text[..period_pos];
        let word_start = before
            .rfind(|c: char| !c.is_alphabetic())
            .map(|p| p + before[p..].chars().next().unwrap().len_utf8())
            .unwrap_or(0);
        let word = &before[word_start..];
        !word.is_empty() && self.protected.contains(&word.to_lowercase())
    }
}

fn push_trimmed(text: &str, start: usize, end: usize, spans: &mut Vec<(usize, usize)>) {
    let slice = &text[start..end];
    let trimmed = slice.trim_start();
    let lead = slice.len() - trimmed.len();
    let trimmed = trimmed.trim_end();
    if !trimmed.is_empty() {
        spans.push((start + lead, start + lead + trimmed.len()));
    }
}

// ---------------------------------------------------------------------------
// Documents and corpora
// ---------------------------------------------------------------------------

/// Clinical domain a document or gold annotation belongs to.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Cardiology,
    Diabetology,
    Hepatology,
    Nephrology,
    Oncology,
}

impl Domain {
    pub const ALL: [Domain; 5] = [
        Domain::Cardiology,
        Domain::Diabetology,
        Domain::Hepatology,
        Domain::Nephrology,
        Domain::Oncology,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Domain::Cardiology => "cardiology",
            Domain::Diabetology => "diabetology",
            Domain::Hepatology => "hepatology",
            Domain::Nephrology => "nephrology",
            Domain::Oncology => "oncology",
        }
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Domain {
    type Err = TextprepError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cardiology" => Ok(Domain::Cardiology),
            "diabetology" => Ok(Domain::Diabetology),
            "hepatology" => Ok(Domain::Hepatology),
            "nephrology" => Ok(Domain::Nephrology),
            "oncology" => Ok(Domain::Oncology),
            other => Err(TextprepError::UnknownDomain(other.to_string())),
        }
    }
}

/// A document whose text has already been cut into sentences.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub domain: Domain,
    pub language: String,
    pub sentences: Vec<String>,
}

impl Document {
    /// Builds a document from raw text using `splitter`.
    pub fn from_text(
        doc_id: impl Into<String>,
        domain: Domain,
        language: impl Into<String>,
        text: &str,
        splitter: &SentenceSplitter,
    ) -> Self {
        Document {
            doc_id: doc_id.into(),
            domain,
            language: language.into(),
            sentences: splitter.split(text),
        }
    }
}

/// Reads a JSON-Lines corpus; one document per line, blank lines skipped.
/// Doc ids must be unique. Errors carry 1-based line numbers.
pub fn read_corpus<R: BufRead>(reader: R) -> Result<Vec<Document>, TextprepError> {
    let mut docs: Vec<Document> = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|source| {
            TextprepError::CorpusJson {
                line: idx + 1,
                source,
            }
        })?;
        if !seen.insert(doc.doc_id.clone()) {
            return Err(TextprepError::DuplicateDocId {
                line: idx + 1,
                doc_id: doc.doc_id,
            });
        }
        docs.push(doc);
    }
    Ok(docs)
}

/// Writes a corpus as JSON Lines, one document per line.
pub fn write_corpus<W: Write>(mut writer: W, docs: &[Document]) -> Result<(), TextprepError> {
    for doc in docs {
        serde_json::to_writer(&mut writer, doc).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Surface normalization
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormTag {
    Acronym,
    Abbreviation,
    Misspelling,
}

impl fmt::Display for NormTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NormTag::Acronym => "acronym",
            NormTag::Abbreviation => "abbreviation",
            NormTag::Misspelling => "misspelling",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormEntry {
    pub key: String,
    pub replacement: String,
    pub tag: NormTag,
}

#[derive(Debug, Clone)]
struct CompiledEntry {
    key_tokens: Vec<String>,
    replacement: String,
    tag: NormTag,
}

/// Validated lookup table mapping surface forms to their normalized
/// replacements. Keys are matched as exact (case-sensitive) token sequences.
///
/// Validation guarantees the rewrite system terminates: keys are unique and
/// non-empty, and no replacement contains any key as a contiguous token
/// subsequence (which also rules out entries that map to themselves).
#[derive(Debug, Clone)]
pub struct NormalizationTable {
    entries: Vec<NormEntry>,
    compiled: Vec<CompiledEntry>,
}

impl NormalizationTable {
    pub fn new(entries: Vec<NormEntry>) -> Result<Self, TextprepError> {
        let mut compiled = Vec::with_capacity(entries.len());
        let mut seen_keys = BTreeSet::new();
        for (idx, entry) in entries.iter().enumerate() {
            let key_tokens: Vec<String> = tokenize(&entry.key)
                .into_iter()
                .map(|t| t.surface)
                .collect();
            if key_tokens.is_empty() {
                return Err(TextprepError::TableEmptyKey {
                    line: idx + 1,
                    key: entry.key.clone(),
                });
            }
            if !seen_keys.insert(key_tokens.clone()) {
                return Err(TextprepError::TableDuplicateKey {
                    line: idx + 1,
                    key: entry.key.clone(),
                });
            }
            compiled.push(CompiledEntry {
                key_tokens,
                replacement: entry.replacement.clone(),
                tag: entry.tag,
            });
        }
        for entry in &compiled {
            let replacement_tokens: Vec<String> = tokenize(&entry.replacement)
                .into_iter()
                .map(|t| t.surface)
                .collect();
            for other in &compiled {
                if contains_subsequence(&replacement_tokens, &other.key_tokens) {
                    if entry.key_tokens == other.key_tokens {
                        return Err(TextprepError::TableSelfMap {
                            key: entry.key_tokens.join(" "),
                        });
                    }
                    return Err(TextprepError::TableRetrigger {
                        key: other.key_tokens.join(" "),
                        replacement: entry.replacement.clone(),
                    });
                }
            }
        }
        Ok(NormalizationTable { entries, compiled })
    }

    /// Parses the tab-separated table format: `surface<TAB>replacement<TAB>tag`,
    /// where tag is `acronym`, `abbreviation`, or `misspelling`. Blank lines
    /// and lines starting with `#` are skipped.
    pub fn from_tsv<R: BufRead>(reader: R) -> Result<Self, TextprepError> {
        let mut entries = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim_end_matches(['\r', '\n']);
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split('\t').collect();
            if fields.len() != 3 {
                return Err(TextprepError::TableRow {
                    line: idx + 1,
                    found: fields.len(),
                });
            }
            let tag = match fields[2] {
                "acronym" => NormTag::Acronym,
                "abbreviation" => NormTag::Abbreviation,
                "misspelling" => NormTag::Misspelling,
                other => {
                    return Err(TextprepError::TableTag {
                        line: idx + 1,
                        tag: other.to_string(),
                    })
                }
            };
            entries.push(NormEntry {
                key: fields[0].to_string(),
                replacement: fields[1].to_string(),
                tag,
            });
        }
        NormalizationTable::new(entries)
    }

    pub fn entries(&self) -> &[NormEntry] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Longest key match at token position `i`, if any.
    fn match_at(&self, surfaces: &[&str], i: usize) -> Option<&CompiledEntry> {
        let mut best: Option<&CompiledEntry> = None;
        for entry in &self.compiled {
            let len = entry.key_tokens.len();
            if i + len > surfaces.len() {
                continue;
            }
            if entry.key_tokens.iter().zip(&surfaces[i..i + len]).all(|(k, s)| k == s)
                && best.map_or(true, |b| len > b.key_tokens.len())
            {
                best = Some(entry);
            }
        }
        best
    }
}

fn contains_subsequence(haystack: &[String], needle: &[String]) -> bool {
    if needle.is_empty() || needle.len() > haystack.len() {
        return false;
    }
    haystack
        .windows(needle.len())
        .any(|w| w.iter().zip(needle).all(|(a, b)| a == b))
}

/// One applied table entry: where it fired and what it rewrote. Offsets are
/// relative to the sentence as it stood when the pass ran.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replacement {
    pub sentence: usize,
    pub start: usize,
    pub end: usize,
    pub before: String,
    pub after: String,
    pub tag: NormTag,
}

/// Applies `table` to every sentence of `doc`, rewriting matched token
/// sequences left to right (longest key first) and repeating until no entry
/// fires. Returns the rewritten document and an audit log of every
/// replacement. Text outside matches is untouched; a document that matches
/// nothing comes back identical.
pub fn normalize(doc: &Document, table: &NormalizationTable) -> (Document, Vec<Replacement>) {
    let mut out = doc.clone();
    let mut log = Vec::new();
    if table.is_empty() {
        return (out, log);
    }
    for (si, sentence) in out.sentences.iter_mut().enumerate() {
        for _pass in 0..MAX_NORMALIZE_PASSES {
            let tokens = tokenize(sentence);
            let surfaces: Vec<&str> = tokens.iter().map(|t| t.surface.as_str()).collect();
            // Left-to-right, non-overlapping, longest match at each position.
            let mut matches: Vec<(usize, usize, &CompiledEntry)> = Vec::new();
            let mut i = 0;
            while i < tokens.len() {
                if let Some(entry) = table.match_at(&surfaces, i) {
                    matches.push((i, i + entry.key_tokens.len(), entry));
                    i += entry.key_tokens.len();
                } else {
                    i += 1;
                }
            }
            if matches.is_empty() {
                break;
            }
            // Splice right to left so earlier byte offsets stay valid.
            for &(ti, tj, entry) in matches.iter().rev() {
                let start = tokens[ti].start;
                let end = tokens[tj - 1].end;
                log.push(Replacement {
                    sentence: si,
                    start,
                    end,
                    before: sentence[start..end].to_string(),
                    after: entry.replacement.clone(),
                    tag: entry.tag,
                });
                sentence.replace_range(start..end, &entry.replacement);
            }
        }
    }
    (out, log)
}

// ---------------------------------------------------------------------------
// Phrase chunking
// ---------------------------------------------------------------------------

/// A candidate phrase: a contiguous run of word tokens from one sentence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phrase {
    pub tokens: Vec<Token>,
}

impl Phrase {
    pub fn start(&self) -> usize {
        self.tokens.first().map_or(0, |t| t.start)
    }

    pub fn end(&self) -> usize {
        self.tokens.last().map_or(0, |t| t.end)
    }
}

/// Splits token streams into phrases at punctuation, numbers, and stopwords.
/// This approximates minimal noun phrases without a parser: every maximal
/// run of non-stopword word tokens becomes one phrase.
#[derive(Debug, Clone)]
pub struct PhraseChunker {
    stopwords: BTreeSet<String>,
}

impl PhraseChunker {
    pub fn new<I, S>(stopwords: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        PhraseChunker {
            stopwords: stopwords
                .into_iter()
                .map(|s| s.as_ref().to_lowercase())
                .collect(),
        }
    }

    /// Chunker with a curated stopword list for the language code; unknown
    /// codes get no stopwords (then only punctuation and numbers split).
    pub fn for_language(language: &str) -> Self {
        let stopwords: &[&str] = match language {
            "it" => &[
                "a", "ad", "agli", "ai", "al", "alla", "alle", "allo", "che", "chi", "ci", "coi",
                "col", "con", "da", "dagli", "dai", "dal", "dalla", "dalle", "dallo", "degli",
                "dei", "del", "della", "delle", "dello", "di", "e", "ed", "fra", "gli", "i", "il",
                "in", "la", "le", "lo", "ma", "negli", "nei", "nel", "nella", "nelle", "nello",
                "non", "o", "od", "per", "se", "si", "su", "sugli", "sui", "sul", "sulla",
                "sulle", "sullo", "tra", "un", "una", "uno",
            ],
            "en" => &[
                "a", "an", "and", "are", "as", "at", "be", "been", "but", "by", "for", "from",
                "if", "in", "is", "it", "its", "no", "nor", "not", "of", "on", "or", "that",
                "the", "these", "this", "those", "to", "was", "were", "with",
            ],
            _ => &[],
        };
        PhraseChunker::new(stopwords.iter().copied())
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.stopwords.contains(&word.to_lowercase())
    }

    /// Cuts a token stream into phrases. Punctuation and number tokens end
    /// the current phrase and are dropped; stopword word tokens do the same.
    /// Every returned phrase is non-empty and consists only of non-stopword
    /// word tokens, in sentence order.
    pub fn chunk(&self, tokens: &[Token]) -> Vec<Phrase> {
        let mut phrases = Vec::new();
        let mut current: Vec<Token> = Vec::new();
        for token in tokens {
            let breaks = match token.kind {
                TokenKind::Word => self.is_stopword(&token.surface),
                TokenKind::Number | TokenKind::Punctuation => true,
            };
            if breaks {
                if !current.is_empty() {
                    phrases.push(Phrase {
                        tokens: std::mem::take(&mut current),
                    });
                }
            } else {
                current.push(token.clone());
            }
        }
        if !current.is_empty() {
            phrases.push(Phrase { tokens: current });
        }
        phrases
    }
}
