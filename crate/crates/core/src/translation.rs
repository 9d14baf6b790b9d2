//! Sentence translation ahead of annotation: a deterministic glossary
//! translator for reproducible runs, and an HTTP client for a live
//! translation service. Sentences are submitted in a seeded random order
//! and restored to their original indices afterwards.

use std::collections::HashMap;
use std::io::BufRead;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::textprep::{tokenize, Document};

#[derive(Debug, thiserror::Error)]
pub enum TranslationError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("glossary line {line}: {reason}")]
    GlossaryRow { line: usize, reason: String },
    #[error("glossary entry {entry:?}: {reason}")]
    GlossaryEntry { entry: String, reason: String },
    #[error("invalid translator config: {reason}")]
    Config { reason: String },
    #[error("document language {doc:?} does not match translator source {expected:?}")]
    SourceMismatch { doc: String, expected: String },
    #[error("translation failed at sentence {index}: {reason}")]
    SentenceFailed { index: usize, reason: String },
    #[error("translation service returned {got} sentences for a batch of {sent}")]
    BatchShape { sent: usize, got: usize },
}

/// One sentence's journey through the translator, in original index order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationRecord {
    pub index: usize,
    pub source: String,
    pub target: String,
}

/// A sentence translator between a fixed language pair. Batch inputs are
/// whole sentences; implementations must return exactly one output per
/// input, in order. A batch-level failure may be reported against the
/// offset of the sentence that caused it.
pub trait Translator {
    fn source_language(&self) -> &str;
    fn target_language(&self) -> &str;
    /// Translate one batch. On error, `SentenceFailed::index` is the
    /// offset *within this batch*.
    fn translate_batch(&self, sentences: &[String]) -> Result<Vec<String>, TranslationError>;
}

// ---------------------------------------------------------------------------
// Glossary translator
// ---------------------------------------------------------------------------

/// Deterministic phrase-table translator: entries map a source phrase of
/// one or more words to a target phrase. Matching is case-insensitive and
/// longest-match-first over the token stream, in a single left-to-right
/// pass; anything unmatched is copied through verbatim, punctuation and
/// spacing included.
#[derive(Debug, Clone)]
pub struct GlossaryTranslator {
    source: String,
    target: String,
    /// Lowercased source token sequence -> replacement text.
    entries: HashMap<Vec<String>, String>,
    max_key_tokens: usize,
}

impl GlossaryTranslator {
    pub fn new(
        source: &str,
        target: &str,
        pairs: &[(String, String)],
    ) -> Result<Self, TranslationError> {
        let mut entries = HashMap::new();
        let mut max_key_tokens = 0;
        for (src, dst) in pairs {
            let key = key_tokens(src);
            if key.is_empty() {
                return Err(TranslationError::GlossaryEntry {
                    entry: src.clone(),
                    reason: "source phrase contains no words".into(),
                });
            }
            if entries.insert(key.clone(), dst.clone()).is_some() {
                return Err(TranslationError::GlossaryEntry {
                    entry: src.clone(),
                    reason: "duplicate source phrase".into(),
                });
            }
            max_key_tokens = max_key_tokens.max(key.len());
        }
        Ok(GlossaryTranslator {
            source: source.to_string(),
            target: target.to_string(),
            entries,
            max_key_tokens,
        })
    }

    /// Reads TSV `source_phrase<TAB>target_phrase`; `#` lines and blank
    /// lines are skipped.
    pub fn from_tsv<R: BufRead>(
        source: &str,
        target: &str,
        reader: R,
    ) -> Result<Self, TranslationError> {
        let mut pairs = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut fields = trimmed.split('\t');
            let src = fields.next().unwrap_or("").trim();
            let dst = match fields.next() {
                Some(d) => d.trim(),
                None => {
                    return Err(TranslationError::GlossaryRow {
                        line: i + 1,
                        reason: "expected 2 tab-separated fields".into(),
                    })
                }
            };
            if fields.next().is_some() {
                return Err(TranslationError::GlossaryRow {
                    line: i + 1,
                    reason: "expected 2 tab-separated fields".into(),
                });
            }
            if src.is_empty() || dst.is_empty() {
                return Err(TranslationError::GlossaryRow {
                    line: i + 1,
                    reason: "empty source or target phrase".into(),
                });
            }
            pairs.push((src.to_string(), dst.to_string()));
        }
        GlossaryTranslator::new(source, target, &pairs)
    }

    pub fn load_tsv(
        source: &str,
        target: &str,
        path: &std::path::Path,
    ) -> Result<Self, TranslationError> {
        let file = std::fs::File::open(path)?;
        GlossaryTranslator::from_tsv(source, target, std::io::BufReader::new(file))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Translates one sentence. Matched token runs are spliced out and the
    /// replacement text dropped in; the characters between and around
    /// matches (spacing, punctuation) are preserved.
    pub fn translate_sentence(&self, sentence: &str) -> String {
        let tokens = tokenize(sentence);
        let lowered: Vec<String> = tokens.iter().map(|t| t.surface.to_lowercase()).collect();
        let mut out = String::with_capacity(sentence.len());
        let mut cursor = 0usize; // byte position in `sentence`
        let mut i = 0usize; // token index
        while i < tokens.len() {
            let mut matched_len = 0usize;
            let longest = self.max_key_tokens.min(tokens.len() - i);
            for key_len in (1..=longest).rev() {
                if let Some(replacement) = self.entries.get(&lowered[i..i + key_len]) {
                    out.push_str(&sentence[cursor..tokens[i].start]);
                    out.push_str(replacement);
                    cursor = tokens[i + key_len - 1].end;
                    matched_len = key_len;
                    break;
                }
            }
            i += if matched_len > 0 { matched_len } else { 1 };
        }
        out.push_str(&sentence[cursor..]);
        out
    }
}

fn key_tokens(phrase: &str) -> Vec<String> {
    tokenize(phrase)
        .into_iter()
        .map(|t| t.surface.to_lowercase())
        .collect()
}

impl Translator for GlossaryTranslator {
    fn source_language(&self) -> &str {
        &self.source
    }

    fn target_language(&self) -> &str {
        &self.target
    }

    fn translate_batch(&self, sentences: &[String]) -> Result<Vec<String>, TranslationError> {
        Ok(sentences
            .iter()
            .map(|s| self.translate_sentence(s))
            .collect())
    }
}

// ---------------------------------------------------------------------------
// External service client
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExternalTranslatorConfig {
    pub endpoint: String,
    pub timeout_secs: u64,
    pub batch_size: usize,
    pub retries: u32,
}

impl ExternalTranslatorConfig {
    fn validate(&self) -> Result<(), TranslationError> {
        if self.timeout_secs == 0 {
            return Err(TranslationError::Config {
                reason: "timeout must be positive".into(),
            });
        }
        if self.batch_size == 0 {
            return Err(TranslationError::Config {
                reason: "batch size must be at least 1".into(),
            });
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct TranslateRequest<'a> {
    source: &'a str,
    target: &'a str,
    sentences: &'a [String],
}

/// HTTP client for a translation service. Request: POST JSON
/// `{"source", "target", "sentences": [...]}`; response: a JSON array of
/// translated sentences, one per input, in order. Each batch is retried
/// up to `retries` extra times before the run aborts.
pub struct ExternalTranslator {
    config: ExternalTranslatorConfig,
    source: String,
    target: String,
    agent: ureq::Agent,
}

impl ExternalTranslator {
    pub fn new(
        config: ExternalTranslatorConfig,
        source: &str,
        target: &str,
    ) -> Result<Self, TranslationError> {
        config.validate()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .new_agent();
        Ok(ExternalTranslator {
            config,
            source: source.to_string(),
            target: target.to_string(),
            agent,
        })
    }

    fn post_batch(&self, batch: &[String]) -> Result<Vec<String>, String> {
        let request = TranslateRequest {
            source: &self.source,
            target: &self.target,
            sentences: batch,
        };
        let mut response = self
            .agent
            .post(&self.config.endpoint)
            .send_json(&request)
            .map_err(|e| e.to_string())?;
        response
            .body_mut()
            .read_json::<Vec<String>>()
            .map_err(|e| e.to_string())
    }
}

impl Translator for ExternalTranslator {
    fn source_language(&self) -> &str {
        &self.source
    }

    fn target_language(&self) -> &str {
        &self.target
    }

    fn translate_batch(&self, sentences: &[String]) -> Result<Vec<String>, TranslationError> {
        let mut out = Vec::with_capacity(sentences.len());
        for (batch_start, batch) in sentences
            .chunks(self.config.batch_size)
            .enumerate()
            .map(|(n, b)| (n * self.config.batch_size, b))
        {
            let mut last_error = String::new();
            let mut translated = None;
            for _ in 0..=self.config.retries {
                match self.post_batch(batch) {
                    Ok(t) => {
                        translated = Some(t);
                        break;
                    }
                    Err(e) => last_error = e,
                }
            }
            let translated = translated.ok_or(TranslationError::SentenceFailed {
                index: batch_start,
                reason: last_error,
            })?;
            if translated.len() != batch.len() {
                return Err(TranslationError::BatchShape {
                    sent: batch.len(),
                    got: translated.len(),
                });
            }
            out.extend(translated);
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------
// Shuffled document translation
// ---------------------------------------------------------------------------

/// A seeded permutation of `0..n` and its inverse; `order[k]` is the
/// original index submitted in slot `k`, and `inverse[i]` is the slot that
/// carried original sentence `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShufflePlan {
    pub order: Vec<usize>,
    pub inverse: Vec<usize>,
}

pub fn shuffle_plan(n: usize, seed: u64) -> ShufflePlan {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut inverse = vec![0usize; n];
    for (slot, &original) in order.iter().enumerate() {
        inverse[original] = slot;
    }
    ShufflePlan { order, inverse }
}

/// Translates a whole document: sentences are submitted to the translator
/// in a seeded random order and the outputs restored to their original
/// indices, so output sentence `i` is always the translation of input
/// sentence `i`. Returns the translated document (language set to the
/// translator's target) and a per-sentence log in index order. A failure
/// reported by the translator is mapped back to the original sentence
/// index before surfacing.
pub fn translate_document<T: Translator + ?Sized>(
    doc: &Document,
    translator: &T,
    seed: u64,
) -> Result<(Document, Vec<TranslationRecord>), TranslationError> {
    if !doc.language.eq_ignore_ascii_case(translator.source_language()) {
        return Err(TranslationError::SourceMismatch {
            doc: doc.language.clone(),
            expected: translator.source_language().to_string(),
        });
    }
    let plan = shuffle_plan(doc.sentences.len(), seed);
    let shuffled: Vec<String> = plan
        .order
        .iter()
        .map(|&i| doc.sentences[i].clone())
        .collect();
    let translated = translator.translate_batch(&shuffled).map_err(|e| match e {
        TranslationError::SentenceFailed { index, reason } => {
            TranslationError::SentenceFailed {
                index: plan.order.get(index).copied().unwrap_or(index),
                reason,
            }
        }
        other => other,
    })?;
    if translated.len() != shuffled.len() {
        return Err(TranslationError::BatchShape {
            sent: shuffled.len(),
            got: translated.len(),
        });
    }
    let restored: Vec<String> = plan
        .inverse
        .iter()
        .map(|&slot| translated[slot].clone())
        .collect();
    let records = doc
        .sentences
        .iter()
        .zip(&restored)
        .enumerate()
        .map(|(index, (source, target))| TranslationRecord {
            index,
            source: source.clone(),
            target: target.clone(),
        })
        .collect();
    let out = Document {
        doc_id: doc.doc_id.clone(),
        domain: doc.domain,
        language: translator.target_language().to_string(),
        sentences: restored,
    };
    Ok((out, records))
}
