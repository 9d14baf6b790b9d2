//! Per-word variant generation: inflectional/spelling suffix rewrites and
//! lexicon-listed synonyms or acronym expansions, each carrying a distance
//! used later by candidate scoring.

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum VariantsError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("rule file line {line}: expected 4 tab-separated fields, found {found}")]
    RuleRow { line: usize, found: usize },
    #[error("rule file line {line}: unknown transform tag {tag:?}")]
    RuleTag { line: usize, tag: String },
    #[error("rule file line {line}: cost must be a positive integer, got {cost:?}")]
    RuleCost { line: usize, cost: String },
    #[error("rule file line {line}: suffix pattern is empty")]
    RuleEmptySuffix { line: usize },
    #[error("suffix rule -> {replacement:?}: suffix pattern is empty")]
    EmptySuffixRule { replacement: String },
    #[error("suffix rule {suffix:?} -> {replacement:?}: cost must be at least 1")]
    ZeroCostRule { suffix: String, replacement: String },
    #[error("lexicon entry {word:?} -> {variant:?}: cost must be at least 1")]
    ZeroCostLexicon { word: String, variant: String },
    #[error("lexicon entry for {word:?} has an empty variant")]
    EmptyLexiconVariant { word: String },
}

/// Kind of rewrite a variant went through.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Inflection,
    Spelling,
    Synonym,
    Acronym,
}

impl Transform {
    fn parse(s: &str) -> Option<Transform> {
        match s {
            "inflection" => Some(Transform::Inflection),
            "spelling" => Some(Transform::Spelling),
            "synonym" => Some(Transform::Synonym),
            "acronym" => Some(Transform::Acronym),
            _ => None,
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transform::Inflection => "inflection",
            Transform::Spelling => "spelling",
            Transform::Synonym => "synonym",
            Transform::Acronym => "acronym",
        })
    }
}

/// One generated form of a word. `distance` is 0 exactly for the untouched
/// word itself, in which case `history` is empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variant {
    pub text: String,
    pub distance: u32,
    pub history: Vec<Transform>,
}

impl Variant {
    fn identity(word: &str) -> Variant {
        Variant {
            text: word.to_string(),
            distance: 0,
            history: Vec::new(),
        }
    }
}

/// Suffix rewrite: a word ending in `suffix` (and longer than it) spawns
/// `stem + replacement` at the rule's cost.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuffixRule {
    pub suffix: String,
    pub replacement: String,
    pub cost: u32,
    pub tag: Transform,
}

/// Lexicon-listed rewrite for one specific word (synonyms, expansions).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    pub variant: String,
    pub cost: u32,
    pub tag: Transform,
}

/// A language-specific variant generator: an ordered suffix-rule list plus a
/// word-keyed lexicon. The zero-rule generator produces only identities.
#[derive(Debug, Clone)]
pub struct VariantGenerator {
    language: String,
    rules: Vec<SuffixRule>,
    lexicon: BTreeMap<String, Vec<LexiconEntry>>,
}

impl VariantGenerator {
    /// Generator with no rules and no lexicon: every word maps to itself.
    pub fn identity(language: impl Into<String>) -> Self {
        VariantGenerator {
            language: language.into(),
            rules: Vec::new(),
            lexicon: BTreeMap::new(),
        }
    }

    pub fn new(
        language: impl Into<String>,
        rules: Vec<SuffixRule>,
        lexicon_entries: Vec<(String, LexiconEntry)>,
    ) -> Result<Self, VariantsError> {
        let mut gen = VariantGenerator::identity(language);
        for rule in rules {
            gen.add_rule(rule)?;
        }
        for (word, entry) in lexicon_entries {
            gen.add_lexicon_entry(word, entry)?;
        }
        Ok(gen)
    }

    pub fn add_rule(&mut self, rule: SuffixRule) -> Result<(), VariantsError> {
        if rule.cost == 0 {
            return Err(VariantsError::ZeroCostRule {
                suffix: rule.suffix,
                replacement: rule.replacement,
            });
        }
        if rule.suffix.is_empty() {
            return Err(VariantsError::EmptySuffixRule {
                replacement: rule.replacement,
            });
        }
        self.rules.push(rule);
        Ok(())
    }

    pub fn add_lexicon_entry(
        &mut self,
        word: String,
        entry: LexiconEntry,
    ) -> Result<(), VariantsError> {
        if entry.cost == 0 {
            return Err(VariantsError::ZeroCostLexicon {
                word,
                variant: entry.variant,
            });
        }
        if entry.variant.is_empty() {
            return Err(VariantsError::EmptyLexiconVariant { word });
        }
        self.lexicon.entry(word).or_default().push(entry);
        Ok(())
    }

    /// Parses the tab-separated rule format:
    /// `suffix<TAB>replacement<TAB>cost<TAB>tag`, where tag is one of
    /// `inflection`, `spelling`, `synonym`, `acronym`. Blank lines and `#`
    /// comments are skipped. The replacement may be empty (suffix strip).
    pub fn from_rules_tsv<R: BufRead>(
        language: impl Into<String>,
        reader: R,
    ) -> Result<Self, VariantsError> {
        let mut gen = VariantGenerator::identity(language);
        gen.load_rules_tsv(reader)?;
        Ok(gen)
    }

    pub fn load_rules_tsv<R: BufRead>(&mut self, reader: R) -> Result<(), VariantsError> {
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim_end_matches(['\r', '\n']);
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split('\t').collect();
            if fields.len() != 4 {
                return Err(VariantsError::RuleRow {
                    line: idx + 1,
                    found: fields.len(),
                });
            }
            if fields[0].is_empty() {
                return Err(VariantsError::RuleEmptySuffix { line: idx + 1 });
            }
            let cost: u32 = fields[2].parse().map_err(|_| VariantsError::RuleCost {
                line: idx + 1,
                cost: fields[2].to_string(),
            })?;
            if cost == 0 {
                return Err(VariantsError::RuleCost {
                    line: idx + 1,
                    cost: fields[2].to_string(),
                });
            }
            let tag = Transform::parse(fields[3]).ok_or_else(|| VariantsError::RuleTag {
                line: idx + 1,
                tag: fields[3].to_string(),
            })?;
            self.rules.push(SuffixRule {
                suffix: fields[0].to_string(),
                replacement: fields[1].to_string(),
                cost,
                tag,
            });
        }
        Ok(())
    }

    /// Parses the tab-separated lexicon format:
    /// `word<TAB>variant<TAB>cost<TAB>tag` (same tags as rules).
    pub fn load_lexicon_tsv<R: BufRead>(&mut self, reader: R) -> Result<(), VariantsError> {
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim_end_matches(['\r', '\n']);
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split('\t').collect();
            if fields.len() != 4 {
                return Err(VariantsError::RuleRow {
                    line: idx + 1,
                    found: fields.len(),
                });
            }
            let cost: u32 = fields[2].parse().map_err(|_| VariantsError::RuleCost {
                line: idx + 1,
                cost: fields[2].to_string(),
            })?;
            let tag = Transform::parse(fields[3]).ok_or_else(|| VariantsError::RuleTag {
                line: idx + 1,
                tag: fields[3].to_string(),
            })?;
            self.add_lexicon_entry(
                fields[0].to_string(),
                LexiconEntry {
                    variant: fields[1].to_string(),
                    cost,
                    tag,
                },
            )?;
        }
        Ok(())
    }

    pub fn language(&self) -> &str {
        &self.language
    }

    pub fn is_identity(&self) -> bool {
        self.rules.is_empty() && self.lexicon.is_empty()
    }

    pub fn rules(&self) -> &[SuffixRule] {
        &self.rules
    }
}

/// All variants of `word` under `generator`: the identity plus every suffix
/// rewrite and lexicon entry that applies. Duplicates collapse to the
/// lowest distance. Output is sorted by (distance, text), so the identity
/// variant is always first.
pub fn generate_variants(word: &str, generator: &VariantGenerator) -> Vec<Variant> {
    let mut best: BTreeMap<String, Variant> = BTreeMap::new();
    best.insert(word.to_string(), Variant::identity(word));
    for rule in &generator.rules {
        if word.len() > rule.suffix.len() && word.ends_with(rule.suffix.as_str()) {
            let stem = &word[..word.len() - rule.suffix.len()];
            let text = format!("{stem}{}", rule.replacement);
            consider(
                &mut best,
                Variant {
                    text,
                    distance: rule.cost,
                    history: vec![rule.tag],
                },
            );
        }
    }
    if let Some(entries) = generator.lexicon.get(word) {
        for entry in entries {
            consider(
                &mut best,
                Variant {
                    text: entry.variant.clone(),
                    distance: entry.cost,
                    history: vec![entry.tag],
                },
            );
        }
    }
    let mut out: Vec<Variant> = best.into_values().collect();
    out.sort_by(|a, b| a.distance.cmp(&b.distance).then_with(|| a.text.cmp(&b.text)));
    out
}

fn consider(best: &mut BTreeMap<String, Variant>, candidate: Variant) {
    match best.get(&candidate.text) {
        Some(existing) if existing.distance <= candidate.distance => {}
        _ => {
            best.insert(candidate.text.clone(), candidate);
        }
    }
}

/// Variant sets for each word of a phrase, in phrase order. Each word is
/// expanded independently.
pub fn expand_phrase(words: &[String], generator: &VariantGenerator) -> Vec<Vec<Variant>> {
    words
        .iter()
        .map(|w| generate_variants(w, generator))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rule(suffix: &str, replacement: &str, cost: u32) -> SuffixRule {
        SuffixRule {
            suffix: suffix.into(),
            replacement: replacement.into(),
            cost,
            tag: Transform::Inflection,
        }
    }

    #[test]
    fn identity_generator_returns_only_the_word() {
        let gen = VariantGenerator::identity("it");
        assert!(gen.is_identity());
        let variants = generate_variants("edemi", &gen);
        assert_eq!(
            variants,
            vec![Variant {
                text: "edemi".into(),
                distance: 0,
                history: vec![],
            }]
        );
    }

    #[test]
    fn plural_rule_adds_singular_form() {
        let gen = VariantGenerator::new("en", vec![rule("es", "is", 1)], vec![]).unwrap();
        let variants = generate_variants("stenoses", &gen);
        let shapes: Vec<(&str, u32)> = variants
            .iter()
            .map(|v| (v.text.as_str(), v.distance))
            .collect();
        assert_eq!(shapes, vec![("stenoses", 0), ("stenosis", 1)]);
        assert_eq!(variants[1].history, vec![Transform::Inflection]);
    }

    #[test]
    fn italian_plural_rules_fan_out() {
        let gen = VariantGenerator::new(
            "it",
            vec![rule("i", "e", 1), rule("i", "a", 1), rule("i", "o", 1)],
            vec![],
        )
        .unwrap();
        let variants = generate_variants("edemi", &gen);
        let texts: Vec<&str> = variants.iter().map(|v| v.text.as_str()).collect();
        assert_eq!(texts, vec!["edemi", "edema", "edeme", "edemo"]);
    }

    #[test]
    fn rule_never_consumes_the_whole_word() {
        let gen = VariantGenerator::new("en", vec![rule("s", "", 1)], vec![]).unwrap();
        assert_eq!(generate_variants("s", &gen).len(), 1);
        let variants = generate_variants("limbs", &gen);
        assert_eq!(variants[1].text, "limb");
    }

    #[test]
    fn duplicate_texts_keep_minimum_distance() {
        let gen = VariantGenerator::new(
            "it",
            vec![rule("i", "a", 3), rule("mi", "ma", 1)],
            vec![],
        )
        .unwrap();
        let variants = generate_variants("edemi", &gen);
        let edema = variants.iter().find(|v| v.text == "edema").unwrap();
        assert_eq!(edema.distance, 1);
        // A rewrite that reproduces the word itself loses to the identity.
        let gen = VariantGenerator::new("it", vec![rule("i", "i", 2)], vec![]).unwrap();
        let variants = generate_variants("edemi", &gen);
        assert_eq!(variants.len(), 1);
        assert_eq!(variants[0].distance, 0);
    }

    #[test]
    fn lexicon_entries_apply_to_exact_words() {
        let mut gen = VariantGenerator::identity("en");
        gen.add_lexicon_entry(
            "heart".into(),
            LexiconEntry {
                variant: "cardiac".into(),
                cost: 2,
                tag: Transform::Synonym,
            },
        )
        .unwrap();
        let variants = generate_variants("heart", &gen);
        assert_eq!(variants.len(), 2);
        assert_eq!(variants[1].text, "cardiac");
        assert_eq!(variants[1].history, vec![Transform::Synonym]);
        assert_eq!(generate_variants("hearts", &gen).len(), 1);
    }

    #[test]
    fn zero_cost_rewrites_are_rejected() {
        assert!(matches!(
            VariantGenerator::new("it", vec![rule("i", "e", 0)], vec![]),
            Err(VariantsError::ZeroCostRule { .. })
        ));
        let mut gen = VariantGenerator::identity("it");
        assert!(matches!(
            gen.add_lexicon_entry(
                "x".into(),
                LexiconEntry {
                    variant: "y".into(),
                    cost: 0,
                    tag: Transform::Synonym,
                }
            ),
            Err(VariantsError::ZeroCostLexicon { .. })
        ));
    }

    #[test]
    fn rules_tsv_parses_and_reports_line_numbers() {
        let tsv = "# italian plurals\ni\te\t1\tinflection\ni\ta\t1\tinflection\n";
        let gen = VariantGenerator::from_rules_tsv("it", tsv.as_bytes()).unwrap();
        assert_eq!(gen.rules().len(), 2);

        let err =
            VariantGenerator::from_rules_tsv("it", "i\te\t1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, VariantsError::RuleRow { line: 1, found: 3 }));
        let err =
            VariantGenerator::from_rules_tsv("it", "i\te\tzero\tinflection\n".as_bytes())
                .unwrap_err();
        assert!(matches!(err, VariantsError::RuleCost { line: 1, .. }));
        let err =
            VariantGenerator::from_rules_tsv("it", "i\te\t1\tmorph\n".as_bytes()).unwrap_err();
        assert!(matches!(err, VariantsError::RuleTag { line: 1, .. }));
    }

    #[test]
    fn empty_replacement_is_allowed_in_tsv() {
        let gen = VariantGenerator::from_rules_tsv("en", "s\t\t1\tinflection\n".as_bytes())
            .unwrap();
        let variants = generate_variants("edemas", &gen);
        assert_eq!(variants[1].text, "edema");
    }

    #[test]
    fn adding_rules_only_grows_the_variant_set() {
        let small = VariantGenerator::new("it", vec![rule("i", "e", 1)], vec![]).unwrap();
        let big = VariantGenerator::new(
            "it",
            vec![rule("i", "e", 1), rule("i", "a", 1)],
            vec![],
        )
        .unwrap();
        for word in ["edemi", "stenosi", "x"] {
            let small_set: Vec<String> = generate_variants(word, &small)
                .into_iter()
                .map(|v| v.text)
                .collect();
            let big_set: Vec<String> = generate_variants(word, &big)
                .into_iter()
                .map(|v| v.text)
                .collect();
            for t in &small_set {
                assert!(big_set.contains(t), "{t} lost when rules grew");
            }
        }
    }

    #[test]
    fn expand_phrase_is_per_word() {
        let gen = VariantGenerator::new("it", vec![rule("i", "a", 1)], vec![]).unwrap();
        let words: Vec<String> = vec!["stenosi".into(), "vascolari".into()];
        let sets = expand_phrase(&words, &gen);
        assert_eq!(sets.len(), 2);
        assert_eq!(sets[0], generate_variants("stenosi", &gen));
        assert_eq!(sets[1], generate_variants("vascolari", &gen));
    }
}
