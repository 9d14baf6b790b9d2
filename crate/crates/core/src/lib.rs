//! Thesaurus-backed concept annotation for clinical text.
//!
//! The pipeline runs in five stages: sentence/token preparation
//! ([`textprep`]), per-word variant generation ([`variants`]), candidate
//! retrieval and scoring against a knowledge source ([`thesaurus`],
//! [`matcher`]), and mapping construction ([`matcher`]). Around the pipeline
//! sit an optional deterministic translation stage ([`translation`]) and an
//! evaluation harness ([`eval`]) that compares annotator output against
//! manually constructed gold standards.

pub mod eval;
pub mod matcher;
pub mod textprep;
pub mod thesaurus;
pub mod translation;
pub mod variants;
