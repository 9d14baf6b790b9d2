//! `build-ks`: compile pipe-separated concept records into a loadable
//! knowledge source file.

use std::path::PathBuf;

use anyhow::{anyhow, Context, Result};
use clap::Args;

use annotare_core::thesaurus::{
    build_knowledge_source, parse_concept_records, BuildOptions, SemanticGroupDef,
};

use crate::config::{required, FileConfig};
use crate::output::write_atomic;

#[derive(Debug, Args)]
pub struct BuildKsArgs {
    /// key = value defaults for any flag below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Concept records, one per line: CUI|LANG|TERM|PREF|SEMTYPE|SOURCE.
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Language code whose terms are kept (e.g. it, en).
    #[arg(long)]
    pub language: Option<String>,
    /// Semantic group restriction: disorders | none.
    #[arg(long)]
    pub group: Option<String>,
    /// Strip combining accents when normalizing terms.
    #[arg(long)]
    pub fold_accents: bool,
    /// Output knowledge source file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: BuildKsArgs) -> Result<()> {
    let cfg = FileConfig::load_optional(args.config.as_deref())?;
    let records_path = required(cfg.resolve_path(args.records, "records"), "records")?;
    let language = required(cfg.resolve(args.language, "language")?, "language")?;
    let group_name: String = cfg
        .resolve(args.group, "group")?
        .unwrap_or_else(|| "none".to_string());
    let fold_accents = cfg.resolve_switch(args.fold_accents, "fold-accents")?;
    let out_path = required(cfg.resolve_path(args.out, "out"), "out")?;

    let group = match group_name.as_str() {
        "disorders" => Some(SemanticGroupDef::disorders()),
        "none" => None,
        other => return Err(anyhow!("unknown semantic group {other:?} (want disorders|none)")),
    };

    let records = parse_concept_records(crate::commands::open_buffered(&records_path)?)
        .with_context(|| format!("parsing {}", records_path.display()))?;
    if records.is_empty() {
        eprintln!(
            "warning: {} contains no concept records; writing an empty knowledge source",
            records_path.display()
        );
    }

    let ks = build_knowledge_source(
        &records,
        &language,
        group.as_ref(),
        &BuildOptions { fold_accents },
    )?;

    let mut bytes = Vec::new();
    ks.to_writer(&mut bytes)?;
    write_atomic(&out_path, &bytes)?;

    let manifest = ks.manifest();
    println!(
        "built knowledge source {}: language={} terms={} concepts={} records={}/{} merged={}",
        out_path.display(),
        ks.language(),
        manifest.retained_terms,
        manifest.distinct_cuis,
        manifest.matched_records,
        manifest.input_records,
        manifest.duplicates_merged,
    );
    Ok(())
}
