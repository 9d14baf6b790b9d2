//! `translate`: rewrite a corpus into another language, sentence by
//! sentence, via a glossary file or an external batch endpoint.

use std::path::PathBuf;

use anyhow::{anyhow, Context, Result};
use clap::Args;

use annotare_core::textprep::{write_corpus, Document};
use annotare_core::translation::{
    translate_document, ExternalTranslator, ExternalTranslatorConfig, GlossaryTranslator,
    TranslationRecord, Translator,
};

use crate::config::{required, FileConfig};
use crate::output::write_atomic;

#[derive(Debug, Args)]
pub struct TranslateArgs {
    /// key = value defaults for any flag below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input corpus (JSON Lines documents).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Source language code (must match the corpus).
    #[arg(long)]
    pub source: Option<String>,
    /// Target language code.
    #[arg(long)]
    pub target: Option<String>,
    /// Glossary TSV (source phrase <TAB> target phrase).
    #[arg(long)]
    pub glossary: Option<PathBuf>,
    /// External translation endpoint URL (POST, JSON batch in/out).
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Request timeout for the external endpoint, in seconds.
    #[arg(long)]
    pub timeout: Option<u64>,
    /// Sentences per request to the external endpoint.
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Retries per failed batch before giving up.
    #[arg(long)]
    pub retries: Option<u32>,
    /// Seed for the sentence submission order.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write a per-sentence translation log (TSV) here.
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Output corpus file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Translates every document with a fresh per-document shuffle derived from
/// `seed`, returning rebuilt documents and the flattened sentence log.
pub fn translate_corpus<T: Translator + ?Sized>(
    docs: &[Document],
    translator: &T,
    seed: u64,
) -> Result<(Vec<Document>, Vec<(String, TranslationRecord)>)> {
    let mut translated = Vec::with_capacity(docs.len());
    let mut log = Vec::new();
    for doc in docs {
        let (out_doc, records) = translate_document(doc, translator, seed)
            .with_context(|| format!("translating document {}", doc.doc_id))?;
        for record in records {
            log.push((doc.doc_id.clone(), record));
        }
        translated.push(out_doc);
    }
    Ok((translated, log))
}

pub fn corpus_bytes(docs: &[Document]) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    write_corpus(&mut bytes, docs)?;
    Ok(bytes)
}

fn log_bytes(log: &[(String, TranslationRecord)]) -> Vec<u8> {
    let mut out = String::from("doc_id\tsentence\tsource\ttarget\n");
    for (doc_id, record) in log {
        out.push_str(&format!(
            "{doc_id}\t{}\t{}\t{}\n",
            record.index, record.source, record.target
        ));
    }
    out.into_bytes()
}

pub fn run(args: TranslateArgs) -> Result<()> {
    let cfg = FileConfig::load_optional(args.config.as_deref())?;
    let corpus_path = required(cfg.resolve_path(args.corpus, "corpus"), "corpus")?;
    let out_path = required(cfg.resolve_path(args.out, "out"), "out")?;
    let source = required(cfg.resolve(args.source, "source")?, "source")?;
    let target: String = required(cfg.resolve(args.target, "target")?, "target")?;
    let glossary = cfg.resolve_path(args.glossary, "glossary");
    let endpoint: Option<String> = cfg.resolve(args.endpoint, "endpoint")?;
    let seed = cfg.resolve(args.seed, "seed")?.unwrap_or(17);
    let log_path = cfg.resolve_path(args.log, "log");

    let translator: Box<dyn Translator> = match (&glossary, &endpoint) {
        (Some(path), None) => Box::new(
            GlossaryTranslator::load_tsv(&source, &target, path)
                .with_context(|| format!("reading glossary {}", path.display()))?,
        ),
        (None, Some(url)) => {
            let config = ExternalTranslatorConfig {
                endpoint: url.clone(),
                timeout_secs: cfg.resolve(args.timeout, "timeout")?.unwrap_or(30),
                batch_size: cfg.resolve(args.batch_size, "batch-size")?.unwrap_or(16),
                retries: cfg.resolve(args.retries, "retries")?.unwrap_or(2),
            };
            Box::new(ExternalTranslator::new(config, &source, &target)?)
        }
        (Some(_), Some(_)) => {
            return Err(anyhow!("--glossary and --endpoint are mutually exclusive"))
        }
        (None, None) => return Err(anyhow!("need one of --glossary or --endpoint")),
    };

    let docs = super::load_corpus(&corpus_path)?;
    for doc in &docs {
        if !doc.language.eq_ignore_ascii_case(&source) {
            return Err(anyhow!(
                "document {} is in language {:?}, translator expects {:?}",
                doc.doc_id,
                doc.language,
                source
            ));
        }
    }

    let (translated, log) = translate_corpus(&docs, translator.as_ref(), seed)?;

    write_atomic(&out_path, &corpus_bytes(&translated)?)?;
    if let Some(path) = log_path {
        write_atomic(&path, &log_bytes(&log))?;
    }

    println!(
        "translated {} document(s) {} -> {} ({} sentence(s)) -> {}",
        translated.len(),
        source,
        target,
        log.len(),
        out_path.display()
    );
    Ok(())
}
