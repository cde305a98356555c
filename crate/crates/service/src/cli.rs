//! `citeqa` subcommands.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde::Serialize;

use citeqa_core::backend::RetryPolicy;
use citeqa_core::feedback::{export_training_data, read_records, FeedbackKind};
use citeqa_core::par::Exec;
use citeqa_core::retrieval::persist::{save_lexical, save_vectors};
use citeqa_core::scifact::{
    class_distribution, clean_dataset, evaluate_backend, load_claims, REFERENCE_CLASS_DISTRIBUTION,
};
use citeqa_core::verification::verify_answer;

use crate::config::{EngineConfig, CONFIG_PATH_VAR};
use crate::engine::{
    analyzer_from_config, context_docs, embedding_from_config, ensure_parent, lexical_for, load_corpus_from_config,
    nli_from_config, vectors_for, verify_options, ClaimView, Engine,
};

#[derive(Debug, Parser)]
#[command(
    name = "citeqa",
    version,
    about = "Referenced question answering over scientific abstracts"
)]
pub struct Cli {
    /// TOML config file. `CITEQA_<SECTION>_<KEY>` variables override it.
    #[arg(long, global = true, env = CONFIG_PATH_VAR)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the lexical and vector indices and write them to disk.
    Index {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Lexical index output (default: index.lexical from config).
        #[arg(long)]
        lexical_out: Option<PathBuf>,
        /// Vector index output (default: index.vectors from config).
        #[arg(long)]
        vectors_out: Option<PathBuf>,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
    /// Answer one question and print the response as JSON.
    Ask {
        question: String,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Zero the stage timings, for reproducible output.
        #[arg(long)]
        frozen_clock: bool,
    },
    /// Check the claims of an existing answer; one JSON record per claim.
    Verify {
        #[arg(long)]
        answer_file: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// URL, `baseline` or `scripted:<fixture>`.
        #[arg(long)]
        backend: Option<String>,
        /// Comma separated ids the answer was generated from, in prompt
        /// order. Defaults to the whole corpus in file order.
        #[arg(long, value_delimiter = ',')]
        context: Option<Vec<String>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score an NLI backend on SciFact-format claims.
    EvalScifact {
        #[arg(long)]
        claims: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// URL, `baseline` or `scripted:<fixture>`.
        #[arg(long)]
        backend: Option<String>,
        /// JSON report path; the text table goes to stdout.
        #[arg(long)]
        out: PathBuf,
        /// Score the raw pairs instead of the deduplicated set.
        #[arg(long)]
        no_clean: bool,
    },
    /// Write stored feedback as training records.
    ExportFeedback {
        /// VERDICT_OVERRIDE or ANSWER_EDIT; both when omitted.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Feedback file (default: feedback.path from config).
        #[arg(long)]
        feedback: Option<PathBuf>,
    },
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = EngineConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Index {
            corpus,
            lexical_out,
            vectors_out,
        } => {
            if let Some(c) = corpus {
                config.corpus.path = Some(c);
            }
            index(&config, lexical_out, vectors_out)
        }
        Command::Serve { bind } => {
            if let Some(b) = bind {
                config.service.bind = b;
            }
            let bind = config.service.bind.clone();
            let engine = Arc::new(Engine::from_config(config)?);
            engine.feedback_store()?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::http::serve(engine, &bind))
        }
        Command::Ask {
            question,
            corpus,
            frozen_clock,
        } => {
            if let Some(c) = corpus {
                config.corpus.path = Some(c);
            }
            config.service.frozen_clock |= frozen_clock;
            let engine = Engine::from_config(config)?;
            let resp = engine.handle_ask(&question)?;
            println!("{}", serde_json::to_string_pretty(&resp)?);
            Ok(())
        }
        Command::Verify {
            answer_file,
            corpus,
            backend,
            context,
            out,
        } => {
            if let Some(c) = corpus {
                config.corpus.path = Some(c);
            }
            if let Some(b) = backend {
                config.verification.backend = b;
            }
            let answer =
                std::fs::read_to_string(&answer_file).with_context(|| format!("reading {}", answer_file.display()))?;
            let report = verify_report(&config, &answer, context.as_deref())?;
            emit(out.as_deref(), &report)
        }
        Command::EvalScifact {
            claims,
            corpus,
            backend,
            out,
            no_clean,
        } => {
            config.corpus.path = Some(corpus);
            if let Some(b) = backend {
                config.verification.backend = b;
            }
            let table = eval_scifact(&config, &claims, &out, !no_clean)?;
            print!("{table}");
            Ok(())
        }
        Command::ExportFeedback { kind, out, feedback } => {
            let kind = kind
                .map(|k| k.parse::<FeedbackKind>().map_err(anyhow::Error::msg))
                .transpose()?;
            let path = feedback.unwrap_or_else(|| config.feedback.path.clone());
            let records = read_records(&path).with_context(|| format!("reading {}", path.display()))?;
            let lines = export_training_data(&records, kind);
            emit(Some(&out), &lines)?;
            eprintln!("exported {} records to {}", lines.lines().count(), out.display());
            Ok(())
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(p) => {
            ensure_parent(p)?;
            std::fs::write(p, text).with_context(|| format!("writing {}", p.display()))
        }
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn index(config: &EngineConfig, lexical_out: Option<PathBuf>, vectors_out: Option<PathBuf>) -> anyhow::Result<()> {
    let lexical_out = lexical_out
        .or_else(|| config.index.lexical.clone())
        .context("no lexical index path (--lexical-out or index.lexical)")?;
    let analyzer = analyzer_from_config(config)?;
    let corpus = load_corpus_from_config(config)?;
    let exec = Exec::bounded(config.concurrency.verify_workers);
    // never reuse the files being rebuilt
    let mut fresh = config.clone();
    fresh.index.lexical = None;
    fresh.index.vectors = None;
    let lexical = lexical_for(&fresh, &corpus, &analyzer, exec)?;
    ensure_parent(&lexical_out)?;
    save_lexical(&lexical, &lexical_out)?;
    eprintln!(
        "lexical index: {} documents, {} terms -> {}",
        lexical.doc_count(),
        lexical.term_count(),
        lexical_out.display()
    );
    let (embedder, _) = embedding_from_config(config, &analyzer)?;
    match embedder {
        Some(e) => {
            let out = vectors_out.or_else(|| config.index.vectors.clone()).context(
                "no vector index path (--vectors-out or index.vectors); set embedding.backend = \"none\" to skip",
            )?;
            let vectors = vectors_for(&fresh, &corpus, e.as_ref(), exec)?;
            ensure_parent(&out)?;
            save_vectors(&vectors, &out)?;
            eprintln!(
                "vector index: {} x {} -> {}",
                vectors.len(),
                vectors.dimension(),
                out.display()
            );
        }
        None => eprintln!("embedding.backend = none; no vector index written"),
    }
    Ok(())
}

/// One JSON line per claim with verdicts, status and highlights.
pub fn verify_report(config: &EngineConfig, answer: &str, context: Option<&[String]>) -> anyhow::Result<String> {
    let analyzer = analyzer_from_config(config)?;
    let corpus = load_corpus_from_config(config)?;
    let (nli, _) = nli_from_config(config)?;
    let (embedder, _) = match config.verification.similarity {
        crate::config::SimilarityKind::Embedding => embedding_from_config(config, &analyzer)?,
        crate::config::SimilarityKind::Jaccard => (None, crate::engine::BackendKind::Disabled),
    };
    let ctx = context_docs(&corpus, context)?;
    let parsed = citeqa_core::claims::parse_answer(answer, &ctx);
    let options = verify_options(config, embedder.as_deref(), &analyzer);
    let verified = verify_answer(&parsed, &corpus, nli.as_ref(), &options)?;
    let mut out = String::new();
    for claim in ClaimView::from_verified(&verified) {
        out.push_str(&serde_json::to_string(&claim)?);
        out.push('\n');
    }
    Ok(out)
}

#[derive(Serialize)]
struct DatasetSummary {
    claims_read: usize,
    rejected_records: usize,
    raw_pairs: usize,
    label_conflicts: usize,
    scored_pairs: usize,
    cleaned: bool,
    class_distribution: [f64; 3],
    reference_class_distribution: [f64; 3],
}

/// Writes the JSON report to `out` and returns the text table.
pub fn eval_scifact(config: &EngineConfig, claims: &Path, out: &Path, clean: bool) -> anyhow::Result<String> {
    let corpus = load_corpus_from_config(config)?;
    let (raw, report) = load_claims(claims, &corpus)?;
    for e in &report.errors {
        eprintln!("warning: {} line {}: {}", claims.display(), e.line, e.message);
    }
    let pairs = if clean { clean_dataset(&raw) } else { raw.clone() };
    if pairs.is_empty() {
        bail!("{} produced no claim/document pairs", claims.display());
    }
    let (nli, _) = nli_from_config(config)?;
    let exec = Exec::bounded(config.concurrency.verify_workers);
    let retry = RetryPolicy {
        max_attempts: config.backend.attempts,
    };
    let eval = evaluate_backend(nli.as_ref(), &pairs, &corpus, exec, retry)?;
    let summary = DatasetSummary {
        claims_read: report.claims_read,
        rejected_records: report.errors.len(),
        raw_pairs: raw.len(),
        label_conflicts: report.conflicts.len(),
        scored_pairs: pairs.len(),
        cleaned: clean,
        class_distribution: class_distribution(&pairs)?,
        reference_class_distribution: REFERENCE_CLASS_DISTRIBUTION,
    };
    let json = serde_json::json!({
        "backend": nli.name(),
        "dataset": summary,
        "metrics": eval.report.to_json(),
    });
    emit(Some(out), &format!("{}\n", serde_json::to_string_pretty(&json)?))?;
    Ok(eval.report.to_table())
}
