//! The request pipeline: retrieve, generate, parse, verify.

use std::collections::{HashMap, HashSet, VecDeque};
use std::path::Path;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use anyhow::{bail, Context};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use citeqa_core::backend::{BackendError, RetryPolicy};
use citeqa_core::claims::{parse_answer, ParsedAnswer, UnknownReference};
use citeqa_core::corpus::{load_corpus, validate_doc_id, Corpus, Document, SentenceSpan};
use citeqa_core::feedback::{FeedbackError, FeedbackKind, FeedbackStore, FieldError, NewFeedback};
use citeqa_core::generation::{
    build_prompt, generate_answer, pack_context, GenerationBackend, GenerationError, GenerationParams, PromptTemplate,
    ScriptedGeneration,
};
use citeqa_core::par::Exec;
use citeqa_core::retrieval::persist::{load_lexical, load_vectors};
use citeqa_core::retrieval::{
    embed_corpus_with, EmbeddingBackend, FusionConfig, HashedTrigramEmbedder, HybridRetriever, LexicalIndex,
    RetrievalError, ScoredHit, VectorIndex,
};
use citeqa_core::text::Analyzer;
use citeqa_core::verification::{
    verify_answer, BaselineNli, ClaimStatus, EvidenceHighlight, NliBackend, NumericDivergence, ReferenceVerdict,
    ScriptedNli, Similarity, VerificationError, VerifiedAnswer, VerifyOptions,
};

use crate::config::{EngineConfig, SimilarityKind};
use crate::remote::{self, HttpEndpoint, RemoteEmbedding, RemoteGeneration, RemoteNli};

/// Asked answers kept for feedback lookups; the oldest are dropped first.
pub const ANSWER_REGISTRY_CAPACITY: usize = 10_000;
const ANSWER_ID_HEX: usize = 16;

/// An error mapped to an HTTP status and the pipeline stage that failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub stage: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<FieldError>,
}

impl ApiError {
    pub fn new(status: u16, stage: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            stage,
            message: message.into(),
            fields: Vec::new(),
        }
    }

    fn bad_gateway(stage: &'static str, e: &BackendError) -> Self {
        Self::new(502, stage, e.to_string())
    }

    fn fields(stage: &'static str, fields: Vec<FieldError>) -> Self {
        let message = fields
            .iter()
            .map(|f| format!("{}: {}", f.field, f.message))
            .collect::<Vec<_>>()
            .join("; ");
        Self {
            status: 400,
            stage,
            message,
            fields,
        }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({}): {}", self.stage, self.status, self.message)
    }
}

impl std::error::Error for ApiError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Answered,
    NoRelevantDocuments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimView {
    pub index: usize,
    pub text: String,
    pub references: Vec<String>,
    pub unreferenced: bool,
    pub verdicts: Vec<ReferenceVerdict>,
    pub status: ClaimStatus,
    pub highlights: Vec<EvidenceHighlight>,
    pub numeric_warnings: Vec<NumericDivergence>,
}

impl ClaimView {
    pub fn from_verified(v: &VerifiedAnswer) -> Vec<ClaimView> {
        v.claims
            .iter()
            .enumerate()
            .map(|(index, c)| ClaimView {
                index,
                text: c.text.clone(),
                references: c.references.clone(),
                unreferenced: c.unreferenced,
                verdicts: c.verdicts.clone(),
                status: c.status,
                highlights: c.highlights.clone(),
                numeric_warnings: c.numeric_warnings.clone(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedDoc {
    pub doc_id: String,
    pub fused_score: f64,
    pub lexical_score: f64,
    pub semantic_score: f64,
}

impl From<&ScoredHit> for RetrievedDoc {
    fn from(h: &ScoredHit) -> Self {
        Self {
            doc_id: h.doc_id.clone(),
            fused_score: h.fused_score,
            lexical_score: h.lexical_score,
            semantic_score: h.semantic_score,
        }
    }
}

/// Milliseconds per stage, always in pipeline order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub retrieve: f64,
    pub generate: f64,
    pub parse: f64,
    pub verify: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskResponse {
    pub answer_id: String,
    pub question: String,
    pub outcome: Outcome,
    pub answer_text: String,
    /// Index-aligned with the parsed answer's sentences.
    pub claims: Vec<ClaimView>,
    pub unknown_references: Vec<UnknownReference>,
    pub retrieved: Vec<RetrievedDoc>,
    /// The retrieved documents that fit the prompt, in prompt order.
    pub context_doc_ids: Vec<String>,
    pub timings_ms: Timings,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AskRequest {
    pub question: String,
}

/// Feedback as posted. Everything is optional here so that missing or bad
/// fields come back as field errors instead of a decode failure.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeedbackRequest {
    pub kind: Option<String>,
    pub answer_id: Option<String>,
    pub claim_index: Option<usize>,
    pub original_value: Option<String>,
    pub corrected_value: Option<String>,
    pub doc_id: Option<String>,
    /// Only used without `answer_id`.
    pub question: Option<String>,
    pub answer_text: Option<String>,
    pub context_doc_ids: Option<Vec<String>>,
    pub claim_text: Option<String>,
    pub user_tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackAck {
    pub record_id: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentView {
    pub doc_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub sentences: Vec<SentenceSpan>,
}

impl From<&Document> for DocumentView {
    fn from(d: &Document) -> Self {
        Self {
            doc_id: d.doc_id.clone(),
            title: d.title.clone(),
            abstract_text: d.abstract_text.clone(),
            sentences: d.sentences.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendHealth {
    pub kind: String,
    pub target: String,
    pub reachable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthReport {
    pub status: String,
    pub documents: usize,
    pub lexical_terms: usize,
    pub vectors: usize,
    pub generation: BackendHealth,
    pub embedding: BackendHealth,
    pub verification: BackendHealth,
}

/// How a backend is reached, for the health report.
#[derive(Debug, Clone)]
pub enum BackendKind {
    /// In-process; always reachable.
    Local {
        kind: String,
        target: String,
    },
    Http {
        url: String,
    },
    Disabled,
}

impl BackendKind {
    fn local(kind: &str, target: impl Into<String>) -> Self {
        BackendKind::Local {
            kind: kind.to_string(),
            target: target.into(),
        }
    }

    fn health(&self, timeout: Duration) -> BackendHealth {
        match self {
            BackendKind::Local { kind, target } => BackendHealth {
                kind: kind.clone(),
                target: target.clone(),
                reachable: true,
            },
            BackendKind::Http { url } => BackendHealth {
                kind: "http".into(),
                target: url.clone(),
                reachable: remote::reachable(url, timeout),
            },
            BackendKind::Disabled => BackendHealth {
                kind: "none".into(),
                target: String::new(),
                reachable: true,
            },
        }
    }
}

/// Model backends the engine runs against.
pub struct Backends {
    pub generation: Arc<dyn GenerationBackend>,
    pub generation_kind: BackendKind,
    pub embedding: Option<Arc<dyn EmbeddingBackend>>,
    pub embedding_kind: BackendKind,
    pub nli: Arc<dyn NliBackend>,
    pub nli_kind: BackendKind,
}

impl Backends {
    pub fn from_config(config: &EngineConfig, analyzer: &Analyzer) -> anyhow::Result<Self> {
        let (generation, generation_kind) = generation_from_config(config)?;
        let (embedding, embedding_kind) = embedding_from_config(config, analyzer)?;
        let (nli, nli_kind) = nli_from_config(config)?;
        Ok(Self {
            generation,
            generation_kind,
            embedding,
            embedding_kind,
            nli,
            nli_kind,
        })
    }
}

fn timeout_and_retry(config: &EngineConfig) -> (Duration, RetryPolicy) {
    let retry = RetryPolicy {
        max_attempts: config.backend.attempts,
    };
    (Duration::from_millis(config.backend.timeout_ms), retry)
}

pub fn generation_from_config(config: &EngineConfig) -> anyhow::Result<(Arc<dyn GenerationBackend>, BackendKind)> {
    let (timeout, retry) = timeout_and_retry(config);
    let backend = config.generation.backend.as_str();
    if let Some(path) = backend.strip_prefix("scripted:") {
        let answer = std::fs::read_to_string(path).with_context(|| format!("reading scripted answer {path}"))?;
        Ok((
            Arc::new(ScriptedGeneration::new(answer)),
            BackendKind::local("scripted", path),
        ))
    } else if is_url(backend) {
        let ep = HttpEndpoint::new(backend, timeout, config.concurrency.generation);
        Ok((
            Arc::new(RemoteGeneration::new(ep, retry)),
            BackendKind::Http { url: backend.into() },
        ))
    } else {
        bail!("generation.backend `{backend}`: expected an http(s) URL or scripted:<file>")
    }
}

pub fn embedding_from_config(
    config: &EngineConfig,
    analyzer: &Analyzer,
) -> anyhow::Result<(Option<Arc<dyn EmbeddingBackend>>, BackendKind)> {
    let (timeout, retry) = timeout_and_retry(config);
    let dim = config.embedding.dimension;
    match config.embedding.backend.as_str() {
        "none" => Ok((None, BackendKind::Disabled)),
        "hashed" => {
            let mut e = HashedTrigramEmbedder::new(dim).with_analyzer(analyzer.clone());
            let mut target = format!("dimension {dim}");
            if let Some(p) = &config.retrieval.synonyms {
                e = e
                    .with_synonym_file(p)
                    .with_context(|| format!("reading synonyms {}", p.display()))?;
                target = format!("{target}, synonyms {}", p.display());
            }
            Ok((Some(Arc::new(e)), BackendKind::local("hashed", target)))
        }
        url if is_url(url) => {
            let ep = HttpEndpoint::new(url, timeout, config.concurrency.embedding);
            Ok((
                Some(Arc::new(RemoteEmbedding::new(ep, dim, retry))),
                BackendKind::Http { url: url.into() },
            ))
        }
        other => bail!("embedding.backend `{other}`: expected an http(s) URL, hashed or none"),
    }
}

pub fn nli_from_config(config: &EngineConfig) -> anyhow::Result<(Arc<dyn NliBackend>, BackendKind)> {
    let (timeout, _) = timeout_and_retry(config);
    let backend = config.verification.backend.as_str();
    if backend == "baseline" {
        let coverage = config.verification.support_coverage;
        Ok((
            Arc::new(BaselineNli::new(coverage)),
            BackendKind::local("baseline", format!("coverage {coverage}")),
        ))
    } else if let Some(path) = backend.strip_prefix("scripted:") {
        let s = ScriptedNli::from_file(path).map_err(|e| anyhow::anyhow!("scripted NLI fixture {path}: {e}"))?;
        Ok((Arc::new(s), BackendKind::local("scripted", path)))
    } else if is_url(backend) {
        let ep = HttpEndpoint::new(backend, timeout, config.concurrency.nli);
        Ok((Arc::new(RemoteNli::new(ep)), BackendKind::Http { url: backend.into() }))
    } else {
        bail!("verification.backend `{backend}`: expected an http(s) URL, baseline or scripted:<fixture>")
    }
}

/// Verification settings from config. `embedding` is used for highlight
/// similarity only when the config asks for it.
pub fn verify_options<'a>(
    config: &EngineConfig,
    embedding: Option<&'a dyn EmbeddingBackend>,
    analyzer: &Analyzer,
) -> VerifyOptions<'a> {
    let v = &config.verification;
    let similarity = match (v.similarity, embedding) {
        (SimilarityKind::Embedding, Some(e)) => Similarity::Embedding(e),
        _ => Similarity::Jaccard,
    };
    VerifyOptions {
        exec: Exec::bounded(config.concurrency.verify_workers),
        highlight_k: v.highlight_k,
        similarity,
        retry: RetryPolicy {
            max_attempts: config.backend.attempts,
        },
        numeric_coverage: v.numeric_coverage,
        analyzer: analyzer.clone(),
    }
}

fn is_url(s: &str) -> bool {
    s.starts_with("http://") || s.starts_with("https://")
}

pub fn analyzer_from_config(config: &EngineConfig) -> anyhow::Result<Analyzer> {
    Ok(match &config.retrieval.stopwords {
        Some(p) => Analyzer::from_stopword_file(p).with_context(|| format!("reading stopwords {}", p.display()))?,
        None => Analyzer::default(),
    })
}

pub fn load_corpus_from_config(config: &EngineConfig) -> anyhow::Result<Corpus> {
    let path = config
        .corpus
        .path
        .as_deref()
        .context("corpus.path is not set (config file or CITEQA_CORPUS_PATH)")?;
    let (corpus, report) = load_corpus(path).with_context(|| format!("loading corpus {}", path.display()))?;
    for e in &report.errors {
        eprintln!("warning: {} line {}: {}", path.display(), e.line, e.message);
    }
    Ok(corpus)
}

/// Reads the lexical index file if one is configured and present, else builds it.
pub fn lexical_for(
    config: &EngineConfig,
    corpus: &Corpus,
    analyzer: &Analyzer,
    exec: Exec,
) -> anyhow::Result<LexicalIndex> {
    let index = match &config.index.lexical {
        Some(p) if p.exists() => load_lexical(p).with_context(|| format!("loading lexical index {}", p.display()))?,
        _ => LexicalIndex::build_with(corpus, analyzer, Default::default(), exec)?,
    };
    check_ids("lexical index", index.doc_ids(), corpus)?;
    Ok(index)
}

pub fn vectors_for(
    config: &EngineConfig,
    corpus: &Corpus,
    embedder: &dyn EmbeddingBackend,
    exec: Exec,
) -> anyhow::Result<VectorIndex> {
    let index = match &config.index.vectors {
        Some(p) if p.exists() => load_vectors(p).with_context(|| format!("loading vector index {}", p.display()))?,
        _ => embed_corpus_with(corpus, embedder, exec)?,
    };
    if index.dimension() != embedder.dimension() {
        bail!(
            "vector index has dimension {}, embedding backend has {}",
            index.dimension(),
            embedder.dimension()
        );
    }
    check_ids("vector index", index.doc_ids(), corpus)?;
    Ok(index)
}

fn check_ids(what: &str, ids: &[String], corpus: &Corpus) -> anyhow::Result<()> {
    if ids.len() != corpus.len() {
        bail!(
            "{what} covers {} documents, corpus has {} (rebuild with `citeqa index`)",
            ids.len(),
            corpus.len()
        );
    }
    if let Some(missing) = ids.iter().find(|id| corpus.get(id).is_none()) {
        bail!("{what} has document {missing} which is not in the corpus (rebuild with `citeqa index`)");
    }
    Ok(())
}

struct StoredAnswer {
    question: String,
    answer_text: String,
    context_doc_ids: Vec<String>,
    claims: Vec<(String, Vec<String>)>,
}

#[derive(Default)]
struct Registry {
    answers: HashMap<String, Arc<StoredAnswer>>,
    order: VecDeque<String>,
}

pub struct Engine {
    config: EngineConfig,
    corpus: Arc<Corpus>,
    retriever: HybridRetriever,
    template: PromptTemplate,
    params: GenerationParams,
    backends: Backends,
    registry: Mutex<Registry>,
    feedback: Mutex<Option<Arc<FeedbackStore>>>,
}

impl Engine {
    /// Loads the corpus and indices and connects the configured backends.
    pub fn from_config(config: EngineConfig) -> anyhow::Result<Self> {
        let analyzer = analyzer_from_config(&config)?;
        let corpus = load_corpus_from_config(&config)?;
        let backends = Backends::from_config(&config, &analyzer)?;
        Self::new(config, corpus, analyzer, backends)
    }

    pub fn new(config: EngineConfig, corpus: Corpus, analyzer: Analyzer, backends: Backends) -> anyhow::Result<Self> {
        config.validate()?;
        let exec = Exec::bounded(config.concurrency.verify_workers);
        let lexical = lexical_for(&config, &corpus, &analyzer, exec)?;
        let mut retriever = HybridRetriever::new(analyzer, lexical).with_config(FusionConfig {
            lexical_weight: config.retrieval.lexical_weight,
            candidate_pool: config.retrieval.candidate_pool,
        })?;
        if let Some(e) = &backends.embedding {
            let vectors = vectors_for(&config, &corpus, e.as_ref(), exec)?;
            retriever = retriever.with_semantic(vectors, e.clone())?;
        }
        if config.verification.similarity == SimilarityKind::Embedding && backends.embedding.is_none() {
            bail!("verification.similarity = \"embedding\" needs an embedding backend");
        }
        let template = PromptTemplate::resolve(&config.generation.template)?;
        let params = GenerationParams {
            max_new_tokens: config.generation.max_new_tokens,
            repetition_penalty: config.generation.repetition_penalty,
            context_token_budget: config.generation.context_token_budget,
        };
        params.validate()?;
        Ok(Self {
            config,
            corpus: Arc::new(corpus),
            retriever,
            template,
            params,
            backends,
            registry: Mutex::new(Registry::default()),
            feedback: Mutex::new(None),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn retriever(&self) -> &HybridRetriever {
        &self.retriever
    }

    fn frozen(&self) -> bool {
        self.config.service.frozen_clock
    }

    fn elapsed_ms(&self, since: Instant) -> f64 {
        if self.frozen() {
            0.0
        } else {
            (since.elapsed().as_secs_f64() * 1e6).round() / 1e3
        }
    }

    pub fn verify_options(&self) -> VerifyOptions<'_> {
        verify_options(
            &self.config,
            self.backends.embedding.as_deref(),
            self.retriever.analyzer(),
        )
    }

    /// Verifies an answer that was produced elsewhere against `context`.
    pub fn verify_text(&self, answer: &str, context: &[&Document]) -> Result<(ParsedAnswer, VerifiedAnswer), ApiError> {
        let parsed = parse_answer(answer, context);
        let verified = verify_answer(
            &parsed,
            &self.corpus,
            self.backends.nli.as_ref(),
            &self.verify_options(),
        )
        .map_err(verification_error)?;
        Ok((parsed, verified))
    }

    pub fn handle_ask(&self, question: &str) -> Result<AskResponse, ApiError> {
        let start = Instant::now();
        let k = self.config.retrieval.k;
        let hits = self.retriever.search(question, k).map_err(retrieval_error)?;
        let retrieve = self.elapsed_ms(start);
        let retrieved: Vec<RetrievedDoc> = hits.iter().map(RetrievedDoc::from).collect();
        if hits.is_empty() {
            return Ok(AskResponse {
                answer_id: answer_id(question, "", &[]),
                question: question.to_string(),
                outcome: Outcome::NoRelevantDocuments,
                answer_text: String::new(),
                claims: Vec::new(),
                unknown_references: Vec::new(),
                retrieved,
                context_doc_ids: Vec::new(),
                timings_ms: Timings {
                    retrieve,
                    total: self.elapsed_ms(start),
                    ..Timings::default()
                },
            });
        }

        let t = Instant::now();
        let budget = self.params.context_token_budget;
        let docs = pack_context(&hits, &self.corpus, &self.template, question, budget).map_err(generation_error)?;
        let prompt = build_prompt(question, &docs, &self.template).map_err(generation_error)?;
        let answer_text =
            generate_answer(self.backends.generation.as_ref(), &prompt, &self.params).map_err(generation_error)?;
        let generate = self.elapsed_ms(t);

        let t = Instant::now();
        let parsed = parse_answer(&answer_text, &docs);
        let parse = self.elapsed_ms(t);

        let t = Instant::now();
        let verified = verify_answer(
            &parsed,
            &self.corpus,
            self.backends.nli.as_ref(),
            &self.verify_options(),
        )
        .map_err(verification_error)?;
        let verify = self.elapsed_ms(t);

        let context_doc_ids: Vec<String> = docs.iter().map(|d| d.doc_id.clone()).collect();
        let id = answer_id(question, &answer_text, &context_doc_ids);
        self.remember(
            &id,
            StoredAnswer {
                question: question.to_string(),
                answer_text: answer_text.clone(),
                context_doc_ids: context_doc_ids.clone(),
                claims: parsed
                    .claims
                    .iter()
                    .map(|c| (c.text.clone(), c.references.clone()))
                    .collect(),
            },
        );
        Ok(AskResponse {
            answer_id: id,
            question: question.to_string(),
            outcome: Outcome::Answered,
            answer_text,
            claims: ClaimView::from_verified(&verified),
            unknown_references: parsed.unknown_references.clone(),
            retrieved,
            context_doc_ids,
            timings_ms: Timings {
                retrieve,
                generate,
                parse,
                verify,
                total: self.elapsed_ms(start),
            },
        })
    }

    fn remember(&self, id: &str, answer: StoredAnswer) {
        let mut reg = self.registry.lock().unwrap_or_else(|p| p.into_inner());
        if reg.answers.insert(id.to_string(), Arc::new(answer)).is_none() {
            reg.order.push_back(id.to_string());
        }
        while reg.order.len() > ANSWER_REGISTRY_CAPACITY {
            if let Some(old) = reg.order.pop_front() {
                reg.answers.remove(&old);
            }
        }
    }

    fn lookup(&self, id: &str) -> Option<Arc<StoredAnswer>> {
        let reg = self.registry.lock().unwrap_or_else(|p| p.into_inner());
        reg.answers.get(id).cloned()
    }

    /// Opens the feedback store now rather than on the first submission.
    pub fn feedback_store(&self) -> Result<Arc<FeedbackStore>, FeedbackError> {
        let mut slot = self.feedback.lock().unwrap_or_else(|p| p.into_inner());
        if let Some(s) = slot.as_ref() {
            return Ok(s.clone());
        }
        let mut store = FeedbackStore::open(&self.config.feedback.path)?;
        if self.frozen() {
            store = store.with_clock(|| DateTime::<Utc>::UNIX_EPOCH);
        }
        let store = Arc::new(store);
        *slot = Some(store.clone());
        Ok(store)
    }

    pub fn handle_feedback(&self, req: FeedbackRequest) -> Result<FeedbackAck, ApiError> {
        let mut errors = Vec::new();
        let mut field = |field: &'static str, message: String| errors.push(FieldError { field, message });
        let kind = match req.kind.as_deref() {
            None => {
                field("kind", "required (VERDICT_OVERRIDE or ANSWER_EDIT)".into());
                None
            }
            Some(k) => match k.parse::<FeedbackKind>() {
                Ok(k) => Some(k),
                Err(m) => {
                    field("kind", m);
                    None
                }
            },
        };
        let stored = match &req.answer_id {
            Some(id) => Some(
                self.lookup(id)
                    .ok_or_else(|| ApiError::new(404, "feedback", format!("unknown answer_id `{id}`")))?,
            ),
            None => None,
        };
        let (question, answer_text, context_doc_ids, claims) = match &stored {
            Some(s) => (
                s.question.clone(),
                s.answer_text.clone(),
                s.context_doc_ids.clone(),
                Some(&s.claims),
            ),
            None => {
                let q = req.question.clone().unwrap_or_default();
                let a = req.answer_text.clone().unwrap_or_default();
                if q.trim().is_empty() {
                    field("question", "required when answer_id is absent".into());
                }
                if a.trim().is_empty() {
                    field("answer_text", "required when answer_id is absent".into());
                }
                (q, a, req.context_doc_ids.clone().unwrap_or_default(), None)
            }
        };
        let claim = match (req.claim_index, claims) {
            (Some(i), Some(cs)) => match cs.get(i) {
                Some(c) => Some(c),
                None => {
                    field("claim_index", format!("answer has {} claims", cs.len()));
                    None
                }
            },
            _ => None,
        };
        let doc_id = req.doc_id.clone().or_else(|| {
            if kind == Some(FeedbackKind::VerdictOverride) {
                claim.and_then(|(_, refs)| refs.first().cloned())
            } else {
                None
            }
        });
        let premise = match &doc_id {
            Some(id) => match self.corpus.get(id) {
                Some(d) => Some(format!("{} {}", d.title, d.abstract_text)),
                None => {
                    field("doc_id", format!("`{id}` is not in the corpus"));
                    None
                }
            },
            None => None,
        };
        let claim_text = claim.map(|(t, _)| t.clone()).or(req.claim_text.clone());
        let (original_value, corrected_value) = match kind {
            // an edit defaults its original to the stored answer
            Some(FeedbackKind::AnswerEdit) => (
                req.original_value.clone().unwrap_or_else(|| answer_text.clone()),
                req.corrected_value.clone().unwrap_or_default(),
            ),
            _ => (
                req.original_value.clone().unwrap_or_default(),
                req.corrected_value.clone().unwrap_or_default(),
            ),
        };
        let Some(kind) = kind else {
            return Err(ApiError::fields("feedback", errors));
        };
        if !errors.is_empty() {
            return Err(ApiError::fields("feedback", errors));
        }
        let feedback = NewFeedback {
            kind,
            question,
            answer_text,
            claim_index: req.claim_index,
            original_value,
            corrected_value,
            context_doc_ids,
            doc_id,
            claim_text,
            premise,
            answer_id: req.answer_id.clone(),
            user_tag: req.user_tag.clone(),
        };
        let store = self.feedback_store().map_err(feedback_error)?;
        let record_id = store.record(feedback).map_err(feedback_error)?;
        Ok(FeedbackAck { record_id })
    }

    pub fn handle_get_document(&self, doc_id: &str) -> Result<DocumentView, ApiError> {
        validate_doc_id(doc_id).map_err(|e| ApiError::new(400, "documents", e.to_string()))?;
        self.corpus
            .get(doc_id)
            .map(DocumentView::from)
            .ok_or_else(|| ApiError::new(404, "documents", format!("document {doc_id} not found")))
    }

    pub fn health(&self) -> HealthReport {
        let timeout = Duration::from_millis(self.config.backend.timeout_ms).min(Duration::from_secs(2));
        let b = &self.backends;
        let generation = b.generation_kind.health(timeout);
        let embedding = b.embedding_kind.health(timeout);
        let verification = b.nli_kind.health(timeout);
        let ok = generation.reachable && embedding.reachable && verification.reachable;
        HealthReport {
            status: if ok { "ok" } else { "degraded" }.into(),
            documents: self.corpus.len(),
            lexical_terms: self.retriever.lexical_index().term_count(),
            vectors: self.retriever.vector_index().map_or(0, |v| v.len()),
            generation,
            embedding,
            verification,
        }
    }
}

/// Hex SHA-256 prefix over question, answer and context ids.
pub fn answer_id(question: &str, answer: &str, context: &[String]) -> String {
    let mut h = Sha256::new();
    h.update(question.as_bytes());
    h.update([0]);
    h.update(answer.as_bytes());
    for id in context {
        h.update([0]);
        h.update(id.as_bytes());
    }
    let digest = h.finalize();
    let mut out = String::with_capacity(ANSWER_ID_HEX);
    for b in digest.iter().take(ANSWER_ID_HEX / 2) {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

fn retrieval_error(e: RetrievalError) -> ApiError {
    match &e {
        RetrievalError::UnanswerableQuery { .. } | RetrievalError::EmptyQueryTerms => {
            ApiError::new(400, "retrieval", e.to_string())
        }
        RetrievalError::QueryEmbedding(b) => ApiError::bad_gateway("retrieval", b),
        _ => ApiError::new(500, "retrieval", e.to_string()),
    }
}

fn generation_error(e: GenerationError) -> ApiError {
    match &e {
        GenerationError::Backend(b) => ApiError::bad_gateway("generation", b),
        GenerationError::EmptyAnswer { .. } => ApiError::new(502, "generation", e.to_string()),
        _ => ApiError::new(500, "generation", e.to_string()),
    }
}

fn verification_error(e: VerificationError) -> ApiError {
    match &e {
        VerificationError::Backend { .. } | VerificationError::Highlight { .. } => {
            ApiError::new(502, "verification", e.to_string())
        }
        _ => ApiError::new(500, "verification", e.to_string()),
    }
}

fn feedback_error(e: FeedbackError) -> ApiError {
    match e {
        FeedbackError::Invalid(fields) => ApiError::fields("feedback", fields),
        e => ApiError::new(500, "feedback", e.to_string()),
    }
}

/// Context documents named by id, or the whole corpus in file order.
pub fn context_docs<'c>(corpus: &'c Corpus, ids: Option<&[String]>) -> anyhow::Result<Vec<&'c Document>> {
    match ids {
        None => Ok(corpus.iter().collect()),
        Some(ids) => {
            let mut seen = HashSet::new();
            ids.iter()
                .filter(|id| seen.insert(id.as_str()))
                .map(|id| {
                    corpus
                        .get(id)
                        .with_context(|| format!("context document {id} is not in the corpus"))
                })
                .collect()
        }
    }
}

pub fn ensure_parent(path: &Path) -> std::io::Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => std::fs::create_dir_all(p),
        _ => Ok(()),
    }
}
