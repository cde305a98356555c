//! Hybrid retrieval: BM25 over an inverted index, exhaustive cosine search
//! over dense vectors, and min-max score fusion of the two.

mod embedding;
mod fusion;
mod lexical;
pub mod persist;
mod vector;

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendError;
use crate::text::Analyzer;

pub use embedding::{parse_synonyms, EmbeddingBackend, HashedTrigramEmbedder};
pub use fusion::{fuse, fused_by_doc, min_max_normalize};
pub use lexical::{Bm25Params, LexicalIndex, Posting, DEFAULT_B, DEFAULT_K1};
pub use vector::{embed_corpus, embed_corpus_with, VectorIndex};

/// Candidates taken from each arm before fusion is `max(k, DEFAULT_CANDIDATE_POOL)`.
pub const DEFAULT_CANDIDATE_POOL: usize = 50;
pub const DEFAULT_LEXICAL_WEIGHT: f64 = 0.5;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("unanswerable query: {reason}")]
    UnanswerableQuery { reason: String },
    #[error("cannot index an empty corpus")]
    EmptyCorpus,
    #[error("query has no terms")]
    EmptyQueryTerms,
    #[error("k must be positive")]
    InvalidK,
    #[error("embedding dimension must be positive")]
    ZeroDimension,
    #[error("query vector has dimension {actual}, index has {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid query vector: {reason}")]
    InvalidQueryVector { reason: String },
    #[error("invalid vector for document `{doc_id}`: {reason}")]
    InvalidVector { doc_id: String, reason: String },
    #[error("embedding document `{doc_id}` failed: {source}")]
    Embedding {
        doc_id: String,
        #[source]
        source: BackendError,
    },
    #[error("embedding the query failed: {0}")]
    QueryEmbedding(#[source] BackendError),
    #[error("lexical weight {0} is outside [0, 1]")]
    InvalidWeight(f64),
    #[error("indices disagree with the corpus: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Persist(#[from] persist::PersistError),
}

/// A retrieved document with its per-arm and fused scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredHit {
    pub doc_id: String,
    pub lexical_score: f64,
    pub semantic_score: f64,
    pub fused_score: f64,
}

impl ScoredHit {
    pub fn lexical(doc_id: String, score: f64) -> Self {
        Self {
            doc_id,
            lexical_score: score,
            semantic_score: 0.0,
            fused_score: 0.0,
        }
    }

    pub fn semantic(doc_id: String, score: f64) -> Self {
        Self {
            doc_id,
            lexical_score: 0.0,
            semantic_score: score,
            fused_score: 0.0,
        }
    }
}

/// Sorts by `key` descending, then doc_id ascending.
pub(crate) fn sort_hits(hits: &mut [ScoredHit], key: impl Fn(&ScoredHit) -> f64) {
    hits.sort_by(|a, b| match key(b).total_cmp(&key(a)) {
        Ordering::Equal => a.doc_id.cmp(&b.doc_id),
        o => o,
    });
}

/// Turns a natural-language question into lexical query terms: lowercase,
/// split on punctuation, stopwords removed, order and duplicates kept.
pub fn question_to_query(question: &str, analyzer: &Analyzer) -> Result<Vec<String>, RetrievalError> {
    if question.trim().is_empty() {
        return Err(RetrievalError::UnanswerableQuery {
            reason: "question is empty".into(),
        });
    }
    let terms = analyzer.terms(question);
    if terms.is_empty() {
        return Err(RetrievalError::UnanswerableQuery {
            reason: "question contains only stopwords".into(),
        });
    }
    Ok(terms)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    pub lexical_weight: f64,
    pub candidate_pool: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            lexical_weight: DEFAULT_LEXICAL_WEIGHT,
            candidate_pool: DEFAULT_CANDIDATE_POOL,
        }
    }
}

struct SemanticArm {
    index: VectorIndex,
    backend: Arc<dyn EmbeddingBackend>,
}

/// Both indices over one corpus plus the embedder for queries. Without a
/// semantic arm the retriever is purely lexical.
pub struct HybridRetriever {
    analyzer: Analyzer,
    lexical: LexicalIndex,
    semantic: Option<SemanticArm>,
    positions: HashMap<String, usize>,
    config: FusionConfig,
}

impl std::fmt::Debug for HybridRetriever {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HybridRetriever")
            .field("documents", &self.lexical.doc_count())
            .field("semantic", &self.semantic.is_some())
            .field("config", &self.config)
            .finish()
    }
}

impl HybridRetriever {
    pub fn new(analyzer: Analyzer, lexical: LexicalIndex) -> Self {
        let positions = lexical
            .doc_ids()
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        Self {
            analyzer,
            lexical,
            semantic: None,
            positions,
            config: FusionConfig::default(),
        }
    }

    /// Attaches the dense arm. The vector index must cover the same documents
    /// in the same order as the lexical index.
    pub fn with_semantic(
        mut self,
        index: VectorIndex,
        backend: Arc<dyn EmbeddingBackend>,
    ) -> Result<Self, RetrievalError> {
        if index.doc_ids() != self.lexical.doc_ids() {
            return Err(RetrievalError::Inconsistent(
                "vector index documents differ from lexical index documents".into(),
            ));
        }
        if index.dimension() != backend.dimension() {
            return Err(RetrievalError::DimensionMismatch {
                expected: index.dimension(),
                actual: backend.dimension(),
            });
        }
        self.semantic = Some(SemanticArm { index, backend });
        Ok(self)
    }

    pub fn with_config(mut self, config: FusionConfig) -> Result<Self, RetrievalError> {
        if !(0.0..=1.0).contains(&config.lexical_weight) {
            return Err(RetrievalError::InvalidWeight(config.lexical_weight));
        }
        self.config = config;
        Ok(self)
    }

    pub fn config(&self) -> FusionConfig {
        self.config
    }

    pub fn analyzer(&self) -> &Analyzer {
        &self.analyzer
    }

    pub fn lexical_index(&self) -> &LexicalIndex {
        &self.lexical
    }

    pub fn vector_index(&self) -> Option<&VectorIndex> {
        self.semantic.as_ref().map(|s| &s.index)
    }

    pub fn search(&self, question: &str, k: usize) -> Result<Vec<ScoredHit>, RetrievalError> {
        self.search_weighted(question, k, self.config.lexical_weight)
    }

    /// Hybrid search with an explicit lexical weight `w ∈ [0, 1]`.
    pub fn search_weighted(&self, question: &str, k: usize, w: f64) -> Result<Vec<ScoredHit>, RetrievalError> {
        if !(0.0..=1.0).contains(&w) {
            return Err(RetrievalError::InvalidWeight(w));
        }
        if k == 0 {
            return Err(RetrievalError::InvalidK);
        }
        let terms = question_to_query(question, &self.analyzer)?;
        let pool = k.max(self.config.candidate_pool);
        let lexical = self.lexical.search(&terms, pool)?;

        let Some(arm) = &self.semantic else {
            return Ok(fuse(&lexical, &[], 1.0, k));
        };
        let query = arm.backend.embed(question).map_err(RetrievalError::QueryEmbedding)?;
        let unit = match arm.index.unit_query(&query) {
            Ok(u) => u,
            // A question with no embeddable content cannot rank semantically.
            Err(RetrievalError::InvalidQueryVector { .. }) => return Ok(fuse(&lexical, &[], 1.0, k)),
            Err(e) => return Err(e),
        };
        let semantic = arm.index.search(&unit, pool)?;
        let mut hits = fuse(&lexical, &semantic, w, k);

        // Report raw arm scores for documents that fell outside one pool.
        let in_lex: HashMap<&str, ()> = lexical.iter().map(|h| (h.doc_id.as_str(), ())).collect();
        let in_sem: HashMap<&str, ()> = semantic.iter().map(|h| (h.doc_id.as_str(), ())).collect();
        for h in &mut hits {
            let pos = self.positions[&h.doc_id];
            if !in_lex.contains_key(h.doc_id.as_str()) {
                h.lexical_score = self.lexical.score_document(&terms, pos);
            }
            if !in_sem.contains_key(h.doc_id.as_str()) {
                h.semantic_score = arm.index.cosine_at(pos, &unit).clamp(-1.0, 1.0);
            }
        }
        Ok(hits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Corpus, Document};

    #[test]
    fn question_transformation() {
        let a = Analyzer::default();
        assert_eq!(
            question_to_query("What genes play a role in breast cancer?", &a).unwrap(),
            vec!["genes", "play", "role", "breast", "cancer"]
        );
        assert_eq!(question_to_query("BRCA1", &a).unwrap(), vec!["brca1"]);
        assert!(matches!(
            question_to_query("the of and", &a),
            Err(RetrievalError::UnanswerableQuery { .. })
        ));
        assert!(matches!(
            question_to_query("  ", &a),
            Err(RetrievalError::UnanswerableQuery { .. })
        ));
    }

    fn retriever() -> HybridRetriever {
        let corpus = Corpus::from_documents(vec![
            Document::new("1", "Breast cancer genes", "BRCA1 and BRCA2 mutations raise risk.").unwrap(),
            Document::new("2", "Lung cancer", "Smoking causes most cases.").unwrap(),
            Document::new("3", "Kidney failure", "Dialysis prolongs survival.").unwrap(),
        ])
        .unwrap();
        let analyzer = Analyzer::default();
        let embedder: Arc<dyn EmbeddingBackend> =
            Arc::new(HashedTrigramEmbedder::new(64).with_synonyms([("kidney", "renal")]));
        let lexical = LexicalIndex::build(&corpus, &analyzer).unwrap();
        let vectors = embed_corpus(&corpus, embedder.as_ref()).unwrap();
        HybridRetriever::new(analyzer, lexical)
            .with_semantic(vectors, embedder)
            .unwrap()
    }

    #[test]
    fn hybrid_results_sorted_and_bounded() {
        let r = retriever();
        let hits = r.search("breast cancer risk", 2).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].doc_id, "1");
        assert!(hits.windows(2).all(|w| w[0].fused_score >= w[1].fused_score));
        assert!(hits.iter().all(|h| (0.0..=1.0).contains(&h.fused_score)));
    }

    #[test]
    fn synonym_found_without_lexical_match() {
        let r = retriever();
        let hits = r.search("renal failure", 3).unwrap();
        assert_eq!(hits[0].doc_id, "3");
    }

    #[test]
    fn lexical_only_retriever() {
        let corpus = Corpus::from_documents(vec![Document::new("5", "T", "gene study").unwrap()]).unwrap();
        let a = Analyzer::default();
        let r = HybridRetriever::new(a.clone(), LexicalIndex::build(&corpus, &a).unwrap());
        assert!(r.search("melanoma", 5).unwrap().is_empty());
        assert_eq!(r.search("gene", 5).unwrap().len(), 1);
    }

    #[test]
    fn weight_outside_unit_interval_rejected() {
        let r = retriever();
        assert!(matches!(
            r.search_weighted("cancer", 3, 1.5),
            Err(RetrievalError::InvalidWeight(_))
        ));
    }
}
