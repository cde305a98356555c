//! Inverted index with Okapi BM25 scoring.
//!
//! score(D, Q) = Σ_{q ∈ Q} idf(q) · tf(q, D) · (k1 + 1) / (tf(q, D) + k1 · (1 − b + b · |D| / avgdl))
//! idf(q)      = ln(1 + (N − df(q) + 0.5) / (df(q) + 0.5))
//!
//! The idf form is the one used by Lucene-family engines, which keeps every
//! matching term's contribution strictly positive.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{sort_hits, RetrievalError, ScoredHit};
use crate::corpus::Corpus;
use crate::par::{self, Exec};
use crate::text::Analyzer;

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self {
            k1: DEFAULT_K1,
            b: DEFAULT_B,
        }
    }
}

/// One entry of a postings list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LexicalIndex {
    pub(crate) postings: HashMap<String, Vec<Posting>>,
    pub(crate) doc_ids: Vec<String>,
    pub(crate) doc_lengths: Vec<u32>,
    pub(crate) avg_doc_length: f64,
    pub(crate) params: Bm25Params,
}

impl LexicalIndex {
    /// Indexes title + abstract of every document with default BM25 parameters.
    pub fn build(corpus: &Corpus, analyzer: &Analyzer) -> Result<Self, RetrievalError> {
        Self::build_with(corpus, analyzer, Bm25Params::default(), Exec::default())
    }

    pub fn build_with(
        corpus: &Corpus,
        analyzer: &Analyzer,
        params: Bm25Params,
        exec: Exec,
    ) -> Result<Self, RetrievalError> {
        if corpus.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        let docs = corpus.documents();
        let per_doc: Vec<(u32, Vec<(String, u32)>)> = par::map(exec, docs, |doc| {
            let terms = analyzer.terms(&doc.full_text());
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in &terms {
                *tf.entry(t.clone()).or_default() += 1;
            }
            let mut tf: Vec<_> = tf.into_iter().collect();
            tf.sort_unstable();
            (terms.len() as u32, tf)
        });

        let mut postings: HashMap<String, Vec<Posting>> = HashMap::new();
        let mut doc_lengths = Vec::with_capacity(docs.len());
        for (pos, (len, tfs)) in per_doc.into_iter().enumerate() {
            doc_lengths.push(len);
            for (term, tf) in tfs {
                postings.entry(term).or_default().push(Posting { doc: pos as u32, tf });
            }
        }
        let total: u64 = doc_lengths.iter().map(|&l| u64::from(l)).sum();
        let avg_doc_length = total as f64 / doc_lengths.len() as f64;
        Ok(Self {
            postings,
            doc_ids: docs.iter().map(|d| d.doc_id.clone()).collect(),
            doc_lengths,
            avg_doc_length,
            params,
        })
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn term_count(&self) -> usize {
        self.postings.len()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_length(&self, pos: usize) -> Option<u32> {
        self.doc_lengths.get(pos).copied()
    }

    pub fn postings(&self, term: &str) -> &[Posting] {
        self.postings.get(term).map_or(&[], Vec::as_slice)
    }

    /// Number of documents containing `term`.
    pub fn document_frequency(&self, term: &str) -> usize {
        self.postings(term).len()
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.doc_count() as f64;
        let df = self.document_frequency(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    fn term_weight(&self, tf: u32, doc_len: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let tf = f64::from(tf);
        let norm = if self.avg_doc_length > 0.0 {
            f64::from(doc_len) / self.avg_doc_length
        } else {
            0.0
        };
        tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * norm))
    }

    /// BM25 score of the document at `pos`; 0 when it shares no query term.
    pub fn score_document(&self, terms: &[String], pos: usize) -> f64 {
        let doc_len = self.doc_lengths[pos];
        terms
            .iter()
            .filter_map(|t| {
                let list = self.postings(t);
                list.binary_search_by_key(&(pos as u32), |p| p.doc)
                    .ok()
                    .map(|i| self.idf(t) * self.term_weight(list[i].tf, doc_len))
            })
            .sum()
    }

    /// Top `k` documents by BM25 for already-analyzed query terms. Documents
    /// without any query term are never returned.
    pub fn search(&self, terms: &[String], k: usize) -> Result<Vec<ScoredHit>, RetrievalError> {
        if terms.is_empty() {
            return Err(RetrievalError::EmptyQueryTerms);
        }
        if k == 0 {
            return Err(RetrievalError::InvalidK);
        }
        let mut scores = vec![0.0f64; self.doc_count()];
        let mut touched = vec![false; self.doc_count()];
        for term in terms {
            let list = self.postings(term);
            if list.is_empty() {
                continue;
            }
            let idf = self.idf(term);
            for p in list {
                let d = p.doc as usize;
                scores[d] += idf * self.term_weight(p.tf, self.doc_lengths[d]);
                touched[d] = true;
            }
        }
        let mut hits: Vec<ScoredHit> = touched
            .iter()
            .enumerate()
            .filter(|(_, &t)| t)
            .map(|(d, _)| ScoredHit::lexical(self.doc_ids[d].clone(), scores[d]))
            .collect();
        sort_hits(&mut hits, |h| h.lexical_score);
        hits.truncate(k);
        Ok(hits)
    }
}
