//! Exhaustive dense-vector index. Vectors are L2-normalized on insert, so
//! cosine similarity is a dot product.

use super::embedding::EmbeddingBackend;
use super::{RetrievalError, ScoredHit};
use crate::corpus::Corpus;
use crate::par::{self, Exec};

const EMBED_BATCH: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    pub(crate) dimension: usize,
    pub(crate) doc_ids: Vec<String>,
    /// Row-major, `doc_ids.len() × dimension`.
    pub(crate) data: Vec<f64>,
}

impl VectorIndex {
    pub fn new(dimension: usize) -> Result<Self, RetrievalError> {
        if dimension == 0 {
            return Err(RetrievalError::ZeroDimension);
        }
        Ok(Self {
            dimension,
            doc_ids: Vec::new(),
            data: Vec::new(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn vector(&self, pos: usize) -> &[f64] {
        &self.data[pos * self.dimension..(pos + 1) * self.dimension]
    }

    /// Validates, normalizes and appends a vector.
    pub fn push(&mut self, doc_id: impl Into<String>, vector: &[f64]) -> Result<(), RetrievalError> {
        let doc_id = doc_id.into();
        let unit = normalize(vector, self.dimension).map_err(|reason| RetrievalError::InvalidVector {
            doc_id: doc_id.clone(),
            reason,
        })?;
        self.doc_ids.push(doc_id);
        self.data.extend(unit);
        Ok(())
    }

    /// Appends an already-normalized vector as stored on disk.
    pub(crate) fn push_stored(&mut self, doc_id: String, vector: Vec<f64>) -> Result<(), RetrievalError> {
        let bad = |reason: &str| RetrievalError::InvalidVector {
            doc_id: doc_id.clone(),
            reason: reason.into(),
        };
        if vector.len() != self.dimension {
            return Err(bad("dimension mismatch"));
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(bad("vector has NaN or infinite components"));
        }
        let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(bad("stored vector is not unit-norm"));
        }
        self.doc_ids.push(doc_id);
        self.data.extend(vector);
        Ok(())
    }

    /// Cosine similarity between the stored vector at `pos` and a unit query.
    pub fn cosine_at(&self, pos: usize, unit_query: &[f64]) -> f64 {
        dot(self.vector(pos), unit_query)
    }

    pub fn search(&self, query: &[f64], k: usize) -> Result<Vec<ScoredHit>, RetrievalError> {
        self.search_with(query, k, Exec::default())
    }

    /// Top `k` stored vectors by cosine similarity to `query`.
    pub fn search_with(&self, query: &[f64], k: usize, exec: Exec) -> Result<Vec<ScoredHit>, RetrievalError> {
        if k == 0 {
            return Err(RetrievalError::InvalidK);
        }
        let unit = self.unit_query(query)?;
        let positions: Vec<usize> = (0..self.len()).collect();
        let scores: Vec<f64> = par::map(exec, &positions, |&pos| dot(self.vector(pos), &unit).clamp(-1.0, 1.0));
        let order = |a: &usize, b: &usize| {
            scores[*b]
                .total_cmp(&scores[*a])
                .then_with(|| self.doc_ids[*a].cmp(&self.doc_ids[*b]))
        };
        let mut top = positions;
        if k < top.len() {
            top.select_nth_unstable_by(k - 1, order);
            top.truncate(k);
        }
        top.sort_unstable_by(order);
        Ok(top
            .into_iter()
            .map(|pos| ScoredHit::semantic(self.doc_ids[pos].clone(), scores[pos]))
            .collect())
    }

    pub(crate) fn unit_query(&self, query: &[f64]) -> Result<Vec<f64>, RetrievalError> {
        if query.len() != self.dimension {
            return Err(RetrievalError::DimensionMismatch {
                expected: self.dimension,
                actual: query.len(),
            });
        }
        normalize(query, self.dimension).map_err(|reason| RetrievalError::InvalidQueryVector { reason })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &[f64], dimension: usize) -> Result<Vec<f64>, String> {
    if v.len() != dimension {
        return Err(format!("expected dimension {dimension}, got {}", v.len()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err("vector has NaN or infinite components".into());
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err("vector is zero".into());
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

pub fn embed_corpus(corpus: &Corpus, backend: &dyn EmbeddingBackend) -> Result<VectorIndex, RetrievalError> {
    embed_corpus_with(corpus, backend, Exec::default())
}

/// Embeds title + abstract of every document, one vector per document in
/// corpus order.
pub fn embed_corpus_with(
    corpus: &Corpus,
    backend: &dyn EmbeddingBackend,
    exec: Exec,
) -> Result<VectorIndex, RetrievalError> {
    let mut index = VectorIndex::new(backend.dimension())?;
    let texts: Vec<(String, String)> = corpus.iter().map(|d| (d.doc_id.clone(), d.full_text())).collect();
    let batches: Vec<&[(String, String)]> = texts.chunks(EMBED_BATCH).collect();
    let embedded = par::try_map(exec, &batches, |batch| embed_batch(backend, batch)).map_err(|(e, _)| e)?;
    for (batch, vectors) in batches.iter().zip(embedded) {
        for ((doc_id, _), v) in batch.iter().zip(vectors) {
            index.push(doc_id.clone(), &v)?;
        }
    }
    Ok(index)
}

// On a batch failure each document is retried alone so the error can name it.
fn embed_batch(backend: &dyn EmbeddingBackend, batch: &[(String, String)]) -> Result<Vec<Vec<f64>>, RetrievalError> {
    let refs: Vec<&str> = batch.iter().map(|(_, t)| t.as_str()).collect();
    match backend.embed_batch(&refs) {
        Ok(vs) if vs.len() == batch.len() => Ok(vs),
        _ => batch
            .iter()
            .map(|(doc_id, text)| {
                backend.embed(text).map_err(|source| RetrievalError::Embedding {
                    doc_id: doc_id.clone(),
                    source,
                })
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::BackendError;
    use crate::corpus::Document;
    use crate::retrieval::HashedTrigramEmbedder;

    fn corpus() -> Corpus {
        Corpus::from_documents(vec![
            Document::new("1", "Breast cancer", "BRCA1 mutations raise risk.").unwrap(),
            Document::new("2", "Lung cancer", "Smoking causes most cases.").unwrap(),
            Document::new("3", "Gene therapy", "Vectors deliver genes.").unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn stored_vectors_are_unit_norm() {
        let idx = embed_corpus(&corpus(), &HashedTrigramEmbedder::new(8)).unwrap();
        assert_eq!(idx.len(), 3);
        for pos in 0..3 {
            let n: f64 = idx.vector(pos).iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((n - 1.0).abs() < 1e-9);
        }
    }

    struct NanBackend;
    impl EmbeddingBackend for NanBackend {
        fn name(&self) -> &str {
            "nan"
        }
        fn dimension(&self) -> usize {
            4
        }
        fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
            if text.contains("Smoking") {
                Ok(vec![f64::NAN, 0.0, 0.0, 1.0])
            } else {
                Ok(vec![1.0, 0.0, 0.0, 0.0])
            }
        }
    }

    #[test]
    fn nan_vector_names_document() {
        match embed_corpus(&corpus(), &NanBackend) {
            Err(RetrievalError::InvalidVector { doc_id, .. }) => assert_eq!(doc_id, "2"),
            other => panic!("unexpected {other:?}"),
        }
    }

    struct FailingBackend;
    impl EmbeddingBackend for FailingBackend {
        fn name(&self) -> &str {
            "failing"
        }
        fn dimension(&self) -> usize {
            4
        }
        fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
            if text.contains("Vectors") {
                Err(BackendError::transport("failing", "connection reset"))
            } else {
                Ok(vec![0.0, 1.0, 0.0, 0.0])
            }
        }
    }

    #[test]
    fn backend_failure_names_document() {
        match embed_corpus(&corpus(), &FailingBackend) {
            Err(RetrievalError::Embedding { doc_id, .. }) => assert_eq!(doc_id, "3"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_texts_get_identical_vectors() {
        let c = Corpus::from_documents(vec![
            Document::new("1", "Same", "Same text.").unwrap(),
            Document::new("2", "Same", "Same text.").unwrap(),
        ])
        .unwrap();
        let idx = embed_corpus(&c, &HashedTrigramEmbedder::new(16)).unwrap();
        assert_eq!(idx.vector(0), idx.vector(1));
    }

    #[test]
    fn self_query_scores_one_and_orthogonal_scores_zero() {
        let mut idx = VectorIndex::new(3).unwrap();
        idx.push("1", &[1.0, 0.0, 0.0]).unwrap();
        idx.push("2", &[0.0, 2.0, 0.0]).unwrap();
        idx.push("3", &[1.0, 1.0, 0.0]).unwrap();
        let hits = idx.search(&[0.0, 1.0, 0.0], 3).unwrap();
        assert_eq!(hits[0].doc_id, "2");
        assert!((hits[0].semantic_score - 1.0).abs() < 1e-9);
        let d1 = hits.iter().find(|h| h.doc_id == "1").unwrap();
        assert_eq!(d1.semantic_score, 0.0);
    }

    #[test]
    fn bad_queries_rejected() {
        let mut idx = VectorIndex::new(2).unwrap();
        idx.push("1", &[1.0, 0.0]).unwrap();
        assert!(matches!(
            idx.search(&[1.0, 0.0, 0.0], 1),
            Err(RetrievalError::DimensionMismatch { expected: 2, actual: 3 })
        ));
        assert!(matches!(
            idx.search(&[0.0, 0.0], 1),
            Err(RetrievalError::InvalidQueryVector { .. })
        ));
        assert!(matches!(VectorIndex::new(0), Err(RetrievalError::ZeroDimension)));
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let idx = embed_corpus_with(&corpus(), &HashedTrigramEmbedder::new(8), Exec::Sequential).unwrap();
        let idx2 = embed_corpus_with(&corpus(), &HashedTrigramEmbedder::new(8), Exec::default()).unwrap();
        assert_eq!(idx, idx2);
        let q = HashedTrigramEmbedder::new(8).embed("cancer risk").unwrap();
        assert_eq!(
            idx.search_with(&q, 3, Exec::Sequential).unwrap(),
            idx.search_with(&q, 3, Exec::default()).unwrap()
        );
    }
}
