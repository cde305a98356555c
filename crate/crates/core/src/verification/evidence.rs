//! Evidence sentences most similar to a claim, and numeric-divergence hints.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::backend::BackendError;
use crate::corpus::Document;
use crate::retrieval::EmbeddingBackend;
use crate::text::{number_tokens, Analyzer};

pub const DEFAULT_HIGHLIGHT_K: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HighlightedSentence {
    pub sentence_index: usize,
    pub text: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceHighlight {
    pub doc_id: String,
    pub sentences: Vec<HighlightedSentence>,
}

/// How claim/sentence similarity is measured.
#[derive(Clone, Copy)]
pub enum Similarity<'a> {
    /// Jaccard overlap of content-word sets.
    Jaccard,
    /// Cosine of embeddings, negative values clamped to 0.
    Embedding(&'a dyn EmbeddingBackend),
}

impl std::fmt::Debug for Similarity<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Similarity::Jaccard => f.write_str("Jaccard"),
            Similarity::Embedding(b) => write!(f, "Embedding({})", b.name()),
        }
    }
}

pub fn jaccard(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let inter = a.intersection(b).count() as f64;
    let union = a.union(b).count() as f64;
    inter / union
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// The `k` sentences of `doc` most similar to `claim_text`, best first, ties
/// broken by sentence position.
pub fn highlight_evidence(
    claim_text: &str,
    doc: &Document,
    k: usize,
    similarity: Similarity<'_>,
    analyzer: &Analyzer,
) -> Result<EvidenceHighlight, BackendError> {
    let scores: Vec<f64> = match similarity {
        Similarity::Jaccard => {
            let claim = analyzer.term_set(claim_text);
            doc.sentences
                .iter()
                .map(|s| jaccard(&claim, &analyzer.term_set(&s.text)))
                .collect()
        }
        Similarity::Embedding(backend) => {
            let claim = backend.embed(claim_text)?;
            let texts: Vec<&str> = doc.sentences.iter().map(|s| s.text.as_str()).collect();
            let vectors = backend.embed_batch(&texts)?;
            vectors.iter().map(|v| cosine(&claim, v).clamp(0.0, 1.0)).collect()
        }
    };
    let mut ranked: Vec<HighlightedSentence> = doc
        .sentences
        .iter()
        .zip(scores)
        .enumerate()
        .map(|(i, (s, score))| HighlightedSentence {
            sentence_index: i,
            text: s.text.clone(),
            score,
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.sentence_index.cmp(&b.sentence_index))
    });
    ranked.truncate(k);
    Ok(EvidenceHighlight {
        doc_id: doc.doc_id.clone(),
        sentences: ranked,
    })
}

/// A claim that matches a sentence on wording but not on its numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericDivergence {
    pub doc_id: String,
    pub sentence_index: usize,
    pub claim_numbers: Vec<String>,
    pub sentence_numbers: Vec<String>,
}

/// Flags the best-covering sentence when its non-numeric coverage of the
/// claim reaches `threshold` but the number tokens differ.
pub fn numeric_divergence(
    claim_text: &str,
    doc: &Document,
    threshold: f64,
    analyzer: &Analyzer,
) -> Option<NumericDivergence> {
    let claim_numbers = number_tokens(claim_text);
    if claim_numbers.is_empty() {
        return None;
    }
    let is_number = |t: &String| t.chars().all(|c| c.is_ascii_digit());
    let claim_words: HashSet<String> = analyzer
        .term_set(claim_text)
        .into_iter()
        .filter(|t| !is_number(t))
        .collect();
    if claim_words.is_empty() {
        return None;
    }
    let (index, coverage) = doc
        .sentences
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let words = analyzer.term_set(&s.text);
            (
                i,
                claim_words.intersection(&words).count() as f64 / claim_words.len() as f64,
            )
        })
        .fold(
            (0, f64::NEG_INFINITY),
            |best, cur| if cur.1 > best.1 { cur } else { best },
        );
    if coverage < threshold {
        return None;
    }
    let sentence_numbers = number_tokens(&doc.sentences[index].text);
    let claim_set: HashSet<&String> = claim_numbers.iter().collect();
    let sentence_set: HashSet<&String> = sentence_numbers.iter().collect();
    if claim_set.is_subset(&sentence_set) {
        return None;
    }
    Some(NumericDivergence {
        doc_id: doc.doc_id.clone(),
        sentence_index: index,
        claim_numbers,
        sentence_numbers,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::HashedTrigramEmbedder;

    const ABSTRACT: &str = "Aspirin reduces cardiovascular risk in adults. \
        Bleeding risk increases with aspirin dose. \
        Statins lower cholesterol. \
        Aspirin and statins were combined in elderly adults.";

    fn doc() -> Document {
        Document::new("42", "Aspirin review", ABSTRACT).unwrap()
    }

    #[test]
    fn identical_sentence_ranks_first_with_score_one() {
        let d = doc();
        let a = Analyzer::default();
        let h = highlight_evidence("Statins lower cholesterol.", &d, 3, Similarity::Jaccard, &a).unwrap();
        assert_eq!(h.sentences[0].sentence_index, 2);
        assert_eq!(h.sentences[0].score, 1.0);
        let e = HashedTrigramEmbedder::new(64);
        let h = highlight_evidence("Statins lower cholesterol.", &d, 3, Similarity::Embedding(&e), &a).unwrap();
        assert_eq!(h.sentences[0].sentence_index, 2);
        assert!((h.sentences[0].score - 1.0).abs() < 1e-9);
    }

    #[test]
    fn k_clamps_to_sentence_count() {
        let d = doc();
        let h = highlight_evidence("aspirin", &d, 10, Similarity::Jaccard, &Analyzer::default()).unwrap();
        assert_eq!(h.sentences.len(), 4);
    }

    // Claim content words C = {aspirin, reduces, risk, adults}.
    // s0 {aspirin, reduces, cardiovascular, risk, adults}: 4/5 = 0.8
    // s1 {bleeding, risk, increases, aspirin, dose}:       2/7 ≈ 0.2857
    // s2 {statins, lower, cholesterol}:                     0/7 = 0
    // s3 {aspirin, statins, combined, elderly, adults}:    2/7 ≈ 0.2857
    // Order: s0, then s1 and s3 tied (position breaks it), then s2.
    #[test]
    fn ordering_matches_hand_computed_jaccard() {
        let d = doc();
        let h = highlight_evidence(
            "Aspirin reduces risk in adults.",
            &d,
            4,
            Similarity::Jaccard,
            &Analyzer::default(),
        )
        .unwrap();
        let order: Vec<usize> = h.sentences.iter().map(|s| s.sentence_index).collect();
        assert_eq!(order, vec![0, 1, 3, 2]);
        let expected = [0.8, 2.0 / 7.0, 2.0 / 7.0, 0.0];
        for (s, e) in h.sentences.iter().zip(expected) {
            assert!((s.score - e).abs() < 1e-12);
        }
    }

    #[test]
    fn numeric_mismatch_is_flagged() {
        let d = Document::new(
            "9",
            "T",
            "Treatment reduced mortality by 25% in 300 patients. Other text here.",
        )
        .unwrap();
        let a = Analyzer::default();
        let w = numeric_divergence("Treatment reduced mortality by 35% in 300 patients.", &d, 0.6, &a).unwrap();
        assert_eq!(w.sentence_index, 0);
        assert_eq!(w.claim_numbers, vec!["35", "300"]);
        assert!(numeric_divergence("Treatment reduced mortality by 25% in 300 patients.", &d, 0.6, &a).is_none());
        assert!(numeric_divergence("Unrelated claim about 7 mice.", &d, 0.6, &a).is_none());
    }
}
