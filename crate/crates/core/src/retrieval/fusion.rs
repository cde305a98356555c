//! Min-max score fusion of a lexical and a semantic candidate list.

use std::collections::{BTreeMap, HashMap};

use super::{sort_hits, ScoredHit};

/// Scales `scores` into [0, 1]. A degenerate range (max = min, including a
/// single candidate) maps every score to 0.
pub fn min_max_normalize(scores: &[f64]) -> Vec<f64> {
    let Some(min) = scores.iter().copied().reduce(f64::min) else {
        return Vec::new();
    };
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if range <= 0.0 || !range.is_finite() {
        return vec![0.0; scores.len()];
    }
    scores.iter().map(|s| ((s - min) / range).clamp(0.0, 1.0)).collect()
}

/// Fuses two candidate pools with `fused = w · lex_norm + (1 − w) · sem_norm`.
///
/// Each arm is normalized over its own pool; a document missing from an arm
/// gets 0 there. An arm with zero weight contributes no candidates of its
/// own, so w = 1 and w = 0 reproduce the single-arm rankings. The result holds the top `k` of the union, ordered by fused
/// score descending and doc_id ascending.
pub fn fuse(lexical: &[ScoredHit], semantic: &[ScoredHit], lexical_weight: f64, k: usize) -> Vec<ScoredHit> {
    let w = lexical_weight.clamp(0.0, 1.0);
    let lex_norm = min_max_normalize(&lexical.iter().map(|h| h.lexical_score).collect::<Vec<_>>());
    let sem_norm = min_max_normalize(&semantic.iter().map(|h| h.semantic_score).collect::<Vec<_>>());

    #[derive(Default)]
    struct Acc {
        lex_raw: f64,
        sem_raw: f64,
        lex: f64,
        sem: f64,
    }
    // BTreeMap keeps construction independent of hash order.
    let mut pool: BTreeMap<&str, Acc> = BTreeMap::new();
    for (h, n) in lexical.iter().zip(&lex_norm) {
        let acc = pool.entry(&h.doc_id).or_default();
        acc.lex_raw = h.lexical_score;
        acc.lex = *n;
    }
    let lexical_only = w == 1.0;
    for (h, n) in semantic.iter().zip(&sem_norm) {
        if lexical_only && !pool.contains_key(h.doc_id.as_str()) {
            continue;
        }
        let acc = pool.entry(&h.doc_id).or_default();
        acc.sem_raw = h.semantic_score;
        acc.sem = *n;
    }
    if w == 0.0 {
        let in_sem: std::collections::HashSet<&str> = semantic.iter().map(|h| h.doc_id.as_str()).collect();
        pool.retain(|d, _| in_sem.contains(d));
    }
    let mut hits: Vec<ScoredHit> = pool
        .into_iter()
        .map(|(doc_id, a)| ScoredHit {
            doc_id: doc_id.to_string(),
            lexical_score: a.lex_raw,
            semantic_score: a.sem_raw,
            fused_score: (w * a.lex + (1.0 - w) * a.sem).clamp(0.0, 1.0),
        })
        .collect();
    sort_hits(&mut hits, |h| h.fused_score);
    hits.truncate(k);
    hits
}

/// Fused scores by doc id, for callers that need lookups.
pub fn fused_by_doc(hits: &[ScoredHit]) -> HashMap<&str, f64> {
    hits.iter().map(|h| (h.doc_id.as_str(), h.fused_score)).collect()
}
