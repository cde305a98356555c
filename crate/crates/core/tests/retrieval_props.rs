use std::sync::Arc;

use citeqa_core::corpus::{Corpus, Document};
use citeqa_core::par::Exec;
use citeqa_core::retrieval::persist::{read_lexical, read_vectors, write_lexical, write_vectors};
use citeqa_core::retrieval::{
    embed_corpus, fuse, Bm25Params, EmbeddingBackend, HashedTrigramEmbedder, HybridRetriever, LexicalIndex, ScoredHit,
    VectorIndex,
};
use citeqa_core::text::Analyzer;
use citeqa_oracles as oracles;
use proptest::prelude::*;

fn build_corpus(seed: u64, docs: usize) -> (Corpus, Vec<String>) {
    let mut rng = oracles::rng(seed);
    let vocab = oracles::vocabulary(&mut rng, 40);
    let records = oracles::random_corpus(&mut rng, docs, &vocab);
    let corpus = Corpus::from_documents(
        records
            .into_iter()
            .map(|(id, t, a)| Document::new(id, t, a).unwrap())
            .collect(),
    )
    .unwrap();
    (corpus, vocab)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bm25_matches_textbook_oracle(seed in any::<u64>(), docs in 1usize..60, qlen in 1usize..5, picks in prop::collection::vec(0usize..40, 5)) {
        let (corpus, vocab) = build_corpus(seed, docs);
        let analyzer = Analyzer::default();
        let index = LexicalIndex::build(&corpus, &analyzer).unwrap();
        let tokenized: Vec<Vec<String>> = corpus.iter().map(|d| analyzer.terms(&d.full_text())).collect();
        let query: Vec<String> = picks[..qlen].iter().map(|&i| vocab[i].clone()).collect();
        let p = Bm25Params::default();
        let expected = oracles::bm25_scores(&tokenized, &query, p.k1, p.b);

        for (pos, e) in expected.iter().enumerate() {
            prop_assert!((index.score_document(&query, pos) - e).abs() < 1e-6);
        }
        let hits = index.search(&query, corpus.len()).unwrap();
        let matching = expected.iter().filter(|s| **s > 0.0).count();
        prop_assert_eq!(hits.len(), matching);
        for h in &hits {
            let pos = corpus.position(&h.doc_id).unwrap();
            prop_assert!((h.lexical_score - expected[pos]).abs() < 1e-6);
        }
        for w in hits.windows(2) {
            prop_assert!(w[0].lexical_score > w[1].lexical_score
                || (w[0].lexical_score == w[1].lexical_score && w[0].doc_id < w[1].doc_id));
        }
    }

    #[test]
    fn sequential_and_parallel_index_builds_agree(seed in any::<u64>(), docs in 1usize..40) {
        let (corpus, vocab) = build_corpus(seed, docs);
        let analyzer = Analyzer::default();
        let a = LexicalIndex::build_with(&corpus, &analyzer, Bm25Params::default(), Exec::Sequential).unwrap();
        let b = LexicalIndex::build_with(&corpus, &analyzer, Bm25Params::default(), Exec::bounded(4)).unwrap();
        let q = vec![vocab[0].clone(), vocab[1].clone()];
        prop_assert_eq!(a.search(&q, 10).ok(), b.search(&q, 10).ok());
        prop_assert_eq!(a.term_count(), b.term_count());
    }
}

fn hits(scores: &[(String, f64)], semantic: bool) -> Vec<ScoredHit> {
    scores
        .iter()
        .map(|(id, s)| {
            if semantic {
                ScoredHit::semantic(id.clone(), *s)
            } else {
                ScoredHit::lexical(id.clone(), *s)
            }
        })
        .collect()
}

fn arm(max_len: usize) -> impl Strategy<Value = Vec<(String, f64)>> {
    prop::collection::btree_map(0u32..30, -50i32..50, 0..max_len)
        .prop_map(|m| m.into_iter().map(|(id, s)| (id.to_string(), f64::from(s))).collect())
}

fn ids(hits: &[ScoredHit]) -> Vec<String> {
    hits.iter().map(|h| h.doc_id.clone()).collect()
}

/// Single-arm ranking: score descending, doc_id ascending.
fn ranked(scores: &[(String, f64)]) -> Vec<String> {
    let mut v = scores.to_vec();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter().map(|(id, _)| id).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    // Integer scores with a power-of-two scale keep every normalized value
    // exact, so the fused ranking must be identical, not merely close.
    #[test]
    fn fusion_rank_invariant_under_exact_affine_maps(lex in arm(20), sem in arm(20), shift in -100i32..100, exp in -4i32..6, w in 0.0f64..=1.0, which in any::<bool>()) {
        let a = 2f64.powi(exp);
        let c = f64::from(shift);
        let map = |v: &[(String, f64)]| v.iter().map(|(id, s)| (id.clone(), a * s + c)).collect::<Vec<_>>();
        let (lex2, sem2) = if which { (map(&lex), sem.clone()) } else { (lex.clone(), map(&sem)) };
        let before = fuse(&hits(&lex, false), &hits(&sem, true), w, 50);
        let after = fuse(&hits(&lex2, false), &hits(&sem2, true), w, 50);
        prop_assert_eq!(ids(&before), ids(&after));
        for (x, y) in before.iter().zip(&after) {
            prop_assert_eq!(x.fused_score, y.fused_score);
        }
    }

    // Arbitrary real maps move normalized scores by rounding error only; any
    // pair separated by more than that keeps its order.
    #[test]
    fn fusion_order_survives_real_affine_maps(lex in arm(20), sem in arm(20), a in 0.001f64..1000.0, c in -1e3f64..1e3, w in 0.0f64..=1.0) {
        let map = |v: &[(String, f64)]| v.iter().map(|(id, s)| (id.clone(), a * s + c)).collect::<Vec<_>>();
        let before = fuse(&hits(&lex, false), &hits(&sem, true), w, 50);
        let after = fuse(&hits(&map(&lex), false), &hits(&map(&sem), true), w, 50);
        prop_assert_eq!(before.len(), after.len());
        let pos: std::collections::HashMap<_, _> = after.iter().enumerate().map(|(i, h)| (h.doc_id.clone(), (i, h.fused_score))).collect();
        for (i, x) in before.iter().enumerate() {
            let (_, fy) = pos[&x.doc_id];
            prop_assert!((x.fused_score - fy).abs() < 1e-9);
            for y in &before[i + 1..] {
                if x.fused_score - y.fused_score > 1e-9 {
                    prop_assert!(pos[&x.doc_id].0 < pos[&y.doc_id].0);
                }
            }
        }
    }

    #[test]
    fn weight_one_and_zero_reproduce_single_arms(lex in arm(20), sem in arm(20)) {
        let l = hits(&lex, false);
        let s = hits(&sem, true);
        prop_assert_eq!(ids(&fuse(&l, &s, 1.0, 50)), ranked(&lex));
        prop_assert_eq!(ids(&fuse(&l, &s, 0.0, 50)), ranked(&sem));
    }

    #[test]
    fn fused_scores_bounded_and_sorted(lex in arm(20), sem in arm(20), w in 0.0f64..=1.0, k in 1usize..40) {
        let out = fuse(&hits(&lex, false), &hits(&sem, true), w, k);
        prop_assert!(out.len() <= k);
        for h in &out {
            prop_assert!((0.0..=1.0).contains(&h.fused_score));
        }
        for p in out.windows(2) {
            prop_assert!(p[0].fused_score > p[1].fused_score
                || (p[0].fused_score == p[1].fused_score && p[0].doc_id < p[1].doc_id));
        }
    }

    #[test]
    fn exhaustive_vector_search_matches_brute_force(vectors in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 8), 1..40), q in prop::collection::vec(-1.0f64..1.0, 8), k in 1usize..10) {
        prop_assume!(q.iter().any(|x| x.abs() > 1e-3));
        let mut index = VectorIndex::new(8).unwrap();
        let mut kept = Vec::new();
        for (i, v) in vectors.iter().enumerate() {
            if index.push(i.to_string(), v).is_ok() {
                kept.push((i.to_string(), v.clone()));
            }
        }
        prop_assume!(!kept.is_empty());
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut expected: Vec<(String, f64)> = kept
            .iter()
            .map(|(id, v)| (id.clone(), v.iter().zip(&q).map(|(a, b)| a * b).sum::<f64>() / (norm(v) * norm(&q))))
            .collect();
        expected.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        let seq = index.search_with(&q, k, Exec::Sequential).unwrap();
        let par = index.search_with(&q, k, Exec::bounded(3)).unwrap();
        prop_assert_eq!(&seq, &par);
        for (h, (_, s)) in seq.iter().zip(&expected) {
            prop_assert!((h.semantic_score - s).abs() < 1e-9);
        }
    }
}

#[test]
fn index_files_roundtrip() {
    let (corpus, vocab) = build_corpus(11, 30);
    let analyzer = Analyzer::default();
    let lexical = LexicalIndex::build(&corpus, &analyzer).unwrap();
    let embedder = HashedTrigramEmbedder::new(64);
    let vectors = embed_corpus(&corpus, &embedder).unwrap();

    let mut buf = Vec::new();
    write_lexical(&lexical, &mut buf).unwrap();
    let lexical2 = read_lexical(&buf[..]).unwrap();
    let mut buf = Vec::new();
    write_vectors(&vectors, &mut buf).unwrap();
    let vectors2 = read_vectors(&buf[..]).unwrap();

    let q = [vocab[3].clone(), vocab[7].clone()];
    assert_eq!(lexical.search(&q, 10).unwrap(), lexical2.search(&q, 10).unwrap());
    let qv = embedder.embed(&q.join(" ")).unwrap();
    assert_eq!(vectors.search(&qv, 10).unwrap(), vectors2.search(&qv, 10).unwrap());
}

#[test]
fn hybrid_with_weight_one_is_lexical() {
    let (corpus, vocab) = build_corpus(5, 40);
    let analyzer = Analyzer::default();
    let lexical = LexicalIndex::build(&corpus, &analyzer).unwrap();
    let embedder = Arc::new(HashedTrigramEmbedder::new(64));
    let vectors = embed_corpus(&corpus, embedder.as_ref()).unwrap();
    let retriever = HybridRetriever::new(analyzer.clone(), lexical.clone())
        .with_semantic(vectors, embedder)
        .unwrap();
    let question = format!("{} {}", vocab[2], vocab[9]);
    let terms = analyzer.terms(&question);
    let hybrid = retriever.search_weighted(&question, 10, 1.0).unwrap();
    assert_eq!(ids(&hybrid), ids(&lexical.search(&terms, 10).unwrap()));
}
