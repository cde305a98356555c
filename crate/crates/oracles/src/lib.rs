//! Reference implementations written from the textbook definitions, and
//! seeded generators for the fuzzed fixtures. Nothing here depends on the
//! engine crates, so the two sides cannot share a bug.
//!
//! Class indices follow NO_EVIDENCE = 0, SUPPORT = 1, CONTRADICT = 2.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const NO_EVIDENCE: usize = 0;
pub const SUPPORT: usize = 1;
pub const CONTRADICT: usize = 2;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// BM25 of every document for `query`, recomputed from scratch:
///
/// score(D, Q) = Σ_{q ∈ Q} idf(q) · f(q, D)·(k1 + 1) / (f(q, D) + k1·(1 − b + b·|D|/avgdl))
/// idf(q) = ln(1 + (N − n(q) + 0.5) / (n(q) + 0.5))
///
/// Query terms are summed as given, repeats included.
pub fn bm25_scores(docs: &[Vec<String>], query: &[String], k1: f64, b: f64) -> Vec<f64> {
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(|d| d.len() as f64).sum::<f64>() / n;
    docs.iter()
        .map(|doc| {
            let mut score = 0.0;
            for q in query {
                let f = doc.iter().filter(|t| *t == q).count() as f64;
                if f == 0.0 {
                    continue;
                }
                let nq = docs.iter().filter(|d| d.contains(q)).count() as f64;
                let idf = (1.0 + (n - nq + 0.5) / (nq + 0.5)).ln();
                let dl = doc.len() as f64;
                score += idf * (f * (k1 + 1.0)) / (f + k1 * (1.0 - b + b * dl / avgdl));
            }
            score
        })
        .collect()
}

/// Per-class (precision, recall, F1) and weighted averages, counted straight
/// from the label lists.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteMetrics {
    pub per_class: [(f64, f64, f64); 3],
    pub weighted: (f64, f64, f64),
    pub accuracy: f64,
}

pub fn brute_metrics(gold: &[usize], pred: &[usize]) -> BruteMetrics {
    assert_eq!(gold.len(), pred.len());
    let total = gold.len();
    let mut per_class = [(0.0, 0.0, 0.0); 3];
    let mut shares = [0.0; 3];
    for c in 0..3 {
        let tp = gold.iter().zip(pred).filter(|(g, p)| **g == c && **p == c).count();
        let predicted = pred.iter().filter(|p| **p == c).count();
        let actual = gold.iter().filter(|g| **g == c).count();
        let precision = if predicted == 0 {
            0.0
        } else {
            tp as f64 / predicted as f64
        };
        let recall = if actual == 0 { 0.0 } else { tp as f64 / actual as f64 };
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        per_class[c] = (precision, recall, f1);
        shares[c] = actual as f64 / total as f64;
    }
    let mut weighted = (0.0, 0.0, 0.0);
    for c in 0..3 {
        weighted.0 += shares[c] * per_class[c].0;
        weighted.1 += shares[c] * per_class[c].1;
        weighted.2 += shares[c] * per_class[c].2;
    }
    let correct = gold.iter().zip(pred).filter(|(g, p)| g == p).count();
    BruteMetrics {
        per_class,
        weighted,
        accuracy: correct as f64 / total as f64,
    }
}

/// Expands a confusion matrix (rows gold, columns predicted) into label lists.
pub fn expand_confusion(counts: &[[u64; 3]; 3]) -> (Vec<usize>, Vec<usize>) {
    let mut gold = Vec::new();
    let mut pred = Vec::new();
    for (g, row) in counts.iter().enumerate() {
        for (p, &n) in row.iter().enumerate() {
            for _ in 0..n {
                gold.push(g);
                pred.push(p);
            }
        }
    }
    (gold, pred)
}

/// The claim status rule evaluated literally, as a string.
pub fn brute_status(verdicts: &[usize], unreferenced: bool) -> Option<&'static str> {
    if unreferenced {
        return Some("UNREFERENCED");
    }
    if verdicts.is_empty() {
        return None;
    }
    let mut any_contradict = false;
    let mut any_support = false;
    for &v in verdicts {
        match v {
            CONTRADICT => any_contradict = true,
            SUPPORT => any_support = true,
            _ => {}
        }
    }
    Some(if any_contradict {
        "FLAGGED_CONTRADICTION"
    } else if any_support {
        "VERIFIED"
    } else {
        "FLAGGED_NO_EVIDENCE"
    })
}

/// Every length-`n` sequence over three classes.
pub fn all_verdict_combinations(n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..3).map(move |c| {
                    let mut v = prefix.clone();
                    v.push(c);
                    v
                })
            })
            .collect();
    }
    out
}

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "zen", "bra", "cor", "dex", "fil", "gam", "hul", "jor",
];

/// A pronounceable non-word; never an English stopword.
pub fn word(rng: &mut impl Rng) -> String {
    let n = rng.random_range(2..=3);
    (0..n).map(|_| *SYLLABLES.choose(rng).expect("non-empty")).collect()
}

pub fn vocabulary(rng: &mut impl Rng, size: usize) -> Vec<String> {
    let mut v: Vec<String> = Vec::with_capacity(size);
    while v.len() < size {
        let w = word(rng);
        if !v.contains(&w) {
            v.push(w);
        }
    }
    v
}

/// A random corpus of `(doc_id, title, abstract)` records over `vocab`.
/// Ids are distinct digit strings.
pub fn random_corpus(rng: &mut impl Rng, docs: usize, vocab: &[String]) -> Vec<(String, String, String)> {
    (0..docs)
        .map(|i| {
            let title_len = rng.random_range(1..=4);
            let title: Vec<&str> = (0..title_len).map(|_| vocab.choose(rng).unwrap().as_str()).collect();
            let sentences = rng.random_range(1..=4);
            let body: Vec<String> = (0..sentences)
                .map(|_| {
                    let len = rng.random_range(3..=12);
                    let words: Vec<&str> = (0..len).map(|_| vocab.choose(rng).unwrap().as_str()).collect();
                    let mut s = words.join(" ");
                    s[..1].make_ascii_uppercase();
                    s.push('.');
                    s
                })
                .collect();
            ((1000 + i * 7).to_string(), title.join(" "), body.join(" "))
        })
        .collect()
}

/// A citation marker placed in a fuzzed answer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlacedRef {
    /// `PUBMED:<id>`
    Pubmed(String),
    /// `[n]`, 1-based
    Bracket(usize),
}

/// A fuzzed answer and every reference its markers carry.
#[derive(Debug, Clone)]
pub struct FuzzedAnswer {
    pub text: String,
    pub refs: Vec<PlacedRef>,
}

fn pick_id(rng: &mut impl Rng, context_ids: &[String]) -> String {
    if !context_ids.is_empty() && rng.random_bool(0.8) {
        context_ids.choose(rng).unwrap().clone()
    } else {
        rng.random_range(1..999_999u32).to_string()
    }
}

fn marker(rng: &mut impl Rng, context_ids: &[String], refs: &mut Vec<PlacedRef>) -> String {
    if rng.random_bool(0.5) {
        let n = rng.random_range(1..=3);
        let ids: Vec<String> = (0..n).map(|_| pick_id(rng, context_ids)).collect();
        refs.extend(ids.iter().cloned().map(PlacedRef::Pubmed));
        let sep = [", ", ",", "; ", ", PUBMED:", " "].choose(rng).unwrap();
        let head = ["PUBMED:", "PUBMED: ", "pubmed:"].choose(rng).unwrap();
        format!("({head}{})", ids.join(sep))
    } else {
        let n = rng.random_range(1..=2);
        let nums: Vec<usize> = (0..n).map(|_| rng.random_range(1..=context_ids.len() + 2)).collect();
        refs.extend(nums.iter().copied().map(PlacedRef::Bracket));
        let inner: Vec<String> = nums.iter().map(usize::to_string).collect();
        format!("[{}]", inner.join(", "))
    }
}

/// An answer of 0 to 6 sentences with markers mid-sentence, before or after
/// the final period, as standalone pieces, and across line breaks.
pub fn random_answer(rng: &mut impl Rng, context_ids: &[String], vocab: &[String]) -> FuzzedAnswer {
    let mut refs = Vec::new();
    let mut text = String::new();
    if rng.random_bool(0.1) {
        text.push_str(&marker(rng, context_ids, &mut refs));
        text.push(' ');
    }
    let sentences = rng.random_range(0..=6);
    for i in 0..sentences {
        if i > 0 {
            text.push_str(["  ", " ", "\n", "\n\n", " \n"].choose(rng).unwrap());
        }
        let len = rng.random_range(1..=8);
        for j in 0..len {
            if j > 0 {
                text.push(' ');
            }
            let w = vocab.choose(rng).unwrap();
            if j == 0 {
                let mut c = w.clone();
                c[..1].make_ascii_uppercase();
                text.push_str(&c);
            } else if rng.random_bool(0.1) {
                text.push_str(&rng.random_range(0..500).to_string());
            } else {
                text.push_str(w);
            }
            if j + 1 < len && rng.random_bool(0.1) {
                text.push(' ');
                text.push_str(&marker(rng, context_ids, &mut refs));
            }
        }
        let end = *[".", "!", "?", "."].choose(rng).unwrap();
        match rng.random_range(0..5) {
            0 | 1 => {
                text.push(' ');
                text.push_str(&marker(rng, context_ids, &mut refs));
                text.push_str(end);
            }
            2 => {
                text.push_str(end);
                text.push(' ');
                text.push_str(&marker(rng, context_ids, &mut refs));
            }
            3 => {
                text.push_str(end);
                text.push_str(&marker(rng, context_ids, &mut refs));
                text.push('.');
            }
            _ => text.push_str(end),
        }
    }
    if rng.random_bool(0.1) {
        text.push_str(["\n", " ", "\t"].choose(rng).unwrap());
    }
    FuzzedAnswer { text, refs }
}
