//! SciFact-style claim verification data: loading, cleaning, splitting and
//! backend evaluation.
//!
//! Claims file, one object per line:
//!
//! ```text
//! {"id": 13, "claim": "...", "cited_doc_ids": [4983, 12], "evidence": {"4983": [{"sentences": [0], "label": "SUPPORT"}]}}
//! ```
//!
//! Every cited document becomes one pair. Its label comes from the evidence
//! entries for that document, or NO_EVIDENCE when there are none.

mod metrics;

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::backend::{BackendError, RetryPolicy};
use crate::corpus::{load_corpus, Corpus, CorpusError, RecordError};
use crate::par::{self, Exec};
use crate::verification::{verify_pair, Label, NliBackend, VerificationError};

pub use metrics::{
    compute_metrics, Averages, ClassMetrics, ConfusionMatrix, MetricsError, MetricsReport, ReferenceResult,
    REFERENCE_CLASS_DISTRIBUTION, REFERENCE_DEBERTA, REFERENCE_GPT4_ZERO_SHOT, REFERENCE_XLM_ROBERTA,
};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledPair {
    pub claim_id: String,
    #[serde(rename = "claim")]
    pub claim_text: String,
    pub doc_id: String,
    #[serde(rename = "label")]
    pub gold_label: Label,
}

#[derive(Debug, Error)]
pub enum ScifactError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("no labeled pairs")]
    NoPairs,
    #[error("fractions must be in [0, 1] and sum to at most 1 (validation {validation}, test {test})")]
    InvalidSplit { validation: f64, test: f64 },
    #[error("pair {index} cites doc {doc_id}, which is not in the corpus")]
    UnknownDocument { index: usize, doc_id: String },
    #[error("evaluation stopped after {completed} of {total} pairs: {source}")]
    Partial {
        completed: usize,
        total: usize,
        #[source]
        source: BackendError,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// A claim with both supporting and refuting evidence for one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelConflict {
    pub claim_id: String,
    pub doc_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScifactReport {
    pub claims_read: usize,
    pub pairs: usize,
    /// Rejected claim lines. A claim citing a document missing from the
    /// corpus is rejected whole.
    pub errors: Vec<RecordError>,
    pub conflicts: Vec<LabelConflict>,
}

fn id_string(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.is_empty() => Some(s.clone()),
        Value::Number(n) if n.is_u64() => Some(n.to_string()),
        _ => None,
    }
}

#[derive(Deserialize)]
struct RawClaim {
    id: Value,
    claim: String,
    #[serde(default)]
    cited_doc_ids: Vec<Value>,
    #[serde(default)]
    evidence: HashMap<String, Vec<RawEvidence>>,
}

#[derive(Deserialize)]
struct RawEvidence {
    label: String,
}

/// Pairs of one claim line, in citation order, then evidence-only documents
/// in id order.
fn claim_pairs(line: &str, corpus: &Corpus, report: &mut ScifactReport) -> Result<Vec<LabeledPair>, String> {
    let raw: RawClaim = serde_json::from_str(line).map_err(|e| format!("malformed claim: {e}"))?;
    let claim_id = id_string(&raw.id).ok_or_else(|| format!("claim id must be a string or integer, got {}", raw.id))?;
    if raw.claim.trim().is_empty() {
        return Err(format!("claim {claim_id} has empty text"));
    }
    let mut docs: Vec<String> = Vec::new();
    for v in &raw.cited_doc_ids {
        let id = id_string(v).ok_or_else(|| format!("claim {claim_id}: bad cited doc id {v}"))?;
        if !docs.contains(&id) {
            docs.push(id);
        }
    }
    let extra: BTreeSet<&String> = raw.evidence.keys().filter(|k| !docs.contains(k)).collect();
    docs.extend(extra.into_iter().cloned());
    if let Some(missing) = docs.iter().find(|d| corpus.get(d).is_none()) {
        return Err(format!(
            "claim {claim_id} cites doc {missing}, which is not in the corpus"
        ));
    }

    let mut pairs = Vec::new();
    for doc_id in docs {
        let mut labels = Vec::new();
        for ev in raw.evidence.get(&doc_id).map(Vec::as_slice).unwrap_or_default() {
            let label: Label = ev.label.parse().map_err(|e| format!("claim {claim_id}: {e}"))?;
            if !labels.contains(&label) {
                labels.push(label);
            }
        }
        if labels.is_empty() {
            labels.push(Label::NoEvidence);
        }
        if labels.contains(&Label::Support) && labels.contains(&Label::Contradict) {
            report.conflicts.push(LabelConflict {
                claim_id: claim_id.clone(),
                doc_id: doc_id.clone(),
            });
        }
        for gold_label in labels {
            pairs.push(LabeledPair {
                claim_id: claim_id.clone(),
                claim_text: raw.claim.clone(),
                doc_id: doc_id.clone(),
                gold_label,
            });
        }
    }
    Ok(pairs)
}

/// Loads raw pairs from a claims file and the corpus they cite.
pub fn load_scifact(
    claims_path: impl AsRef<Path>,
    corpus_path: impl AsRef<Path>,
) -> Result<(Vec<LabeledPair>, Corpus, ScifactReport), ScifactError> {
    let (corpus, _) = load_corpus(corpus_path)?;
    let (pairs, report) = load_claims(claims_path, &corpus)?;
    Ok((pairs, corpus, report))
}

/// Like [`load_scifact`] against an already loaded corpus.
pub fn load_claims(
    claims_path: impl AsRef<Path>,
    corpus: &Corpus,
) -> Result<(Vec<LabeledPair>, ScifactReport), ScifactError> {
    let path = claims_path.as_ref();
    let io_err = |source| ScifactError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut report = ScifactReport::default();
    let mut pairs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        report.claims_read += 1;
        match claim_pairs(&line, corpus, &mut report) {
            Ok(p) => pairs.extend(p),
            Err(message) => report.errors.push(RecordError { line: idx + 1, message }),
        }
    }
    report.pairs = pairs.len();
    Ok((pairs, report))
}

/// Reads pairs in the flat export format, one [`LabeledPair`] object per
/// line. Extra fields such as `premise` are ignored.
pub fn load_pairs(path: impl AsRef<Path>) -> Result<(Vec<LabeledPair>, Vec<RecordError>), ScifactError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ScifactError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut pairs = Vec::new();
    let mut errors = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<LabeledPair>(line) {
            Ok(p) => pairs.push(p),
            Err(e) => errors.push(RecordError {
                line: idx + 1,
                message: e.to_string(),
            }),
        }
    }
    Ok((pairs, errors))
}

/// Collapses repeated (claim text, doc, label) triples, keeping the first
/// occurrence and the input order.
pub fn clean_dataset(pairs: &[LabeledPair]) -> Vec<LabeledPair> {
    let mut seen: HashSet<(&str, &str, Label)> = HashSet::new();
    pairs
        .iter()
        .filter(|p| seen.insert((p.claim_text.as_str(), p.doc_id.as_str(), p.gold_label)))
        .cloned()
        .collect()
}

/// Class shares in [`Label::ALL`] order.
pub fn class_distribution(pairs: &[LabeledPair]) -> Result<[f64; 3], ScifactError> {
    if pairs.is_empty() {
        return Err(ScifactError::NoPairs);
    }
    let mut counts = [0usize; 3];
    for p in pairs {
        counts[p.gold_label.index()] += 1;
    }
    let n = pairs.len() as f64;
    Ok(counts.map(|c| c as f64 / n))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Split {
    pub train: Vec<LabeledPair>,
    pub validation: Vec<LabeledPair>,
    pub test: Vec<LabeledPair>,
}

/// Seeded split stratified by gold label. Each class is shuffled and cut
/// into `validation` and `test` fractions (rounded down); the rest is train.
/// Each part keeps the input order.
pub fn stratified_split(pairs: &[LabeledPair], seed: u64, validation: f64, test: f64) -> Result<Split, ScifactError> {
    let valid = |f: f64| (0.0..=1.0).contains(&f);
    if !valid(validation) || !valid(test) || validation + test > 1.0 {
        return Err(ScifactError::InvalidSplit { validation, test });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut part = vec![0u8; pairs.len()];
    for label in Label::ALL {
        let mut idx: Vec<usize> = (0..pairs.len()).filter(|&i| pairs[i].gold_label == label).collect();
        idx.shuffle(&mut rng);
        let n_val = (idx.len() as f64 * validation).floor() as usize;
        let n_test = (idx.len() as f64 * test).floor() as usize;
        for &i in &idx[..n_val] {
            part[i] = 1;
        }
        for &i in &idx[n_val..n_val + n_test] {
            part[i] = 2;
        }
    }
    let mut split = Split::default();
    for (p, which) in pairs.iter().zip(part) {
        match which {
            1 => split.validation.push(p.clone()),
            2 => split.test.push(p.clone()),
            _ => split.train.push(p.clone()),
        }
    }
    Ok(split)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    /// Index-aligned with the input pairs.
    pub predictions: Vec<Label>,
}

/// Classifies every pair and scores the predictions against the gold labels.
pub fn evaluate_backend(
    backend: &dyn NliBackend,
    pairs: &[LabeledPair],
    corpus: &Corpus,
    exec: Exec,
    retry: RetryPolicy,
) -> Result<Evaluation, ScifactError> {
    if pairs.is_empty() {
        return Err(ScifactError::NoPairs);
    }
    let mut docs = Vec::with_capacity(pairs.len());
    for (index, p) in pairs.iter().enumerate() {
        let doc = corpus.get(&p.doc_id).ok_or_else(|| ScifactError::UnknownDocument {
            index,
            doc_id: p.doc_id.clone(),
        })?;
        docs.push((index, doc));
    }
    let predictions = par::try_map(exec, &docs, |&(index, doc)| {
        verify_pair(backend, index, &pairs[index].claim_text, doc, retry).map(|v| v.label)
    })
    .map_err(|(e, completed)| {
        let source = match e {
            VerificationError::Backend { source, .. } => source,
            other => BackendError::rejected(backend.name(), other.to_string()),
        };
        ScifactError::Partial {
            completed,
            total: pairs.len(),
            source,
        }
    })?;
    let gold: Vec<Label> = pairs.iter().map(|p| p.gold_label).collect();
    let confusion = ConfusionMatrix::from_labels(&gold, &predictions)?;
    Ok(Evaluation {
        report: compute_metrics(&confusion)?,
        predictions,
    })
}
