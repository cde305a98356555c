//! Table-driven verdicts for golden tests.
//!
//! A fixture file has one JSON object per line:
//!
//! ```text
//! {"claim": "Aspirin helps.", "doc_id": "10", "label": "SUPPORT"}
//! {"doc_id": "20", "label": "CONTRADICT"}
//! {"label": "NO_EVIDENCE"}
//! ```
//!
//! A missing `claim` or `doc_id` matches anything. Lookups try
//! (claim, doc), then claim only, then doc only, then the catch-all row.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;

use super::{Label, NliBackend, NliRequest, Verdict};
use crate::backend::BackendError;

#[derive(Debug, Clone, Default)]
pub struct ScriptedNli {
    pairs: HashMap<(String, String), Verdict>,
    by_claim: HashMap<String, Verdict>,
    by_doc: HashMap<String, Verdict>,
    fallback: Option<Verdict>,
}

#[derive(Deserialize)]
struct Row {
    claim: Option<String>,
    doc_id: Option<String>,
    label: Label,
    #[serde(default = "one")]
    confidence: f64,
}

fn one() -> f64 {
    1.0
}

fn key(claim: &str) -> String {
    claim.split_whitespace().collect::<Vec<_>>().join(" ")
}

impl ScriptedNli {
    /// Every pair gets `label`.
    pub fn constant(label: Label) -> Self {
        Self {
            fallback: Some(Verdict::new(label, 1.0)),
            ..Self::default()
        }
    }

    pub fn with_pair(mut self, claim: &str, doc_id: &str, label: Label) -> Self {
        self.pairs
            .insert((key(claim), doc_id.to_string()), Verdict::new(label, 1.0));
        self
    }

    pub fn with_claim(mut self, claim: &str, label: Label) -> Self {
        self.by_claim.insert(key(claim), Verdict::new(label, 1.0));
        self
    }

    pub fn with_doc(mut self, doc_id: &str, label: Label) -> Self {
        self.by_doc.insert(doc_id.to_string(), Verdict::new(label, 1.0));
        self
    }

    pub fn with_fallback(mut self, label: Label) -> Self {
        self.fallback = Some(Verdict::new(label, 1.0));
        self
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut s = Self::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: Row = serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))?;
            if !(0.0..=1.0).contains(&row.confidence) {
                return Err(format!("line {}: confidence must be in [0, 1]", i + 1));
            }
            let v = Verdict::new(row.label, row.confidence);
            match (row.claim, row.doc_id) {
                (Some(c), Some(d)) => {
                    s.pairs.insert((key(&c), d), v);
                }
                (Some(c), None) => {
                    s.by_claim.insert(key(&c), v);
                }
                (None, Some(d)) => {
                    s.by_doc.insert(d, v);
                }
                (None, None) => s.fallback = Some(v),
            }
        }
        Ok(s)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, String> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text)
    }

    fn lookup(&self, claim: &str, doc_id: &str) -> Option<Verdict> {
        let claim = key(claim);
        self.pairs
            .get(&(claim.clone(), doc_id.to_string()))
            .or_else(|| self.by_claim.get(&claim))
            .or_else(|| self.by_doc.get(doc_id))
            .or(self.fallback.as_ref())
            .copied()
    }
}

impl NliBackend for ScriptedNli {
    fn name(&self) -> &str {
        "scripted"
    }

    fn classify(&self, request: &NliRequest<'_>) -> Result<Verdict, BackendError> {
        self.lookup(request.hypothesis, request.doc_id).ok_or_else(|| {
            BackendError::rejected(
                "scripted",
                format!(
                    "no scripted verdict for doc `{}` and claim `{}`",
                    request.doc_id, request.hypothesis
                ),
            )
        })
    }
}
