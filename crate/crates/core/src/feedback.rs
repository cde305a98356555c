//! Append-only store of user corrections and their export as training data.
//!
//! The store is one JSONL file. Each append is written, flushed and synced
//! before its id is returned; ids start at 1 and never repeat.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::claims::parse_answer;
use crate::verification::{ClaimStatus, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FeedbackKind {
    VerdictOverride,
    AnswerEdit,
}

impl std::str::FromStr for FeedbackKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().replace('-', "_").as_str() {
            "VERDICT_OVERRIDE" => Ok(FeedbackKind::VerdictOverride),
            "ANSWER_EDIT" => Ok(FeedbackKind::AnswerEdit),
            _ => Err(format!(
                "unknown feedback kind `{s}` (expected VERDICT_OVERRIDE or ANSWER_EDIT)"
            )),
        }
    }
}

/// A correction as submitted, before the store assigns id and timestamp.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NewFeedback {
    pub kind: FeedbackKind,
    pub question: String,
    pub answer_text: String,
    #[serde(default)]
    pub claim_index: Option<usize>,
    pub original_value: String,
    pub corrected_value: String,
    #[serde(default)]
    pub context_doc_ids: Vec<String>,
    /// The cited document an override refers to.
    #[serde(default)]
    pub doc_id: Option<String>,
    #[serde(default)]
    pub claim_text: Option<String>,
    /// `title + " " + abstract` of `doc_id`, captured when the record is made.
    #[serde(default)]
    pub premise: Option<String>,
    #[serde(default)]
    pub answer_id: Option<String>,
    #[serde(default)]
    pub user_tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub record_id: u64,
    pub timestamp: DateTime<Utc>,
    #[serde(flatten)]
    pub feedback: NewFeedback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub field: &'static str,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum FeedbackError {
    #[error("invalid feedback: {}", .0.iter().map(|e| format!("{}: {}", e.field, e.message)).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<FieldError>),
    #[error("feedback store {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("feedback store {path} line {line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// Reads a verdict value: a label, or a claim status standing for one.
pub fn parse_verdict_value(value: &str) -> Result<Label, String> {
    if let Ok(label) = value.parse::<Label>() {
        return Ok(label);
    }
    match value.trim().to_ascii_uppercase().as_str() {
        s if s == ClaimStatus::Verified.as_str() => Ok(Label::Support),
        s if s == ClaimStatus::FlaggedContradiction.as_str() => Ok(Label::Contradict),
        s if s == ClaimStatus::FlaggedNoEvidence.as_str() => Ok(Label::NoEvidence),
        _ => Err(format!(
            "`{value}` is not a verdict (SUPPORT, CONTRADICT, NO_EVIDENCE or a flagged status)"
        )),
    }
}

/// Checks the per-kind invariants and canonicalizes verdict values to labels.
pub fn validate(mut fb: NewFeedback) -> Result<NewFeedback, FeedbackError> {
    let mut errors = Vec::new();
    let mut err = |field, message: &str| {
        errors.push(FieldError {
            field,
            message: message.to_string(),
        })
    };
    if fb.question.trim().is_empty() {
        err("question", "must not be empty");
    }
    match fb.kind {
        FeedbackKind::VerdictOverride => {
            if fb.claim_index.is_none() {
                err("claim_index", "required for VERDICT_OVERRIDE");
            }
            match parse_verdict_value(&fb.original_value) {
                Ok(l) => fb.original_value = l.as_str().into(),
                Err(m) => err("original_value", &m),
            }
            match parse_verdict_value(&fb.corrected_value) {
                Ok(l) => fb.corrected_value = l.as_str().into(),
                Err(m) => err("corrected_value", &m),
            }
        }
        FeedbackKind::AnswerEdit => {
            if fb.original_value.trim().is_empty() {
                err("original_value", "ANSWER_EDIT needs the full original answer");
            }
            if fb.corrected_value.trim().is_empty() {
                err("corrected_value", "ANSWER_EDIT needs the full corrected answer");
            }
        }
    }
    if errors.is_empty() {
        Ok(fb)
    } else {
        Err(FeedbackError::Invalid(errors))
    }
}

type Clock = Box<dyn Fn() -> DateTime<Utc> + Send + Sync>;

struct Inner {
    file: File,
    records: Vec<FeedbackRecord>,
}

pub struct FeedbackStore {
    path: PathBuf,
    inner: Mutex<Inner>,
    clock: Clock,
}

impl std::fmt::Debug for FeedbackStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FeedbackStore")
            .field("path", &self.path)
            .finish_non_exhaustive()
    }
}

impl FeedbackStore {
    /// Opens (or creates) a store, checking the existing records.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, FeedbackError> {
        let path = path.as_ref().to_path_buf();
        let io_err = |source| FeedbackError::Io {
            path: path.clone(),
            source,
        };
        let records = if path.exists() {
            read_records(&path)?
        } else {
            Vec::new()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err)?;
        Ok(Self {
            path,
            inner: Mutex::new(Inner { file, records }),
            clock: Box::new(Utc::now),
        })
    }

    /// Replaces the timestamp source.
    pub fn with_clock(mut self, clock: impl Fn() -> DateTime<Utc> + Send + Sync + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Validates and durably appends `feedback`, returning its id.
    pub fn record(&self, feedback: NewFeedback) -> Result<u64, FeedbackError> {
        let feedback = validate(feedback)?;
        let mut inner = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        let record = FeedbackRecord {
            record_id: inner.records.last().map_or(1, |r| r.record_id + 1),
            timestamp: (self.clock)(),
            feedback,
        };
        let mut line = serde_json::to_string(&record).expect("record serializes");
        line.push('\n');
        let io_err = |source| FeedbackError::Io {
            path: self.path.clone(),
            source,
        };
        inner.file.write_all(line.as_bytes()).map_err(io_err)?;
        inner.file.flush().map_err(io_err)?;
        inner.file.sync_data().map_err(io_err)?;
        let id = record.record_id;
        inner.records.push(record);
        Ok(id)
    }

    /// All records at this instant.
    pub fn snapshot(&self) -> Vec<FeedbackRecord> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner()).records.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap_or_else(|p| p.into_inner()).records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Reads a store file without opening it for writing.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<FeedbackRecord>, FeedbackError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| FeedbackError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut records: Vec<FeedbackRecord> = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| FeedbackError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |message: String| FeedbackError::Corrupt {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let record: FeedbackRecord = serde_json::from_str(&line).map_err(|e| corrupt(e.to_string()))?;
        if let Some(prev) = records.last() {
            if record.record_id <= prev.record_id {
                return Err(corrupt(format!("record id {} does not increase", record.record_id)));
            }
        }
        records.push(record);
    }
    Ok(records)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NliTrainingRecord {
    pub claim_id: String,
    pub claim: String,
    pub doc_id: String,
    pub premise: String,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationTrainingRecord {
    pub record_id: u64,
    pub question: String,
    pub context_doc_ids: Vec<String>,
    pub answer: String,
}

fn claim_text_of(fb: &NewFeedback) -> String {
    if let Some(text) = &fb.claim_text {
        return text.clone();
    }
    let parsed = parse_answer(&fb.answer_text, &[]);
    fb.claim_index
        .and_then(|i| parsed.claims.get(i))
        .map(|c| c.text.clone())
        .unwrap_or_default()
}

/// One JSON line per matching record, in store order. Overrides become NLI
/// pairs readable by [`crate::scifact::load_pairs`]; edits become
/// (question, context, answer) generation examples.
pub fn export_training_data(records: &[FeedbackRecord], kind: Option<FeedbackKind>) -> String {
    let mut out = String::new();
    for r in records.iter().filter(|r| kind.is_none_or(|k| k == r.feedback.kind)) {
        let fb = &r.feedback;
        let line = match fb.kind {
            FeedbackKind::VerdictOverride => {
                let label = parse_verdict_value(&fb.corrected_value).expect("validated on record");
                serde_json::to_string(&NliTrainingRecord {
                    claim_id: format!("feedback-{}", r.record_id),
                    claim: claim_text_of(fb),
                    doc_id: fb.doc_id.clone().unwrap_or_default(),
                    premise: fb.premise.clone().unwrap_or_default(),
                    label,
                })
            }
            FeedbackKind::AnswerEdit => serde_json::to_string(&GenerationTrainingRecord {
                record_id: r.record_id,
                question: fb.question.clone(),
                context_doc_ids: fb.context_doc_ids.clone(),
                answer: fb.corrected_value.clone(),
            }),
        };
        out.push_str(&line.expect("training record serializes"));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scifact::load_pairs;
    use std::sync::Arc;

    fn fixed() -> DateTime<Utc> {
        DateTime::parse_from_rfc3339("2024-05-01T12:00:00Z")
            .unwrap()
            .with_timezone(&Utc)
    }

    fn override_fb(claim_index: Option<usize>) -> NewFeedback {
        NewFeedback {
            kind: FeedbackKind::VerdictOverride,
            question: "What genes matter?".into(),
            answer_text: "Genes matter. BRCA1 is a target (PUBMED:1). IRAK4 too (PUBMED:2).".into(),
            claim_index,
            original_value: "SUPPORT".into(),
            corrected_value: "CONTRADICT".into(),
            context_doc_ids: vec!["1".into(), "2".into()],
            doc_id: Some("2".into()),
            claim_text: None,
            premise: Some("T A.".into()),
            answer_id: None,
            user_tag: None,
        }
    }

    fn edit_fb() -> NewFeedback {
        NewFeedback {
            kind: FeedbackKind::AnswerEdit,
            original_value: "Old answer.".into(),
            corrected_value: "New answer.".into(),
            doc_id: None,
            premise: None,
            ..override_fb(None)
        }
    }

    fn store() -> (tempfile::TempDir, FeedbackStore) {
        let dir = tempfile::tempdir().unwrap();
        let s = FeedbackStore::open(dir.path().join("feedback.jsonl"))
            .unwrap()
            .with_clock(fixed);
        (dir, s)
    }

    #[test]
    fn first_override_gets_id_one() {
        let (_d, s) = store();
        assert_eq!(s.record(override_fb(Some(2))).unwrap(), 1);
        assert_eq!(s.record(edit_fb()).unwrap(), 2);
    }

    #[test]
    fn override_needs_claim_index() {
        let (_d, s) = store();
        match s.record(override_fb(None)) {
            Err(FeedbackError::Invalid(errs)) => assert_eq!(errs[0].field, "claim_index"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(s.is_empty());
    }

    #[test]
    fn status_values_normalize_to_labels() {
        let fb = NewFeedback {
            original_value: "VERIFIED".into(),
            corrected_value: "flagged_contradiction".into(),
            ..override_fb(Some(1))
        };
        let v = validate(fb).unwrap();
        assert_eq!(
            (v.original_value.as_str(), v.corrected_value.as_str()),
            ("SUPPORT", "CONTRADICT")
        );
        assert!(validate(NewFeedback {
            corrected_value: "UNREFERENCED".into(),
            ..override_fb(Some(1))
        })
        .is_err());
        assert!(validate(NewFeedback {
            corrected_value: " ".into(),
            ..edit_fb()
        })
        .is_err());
    }

    #[test]
    fn reopen_continues_ids() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.jsonl");
        {
            let s = FeedbackStore::open(&path).unwrap();
            s.record(edit_fb()).unwrap();
            s.record(edit_fb()).unwrap();
        }
        let s = FeedbackStore::open(&path).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.record(edit_fb()).unwrap(), 3);
        assert_eq!(read_records(&path).unwrap().len(), 3);
    }

    #[test]
    fn concurrent_appends_have_no_gaps() {
        let (_d, s) = store();
        let s = Arc::new(s);
        let handles: Vec<_> = (0..100)
            .map(|_| {
                let s = Arc::clone(&s);
                std::thread::spawn(move || s.record(edit_fb()).unwrap())
            })
            .collect();
        let mut ids: Vec<u64> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        ids.sort_unstable();
        assert_eq!(ids, (1..=100).collect::<Vec<_>>());
        let on_disk: Vec<u64> = read_records(s.path()).unwrap().iter().map(|r| r.record_id).collect();
        assert_eq!(on_disk, (1..=100).collect::<Vec<_>>());
    }

    #[test]
    fn export_filters_and_roundtrips() {
        let (d, s) = store();
        assert_eq!(export_training_data(&s.snapshot(), None), "");
        for _ in 0..3 {
            s.record(override_fb(Some(2))).unwrap();
        }
        for _ in 0..2 {
            s.record(edit_fb()).unwrap();
        }
        let records = s.snapshot();
        let nli = export_training_data(&records, Some(FeedbackKind::VerdictOverride));
        assert_eq!(nli.lines().count(), 3);
        assert_eq!(
            export_training_data(&records, Some(FeedbackKind::AnswerEdit))
                .lines()
                .count(),
            2
        );
        assert_eq!(
            export_training_data(&records, None),
            export_training_data(&records, None)
        );

        let path = d.path().join("nli.jsonl");
        std::fs::write(&path, &nli).unwrap();
        let (pairs, errors) = load_pairs(&path).unwrap();
        assert!(errors.is_empty());
        assert_eq!(pairs.len(), 3);
        assert_eq!(pairs[0].gold_label, Label::Contradict);
        assert_eq!(pairs[0].claim_text, "IRAK4 too.");
        assert_eq!(pairs[0].doc_id, "2");
    }

    #[test]
    fn corrupt_store_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.jsonl");
        std::fs::write(&path, "not json\n").unwrap();
        assert!(matches!(
            FeedbackStore::open(&path),
            Err(FeedbackError::Corrupt { line: 1, .. })
        ));
    }
}
