//! The document collection: abstract records, validation and loading.

mod segment;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use segment::{split_offsets, split_sentences, SentenceSpan};

/// One scientific abstract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub sentences: Vec<SentenceSpan>,
}

impl Document {
    /// Builds a document and segments its abstract.
    pub fn new(
        doc_id: impl Into<String>,
        title: impl Into<String>,
        abstract_text: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let doc_id = doc_id.into();
        let abstract_text = abstract_text.into();
        validate_doc_id(&doc_id)?;
        if abstract_text.trim().is_empty() {
            return Err(CorpusError::InvalidDocument {
                doc_id,
                message: "abstract is empty".into(),
            });
        }
        let sentences = split_sentences(&abstract_text);
        Ok(Self {
            doc_id,
            title: title.into(),
            abstract_text,
            sentences,
        })
    }

    /// Title and abstract joined by a single space; what gets indexed.
    pub fn full_text(&self) -> String {
        if self.title.is_empty() {
            self.abstract_text.clone()
        } else {
            format!("{} {}", self.title, self.abstract_text)
        }
    }
}

/// Document ids are non-empty ASCII digit strings (PubMed style), since the
/// answer parser can only recognize `PUBMED:<digits>` references.
pub fn validate_doc_id(doc_id: &str) -> Result<(), CorpusError> {
    if doc_id.is_empty() {
        return Err(CorpusError::InvalidDocId {
            doc_id: doc_id.into(),
            message: "id is empty".into(),
        });
    }
    if !doc_id.bytes().all(|b| b.is_ascii_digit()) {
        return Err(CorpusError::InvalidDocId {
            doc_id: doc_id.into(),
            message: "id must contain only digits".into(),
        });
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus {path} contains no records")]
    Empty { path: PathBuf },
    #[error("corpus {path} has no valid records ({} rejected)", .report.errors.len())]
    NoValidRecords { path: PathBuf, report: LoadReport },
    #[error("duplicate document id `{doc_id}`")]
    DuplicateId { doc_id: String },
    #[error("invalid document id `{doc_id}`: {message}")]
    InvalidDocId { doc_id: String, message: String },
    #[error("invalid document `{doc_id}`: {message}")]
    InvalidDocument { doc_id: String, message: String },
    #[error("a corpus needs at least one document")]
    NoDocuments,
}

/// A rejected line of a corpus file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

/// Per-record problems found while loading; the load itself still succeeded.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub accepted: usize,
    pub errors: Vec<RecordError>,
}

/// An immutable, ordered document collection with an id index.
#[derive(Debug, Clone)]
pub struct Corpus {
    documents: Vec<Document>,
    id_index: HashMap<String, usize>,
}

impl Corpus {
    pub fn from_documents(documents: Vec<Document>) -> Result<Self, CorpusError> {
        if documents.is_empty() {
            return Err(CorpusError::NoDocuments);
        }
        let mut id_index = HashMap::with_capacity(documents.len());
        for (pos, doc) in documents.iter().enumerate() {
            if id_index.insert(doc.doc_id.clone(), pos).is_some() {
                return Err(CorpusError::DuplicateId {
                    doc_id: doc.doc_id.clone(),
                });
            }
        }
        Ok(Self { documents, id_index })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.id_index.get(doc_id).map(|&i| &self.documents[i])
    }

    pub fn position(&self, doc_id: &str) -> Option<usize> {
        self.id_index.get(doc_id).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Document> {
        self.documents.iter()
    }
}

#[derive(Deserialize)]
struct RawRecord {
    doc_id: serde_json::Value,
    title: String,
    #[serde(rename = "abstract")]
    abstract_text: serde_json::Value,
}

/// Loads a line-delimited corpus file (`{"doc_id", "title", "abstract"}` per
/// line). The abstract may also be an array of sentences, as in SciFact's
/// corpus file; they are joined with single spaces. Malformed records are
/// skipped and reported; a duplicate id aborts.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<(Corpus, LoadReport), CorpusError> {
    let path = path.as_ref();
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);

    let mut report = LoadReport::default();
    let mut documents = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut saw_record = false;
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        saw_record = true;
        match parse_record(&line) {
            Ok(doc) => {
                if seen.insert(doc.doc_id.clone(), line_no).is_some() {
                    return Err(CorpusError::DuplicateId { doc_id: doc.doc_id });
                }
                documents.push(doc);
            }
            Err(message) => report.errors.push(RecordError { line: line_no, message }),
        }
    }
    if !saw_record {
        return Err(CorpusError::Empty {
            path: path.to_path_buf(),
        });
    }
    if documents.is_empty() {
        return Err(CorpusError::NoValidRecords {
            path: path.to_path_buf(),
            report,
        });
    }
    report.accepted = documents.len();
    let corpus = Corpus::from_documents(documents)?;
    Ok((corpus, report))
}

fn parse_record(line: &str) -> Result<Document, String> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| format!("malformed record: {e}"))?;
    let doc_id = match raw.doc_id {
        serde_json::Value::String(s) => s,
        serde_json::Value::Number(n) if n.is_u64() => n.to_string(),
        other => return Err(format!("doc_id must be a string, got {other}")),
    };
    let abstract_text = match raw.abstract_text {
        serde_json::Value::String(s) => s,
        serde_json::Value::Array(parts) => {
            let mut sentences = Vec::with_capacity(parts.len());
            for p in parts {
                match p {
                    serde_json::Value::String(s) => sentences.push(s.trim().to_string()),
                    other => return Err(format!("abstract sentences must be strings, got {other}")),
                }
            }
            sentences.join(" ")
        }
        other => return Err(format!("abstract must be a string or a list of strings, got {other}")),
    };
    Document::new(doc_id, raw.title, abstract_text).map_err(|e| e.to_string())
}
