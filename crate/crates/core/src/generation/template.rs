//! Prompt templates with named slots.
//!
//! A template file has three sections introduced by `### instruction`,
//! `### document` and `### question` header lines. The document section is
//! rendered once per abstract with the slots `{index}` (1-based),
//! `{doc_id}`, `{title}` and `{abstract}`; the question section has the
//! `{question}` slot. The rendered prompt is
//!
//! ```text
//! <instruction>\n<document 1>\n<document 2>\n...<question>
//! ```

use std::path::Path;

use super::GenerationError;
use crate::corpus::Document;

pub const INFERENCE_TEMPLATE: &str = include_str!("../../data/templates/inference.txt");
pub const DATASET_TEMPLATE: &str = include_str!("../../data/templates/dataset.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: String,
    pub instruction: String,
    pub document_format: String,
    pub question_format: String,
}

impl PromptTemplate {
    /// Instruction asking for `(PUBMED:<id>)` references; the default.
    pub fn inference() -> Self {
        Self::parse("inference", INFERENCE_TEMPLATE).expect("bundled inference template is valid")
    }

    /// Instruction asking for `[n]` abstract-number references.
    pub fn dataset() -> Self {
        Self::parse("dataset", DATASET_TEMPLATE).expect("bundled dataset template is valid")
    }

    /// Resolves `inference`, `dataset` or a path to a template file.
    pub fn resolve(spec: &str) -> Result<Self, GenerationError> {
        match spec {
            "inference" | "" => Ok(Self::inference()),
            "dataset" => Ok(Self::dataset()),
            path => Self::from_file(path),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, GenerationError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| GenerationError::Template(format!("{}: {e}", path.display())))?;
        let name = path
            .file_stem()
            .map_or("custom".into(), |s| s.to_string_lossy().into_owned());
        Self::parse(&name, &text)
    }

    pub fn parse(name: &str, text: &str) -> Result<Self, GenerationError> {
        let mut instruction = None;
        let mut document = None;
        let mut question = None;
        let mut current: Option<&str> = None;
        let mut body: Vec<&str> = Vec::new();

        let mut flush = |section: Option<&str>, body: &mut Vec<&str>| -> Result<(), GenerationError> {
            let joined = body.join("\n");
            body.clear();
            let slot = match section {
                None if joined.trim().is_empty() => return Ok(()),
                None => return Err(GenerationError::Template("text before the first section header".into())),
                Some("instruction") => &mut instruction,
                Some("document") => &mut document,
                Some("question") => &mut question,
                Some(other) => return Err(GenerationError::Template(format!("unknown section `{other}`"))),
            };
            if slot.replace(joined).is_some() {
                return Err(GenerationError::Template(format!(
                    "section `{}` repeated",
                    section.unwrap_or("")
                )));
            }
            Ok(())
        };
        for line in text.lines() {
            if let Some(header) = line.strip_prefix("### ") {
                flush(current, &mut body)?;
                current = Some(header.trim());
            } else {
                body.push(line);
            }
        }
        flush(current, &mut body)?;

        let missing = |s: &str| GenerationError::Template(format!("missing `{s}` section"));
        let t = Self {
            name: name.to_string(),
            instruction: instruction.ok_or_else(|| missing("instruction"))?,
            document_format: document.ok_or_else(|| missing("document"))?,
            question_format: question.ok_or_else(|| missing("question"))?,
        };
        if !t.question_format.contains("{question}") {
            return Err(GenerationError::Template(
                "question section lacks the {question} slot".into(),
            ));
        }
        Ok(t)
    }

    pub fn render_document(&self, index: usize, doc: &Document) -> String {
        fill_slots(&self.document_format, |slot| match slot {
            "index" => Some(index.to_string()),
            "doc_id" => Some(doc.doc_id.clone()),
            "title" => Some(doc.title.clone()),
            "abstract" => Some(doc.abstract_text.clone()),
            _ => None,
        })
    }

    pub fn render_question(&self, question: &str) -> String {
        fill_slots(&self.question_format, |slot| {
            (slot == "question").then(|| question.to_string())
        })
    }
}

/// Single-pass substitution of `{slot}` placeholders. Substituted values are
/// never re-scanned, and unknown `{...}` sequences are left verbatim.
fn fill_slots(template: &str, value: impl Fn(&str) -> Option<String>) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => match value(&after[..close]) {
                Some(v) => {
                    out.push_str(&v);
                    rest = &after[close + 1..];
                }
                None => {
                    out.push('{');
                    rest = after;
                }
            },
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}
