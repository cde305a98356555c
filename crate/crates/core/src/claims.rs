//! Parsing generated answers into cited claims.
//!
//! Two reference syntaxes are recognized:
//!
//! - `(PUBMED:123)`, `(PUBMED:1, PUBMED:2)`, `(PUBMED:1; 2)`: document ids
//! - `[1]`, `[1][2]`, `[1, 2]`: 1-based positions in the context documents
//!
//! Markers are removed from the claim text together with the whitespace in
//! front of them. Each claim keeps the removed slices so the raw answer can be
//! rebuilt byte-for-byte.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{split_offsets, Document};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkerSyntax {
    Pubmed,
    Bracket,
}

/// A reference marker cut out of the answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Marker {
    /// Byte range in the raw answer, including the whitespace before it.
    pub span: Span,
    pub raw: String,
    pub syntax: MarkerSyntax,
}

/// One answer sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    /// Sentence text with markers removed and whitespace normalized.
    pub text: String,
    pub raw_span: Span,
    /// Cited document ids in order of first appearance, deduplicated.
    pub references: Vec<String>,
    /// Bracket numbers that point past the end of the context documents.
    pub unresolved: Vec<String>,
    pub unreferenced: bool,
    #[serde(skip)]
    pub(crate) stripped: String,
    #[serde(skip)]
    pub(crate) markers: Vec<Marker>,
}

impl Claim {
    pub fn markers(&self) -> &[Marker] {
        &self.markers
    }

    /// The raw span text with markers cut out, before normalization.
    pub fn stripped_text(&self) -> &str {
        &self.stripped
    }

    /// Re-inserts the removed markers at their recorded positions.
    pub fn reconstruct(&self) -> String {
        let mut out = String::with_capacity(self.raw_span.end - self.raw_span.start);
        let mut cursor = self.raw_span.start;
        let mut taken = 0;
        for m in &self.markers {
            let len = m.span.start - cursor;
            out.push_str(&self.stripped[taken..taken + len]);
            taken += len;
            out.push_str(&m.raw);
            cursor = m.span.end;
        }
        out.push_str(&self.stripped[taken..]);
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnknownReference {
    pub claim_index: usize,
    /// A document id, or `[n]` for an out-of-range bracket number.
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    pub raw_text: String,
    pub claims: Vec<Claim>,
    pub unknown_references: Vec<UnknownReference>,
}

impl ParsedAnswer {
    /// Rebuilds the raw answer from the claims and the whitespace between them.
    pub fn reconstruct(&self) -> String {
        let mut out = String::with_capacity(self.raw_text.len());
        let mut cursor = 0;
        for c in &self.claims {
            out.push_str(&self.raw_text[cursor..c.raw_span.start]);
            out.push_str(&c.reconstruct());
            cursor = c.raw_span.end;
        }
        out.push_str(&self.raw_text[cursor..]);
        out
    }

    pub fn is_unknown(&self, claim_index: usize, reference: &str) -> bool {
        self.unknown_references
            .iter()
            .any(|u| u.claim_index == claim_index && u.reference == reference)
    }
}

fn marker_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(concat!(
            r"\s*(?:",
            r"(?P<pm>\(\s*(?i:pubmed)\s*:\s*\d+(?:\s*[,;]?\s*(?:(?i:pubmed)\s*:\s*)?\d+)*\s*\))",
            r"|(?P<br>\[\s*\d+(?:\s*[,;]\s*\d+)*\s*\])",
            r")"
        ))
        .expect("valid marker pattern")
    })
}

fn digits_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d+").expect("valid digits pattern"))
}

/// A marker found in a sentence, with offsets relative to that sentence.
struct Found {
    start: usize,
    end: usize,
    syntax: MarkerSyntax,
    numbers: Vec<String>,
}

fn scan(sentence: &str) -> Vec<Found> {
    marker_regex()
        .captures_iter(sentence)
        .map(|caps| {
            let whole = caps.get(0).expect("group 0");
            let (syntax, body) = match (caps.name("pm"), caps.name("br")) {
                (Some(m), _) => (MarkerSyntax::Pubmed, m.as_str()),
                (_, Some(m)) => (MarkerSyntax::Bracket, m.as_str()),
                _ => unreachable!("one alternative always matches"),
            };
            Found {
                start: whole.start(),
                end: whole.end(),
                syntax,
                numbers: digits_regex().find_iter(body).map(|d| d.as_str().to_string()).collect(),
            }
        })
        .collect()
}

struct Resolved {
    references: Vec<String>,
    unresolved: Vec<String>,
}

fn resolve(found: &[Found], context_docs: &[&Document]) -> Resolved {
    let mut references: Vec<String> = Vec::new();
    let mut unresolved: Vec<String> = Vec::new();
    for f in found {
        for n in &f.numbers {
            match f.syntax {
                MarkerSyntax::Pubmed => {
                    if !references.contains(n) {
                        references.push(n.clone());
                    }
                }
                MarkerSyntax::Bracket => {
                    let doc = n
                        .parse::<usize>()
                        .ok()
                        .filter(|&i| i >= 1)
                        .and_then(|i| context_docs.get(i - 1));
                    match doc {
                        Some(d) if !references.contains(&d.doc_id) => references.push(d.doc_id.clone()),
                        Some(_) => {}
                        None => {
                            let key = format!("[{n}]");
                            if !unresolved.contains(&key) {
                                unresolved.push(key);
                            }
                        }
                    }
                }
            }
        }
    }
    Resolved { references, unresolved }
}

fn remove_markers(sentence: &str, found: &[Found]) -> String {
    let mut out = String::with_capacity(sentence.len());
    let mut cursor = 0;
    for f in found {
        out.push_str(&sentence[cursor..f.start]);
        cursor = f.end;
    }
    out.push_str(&sentence[cursor..]);
    out
}

/// Collapses whitespace runs and drops whitespace in front of punctuation.
fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        let glue = word.starts_with(['.', ',', ';', ':', '!', '?']);
        if !out.is_empty() && !glue {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

/// Extracts cited document ids from one sentence and returns them with the
/// cleaned sentence. Out-of-range bracket numbers are dropped here; use
/// [`parse_answer`] to have them reported.
pub fn extract_references(sentence: &str, context_docs: &[&Document]) -> (Vec<String>, String) {
    let found = scan(sentence);
    let resolved = resolve(&found, context_docs);
    (resolved.references, normalize(&remove_markers(sentence, &found)))
}

fn has_content(text: &str) -> bool {
    text.chars().any(char::is_alphanumeric)
}

/// Sentence spans of an answer. Line breaks are hard boundaries; a piece that
/// holds nothing but markers or punctuation joins the previous sentence, or
/// the next one when it comes first.
fn claim_spans(raw: &str) -> Vec<Span> {
    let mut pieces: Vec<Span> = Vec::new();
    for (start, end) in split_offsets(raw) {
        let mut line_start = start;
        for (i, c) in raw[start..end].char_indices() {
            if c == '\n' {
                push_trimmed(raw, line_start, start + i, &mut pieces);
                line_start = start + i + 1;
            }
        }
        push_trimmed(raw, line_start, end, &mut pieces);
    }

    let mut spans: Vec<Span> = Vec::new();
    let mut pending: Option<Span> = None;
    for piece in pieces {
        let body = &raw[piece.start..piece.end];
        let substantive = has_content(&remove_markers(body, &scan(body)));
        if substantive {
            let start = pending.take().map_or(piece.start, |p| p.start);
            spans.push(Span { start, end: piece.end });
        } else if let Some(last) = spans.last_mut() {
            last.end = piece.end;
        } else {
            pending = Some(pending.map_or(piece, |p| Span {
                start: p.start,
                end: piece.end,
            }));
        }
    }
    if let Some(p) = pending {
        spans.push(p);
    }
    spans
}

fn push_trimmed(raw: &str, start: usize, end: usize, out: &mut Vec<Span>) {
    let piece = &raw[start..end];
    let lead = piece.len() - piece.trim_start().len();
    let trail = piece.len() - piece.trim_end().len();
    if lead + trail < piece.len() {
        out.push(Span {
            start: start + lead,
            end: end - trail,
        });
    }
}

/// Splits an answer into claims and resolves their references against the
/// context documents. Never fails; an empty answer has no claims.
pub fn parse_answer(raw: &str, context_docs: &[&Document]) -> ParsedAnswer {
    let mut claims = Vec::new();
    let mut unknown_references = Vec::new();
    for (claim_index, span) in claim_spans(raw).into_iter().enumerate() {
        let sentence = &raw[span.start..span.end];
        let found = scan(sentence);
        let resolved = resolve(&found, context_docs);
        let stripped = remove_markers(sentence, &found);
        for id in &resolved.references {
            if !context_docs.iter().any(|d| &d.doc_id == id) {
                unknown_references.push(UnknownReference {
                    claim_index,
                    reference: id.clone(),
                });
            }
        }
        for key in &resolved.unresolved {
            unknown_references.push(UnknownReference {
                claim_index,
                reference: key.clone(),
            });
        }
        let markers = found
            .iter()
            .map(|f| Marker {
                span: Span {
                    start: span.start + f.start,
                    end: span.start + f.end,
                },
                raw: sentence[f.start..f.end].to_string(),
                syntax: f.syntax,
            })
            .collect();
        let unreferenced = resolved.references.is_empty() && resolved.unresolved.is_empty();
        claims.push(Claim {
            text: normalize(&stripped),
            raw_span: span,
            references: resolved.references,
            unresolved: resolved.unresolved,
            unreferenced,
            stripped,
            markers,
        });
    }
    ParsedAnswer {
        raw_text: raw.to_string(),
        claims,
        unknown_references,
    }
}
