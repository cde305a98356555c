//! Line-delimited JSON persistence for both indices.
//!
//! Each file starts with a header line naming the format and version,
//! followed by one record per line. Terms are written in sorted order so the
//! output is byte-stable for a given index.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::lexical::{Bm25Params, LexicalIndex, Posting};
use super::vector::VectorIndex;

pub const LEXICAL_FORMAT: &str = "citeqa.lexical-index";
pub const VECTOR_FORMAT: &str = "citeqa.vector-index";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("index i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("unsupported index format `{format}` version {version}")]
    Unsupported { format: String, version: u32 },
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dimension: Option<usize>,
    documents: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    terms: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct DocLine {
    doc_id: String,
    length: u32,
}

#[derive(Serialize, Deserialize)]
struct TermLine {
    term: String,
    postings: Vec<(u32, u32)>,
}

#[derive(Serialize, Deserialize)]
struct VectorLine {
    doc_id: String,
    vector: Vec<f64>,
}

fn write_line<T: Serialize>(w: &mut impl Write, value: &T) -> Result<(), PersistError> {
    serde_json::to_writer(&mut *w, value).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    Ok(())
}

pub fn write_lexical(index: &LexicalIndex, w: &mut impl Write) -> Result<(), PersistError> {
    let header = Header {
        format: LEXICAL_FORMAT.into(),
        version: FORMAT_VERSION,
        k1: Some(index.params.k1),
        b: Some(index.params.b),
        dimension: None,
        documents: index.doc_count(),
        terms: Some(index.term_count()),
    };
    write_line(w, &header)?;
    for (doc_id, &length) in index.doc_ids.iter().zip(&index.doc_lengths) {
        write_line(
            w,
            &DocLine {
                doc_id: doc_id.clone(),
                length,
            },
        )?;
    }
    let mut terms: Vec<&String> = index.postings.keys().collect();
    terms.sort();
    for term in terms {
        let postings = index.postings[term].iter().map(|p| (p.doc, p.tf)).collect();
        write_line(
            w,
            &TermLine {
                term: term.clone(),
                postings,
            },
        )?;
    }
    Ok(())
}

pub fn save_lexical(index: &LexicalIndex, path: impl AsRef<Path>) -> Result<(), PersistError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_lexical(index, &mut w)?;
    w.flush()?;
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_record<T: for<'de> Deserialize<'de>>(&mut self) -> Result<T, PersistError> {
        self.line += 1;
        let line = self.inner.next().ok_or_else(|| PersistError::Malformed {
            line: self.line,
            message: "unexpected end of file".into(),
        })??;
        serde_json::from_str(&line).map_err(|e| self.err(e.to_string()))
    }

    fn err(&self, message: impl Into<String>) -> PersistError {
        PersistError::Malformed {
            line: self.line,
            message: message.into(),
        }
    }

    fn expect_end(&mut self) -> Result<(), PersistError> {
        for l in self.inner.by_ref() {
            self.line += 1;
            if !l?.trim().is_empty() {
                return Err(self.err("trailing data after last record"));
            }
        }
        Ok(())
    }
}

fn read_header<R: BufRead>(lines: &mut Lines<R>, format: &str) -> Result<Header, PersistError> {
    let header: Header = lines.next_record()?;
    if header.format != format || header.version != FORMAT_VERSION {
        return Err(PersistError::Unsupported {
            format: header.format,
            version: header.version,
        });
    }
    Ok(header)
}

pub fn read_lexical(r: impl BufRead) -> Result<LexicalIndex, PersistError> {
    let mut lines = Lines {
        inner: r.lines(),
        line: 0,
    };
    let header = read_header(&mut lines, LEXICAL_FORMAT)?;
    let params = Bm25Params {
        k1: header.k1.ok_or_else(|| lines.err("header lacks k1"))?,
        b: header.b.ok_or_else(|| lines.err("header lacks b"))?,
    };
    let mut doc_ids = Vec::with_capacity(header.documents);
    let mut doc_lengths = Vec::with_capacity(header.documents);
    for _ in 0..header.documents {
        let d: DocLine = lines.next_record()?;
        doc_ids.push(d.doc_id);
        doc_lengths.push(d.length);
    }
    let mut postings = std::collections::HashMap::new();
    for _ in 0..header.terms.unwrap_or(0) {
        let t: TermLine = lines.next_record()?;
        let mut prev = None;
        let mut list = Vec::with_capacity(t.postings.len());
        for (doc, tf) in t.postings {
            if doc as usize >= doc_ids.len() || prev.is_some_and(|p| p >= doc) || tf == 0 {
                return Err(lines.err(format!("invalid posting ({doc}, {tf}) for `{}`", t.term)));
            }
            prev = Some(doc);
            list.push(Posting { doc, tf });
        }
        postings.insert(t.term, list);
    }
    lines.expect_end()?;
    let total: u64 = doc_lengths.iter().map(|&l| u64::from(l)).sum();
    let avg_doc_length = if doc_lengths.is_empty() {
        0.0
    } else {
        total as f64 / doc_lengths.len() as f64
    };
    Ok(LexicalIndex {
        postings,
        doc_ids,
        doc_lengths,
        avg_doc_length,
        params,
    })
}

pub fn load_lexical(path: impl AsRef<Path>) -> Result<LexicalIndex, PersistError> {
    read_lexical(BufReader::new(File::open(path)?))
}

pub fn write_vectors(index: &VectorIndex, w: &mut impl Write) -> Result<(), PersistError> {
    let header = Header {
        format: VECTOR_FORMAT.into(),
        version: FORMAT_VERSION,
        k1: None,
        b: None,
        dimension: Some(index.dimension),
        documents: index.len(),
        terms: None,
    };
    write_line(w, &header)?;
    for (pos, doc_id) in index.doc_ids.iter().enumerate() {
        write_line(
            w,
            &VectorLine {
                doc_id: doc_id.clone(),
                vector: index.vector(pos).to_vec(),
            },
        )?;
    }
    Ok(())
}

pub fn save_vectors(index: &VectorIndex, path: impl AsRef<Path>) -> Result<(), PersistError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_vectors(index, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_vectors(r: impl BufRead) -> Result<VectorIndex, PersistError> {
    let mut lines = Lines {
        inner: r.lines(),
        line: 0,
    };
    let header = read_header(&mut lines, VECTOR_FORMAT)?;
    let dimension = header.dimension.ok_or_else(|| lines.err("header lacks dimension"))?;
    let mut index = VectorIndex::new(dimension).map_err(|e| lines.err(e.to_string()))?;
    for _ in 0..header.documents {
        let v: VectorLine = lines.next_record()?;
        index
            .push_stored(v.doc_id, v.vector)
            .map_err(|e| lines.err(e.to_string()))?;
    }
    lines.expect_end()?;
    Ok(index)
}

pub fn load_vectors(path: impl AsRef<Path>) -> Result<VectorIndex, PersistError> {
    read_vectors(BufReader::new(File::open(path)?))
}
