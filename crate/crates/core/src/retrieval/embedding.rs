//! The embedding seam and a deterministic offline embedder.

use std::collections::HashMap;
use std::path::Path;

use crate::backend::BackendError;
use crate::text::{fnv1a64, Analyzer};

/// Maps text to a dense vector of a fixed dimension.
pub trait EmbeddingBackend: Send + Sync {
    /// Identity used in error messages and health reports.
    fn name(&self) -> &str;

    fn dimension(&self) -> usize;

    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError>;

    /// Embeds several texts at once. Remote backends override this to send a
    /// single request.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, BackendError> {
        texts.iter().map(|t| self.embed(t)).collect()
    }
}

/// Feature-hashing embedder over character trigrams of content words.
///
/// Each content word is wrapped as `#word#`, its trigrams are hashed into
/// `dimension` signed buckets and the word vector is L2-normalized; a text is
/// the sum of its word vectors. Words listed together in the synonym table
/// are replaced by one canonical form first, so synonyms embed identically.
#[derive(Debug, Clone)]
pub struct HashedTrigramEmbedder {
    dimension: usize,
    analyzer: Analyzer,
    synonyms: HashMap<String, String>,
}

impl HashedTrigramEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self {
            dimension,
            analyzer: Analyzer::default(),
            synonyms: HashMap::new(),
        }
    }

    pub fn with_analyzer(mut self, analyzer: Analyzer) -> Self {
        self.analyzer = analyzer;
        self
    }

    /// Adds synonym pairs. Both words of a pair map to the canonical form of
    /// the first one.
    pub fn with_synonyms<I, A, B>(mut self, pairs: I) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: AsRef<str>,
    {
        for (a, b) in pairs {
            let a = a.as_ref().to_lowercase();
            let b = b.as_ref().to_lowercase();
            let canonical = self.canonical(&a).to_string();
            self.synonyms.insert(b, canonical.clone());
            self.synonyms.entry(a).or_insert(canonical);
        }
        self
    }

    /// Reads a synonym table: one pair per line, words separated by
    /// whitespace or a comma, `#` starts a comment.
    pub fn with_synonym_file(self, path: impl AsRef<Path>) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let pairs = parse_synonyms(&text).map_err(|msg| std::io::Error::new(std::io::ErrorKind::InvalidData, msg))?;
        Ok(self.with_synonyms(pairs))
    }

    fn canonical<'a>(&'a self, word: &'a str) -> &'a str {
        self.synonyms.get(word).map_or(word, String::as_str)
    }

    fn add_word(&self, word: &str, out: &mut [f64]) {
        let padded: Vec<char> = std::iter::once('#')
            .chain(word.chars())
            .chain(std::iter::once('#'))
            .collect();
        let mut local = vec![0.0f64; self.dimension];
        let mut buf = String::new();
        for window in padded.windows(3) {
            buf.clear();
            buf.extend(window);
            let h = fnv1a64(buf.as_bytes());
            let bucket = (h % self.dimension as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            local[bucket] += sign;
        }
        let norm = local.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (o, l) in out.iter_mut().zip(&local) {
                *o += l / norm;
            }
        }
    }
}

pub fn parse_synonyms(text: &str) -> Result<Vec<(String, String)>, String> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let words: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|w| !w.is_empty())
            .collect();
        match words.as_slice() {
            [a, b] => pairs.push((a.to_string(), b.to_string())),
            _ => return Err(format!("line {}: expected two words", i + 1)),
        }
    }
    Ok(pairs)
}

impl EmbeddingBackend for HashedTrigramEmbedder {
    fn name(&self) -> &str {
        "hashed-trigram"
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        let mut v = vec![0.0f64; self.dimension];
        for term in self.analyzer.terms(text) {
            self.add_word(self.canonical(&term), &mut v);
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn deterministic() {
        let e = HashedTrigramEmbedder::new(32);
        assert_eq!(e.embed("kidney failure").unwrap(), e.embed("kidney failure").unwrap());
        assert_eq!(e.embed("x").unwrap().len(), 32);
    }

    #[test]
    fn synonyms_embed_identically() {
        let e = HashedTrigramEmbedder::new(64).with_synonyms([("kidney", "renal")]);
        assert_eq!(e.embed("renal failure").unwrap(), e.embed("kidney failure").unwrap());
        let plain = HashedTrigramEmbedder::new(64);
        assert!(cosine(&plain.embed("renal").unwrap(), &plain.embed("kidney").unwrap()) < 0.9);
    }

    #[test]
    fn stopwords_do_not_contribute() {
        let e = HashedTrigramEmbedder::new(16);
        assert_eq!(e.embed("the gene").unwrap(), e.embed("gene").unwrap());
        assert!(e.embed("the of").unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn synonym_file_format() {
        let pairs = parse_synonyms("# comment\nkidney renal\ntumor, neoplasm\n\n").unwrap();
        assert_eq!(pairs.len(), 2);
        assert!(parse_synonyms("just-one").is_err());
    }
}
