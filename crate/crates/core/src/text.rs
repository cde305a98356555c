//! Tokenization shared by the lexical index, the query transformer, the
//! embedding stub and the heuristic verifier.

use std::collections::HashSet;
use std::io;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use regex::Regex;

/// Bundled English stopword list, one term per line.
pub const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// Lowercases `text` and splits it on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// A tokenizer plus a stopword filter.
#[derive(Debug, Clone)]
pub struct Analyzer {
    stopwords: Arc<HashSet<String>>,
}

impl Default for Analyzer {
    fn default() -> Self {
        static DEFAULT: OnceLock<Arc<HashSet<String>>> = OnceLock::new();
        let stopwords = DEFAULT
            .get_or_init(|| Arc::new(parse_stopwords(DEFAULT_STOPWORDS)))
            .clone();
        Self { stopwords }
    }
}

fn parse_stopwords(list: &str) -> HashSet<String> {
    list.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

impl Analyzer {
    pub fn with_stopwords<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let stopwords = words.into_iter().map(|w| w.as_ref().trim().to_lowercase()).collect();
        Self {
            stopwords: Arc::new(stopwords),
        }
    }

    /// Reads a stopword file (one term per line, `#` comments allowed).
    pub fn from_stopword_file(path: impl AsRef<Path>) -> io::Result<Self> {
        let list = std::fs::read_to_string(path)?;
        Ok(Self {
            stopwords: Arc::new(parse_stopwords(&list)),
        })
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token)
    }

    /// Content terms of `text` in order, duplicates kept.
    pub fn terms(&self, text: &str) -> Vec<String> {
        tokenize(text).into_iter().filter(|t| !self.is_stopword(t)).collect()
    }

    /// Distinct content terms of `text`.
    pub fn term_set(&self, text: &str) -> HashSet<String> {
        self.terms(text).into_iter().collect()
    }
}

const NEGATIONS: &[&str] = &[
    "no", "not", "never", "none", "nor", "neither", "nothing", "nobody", "without", "cannot", "lack", "lacks",
    "lacking", "absence", "absent", "fail", "fails", "failed", "unable", "don", "doesn", "didn", "isn", "aren", "wasn",
    "weren", "hasn", "haven", "hadn", "won", "wouldn", "shouldn", "couldn", "mustn", "needn",
];

/// Whether any token of `text` is a negation cue.
pub fn has_negation(text: &str) -> bool {
    tokenize(text).iter().any(|t| NEGATIONS.contains(&t.as_str()))
}

/// Numeric tokens (`12`, `3.5`, `0.05`) in order of appearance. Digits glued
/// to letters (`BRCA1`, `IL6`) are identifiers and are skipped.
pub fn number_tokens(text: &str) -> Vec<String> {
    static NUMBER: OnceLock<Regex> = OnceLock::new();
    let re =
        NUMBER.get_or_init(|| Regex::new(r"(?:^|[^\p{L}\p{N}.,])(\d+(?:[.,]\d+)?)").expect("valid number pattern"));
    re.captures_iter(text).map(|c| c[1].replace(',', ".")).collect()
}

/// 64-bit FNV-1a. Stable across platforms and releases.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenize_lowercases_and_splits() {
        assert_eq!(tokenize("BRCA1, p53-mutant!"), vec!["brca1", "p53", "mutant"]);
        assert!(tokenize("  ...  ").is_empty());
    }

    #[test]
    fn default_stopwords_cover_function_words() {
        let a = Analyzer::default();
        assert!(a.is_stopword("the") && a.is_stopword("what") && a.is_stopword("in"));
        assert!(!a.is_stopword("role") && !a.is_stopword("play"));
    }

    #[test]
    fn negation_cues() {
        assert!(has_negation("Aspirin does not reduce risk."));
        assert!(has_negation("It doesn't work."));
        assert!(!has_negation("Aspirin reduces risk."));
    }

    #[test]
    fn numbers_skip_identifiers() {
        assert_eq!(
            number_tokens("BRCA1 raised risk by 3.5 fold in 120 women"),
            vec!["3.5", "120"]
        );
        assert_eq!(number_tokens("p = 0.05."), vec!["0.05"]);
        assert!(number_tokens("IL6 and TNF").is_empty());
    }
}
