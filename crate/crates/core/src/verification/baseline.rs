//! Lexical-overlap stand-in for a trained inference model.
//!
//! coverage = |content(claim) ∩ content(abstract)| / |content(claim)|
//!
//! - coverage ≥ threshold and negation agrees with the best-matching sentence → SUPPORT
//! - coverage ≥ threshold and exactly one side is negated → CONTRADICT
//! - otherwise → NO_EVIDENCE
//!
//! Differing numbers are not treated as contradictions; see
//! [`super::numeric_divergence`] for the warning emitted instead.

use std::collections::HashSet;

use super::{Label, NliBackend, NliRequest, Verdict};
use crate::backend::BackendError;
use crate::corpus::split_sentences;
use crate::text::{has_negation, Analyzer};

pub const DEFAULT_SUPPORT_COVERAGE: f64 = 0.6;

#[derive(Debug, Clone)]
pub struct BaselineNli {
    analyzer: Analyzer,
    support_coverage: f64,
}

impl Default for BaselineNli {
    fn default() -> Self {
        Self {
            analyzer: Analyzer::default(),
            support_coverage: DEFAULT_SUPPORT_COVERAGE,
        }
    }
}

impl BaselineNli {
    pub fn new(support_coverage: f64) -> Self {
        Self {
            support_coverage,
            ..Self::default()
        }
    }

    pub fn support_coverage(&self) -> f64 {
        self.support_coverage
    }

    /// Pure function of the claim and abstract text.
    pub fn judge(&self, claim: &str, abstract_text: &str) -> Verdict {
        let claim_words = self.analyzer.term_set(claim);
        if claim_words.is_empty() {
            return Verdict::new(Label::NoEvidence, 1.0);
        }
        let abstract_words = self.analyzer.term_set(abstract_text);
        let coverage = overlap(&claim_words, &abstract_words) / claim_words.len() as f64;
        if coverage < self.support_coverage {
            return Verdict::new(Label::NoEvidence, 1.0 - coverage);
        }

        // Best-covering sentence; the earliest one wins ties.
        let sentences = split_sentences(abstract_text);
        let matched = sentences
            .iter()
            .map(|s| (overlap(&claim_words, &self.analyzer.term_set(&s.text)), s))
            .fold(None::<(f64, &crate::corpus::SentenceSpan)>, |best, cur| match best {
                Some(b) if b.0 >= cur.0 => Some(b),
                _ => Some(cur),
            })
            .map_or(abstract_text, |(_, s)| s.text.as_str());

        if has_negation(claim) != has_negation(matched) {
            Verdict::new(Label::Contradict, coverage)
        } else {
            Verdict::new(Label::Support, coverage)
        }
    }
}

fn overlap(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    a.intersection(b).count() as f64
}

impl NliBackend for BaselineNli {
    fn name(&self) -> &str {
        "baseline"
    }

    fn classify(&self, request: &NliRequest<'_>) -> Result<Verdict, BackendError> {
        Ok(self.judge(request.hypothesis, request.abstract_text))
    }
}
