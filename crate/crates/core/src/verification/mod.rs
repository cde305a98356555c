//! Claim verification: one 3-class inference call per (claim, cited document)
//! pair, a claim-level status, and evidence sentences for each cited abstract.

mod baseline;
mod evidence;
mod scripted;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{BackendError, RetryPolicy};
use crate::claims::ParsedAnswer;
use crate::corpus::{Corpus, Document};
use crate::par::{self, Exec};
use crate::text::Analyzer;

pub use baseline::{BaselineNli, DEFAULT_SUPPORT_COVERAGE};
pub use evidence::{
    highlight_evidence, jaccard, numeric_divergence, EvidenceHighlight, HighlightedSentence, NumericDivergence,
    Similarity, DEFAULT_HIGHLIGHT_K,
};
pub use scripted::ScriptedNli;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Label {
    NoEvidence,
    Support,
    Contradict,
}

impl Label {
    /// Class order used by confusion matrices and reports.
    pub const ALL: [Label; 3] = [Label::NoEvidence, Label::Support, Label::Contradict];

    pub fn index(self) -> usize {
        match self {
            Label::NoEvidence => 0,
            Label::Support => 1,
            Label::Contradict => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::NoEvidence => "NO_EVIDENCE",
            Label::Support => "SUPPORT",
            Label::Contradict => "CONTRADICT",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown label `{0}` (expected SUPPORT, CONTRADICT or NO_EVIDENCE)")]
pub struct ParseLabelError(pub String);

impl FromStr for Label {
    type Err = ParseLabelError;

    /// Accepts the canonical names in any case, with `-`, `_` or a space.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().replace(['-', ' '], "_").as_str() {
            "SUPPORT" | "SUPPORTS" => Ok(Label::Support),
            "CONTRADICT" | "CONTRADICTS" => Ok(Label::Contradict),
            "NO_EVIDENCE" | "NOEVIDENCE" | "NOT_ENOUGH_INFO" => Ok(Label::NoEvidence),
            _ => Err(ParseLabelError(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub label: Label,
    pub confidence: f64,
}

impl Verdict {
    pub fn new(label: Label, confidence: f64) -> Self {
        Self { label, confidence }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ClaimStatus {
    Verified,
    FlaggedContradiction,
    FlaggedNoEvidence,
    Unreferenced,
}

impl ClaimStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            ClaimStatus::Verified => "VERIFIED",
            ClaimStatus::FlaggedContradiction => "FLAGGED_CONTRADICTION",
            ClaimStatus::FlaggedNoEvidence => "FLAGGED_NO_EVIDENCE",
            ClaimStatus::Unreferenced => "UNREFERENCED",
        }
    }
}

impl fmt::Display for ClaimStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One inference call. The premise is [`NliRequest::premise`].
#[derive(Debug, Clone, Copy)]
pub struct NliRequest<'a> {
    pub doc_id: &'a str,
    pub title: &'a str,
    pub abstract_text: &'a str,
    pub hypothesis: &'a str,
}

impl NliRequest<'_> {
    pub fn premise(&self) -> String {
        format!("{} {}", self.title, self.abstract_text)
    }
}

/// A 3-class inference model. Special tokens and truncation are the
/// backend's concern.
pub trait NliBackend: Send + Sync {
    fn name(&self) -> &str;

    fn classify(&self, request: &NliRequest<'_>) -> Result<Verdict, BackendError>;
}

#[derive(Debug, Clone, Error)]
pub enum VerificationError {
    #[error("claim text is empty")]
    EmptyClaim,
    #[error("a referenced claim needs at least one verdict")]
    NoVerdicts,
    #[error("verification of claim {claim_index} against doc {doc_id} failed ({completed} pairs completed): {source}")]
    Backend {
        claim_index: usize,
        doc_id: String,
        completed: usize,
        #[source]
        source: BackendError,
    },
    #[error("highlighting claim {claim_index} in doc {doc_id} failed: {source}")]
    Highlight {
        claim_index: usize,
        doc_id: String,
        #[source]
        source: BackendError,
    },
}

/// (hypothesis, premise) for a claim and a document.
pub fn build_nli_input(claim: &str, doc: &Document) -> Result<(String, String), VerificationError> {
    if claim.trim().is_empty() {
        return Err(VerificationError::EmptyClaim);
    }
    Ok((claim.to_string(), format!("{} {}", doc.title, doc.abstract_text)))
}

/// Classifies one pair, retrying transport failures.
pub fn verify_pair(
    backend: &dyn NliBackend,
    claim_index: usize,
    claim: &str,
    doc: &Document,
    retry: RetryPolicy,
) -> Result<Verdict, VerificationError> {
    build_nli_input(claim, doc)?;
    let request = NliRequest {
        doc_id: &doc.doc_id,
        title: &doc.title,
        abstract_text: &doc.abstract_text,
        hypothesis: claim,
    };
    retry
        .run(|| backend.classify(&request))
        .map_err(|source| VerificationError::Backend {
            claim_index,
            doc_id: doc.doc_id.clone(),
            completed: 0,
            source,
        })
}

/// CONTRADICT over SUPPORT over NO_EVIDENCE.
pub fn aggregate_verdicts(verdicts: &[Label], unreferenced: bool) -> Result<ClaimStatus, VerificationError> {
    if unreferenced {
        return Ok(ClaimStatus::Unreferenced);
    }
    if verdicts.is_empty() {
        return Err(VerificationError::NoVerdicts);
    }
    Ok(if verdicts.contains(&Label::Contradict) {
        ClaimStatus::FlaggedContradiction
    } else if verdicts.contains(&Label::Support) {
        ClaimStatus::Verified
    } else {
        ClaimStatus::FlaggedNoEvidence
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceVerdict {
    /// A document id, or `[n]` for an unresolved bracket.
    pub reference: String,
    pub label: Label,
    pub confidence: f64,
    /// The reference is not among the documents the answer was generated from.
    pub unknown_source: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifiedClaim {
    pub text: String,
    pub references: Vec<String>,
    pub unreferenced: bool,
    pub verdicts: Vec<ReferenceVerdict>,
    pub status: ClaimStatus,
    pub highlights: Vec<EvidenceHighlight>,
    pub numeric_warnings: Vec<NumericDivergence>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifiedAnswer {
    pub parsed: ParsedAnswer,
    /// Index-aligned with `parsed.claims`.
    pub claims: Vec<VerifiedClaim>,
}

impl VerifiedAnswer {
    pub fn statuses(&self) -> Vec<ClaimStatus> {
        self.claims.iter().map(|c| c.status).collect()
    }
}

#[derive(Debug, Clone)]
pub struct VerifyOptions<'a> {
    pub exec: Exec,
    pub highlight_k: usize,
    pub similarity: Similarity<'a>,
    pub retry: RetryPolicy,
    /// Sentence coverage above which differing numbers raise a warning.
    pub numeric_coverage: f64,
    pub analyzer: Analyzer,
}

impl Default for VerifyOptions<'_> {
    fn default() -> Self {
        Self {
            exec: Exec::default(),
            highlight_k: DEFAULT_HIGHLIGHT_K,
            similarity: Similarity::Jaccard,
            retry: RetryPolicy::default(),
            numeric_coverage: DEFAULT_SUPPORT_COVERAGE,
            analyzer: Analyzer::default(),
        }
    }
}

struct Job<'c> {
    claim_index: usize,
    text: &'c str,
    doc: &'c Document,
}

struct JobResult {
    verdict: Verdict,
    highlight: EvidenceHighlight,
    warning: Option<NumericDivergence>,
}

/// Verifies every referenced claim of `parsed`.
///
/// References outside the answer's context, ids missing from the corpus and
/// unresolved brackets get NO_EVIDENCE marked `unknown_source` without a
/// backend call. So do references of a claim whose text is empty once the
/// markers are removed.
pub fn verify_answer(
    parsed: &ParsedAnswer,
    corpus: &Corpus,
    backend: &dyn NliBackend,
    options: &VerifyOptions<'_>,
) -> Result<VerifiedAnswer, VerificationError> {
    let mut jobs = Vec::new();
    for (claim_index, claim) in parsed.claims.iter().enumerate() {
        if claim.text.trim().is_empty() {
            continue;
        }
        for reference in &claim.references {
            if parsed.is_unknown(claim_index, reference) {
                continue;
            }
            if let Some(doc) = corpus.get(reference) {
                jobs.push(Job {
                    claim_index,
                    text: &claim.text,
                    doc,
                });
            }
        }
    }

    let run = |job: &Job<'_>| -> Result<JobResult, VerificationError> {
        let verdict = verify_pair(backend, job.claim_index, job.text, job.doc, options.retry)?;
        let highlight = highlight_evidence(
            job.text,
            job.doc,
            options.highlight_k,
            options.similarity,
            &options.analyzer,
        )
        .map_err(|source| VerificationError::Highlight {
            claim_index: job.claim_index,
            doc_id: job.doc.doc_id.clone(),
            source,
        })?;
        let warning = numeric_divergence(job.text, job.doc, options.numeric_coverage, &options.analyzer);
        Ok(JobResult {
            verdict,
            highlight,
            warning,
        })
    };
    let results = par::try_map(options.exec, &jobs, run).map_err(|(e, done)| match e {
        VerificationError::Backend {
            claim_index,
            doc_id,
            source,
            ..
        } => VerificationError::Backend {
            claim_index,
            doc_id,
            completed: done,
            source,
        },
        other => other,
    })?;

    let mut results = jobs.iter().zip(results).peekable();
    let mut claims = Vec::with_capacity(parsed.claims.len());
    for (claim_index, claim) in parsed.claims.iter().enumerate() {
        let mut verified = VerifiedClaim {
            text: claim.text.clone(),
            references: claim.references.clone(),
            unreferenced: claim.unreferenced,
            verdicts: Vec::new(),
            status: ClaimStatus::Unreferenced,
            highlights: Vec::new(),
            numeric_warnings: Vec::new(),
        };
        for reference in &claim.references {
            match results.peek() {
                Some((job, _)) if job.claim_index == claim_index && &job.doc.doc_id == reference => {
                    let (_, r) = results.next().expect("peeked");
                    verified.verdicts.push(ReferenceVerdict {
                        reference: reference.clone(),
                        label: r.verdict.label,
                        confidence: r.verdict.confidence,
                        unknown_source: false,
                    });
                    verified.highlights.push(r.highlight);
                    verified.numeric_warnings.extend(r.warning);
                }
                _ => verified.verdicts.push(unknown_source(reference)),
            }
        }
        verified
            .verdicts
            .extend(claim.unresolved.iter().map(|r| unknown_source(r)));
        let labels: Vec<Label> = verified.verdicts.iter().map(|v| v.label).collect();
        verified.status = aggregate_verdicts(&labels, claim.unreferenced)?;
        claims.push(verified);
    }
    Ok(VerifiedAnswer {
        parsed: parsed.clone(),
        claims,
    })
}

fn unknown_source(reference: &str) -> ReferenceVerdict {
    ReferenceVerdict {
        reference: reference.to_string(),
        label: Label::NoEvidence,
        confidence: 1.0,
        unknown_source: true,
    }
}
