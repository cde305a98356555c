//! Referenced question answering over a collection of scientific abstracts.
//!
//! The pipeline is split into small modules that can be used on their own:
//!
//! - [`corpus`]: loading abstract records and sentence segmentation
//! - [`retrieval`]: BM25 lexical index, dense vector index and score fusion
//! - [`generation`]: prompt templates, context packing and the generation seam
//! - [`claims`]: parsing a generated answer into cited claims
//! - [`verification`]: per-reference inference verdicts and claim status
//! - [`scifact`]: claim-verification dataset handling and P/R/F1 reports
//! - [`feedback`]: user corrections and training-data export
//!
//! Model inference is always behind a trait ([`retrieval::EmbeddingBackend`],
//! [`generation::GenerationBackend`], [`verification::NliBackend`]); the crate
//! ships deterministic implementations of each for offline use.

pub mod backend;
pub mod claims;
pub mod corpus;
pub mod feedback;
pub mod generation;
pub mod par;
pub mod retrieval;
pub mod scifact;
pub mod text;
pub mod verification;

pub use backend::BackendError;
pub use corpus::{Corpus, Document, SentenceSpan};
pub use verification::Label;
