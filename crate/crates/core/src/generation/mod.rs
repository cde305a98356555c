//! Prompt assembly, context packing and the text-generation seam.

mod template;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendError;
use crate::corpus::{Corpus, Document};
use crate::retrieval::ScoredHit;

pub use template::{PromptTemplate, DATASET_TEMPLATE, INFERENCE_TEMPLATE};

pub const DEFAULT_MAX_NEW_TOKENS: u32 = 1000;
pub const DEFAULT_REPETITION_PENALTY: f64 = 1.1;
/// Prompt budget for a 8k-token window with room for 1000 generated tokens.
pub const DEFAULT_CONTEXT_TOKEN_BUDGET: usize = 7000;

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("no documents to put in the prompt")]
    NoDocuments,
    #[error("oversized context: prompt with only the best document needs {needed} tokens, budget is {budget}")]
    OversizedContext { needed: usize, budget: usize },
    #[error("prompt needs {needed} tokens, budget is {budget}")]
    PromptOverBudget { needed: usize, budget: usize },
    #[error("retrieved document `{0}` is not in the corpus")]
    UnknownDocument(String),
    #[error("generation backend `{backend}` returned an empty answer")]
    EmptyAnswer { backend: String },
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("template: {0}")]
    Template(String),
}

impl GenerationError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, GenerationError::Backend(e) if e.is_retryable())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub max_new_tokens: u32,
    pub repetition_penalty: f64,
    pub context_token_budget: usize,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
            repetition_penalty: DEFAULT_REPETITION_PENALTY,
            context_token_budget: DEFAULT_CONTEXT_TOKEN_BUDGET,
        }
    }
}

impl GenerationParams {
    pub fn validate(&self) -> Result<(), GenerationError> {
        if self.max_new_tokens == 0 {
            return Err(GenerationError::InvalidParams("max_new_tokens must be positive".into()));
        }
        if !self.repetition_penalty.is_finite() || self.repetition_penalty <= 0.0 {
            return Err(GenerationError::InvalidParams(
                "repetition_penalty must be a positive number".into(),
            ));
        }
        if self.context_token_budget == 0 {
            return Err(GenerationError::InvalidParams(
                "context_token_budget must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Completes a prompt.
pub trait GenerationBackend: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String, BackendError>;
}

/// Returns a canned answer regardless of the prompt.
#[derive(Debug, Clone)]
pub struct ScriptedGeneration {
    answer: String,
}

impl ScriptedGeneration {
    pub fn new(answer: impl Into<String>) -> Self {
        Self { answer: answer.into() }
    }
}

impl GenerationBackend for ScriptedGeneration {
    fn name(&self) -> &str {
        "scripted"
    }

    fn complete(&self, _prompt: &str, _params: &GenerationParams) -> Result<String, BackendError> {
        Ok(self.answer.clone())
    }
}

/// Token estimate used for budgeting: `ceil(chars / 4)`.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

fn prompt_chars(template: &PromptTemplate, question: &str, docs: &[&Document]) -> usize {
    let mut n = template.instruction.chars().count() + 1;
    for (i, d) in docs.iter().enumerate() {
        n += template.render_document(i + 1, d).chars().count() + 1;
    }
    n + template.render_question(question).chars().count()
}

/// Takes the longest prefix of `hits` whose rendered prompt fits `budget`
/// tokens. The ranking order is kept and nothing is skipped.
pub fn pack_context<'c>(
    hits: &[ScoredHit],
    corpus: &'c Corpus,
    template: &PromptTemplate,
    question: &str,
    budget: usize,
) -> Result<Vec<&'c Document>, GenerationError> {
    let base = template.instruction.chars().count() + 1 + template.render_question(question).chars().count();
    let mut chars = base;
    let mut packed = Vec::new();
    for hit in hits {
        let doc = corpus
            .get(&hit.doc_id)
            .ok_or_else(|| GenerationError::UnknownDocument(hit.doc_id.clone()))?;
        let block = template.render_document(packed.len() + 1, doc).chars().count() + 1;
        if (chars + block).div_ceil(4) > budget {
            if packed.is_empty() {
                return Err(GenerationError::OversizedContext {
                    needed: (chars + block).div_ceil(4),
                    budget,
                });
            }
            break;
        }
        chars += block;
        packed.push(doc);
    }
    if packed.is_empty() {
        return Err(GenerationError::NoDocuments);
    }
    debug_assert_eq!(chars, prompt_chars(template, question, &packed));
    Ok(packed)
}

/// Renders the full prompt: instruction, one block per document, question.
pub fn build_prompt(question: &str, docs: &[&Document], template: &PromptTemplate) -> Result<String, GenerationError> {
    if docs.is_empty() {
        return Err(GenerationError::NoDocuments);
    }
    let mut prompt = String::with_capacity(prompt_chars(template, question, docs));
    prompt.push_str(&template.instruction);
    prompt.push('\n');
    for (i, d) in docs.iter().enumerate() {
        prompt.push_str(&template.render_document(i + 1, d));
        prompt.push('\n');
    }
    prompt.push_str(&template.render_question(question));
    Ok(prompt)
}

/// Calls the backend and returns its output with trailing whitespace removed.
pub fn generate_answer(
    backend: &dyn GenerationBackend,
    prompt: &str,
    params: &GenerationParams,
) -> Result<String, GenerationError> {
    params.validate()?;
    let needed = estimate_tokens(prompt);
    if needed > params.context_token_budget {
        return Err(GenerationError::PromptOverBudget {
            needed,
            budget: params.context_token_budget,
        });
    }
    let text = backend.complete(prompt, params)?;
    let text = text.trim_end();
    if text.trim().is_empty() {
        return Err(GenerationError::EmptyAnswer {
            backend: backend.name().to_string(),
        });
    }
    Ok(text.to_string())
}
