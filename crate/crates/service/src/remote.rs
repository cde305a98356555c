//! Blocking JSON clients for model servers.
//!
//! Wire contracts:
//! - generation: `{prompt, max_new_tokens, repetition_penalty}` -> `{text}`
//! - embedding: `{texts}` -> `{vectors}`
//! - NLI: `{premise, hypothesis}` -> `{label, confidence}`

use std::net::{TcpStream, ToSocketAddrs};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use citeqa_core::backend::{BackendError, RetryPolicy};
use citeqa_core::generation::{GenerationBackend, GenerationParams};
use citeqa_core::retrieval::EmbeddingBackend;
use citeqa_core::verification::{Label, NliBackend, NliRequest, Verdict};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_new_tokens: u32,
    pub repetition_penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResponse {
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingResponse {
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliWireRequest {
    pub premise: String,
    pub hypothesis: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NliWireResponse {
    pub label: String,
    pub confidence: f64,
}

/// Counting semaphore bounding in-flight requests to one backend.
#[derive(Debug)]
pub struct Limiter {
    max: usize,
    used: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a>(&'a Limiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut used = self.0.used.lock().unwrap_or_else(|p| p.into_inner());
        *used -= 1;
        self.0.freed.notify_one();
    }
}

impl Limiter {
    pub fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            used: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut used = self.used.lock().unwrap_or_else(|p| p.into_inner());
        while *used >= self.max {
            used = self.freed.wait(used).unwrap_or_else(|p| p.into_inner());
        }
        *used += 1;
        Permit(self)
    }

    pub fn max(&self) -> usize {
        self.max
    }
}

/// One endpoint URL with its agent and concurrency limit.
#[derive(Debug)]
pub struct HttpEndpoint {
    url: String,
    agent: ureq::Agent,
    limiter: Limiter,
    timeout: Duration,
}

impl HttpEndpoint {
    pub fn new(url: impl Into<String>, timeout: Duration, max_in_flight: usize) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            url: url.into(),
            agent,
            limiter: Limiter::new(max_in_flight),
            timeout,
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    pub fn post<B: Serialize, R: DeserializeOwned>(&self, body: &B) -> Result<R, BackendError> {
        let _permit = self.limiter.acquire();
        let name = self.url.as_str();
        let mut resp = self.agent.post(name).send_json(body).map_err(|e| map_error(name, e))?;
        let status = resp.status();
        if !status.is_success() {
            let text = resp.body_mut().read_to_string().unwrap_or_default();
            let msg = format!(
                "HTTP {}: {}",
                status.as_u16(),
                text.chars().take(200).collect::<String>()
            );
            // server-side trouble may pass; a 4xx will not
            return Err(if status.is_server_error() || status.as_u16() == 429 {
                BackendError::transport(name, msg)
            } else {
                BackendError::rejected(name, msg)
            });
        }
        resp.body_mut().read_json::<R>().map_err(|e| match e {
            ureq::Error::Timeout(_) => BackendError::timeout(name, e.to_string()),
            e => BackendError::invalid_response(name, e.to_string()),
        })
    }

    pub fn reachable(&self) -> bool {
        reachable(&self.url, self.timeout.min(Duration::from_secs(2)))
    }
}

/// Whether a TCP connection to the host of `url` can be opened.
pub fn reachable(url: &str, timeout: Duration) -> bool {
    let Ok(uri) = url.parse::<ureq::http::Uri>() else {
        return false;
    };
    let Some(host) = uri.host() else {
        return false;
    };
    let port = uri
        .port_u16()
        .unwrap_or(if uri.scheme_str() == Some("https") { 443 } else { 80 });
    match (host.trim_matches(['[', ']']), port).to_socket_addrs() {
        Ok(addrs) => addrs
            .into_iter()
            .any(|a| TcpStream::connect_timeout(&a, timeout).is_ok()),
        Err(_) => false,
    }
}

fn map_error(backend: &str, e: ureq::Error) -> BackendError {
    match e {
        ureq::Error::Timeout(_) => BackendError::timeout(backend, e.to_string()),
        ureq::Error::Io(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound => {
            BackendError::transport(backend, e.to_string())
        }
        ureq::Error::BadUri(_) => BackendError::rejected(backend, e.to_string()),
        e => BackendError::transport(backend, e.to_string()),
    }
}

/// Generation over HTTP. Retryable failures are retried here.
#[derive(Debug)]
pub struct RemoteGeneration {
    endpoint: HttpEndpoint,
    retry: RetryPolicy,
}

impl RemoteGeneration {
    pub fn new(endpoint: HttpEndpoint, retry: RetryPolicy) -> Self {
        Self { endpoint, retry }
    }

    pub fn endpoint(&self) -> &HttpEndpoint {
        &self.endpoint
    }
}

impl GenerationBackend for RemoteGeneration {
    fn name(&self) -> &str {
        self.endpoint.url()
    }

    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String, BackendError> {
        let body = GenerationRequest {
            prompt: prompt.to_string(),
            max_new_tokens: params.max_new_tokens,
            repetition_penalty: params.repetition_penalty,
        };
        self.retry
            .run(|| self.endpoint.post::<_, GenerationResponse>(&body))
            .map(|r| r.text)
    }
}

/// Embedding over HTTP; a batch is one request. Retries like generation.
#[derive(Debug)]
pub struct RemoteEmbedding {
    endpoint: HttpEndpoint,
    dimension: usize,
    retry: RetryPolicy,
}

impl RemoteEmbedding {
    pub fn new(endpoint: HttpEndpoint, dimension: usize, retry: RetryPolicy) -> Self {
        Self {
            endpoint,
            dimension,
            retry,
        }
    }

    pub fn endpoint(&self) -> &HttpEndpoint {
        &self.endpoint
    }
}

impl EmbeddingBackend for RemoteEmbedding {
    fn name(&self) -> &str {
        self.endpoint.url()
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, BackendError> {
        let mut v = self.embed_batch(&[text])?;
        Ok(v.remove(0))
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, BackendError> {
        let body = EmbeddingRequest {
            texts: texts.iter().map(|t| t.to_string()).collect(),
        };
        let resp: EmbeddingResponse = self.retry.run(|| self.endpoint.post(&body))?;
        let name = self.endpoint.url();
        if resp.vectors.len() != texts.len() {
            return Err(BackendError::invalid_response(
                name,
                format!("{} vectors for {} texts", resp.vectors.len(), texts.len()),
            ));
        }
        if let Some(v) = resp.vectors.iter().find(|v| v.len() != self.dimension) {
            return Err(BackendError::invalid_response(
                name,
                format!("vector of dimension {}, expected {}", v.len(), self.dimension),
            ));
        }
        Ok(resp.vectors)
    }
}

/// NLI over HTTP. No retries here: verification applies its own policy per
/// pair.
#[derive(Debug)]
pub struct RemoteNli {
    endpoint: HttpEndpoint,
}

impl RemoteNli {
    pub fn new(endpoint: HttpEndpoint) -> Self {
        Self { endpoint }
    }

    pub fn endpoint(&self) -> &HttpEndpoint {
        &self.endpoint
    }
}

impl NliBackend for RemoteNli {
    fn name(&self) -> &str {
        self.endpoint.url()
    }

    fn classify(&self, request: &NliRequest<'_>) -> Result<Verdict, BackendError> {
        let body = NliWireRequest {
            premise: request.premise(),
            hypothesis: request.hypothesis.to_string(),
        };
        let resp: NliWireResponse = self.endpoint.post(&body)?;
        let name = self.endpoint.url();
        let label: Label = resp
            .label
            .parse()
            .map_err(|e: citeqa_core::verification::ParseLabelError| {
                BackendError::invalid_response(name, e.to_string())
            })?;
        if !(0.0..=1.0).contains(&resp.confidence) {
            return Err(BackendError::invalid_response(
                name,
                format!("confidence {} is outside [0, 1]", resp.confidence),
            ));
        }
        Ok(Verdict::new(label, resp.confidence))
    }
}
