//! Error type shared by every model backend seam.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendErrorKind {
    /// Connection refused, reset, DNS failure and similar.
    Transport,
    Timeout,
    /// The backend answered, but the body did not match the wire contract.
    InvalidResponse,
    /// The backend understood the request and refused it.
    Rejected,
}

impl fmt::Display for BackendErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BackendErrorKind::Transport => "transport failure",
            BackendErrorKind::Timeout => "timeout",
            BackendErrorKind::InvalidResponse => "invalid response",
            BackendErrorKind::Rejected => "rejected",
        };
        f.write_str(s)
    }
}

/// A failure reported by (or while talking to) a model backend.
#[derive(Debug, Clone, Error)]
#[error("backend `{backend}`: {kind}: {message}")]
pub struct BackendError {
    pub backend: String,
    pub kind: BackendErrorKind,
    pub message: String,
}

impl BackendError {
    pub fn new(backend: impl Into<String>, kind: BackendErrorKind, message: impl Into<String>) -> Self {
        Self {
            backend: backend.into(),
            kind,
            message: message.into(),
        }
    }

    pub fn transport(backend: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(backend, BackendErrorKind::Transport, message)
    }

    pub fn timeout(backend: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(backend, BackendErrorKind::Timeout, message)
    }

    pub fn invalid_response(backend: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(backend, BackendErrorKind::InvalidResponse, message)
    }

    pub fn rejected(backend: impl Into<String>, message: impl Into<String>) -> Self {
        Self::new(backend, BackendErrorKind::Rejected, message)
    }

    /// Transport failures and timeouts may succeed on a second attempt.
    pub fn is_retryable(&self) -> bool {
        matches!(self.kind, BackendErrorKind::Transport | BackendErrorKind::Timeout)
    }
}

/// How many times a retryable backend call is attempted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3 }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self { max_attempts: 1 }
    }

    /// Runs `call` until it succeeds, fails with a non-retryable error, or the
    /// attempt budget is spent.
    pub fn run<T>(&self, mut call: impl FnMut() -> Result<T, BackendError>) -> Result<T, BackendError> {
        let attempts = self.max_attempts.max(1);
        let mut last = None;
        for _ in 0..attempts {
            match call() {
                Ok(v) => return Ok(v),
                Err(e) if e.is_retryable() => last = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retry_stops_on_non_retryable() {
        let mut calls = 0;
        let r: Result<(), _> = RetryPolicy { max_attempts: 5 }.run(|| {
            calls += 1;
            Err(BackendError::rejected("x", "no"))
        });
        assert!(r.is_err());
        assert_eq!(calls, 1);
    }

    #[test]
    fn retry_spends_budget_on_transport_errors() {
        let mut calls = 0;
        let r: Result<(), _> = RetryPolicy { max_attempts: 3 }.run(|| {
            calls += 1;
            Err(BackendError::transport("x", "reset"))
        });
        assert!(r.unwrap_err().is_retryable());
        assert_eq!(calls, 3);
    }

    #[test]
    fn retry_returns_first_success() {
        let mut calls = 0;
        let r = RetryPolicy::default().run(|| {
            calls += 1;
            if calls < 2 {
                Err(BackendError::timeout("x", "slow"))
            } else {
                Ok(calls)
            }
        });
        assert_eq!(r.unwrap(), 2);
    }
}
