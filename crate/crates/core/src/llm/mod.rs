//! Chat-completion access: the backend contract, an HTTP client for
//! `/v1/chat/completions`-compatible servers, a scripted backend for tests,
//! token budgets and cost estimation.

mod budget;
mod http;
mod pricing;
mod scripted;

use std::iter::Sum;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use budget::BudgetedBackend;
pub use http::{HttpBackend, HttpConfig, API_KEY_ENV};
pub use pricing::{estimate_cost, ModelPrice, PricingTable};
pub use scripted::{Matcher, Rule, Script, ScriptedBackend};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub max_tokens: u32,
    pub temperature: f64,
    pub model: String,
}

impl ChatRequest {
    pub fn new(
        system: impl Into<String>,
        user: impl Into<String>,
        max_tokens: u32,
        model: impl Into<String>,
    ) -> Result<Self, LlmError> {
        let req = ChatRequest {
            system: system.into(),
            user: user.into(),
            max_tokens,
            temperature: 0.0,
            model: model.into(),
        };
        if req.system.trim().is_empty() || req.user.trim().is_empty() {
            return Err(LlmError::InvalidRequest(
                "system and user prompts must be non-empty".into(),
            ));
        }
        if req.max_tokens == 0 {
            return Err(LlmError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(req)
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature.max(0.0);
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Usage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl Usage {
    pub fn new(input_tokens: u64, output_tokens: u64) -> Self {
        Usage {
            input_tokens,
            output_tokens,
        }
    }

    pub fn total(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }
}

impl Add for Usage {
    type Output = Usage;

    fn add(self, rhs: Usage) -> Usage {
        Usage::new(
            self.input_tokens + rhs.input_tokens,
            self.output_tokens + rhs.output_tokens,
        )
    }
}

impl AddAssign for Usage {
    fn add_assign(&mut self, rhs: Usage) {
        *self = *self + rhs;
    }
}

impl Sum for Usage {
    fn sum<I: Iterator<Item = Usage>>(iter: I) -> Usage {
        iter.fold(Usage::default(), Add::add)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatResponse {
    pub text: String,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlmError {
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("server answered {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed completion response: {0}")]
    Malformed(String),
    #[error("no script rule matches request (system starts {system:?})")]
    NoScriptMatch { system: String },
    #[error("token budget exceeded: {used} used + {requested} requested > {budget}")]
    BudgetExceeded {
        used: u64,
        requested: u64,
        budget: u64,
    },
    #[error("unknown model {0:?} in pricing table")]
    UnknownModel(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

impl LlmError {
    /// Whether the error means the backend cannot serve further requests.
    pub fn is_exhaustion(&self) -> bool {
        matches!(
            self,
            LlmError::BudgetExceeded { .. } | LlmError::Transport { .. }
        )
    }
}

/// A chat-completion backend. Implementations must accept concurrent calls.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError>;
}

impl<F> ChatBackend for F
where
    F: Fn(&ChatRequest) -> Result<ChatResponse, LlmError> + Send + Sync,
{
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        self(req)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for std::sync::Arc<B> {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (**self).complete(req)
    }
}
