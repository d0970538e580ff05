//! Provider-agnostic access to text-generation and embedding endpoints.
//!
//! Everything upstream talks to the [`TextGenerator`] and [`Embedder`]
//! traits. Implementations here: a deterministic scripted [`mock`] provider
//! for offline runs, and an OpenAI-compatible HTTP client (`live` feature)
//! with bounded retries and a persistent response [`cache`].

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub mod cache;
pub mod mock;
#[cfg(feature = "live")]
pub mod openai;

pub use cache::{CacheError, ResponseCache};
pub use mock::{Matcher, MockChoice, MockEmbedder, MockProvider, MockRule, MockScript, TempBand};

#[derive(Debug, Error)]
pub enum GatewayError {
    /// Request violated an input precondition (e.g. empty user prompt).
    #[error("invalid model input: {0}")]
    InvalidInput(String),
    /// The active provider cannot satisfy a requested feature.
    #[error("provider lacks capability: {0}")]
    Capability(String),
    /// Transport-level failure that survived the retry budget.
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    /// The provider answered with a non-retriable error.
    #[error("provider rejected request (status {status}): {message}")]
    Provider { status: u16, message: String },
    /// No scripted rule matched the prompt sent to the mock provider.
    #[error("mock script has no rule matching prompt: {prompt:?}")]
    MockNoRule { prompt: String },
    /// The provider returned a body we could not interpret.
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error(transparent)]
    Cache(#[from] CacheError),
}

/// The (temperature, system message, user prompt) triple sent to a provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInput {
    /// Sampling temperature in provider units; clamped to the active
    /// provider's declared range at dispatch.
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_message: Option<String>,
    pub user_prompt: String,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default)]
    pub request_logprobs: bool,
}

fn default_max_tokens() -> u32 {
    256
}

impl ModelInput {
    pub fn new(user_prompt: impl Into<String>, temperature: f64) -> Self {
        Self {
            temperature,
            system_message: None,
            user_prompt: user_prompt.into(),
            max_tokens: default_max_tokens(),
            request_logprobs: false,
        }
    }

    pub fn with_system_message(mut self, msg: impl Into<String>) -> Self {
        self.system_message = Some(msg.into());
        self
    }

    pub fn with_logprobs(mut self, on: bool) -> Self {
        self.request_logprobs = on;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.user_prompt.is_empty() {
            return Err(GatewayError::InvalidInput("user_prompt is empty".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidInput(format!(
                "temperature must be a finite non-negative number, got {}",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(GatewayError::InvalidInput(
                "max_tokens must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One sampled completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSample {
    pub text: String,
    /// Per-token log-probabilities, when the provider exposes them.
    /// Every entry is ≤ 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<f64>>,
    pub provider_id: String,
    pub variant_index: u64,
}

impl GenerationSample {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if let Some(lp) = &self.token_logprobs {
            if lp.is_empty() {
                return Err(GatewayError::MalformedResponse(
                    "token_logprobs present but empty".into(),
                ));
            }
            if lp.iter().any(|&p| p > 0.0 || p.is_nan()) {
                return Err(GatewayError::MalformedResponse(
                    "token_logprobs must all be ≤ 0".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Declared capabilities and temperature range of a provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderProfile {
    pub name: String,
    pub t_min: f64,
    pub t_max: f64,
    pub supports_system_message: bool,
    pub supports_logprobs: bool,
}

impl ProviderProfile {
    /// GPT-style chat provider: temperature 0.0..=2.0, system messages, no
    /// token logprobs.
    pub fn chat(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            t_min: 0.0,
            t_max: 2.0,
            supports_system_message: true,
            supports_logprobs: false,
        }
    }

    /// Completion-style provider: temperature 0.0..=1.0, no system
    /// messages, token logprobs available.
    pub fn text(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            t_min: 0.0,
            t_max: 1.0,
            supports_system_message: false,
            supports_logprobs: true,
        }
    }

    pub fn with_logprobs(mut self, on: bool) -> Self {
        self.supports_logprobs = on;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.t_min >= self.t_max {
            return Err(GatewayError::InvalidInput(format!(
                "profile {}: t_min ({}) must be < t_max ({})",
                self.name, self.t_min, self.t_max
            )));
        }
        Ok(())
    }

    /// The temperature actually dispatched for a requested temperature `t`:
    /// `min(max(t, t_min), t_max)`.
    pub fn clamp_temperature(&self, t: f64) -> f64 {
        t.clamp(self.t_min, self.t_max)
    }
}

/// A text-generation provider.
///
/// `ordinal` distinguishes repeated samples of the same input: the mock
/// provider derives its per-call RNG from `(script seed, input, ordinal)`,
/// and the response cache keys on `(provider, input, ordinal)`, so repeated
/// sampling yields distinct cached draws. Implementations must be safe to
/// call concurrently.
pub trait TextGenerator: Send + Sync {
    fn profile(&self) -> &ProviderProfile;

    fn generate(&self, input: &ModelInput, ordinal: u64) -> Result<GenerationSample, GatewayError>;

    /// Ask a follow-up question about an answer the model just gave.
    ///
    /// Chat providers send this as a fourth turn (system, user, assistant,
    /// user); the default flattens the exchange into a single prompt, which
    /// is how completion-style providers are driven.
    fn generate_followup(
        &self,
        input: &ModelInput,
        prior_answer: &str,
        followup: &str,
        ordinal: u64,
    ) -> Result<GenerationSample, GatewayError> {
        let mut flat = input.clone();
        flat.user_prompt = format!("{}\n{}\n{}", input.user_prompt, prior_answer, followup);
        flat.request_logprobs = false;
        self.generate(&flat, ordinal)
    }
}

/// A text-embedding endpoint. Deterministic for identical text within one
/// endpoint version.
pub trait Embedder: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, GatewayError>;
}

/// Content hash identifying one generation request: provider, full input,
/// and the sample ordinal.
pub fn request_hash(provider: &str, input: &ModelInput, ordinal: u64) -> String {
    let mut hasher = Sha256::new();
    hasher.update(provider.as_bytes());
    hasher.update([0]);
    let body = serde_json::to_string(input).expect("ModelInput serializes");
    hasher.update(body.as_bytes());
    hasher.update([0]);
    hasher.update(ordinal.to_le_bytes());
    hex::encode(hasher.finalize())
}

/// Wraps any generator and counts calls; used by tests and the CLI to audit
/// the per-example call budget.
pub struct CountingGenerator<'a> {
    inner: &'a dyn TextGenerator,
    calls: AtomicU64,
}

impl<'a> CountingGenerator<'a> {
    pub fn new(inner: &'a dyn TextGenerator) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl TextGenerator for CountingGenerator<'_> {
    fn profile(&self) -> &ProviderProfile {
        self.inner.profile()
    }

    fn generate(&self, input: &ModelInput, ordinal: u64) -> Result<GenerationSample, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.generate(input, ordinal)
    }

    fn generate_followup(
        &self,
        input: &ModelInput,
        prior_answer: &str,
        followup: &str,
        ordinal: u64,
    ) -> Result<GenerationSample, GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner
            .generate_followup(input, prior_answer, followup, ordinal)
    }
}
