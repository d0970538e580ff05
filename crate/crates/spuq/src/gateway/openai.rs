//! OpenAI-compatible chat-completions client.
//!
//! One wire schema covers every live provider: chat providers get proper
//! message turns; completion-style providers (profile without system
//! message support) get the system message folded into the user prompt.
//! Transport failures and 429s are retried with exponential backoff;
//! responses are cached on disk when a cache is attached.

use std::thread;
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::cache::CachedRequest;
use super::{
    request_hash, GatewayError, GenerationSample, ModelInput, ProviderProfile, ResponseCache,
};
use super::{Embedder, TextGenerator};

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

/// Runs `call` up to `policy.attempts` times, backing off exponentially
/// between attempts. Only errors the caller marks retriable are retried.
pub fn with_retries<T>(
    policy: RetryPolicy,
    mut call: impl FnMut() -> Result<T, (bool, String)>,
) -> Result<T, GatewayError> {
    let mut backoff = policy.initial_backoff;
    let mut last = String::new();
    for attempt in 1..=policy.attempts {
        match call() {
            Ok(v) => return Ok(v),
            Err((retriable, message)) => {
                if !retriable {
                    return Err(GatewayError::Transport {
                        attempts: attempt,
                        message,
                    });
                }
                last = message;
                if attempt < policy.attempts {
                    thread::sleep(backoff);
                    backoff *= 2;
                }
            }
        }
    }
    Err(GatewayError::Transport {
        attempts: policy.attempts,
        message: last,
    })
}

pub struct OpenAiClient {
    endpoint: String,
    api_key: Option<String>,
    model: String,
    profile: ProviderProfile,
    retry: RetryPolicy,
    cache: Option<ResponseCache>,
    http: reqwest::blocking::Client,
}

impl OpenAiClient {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        profile: ProviderProfile,
    ) -> Self {
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            api_key,
            model: model.into(),
            profile,
            retry: RetryPolicy::default(),
            cache: None,
            http: reqwest::blocking::Client::new(),
        }
    }

    pub fn with_cache(mut self, cache: Option<ResponseCache>) -> Self {
        self.cache = cache;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn messages_for(&self, input: &ModelInput) -> Vec<serde_json::Value> {
        let mut messages = Vec::new();
        let system = input.system_message.as_deref().filter(|s| !s.is_empty());
        if self.profile.supports_system_message {
            if let Some(system) = system {
                messages.push(json!({ "role": "system", "content": system }));
            }
            messages.push(json!({ "role": "user", "content": input.user_prompt }));
        } else {
            // Completion-style adapter: concatenate system and user prompt.
            let content = match system {
                Some(system) => format!("{system}\n\n{}", input.user_prompt),
                None => input.user_prompt.clone(),
            };
            messages.push(json!({ "role": "user", "content": content }));
        }
        messages
    }

    fn post_chat(
        &self,
        input: &ModelInput,
        messages: Vec<serde_json::Value>,
        ordinal: u64,
    ) -> Result<GenerationSample, GatewayError> {
        input.validate()?;
        if input.request_logprobs && !self.profile.supports_logprobs {
            return Err(GatewayError::Capability("logprobs".into()));
        }

        let mut body = json!({
            "model": self.model,
            "messages": messages,
            "temperature": self.profile.clamp_temperature(input.temperature),
            "max_tokens": input.max_tokens,
        });
        if input.request_logprobs {
            body["logprobs"] = json!(true);
        }

        let hash = request_hash(&self.profile.name, input, ordinal);
        if let Some(cache) = &self.cache {
            match cache.lookup(&hash) {
                Ok(Some(sample)) => return Ok(sample),
                Ok(None) => {}
                // A corrupt entry is skipped and regenerated, never reused.
                Err(e) => log::warn!("{e}; regenerating"),
            }
        }

        let url = format!("{}/chat/completions", self.endpoint);
        let text = with_retries(self.retry, || {
            let mut req = self.http.post(&url).json(&body);
            if let Some(key) = &self.api_key {
                req = req.bearer_auth(key);
            }
            let resp = req.send().map_err(|e| (true, e.to_string()))?;
            let status = resp.status();
            let text = resp.text().map_err(|e| (true, e.to_string()))?;
            if status.as_u16() == 429 {
                return Err((true, format!("429: {text}")));
            }
            if !status.is_success() {
                return Err((false, format!("{}: {text}", status.as_u16())));
            }
            Ok(text)
        })?;

        let parsed: ChatCompletionResponse = serde_json::from_str(&text)
            .map_err(|e| GatewayError::MalformedResponse(format!("{e}; body: {text}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| GatewayError::MalformedResponse("no choices in response".into()))?;
        let token_logprobs = choice
            .logprobs
            .and_then(|lp| lp.content)
            .map(|items| {
                items
                    .into_iter()
                    .map(|i| i.logprob.min(0.0))
                    .collect::<Vec<f64>>()
            })
            .filter(|v| !v.is_empty());
        let sample = GenerationSample {
            text: choice.message.content.unwrap_or_default(),
            token_logprobs: if input.request_logprobs {
                token_logprobs
            } else {
                None
            },
            provider_id: self.profile.name.clone(),
            variant_index: ordinal,
        };

        if let Some(cache) = &self.cache {
            let request = CachedRequest {
                provider: self.profile.name.clone(),
                input: input.clone(),
                ordinal,
            };
            if let Err(e) = cache.store(&hash, request, &sample) {
                log::warn!("cache store failed: {e}");
            }
        }
        Ok(sample)
    }
}

impl TextGenerator for OpenAiClient {
    fn profile(&self) -> &ProviderProfile {
        &self.profile
    }

    fn generate(&self, input: &ModelInput, ordinal: u64) -> Result<GenerationSample, GatewayError> {
        self.post_chat(input, self.messages_for(input), ordinal)
    }

    fn generate_followup(
        &self,
        input: &ModelInput,
        prior_answer: &str,
        followup: &str,
        ordinal: u64,
    ) -> Result<GenerationSample, GatewayError> {
        if self.profile.supports_system_message {
            let mut messages = self.messages_for(input);
            messages.push(json!({ "role": "assistant", "content": prior_answer }));
            messages.push(json!({ "role": "user", "content": followup }));
            let mut turn = input.clone();
            turn.user_prompt = format!("{}\n{}\n{}", input.user_prompt, prior_answer, followup);
            turn.request_logprobs = false;
            self.post_chat(&turn, messages, ordinal)
        } else {
            let mut flat = input.clone();
            flat.user_prompt = format!("{}\n{}\n{}", input.user_prompt, prior_answer, followup);
            flat.request_logprobs = false;
            self.generate(&flat, ordinal)
        }
    }
}

#[derive(Debug, Deserialize)]
struct ChatCompletionResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Debug, Deserialize)]
struct ChatChoice {
    message: ChatMessage,
    #[serde(default)]
    logprobs: Option<ChoiceLogprobs>,
}

#[derive(Debug, Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ChoiceLogprobs {
    #[serde(default)]
    content: Option<Vec<TokenLogprob>>,
}

#[derive(Debug, Deserialize)]
struct TokenLogprob {
    logprob: f64,
}

/// OpenAI-compatible `/embeddings` client.
pub struct EmbeddingClient {
    endpoint: String,
    api_key: Option<String>,
    model: String,
    http: reqwest::blocking::Client,
}

impl EmbeddingClient {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
    ) -> Self {
        Self {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            api_key,
            model: model.into(),
            http: reqwest::blocking::Client::new(),
        }
    }
}

impl Embedder for EmbeddingClient {
    fn embed(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        let url = format!("{}/embeddings", self.endpoint);
        let body = json!({ "model": self.model, "input": text });
        let mut req = self.http.post(&url).json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| GatewayError::Transport {
            attempts: 1,
            message: e.to_string(),
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| GatewayError::Transport {
            attempts: 1,
            message: e.to_string(),
        })?;
        if !status.is_success() {
            return Err(GatewayError::Provider {
                status: status.as_u16(),
                message: text,
            });
        }
        #[derive(Deserialize)]
        struct EmbeddingResponse {
            data: Vec<EmbeddingDatum>,
        }
        #[derive(Deserialize)]
        struct EmbeddingDatum {
            embedding: Vec<f64>,
        }
        let parsed: EmbeddingResponse = serde_json::from_str(&text)
            .map_err(|e| GatewayError::MalformedResponse(e.to_string()))?;
        parsed
            .data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| GatewayError::MalformedResponse("no embedding in response".into()))
    }
}
