//! Run configuration files (TOML): providers, request shape, pipeline
//! settings, perturbation pools, cache and embedding endpoints.
//!
//! Precedence is config file over built-in defaults, command-line flags
//! over the config file. API keys are never stored in the file — only the
//! name of the environment variable holding them (`SPUQ_API_KEY` by
//! default).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::SpuqConfig;
use crate::gateway::cache::ResponseCache;
use crate::gateway::{
    Embedder, GatewayError, MockEmbedder, MockProvider, MockScript, ProviderProfile, TextGenerator,
};
use crate::harness::RequestSettings;
use crate::perturb::PerturbationSets;
use crate::tuner::TuningSpec;

pub const DEFAULT_API_KEY_ENV: &str = "SPUQ_API_KEY";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Validation(String),
    #[error("config defines no provider named {0:?}")]
    UnknownProvider(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// Scripted offline mock.
    Mock,
    /// Any OpenAI-compatible chat-completions endpoint.
    Openai,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub t_min: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_true")]
    pub supports_system_message: bool,
    #[serde(default)]
    pub supports_logprobs: bool,
    /// Required for mock providers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<MockScript>,
}

fn default_t_max() -> f64 {
    2.0
}

fn default_true() -> bool {
    true
}

impl ProviderConfig {
    pub fn profile(&self, name: &str) -> ProviderProfile {
        ProviderProfile {
            name: name.to_string(),
            t_min: self.t_min,
            t_max: self.t_max,
            supports_system_message: self.supports_system_message,
            supports_logprobs: self.supports_logprobs,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CacheConfig {
    pub dir: Option<PathBuf>,
    pub disabled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingKind {
    Mock,
    Openai,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub kind: EmbeddingKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Which provider to use when several are configured.
    pub default_provider: Option<String>,
    pub providers: BTreeMap<String, ProviderConfig>,
    /// Name of the provider used for paraphrasing (defaults to the active
    /// provider).
    pub paraphraser: Option<String>,
    pub request: RequestSettings,
    pub spuq: SpuqConfig,
    pub sets: PerturbationSets,
    pub cache: CacheConfig,
    pub embedding: Option<EmbeddingConfig>,
    /// Grid-search settings for the `tune` subcommand.
    pub tuning: Option<TuningSpec>,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: RunConfig = toml::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, provider) in &self.providers {
            if provider.t_min >= provider.t_max {
                return Err(ConfigError::Validation(format!(
                    "provider {name}: t_min must be < t_max"
                )));
            }
            match provider.kind {
                ProviderKind::Mock => {
                    let script = provider.script.as_ref().ok_or_else(|| {
                        ConfigError::Validation(format!("mock provider {name} needs a script"))
                    })?;
                    script.validate()?;
                }
                ProviderKind::Openai => {
                    if provider.endpoint.is_none() {
                        return Err(ConfigError::Validation(format!(
                            "openai provider {name} needs an endpoint"
                        )));
                    }
                    if provider.model.is_none() {
                        return Err(ConfigError::Validation(format!(
                            "openai provider {name} needs a model"
                        )));
                    }
                }
            }
        }
        if let Some(name) = &self.default_provider {
            if !self.providers.contains_key(name) {
                return Err(ConfigError::UnknownProvider(name.clone()));
            }
        }
        if let Some(name) = &self.paraphraser {
            if !self.providers.contains_key(name) {
                return Err(ConfigError::UnknownProvider(name.clone()));
            }
        }
        Ok(())
    }

    /// The provider selected by `--provider`, the config default, or the
    /// sole configured provider.
    pub fn resolve_provider_name(&self, flag: Option<&str>) -> Result<String, ConfigError> {
        if let Some(name) = flag {
            return if self.providers.contains_key(name) {
                Ok(name.to_string())
            } else {
                Err(ConfigError::UnknownProvider(name.to_string()))
            };
        }
        if let Some(name) = &self.default_provider {
            return Ok(name.clone());
        }
        match self.providers.len() {
            1 => Ok(self.providers.keys().next().unwrap().clone()),
            0 => Err(ConfigError::Validation(
                "config defines no providers".into(),
            )),
            _ => Err(ConfigError::Validation(
                "several providers configured; pick one with --provider or default_provider".into(),
            )),
        }
    }

    /// Instantiates a configured provider.
    pub fn build_provider(&self, name: &str) -> Result<Box<dyn TextGenerator>, ConfigError> {
        let config = self
            .providers
            .get(name)
            .ok_or_else(|| ConfigError::UnknownProvider(name.to_string()))?;
        let profile = config.profile(name);
        match config.kind {
            ProviderKind::Mock => {
                let script = config.script.clone().expect("validated");
                Ok(Box::new(MockProvider::new(script, profile)))
            }
            ProviderKind::Openai => {
                #[cfg(feature = "live")]
                {
                    let api_key =
                        std::env::var(config.api_key_env.as_deref().unwrap_or(DEFAULT_API_KEY_ENV))
                            .ok();
                    let cache = self.open_cache()?;
                    Ok(Box::new(
                        crate::gateway::openai::OpenAiClient::new(
                            config.endpoint.clone().expect("validated"),
                            config.model.clone().expect("validated"),
                            api_key,
                            profile,
                        )
                        .with_cache(cache),
                    ))
                }
                #[cfg(not(feature = "live"))]
                {
                    Err(ConfigError::Validation(
                        "live providers need the `live` feature".into(),
                    ))
                }
            }
        }
    }

    /// Opens the response cache configured here or via `SPUQ_CACHE_DIR`.
    pub fn open_cache(&self) -> Result<Option<ResponseCache>, ConfigError> {
        if self.cache.disabled {
            return Ok(None);
        }
        if let Some(dir) = &self.cache.dir {
            return Ok(Some(ResponseCache::open(dir).map_err(GatewayError::from)?));
        }
        Ok(ResponseCache::from_env().map_err(GatewayError::from)?)
    }

    pub fn build_embedder(&self) -> Result<Option<Box<dyn Embedder>>, ConfigError> {
        let Some(embedding) = &self.embedding else {
            return Ok(None);
        };
        match embedding.kind {
            EmbeddingKind::Mock => Ok(Some(Box::new(MockEmbedder::default()))),
            EmbeddingKind::Openai => {
                #[cfg(feature = "live")]
                {
                    let endpoint = embedding.endpoint.clone().ok_or_else(|| {
                        ConfigError::Validation("embedding endpoint missing".into())
                    })?;
                    let model = embedding
                        .model
                        .clone()
                        .ok_or_else(|| ConfigError::Validation("embedding model missing".into()))?;
                    let api_key = std::env::var(
                        embedding
                            .api_key_env
                            .as_deref()
                            .unwrap_or(DEFAULT_API_KEY_ENV),
                    )
                    .ok();
                    Ok(Some(Box::new(
                        crate::gateway::openai::EmbeddingClient::new(endpoint, model, api_key),
                    )))
                }
                #[cfg(not(feature = "live"))]
                {
                    Err(ConfigError::Validation(
                        "live embedding endpoints need the `live` feature".into(),
                    ))
                }
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::{AggregationConfig, WeightScheme};
    use crate::perturb::{PromptMode, TemperatureMode};
    use crate::similarity::SimilarityMetric;

    const SAMPLE: &str = r#"
default_provider = "mock"

[providers.mock]
kind = "mock"
t_min = 0.0
t_max = 2.0
supports_logprobs = true

[providers.mock.script]
seed = 13

[[providers.mock.script.rules]]
match = { exact = "Will it rain?" }
respond = [{ text = "No" }]

[[providers.mock.script.rules]]
match = "any"
respond = [{ text = "Yes", weight = 0.5 }, { text = "No", weight = 0.5 }]

[request]
temperature = 0.7
max_tokens = 128

[spuq]
seed = 7

[spuq.perturbation]
k = 4
temperature_mode = { fixed_offset = 0.3 }
prompt_mode = "dummy_tokens"

[spuq.aggregation]
mode = "inter_sample"
metric = { kind = "exact_match" }
weights = "uniform"
"#;

    #[test]
    fn parses_a_full_config() {
        let config: RunConfig = toml::from_str(SAMPLE).unwrap();
        config.validate().unwrap();
        assert_eq!(config.resolve_provider_name(None).unwrap(), "mock");
        assert_eq!(config.spuq.perturbation.k, 4);
        assert_eq!(
            config.spuq.perturbation.temperature_mode,
            TemperatureMode::FixedOffset(0.3)
        );
        assert_eq!(
            config.spuq.perturbation.prompt_mode,
            PromptMode::DummyTokens
        );
        assert_eq!(
            config.spuq.aggregation,
            AggregationConfig::InterSample {
                metric: SimilarityMetric::exact_match(),
                weights: WeightScheme::Uniform,
            }
        );
        assert_eq!(config.request.max_tokens, 128);

        let provider = config.build_provider("mock").unwrap();
        let sample = provider
            .generate(&crate::gateway::ModelInput::new("Will it rain?", 0.7), 0)
            .unwrap();
        assert_eq!(sample.text, "No");
    }

    #[test]
    fn config_round_trips_through_toml() {
        let config: RunConfig = toml::from_str(SAMPLE).unwrap();
        let text = config.to_toml();
        let reparsed: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(config, reparsed);
    }

    #[test]
    fn perturbation_pools_are_overridable() {
        let text = format!(
            "{SAMPLE}\n{}",
            r#"
[sets]
system_messages = ["", "Answer tersely"]

[[sets.dummy_tokens]]
text = "~"
placement = "append"
"#
        );
        let config: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(
            config.sets.system_messages,
            vec!["".to_string(), "Answer tersely".into()]
        );
        assert_eq!(config.sets.dummy_tokens.len(), 1);
        assert_eq!(config.sets.dummy_tokens[0].text, "~");
    }

    #[test]
    fn mock_without_script_is_invalid() {
        let text = r#"
[providers.bad]
kind = "mock"
"#;
        let config: RunConfig = toml::from_str(text).unwrap();
        assert!(matches!(config.validate(), Err(ConfigError::Validation(_))));
    }

    #[test]
    fn unknown_provider_flag_is_rejected() {
        let config: RunConfig = toml::from_str(SAMPLE).unwrap();
        assert!(matches!(
            config.resolve_provider_name(Some("nope")),
            Err(ConfigError::UnknownProvider(_))
        ));
    }
}
