//! Input perturbation: derive k meaning-preserving variants (Tᵢ, xᵢ) of an
//! original input (T₀, x₀).
//!
//! Temperature can be shifted by a fixed offset or redrawn uniformly from
//! the provider's range; prompts can be paraphrased (one LLM call yields
//! all k paraphrases), affixed with dummy tokens, or given a swapped
//! system message. Each variant carries a prompt weight s(x₀, xᵢ) used by
//! inter-sample aggregation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{GatewayError, ModelInput, ProviderProfile, TextGenerator};
use crate::similarity::{SimilarityError, TextSimilarity};

/// Temperature the paraphraser itself is queried at.
pub const PARAPHRASER_TEMPERATURE: f64 = 0.7;

/// Fixed-offset grid used by the default tuning search.
pub const OFFSET_GRID: [f64; 4] = [0.3, 0.6, 1.0, 1.3];

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error("invalid perturbation config: {0}")]
    InvalidConfig(String),
    #[error("provider lacks capability: {0}")]
    Capability(String),
    /// The paraphraser produced unusable output on both attempts.
    #[error("paraphraser returned unusable output after one retry; raw response: {raw:?}")]
    Paraphrase { raw: String },
    /// The batch is usable but some paraphrase slots fell back to
    /// dummy-token variants. Carries the full k-variant batch so callers
    /// can accept it explicitly.
    #[error("paraphraser came up short; indices {fallback_indices:?} fell back to dummy tokens")]
    DegradedParaphrase {
        variants: Vec<PerturbedVariant>,
        fallback_indices: Vec<usize>,
        raw: String,
    },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemperatureMode {
    None,
    /// Tᵢ = clamp(T₀ + Δ).
    FixedOffset(f64),
    /// Tᵢ drawn uniformly from the provider's full [t_min, t_max].
    RandomUniform,
}

impl std::fmt::Display for TemperatureMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TemperatureMode::None => write!(f, "none"),
            TemperatureMode::FixedOffset(d) => write!(f, "{d:+}"),
            TemperatureMode::RandomUniform => write!(f, "random_uniform"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    None,
    Paraphrasing,
    DummyTokens,
    SystemMessages,
}

impl std::fmt::Display for PromptMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PromptMode::None => "none",
            PromptMode::Paraphrasing => "paraphrasing",
            PromptMode::DummyTokens => "dummy_tokens",
            PromptMode::SystemMessages => "system_messages",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationConfig {
    pub k: usize,
    pub temperature_mode: TemperatureMode,
    pub prompt_mode: PromptMode,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        Self {
            k: 5,
            temperature_mode: TemperatureMode::FixedOffset(0.3),
            prompt_mode: PromptMode::Paraphrasing,
        }
    }
}

impl PerturbationConfig {
    pub fn validate(&self) -> Result<(), PerturbError> {
        if self.k < 1 {
            return Err(PerturbError::InvalidConfig("k must be ≥ 1".into()));
        }
        if self.temperature_mode == TemperatureMode::None && self.prompt_mode == PromptMode::None {
            return Err(PerturbError::InvalidConfig(
                "at least one of temperature_mode, prompt_mode must be active".into(),
            ));
        }
        Ok(())
    }
}

/// A perturbed input plus its prompt weight wᵢ = s(x₀, xᵢ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedVariant {
    /// 1-based variant index in [1, k]; index 0 is the original.
    pub index: usize,
    pub input: ModelInput,
    pub prompt_weight: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Prepend,
    Append,
    Either,
}

/// A meaning-preserving affix token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DummyToken {
    pub text: String,
    pub placement: Placement,
    /// Only applied when the prompt is a question (ends with '?').
    #[serde(default)]
    pub questions_only: bool,
}

impl DummyToken {
    fn new(text: &str, placement: Placement) -> Self {
        Self {
            text: text.into(),
            placement,
            questions_only: false,
        }
    }
}

/// The configurable token/message pools; both can be overridden from the
/// run config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PerturbationSets {
    pub dummy_tokens: Vec<DummyToken>,
    pub system_messages: Vec<String>,
}

impl Default for PerturbationSets {
    fn default() -> Self {
        Self {
            dummy_tokens: vec![
                DummyToken::new("\n", Placement::Either),
                DummyToken::new("\t", Placement::Either),
                DummyToken::new("...", Placement::Append),
                DummyToken::new("  ", Placement::Either),
                DummyToken {
                    text: "?".into(),
                    placement: Placement::Append,
                    questions_only: true,
                },
                DummyToken::new(".", Placement::Append),
            ],
            system_messages: vec![
                String::new(),
                "You are a friendly assistant".into(),
                "You are a question-answering assistant".into(),
                "You are a supportive question-answering assistant".into(),
            ],
        }
    }
}

fn is_question(prompt: &str) -> bool {
    prompt.trim_end().ends_with('?')
}

/// Affixes a dummy token drawn from `set` to the prompt: `d + x₀` or
/// `x₀ + d`. The original prompt is recoverable by stripping the affix.
pub fn apply_dummy_token(prompt: &str, rng: &mut impl Rng, set: &[DummyToken]) -> String {
    let eligible: Vec<&DummyToken> = set
        .iter()
        .filter(|t| !t.questions_only || is_question(prompt))
        .collect();
    assert!(!eligible.is_empty(), "dummy token set is empty");
    let token = eligible[rng.random_range(0..eligible.len())];
    let append = match token.placement {
        Placement::Prepend => false,
        Placement::Append => true,
        Placement::Either => rng.random_range(0..2) == 1,
    };
    if append {
        format!("{prompt}{}", token.text)
    } else {
        format!("{}{prompt}", token.text)
    }
}

/// Replaces the system message with a uniform draw from `set`, excluding
/// the current one. The user prompt is untouched.
pub fn swap_system_message(
    input: &ModelInput,
    rng: &mut impl Rng,
    set: &[String],
    profile: &ProviderProfile,
) -> Result<ModelInput, PerturbError> {
    if !profile.supports_system_message {
        return Err(PerturbError::Capability("system_message".into()));
    }
    let original = input.system_message.as_deref().unwrap_or("");
    let candidates: Vec<&String> = set.iter().filter(|m| m.as_str() != original).collect();
    if candidates.is_empty() {
        return Err(PerturbError::InvalidConfig(
            "system message set has no alternative to the original".into(),
        ));
    }
    let drawn = candidates[rng.random_range(0..candidates.len())];
    let mut out = input.clone();
    out.system_message = Some(drawn.clone());
    Ok(out)
}

/// The single prompt that asks for all k paraphrases at once.
pub fn paraphrase_prompt(text: &str, k: usize) -> String {
    format!(
        "\"\"\"\n{text}\n\"\"\"\nSuggest {k} ways to paraphrase the text in triple quotes \
         above. If the original text is a question, ensure your suggestions retain a \
         question. Provide your response in JSON format: {{\"paraphrased\": list of str}}"
    )
}

#[derive(Deserialize)]
struct ParaphraseReply {
    paraphrased: Vec<String>,
}

fn parse_paraphrases(raw: &str) -> Option<Vec<String>> {
    let start = raw.find('{')?;
    let end = raw.rfind('}')?;
    if end < start {
        return None;
    }
    let reply: ParaphraseReply = serde_json::from_str(&raw[start..=end]).ok()?;
    let items: Vec<String> = reply
        .paraphrased
        .into_iter()
        .filter(|s| !s.is_empty())
        .collect();
    Some(items)
}

/// One paraphraser call (plus at most one retry); may return fewer than k
/// items. Returns the items plus the raw response of the last attempt.
fn paraphrase_lenient(
    original_prompt: &str,
    k: usize,
    provider: &dyn TextGenerator,
) -> Result<(Vec<String>, String), PerturbError> {
    let request = ModelInput {
        temperature: PARAPHRASER_TEMPERATURE,
        system_message: None,
        user_prompt: paraphrase_prompt(original_prompt, k),
        max_tokens: 1024,
        request_logprobs: false,
    };
    let mut best: Vec<String> = Vec::new();
    let mut raw = String::new();
    for attempt in 0..2u64 {
        let sample = provider.generate(&request, attempt)?;
        raw = sample.text;
        if let Some(mut items) = parse_paraphrases(&raw) {
            items.truncate(k);
            if items.len() == k {
                return Ok((items, raw));
            }
            if items.len() > best.len() {
                best = items;
            }
        }
    }
    Ok((best, raw))
}

/// Obtains exactly k paraphrases of `original_prompt` in a single
/// paraphraser call; extra items are truncated, anything less after one
/// retry is an error carrying the raw response.
pub fn paraphrase(
    original_prompt: &str,
    k: usize,
    provider: &dyn TextGenerator,
) -> Result<Vec<String>, PerturbError> {
    if k < 1 {
        return Err(PerturbError::InvalidConfig("k must be ≥ 1".into()));
    }
    let (items, raw) = paraphrase_lenient(original_prompt, k, provider)?;
    if items.len() == k {
        Ok(items)
    } else {
        Err(PerturbError::Paraphrase { raw })
    }
}

/// Everything `perturb` needs besides the input itself.
pub struct Perturber<'a> {
    pub profile: &'a ProviderProfile,
    pub paraphraser: Option<&'a dyn TextGenerator>,
    pub weight_scorer: &'a dyn TextSimilarity,
    pub sets: &'a PerturbationSets,
}

impl Perturber<'_> {
    /// Produces exactly k perturbed variants of `original`, or errs —
    /// never silently fewer. A deterministic function of
    /// `(original, config, seed)` given a deterministic paraphraser.
    pub fn perturb(
        &self,
        original: &ModelInput,
        config: &PerturbationConfig,
        seed: u64,
    ) -> Result<Vec<PerturbedVariant>, PerturbError> {
        config.validate()?;
        original.validate()?;
        let k = config.k;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let temperatures: Vec<f64> = (0..k)
            .map(|_| {
                let t = match config.temperature_mode {
                    TemperatureMode::None => original.temperature,
                    TemperatureMode::FixedOffset(delta) => original.temperature + delta,
                    TemperatureMode::RandomUniform => {
                        rng.random_range(self.profile.t_min..=self.profile.t_max)
                    }
                };
                self.profile.clamp_temperature(t)
            })
            .collect();

        // (user prompt, system message) per variant, plus paraphrase
        // shortfall bookkeeping.
        let mut prompts: Vec<String> = Vec::with_capacity(k);
        let mut systems: Vec<Option<String>> = vec![original.system_message.clone(); k];
        let mut fallback_indices: Vec<usize> = Vec::new();
        let mut degraded_raw = String::new();

        match config.prompt_mode {
            PromptMode::None => {
                prompts = vec![original.user_prompt.clone(); k];
            }
            PromptMode::Paraphrasing => {
                let paraphraser = self
                    .paraphraser
                    .ok_or_else(|| PerturbError::Capability("paraphraser".into()))?;
                let (items, raw) = paraphrase_lenient(&original.user_prompt, k, paraphraser)?;
                for i in 0..k {
                    if let Some(item) = items.get(i) {
                        prompts.push(item.clone());
                    } else {
                        prompts.push(apply_dummy_token(
                            &original.user_prompt,
                            &mut rng,
                            &self.sets.dummy_tokens,
                        ));
                        fallback_indices.push(i + 1);
                    }
                }
                degraded_raw = raw;
            }
            PromptMode::DummyTokens => {
                for _ in 0..k {
                    prompts.push(apply_dummy_token(
                        &original.user_prompt,
                        &mut rng,
                        &self.sets.dummy_tokens,
                    ));
                }
            }
            PromptMode::SystemMessages => {
                for sys in systems.iter_mut() {
                    let swapped = swap_system_message(
                        original,
                        &mut rng,
                        &self.sets.system_messages,
                        self.profile,
                    )?;
                    *sys = swapped.system_message;
                }
                prompts = vec![original.user_prompt.clone(); k];
            }
        }

        let mut variants = Vec::with_capacity(k);
        for (i, (prompt, system)) in prompts.into_iter().zip(systems).enumerate() {
            // Weight over the user prompt only; an unchanged prompt is
            // exactly 1 regardless of metric.
            let prompt_weight = if prompt == original.user_prompt {
                1.0
            } else {
                self.weight_scorer.score(&original.user_prompt, &prompt)?
            };
            variants.push(PerturbedVariant {
                index: i + 1,
                input: ModelInput {
                    temperature: temperatures[i],
                    system_message: system,
                    user_prompt: prompt,
                    max_tokens: original.max_tokens,
                    request_logprobs: original.request_logprobs,
                },
                prompt_weight,
            });
        }

        if fallback_indices.is_empty() {
            Ok(variants)
        } else {
            Err(PerturbError::DegradedParaphrase {
                variants,
                fallback_indices,
                raw: degraded_raw,
            })
        }
    }
}
