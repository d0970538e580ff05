//! Deterministic scripted mock provider.
//!
//! A script is a table of rules: a prompt matcher plus an optional
//! temperature band, mapping to a categorical distribution over canned
//! outputs. Exact-prompt rules always take precedence over pattern rules.
//! Every call draws from an RNG derived from `(script seed, input,
//! ordinal)`, so the mock is a pure function of its arguments and safe to
//! call concurrently — no shared RNG state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Embedder, GatewayError, GenerationSample, ModelInput, ProviderProfile, TextGenerator};

/// How a rule matches the incoming prompt (the user prompt for plain
/// generation, the follow-up question for follow-up calls).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    /// Full string equality.
    Exact(String),
    /// Substring containment.
    Contains(String),
    /// Every listed substring must appear.
    ContainsAll(Vec<String>),
    /// Matches any prompt.
    Any,
}

impl Matcher {
    fn matches(&self, prompt: &str) -> bool {
        match self {
            Matcher::Exact(s) => prompt == s,
            Matcher::Contains(s) => prompt.contains(s.as_str()),
            Matcher::ContainsAll(parts) => parts.iter().all(|p| prompt.contains(p.as_str())),
            Matcher::Any => true,
        }
    }

    fn is_exact(&self) -> bool {
        matches!(self, Matcher::Exact(_))
    }
}

/// Inclusive temperature band; a rule with a band only applies when the
/// clamped dispatch temperature falls inside it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TempBand {
    pub min: f64,
    pub max: f64,
}

impl TempBand {
    fn contains(&self, t: f64) -> bool {
        t >= self.min && t <= self.max
    }
}

/// One weighted output choice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockChoice {
    pub text: String,
    #[serde(default = "default_weight")]
    pub weight: f64,
    /// Logprobs attached to the sample when the caller requests them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<f64>>,
}

fn default_weight() -> f64 {
    1.0
}

impl MockChoice {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            weight: 1.0,
            token_logprobs: None,
        }
    }

    pub fn weighted(text: impl Into<String>, weight: f64) -> Self {
        Self {
            text: text.into(),
            weight,
            token_logprobs: None,
        }
    }

    pub fn with_logprobs(mut self, lp: Vec<f64>) -> Self {
        self.token_logprobs = Some(lp);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(rename = "match")]
    pub matcher: Matcher,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<TempBand>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub respond: Vec<MockChoice>,
    /// Instead of canned choices, answer a paraphrase request by echoing
    /// the quoted text back with `(rephrased i)` suffixes, as JSON.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub paraphrase_echo: bool,
}

impl MockRule {
    fn validate(&self) -> Result<(), GatewayError> {
        if self.paraphrase_echo == self.respond.is_empty() {
            Ok(())
        } else {
            Err(GatewayError::InvalidInput(
                "mock rule must set exactly one of `respond` or `paraphrase_echo`".into(),
            ))
        }
    }
}

/// The full declarative script: a seed plus an ordered rule table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    pub seed: u64,
    #[serde(default)]
    pub rules: Vec<MockRule>,
}

impl MockScript {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rules: Vec::new(),
        }
    }

    pub fn rule(mut self, matcher: Matcher, choices: Vec<MockChoice>) -> Self {
        self.rules.push(MockRule {
            matcher,
            temperature: None,
            respond: choices,
            paraphrase_echo: false,
        });
        self
    }

    pub fn rule_in_band(
        mut self,
        matcher: Matcher,
        band: TempBand,
        choices: Vec<MockChoice>,
    ) -> Self {
        self.rules.push(MockRule {
            matcher,
            temperature: Some(band),
            respond: choices,
            paraphrase_echo: false,
        });
        self
    }

    /// Answer the fixed `text` for the exact prompt `prompt`.
    pub fn exact(self, prompt: impl Into<String>, text: impl Into<String>) -> Self {
        self.rule(Matcher::Exact(prompt.into()), vec![MockChoice::text(text)])
    }

    pub fn paraphrase_echo_rule(mut self) -> Self {
        self.rules.push(MockRule {
            matcher: Matcher::Contains("paraphrase the text in triple quotes".into()),
            temperature: None,
            respond: Vec::new(),
            paraphrase_echo: true,
        });
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        self.rules.iter().try_for_each(MockRule::validate)
    }

    /// Rule lookup: exact matchers first (in order), then pattern matchers
    /// (in order), both filtered by temperature band.
    fn find_rule(&self, prompt: &str, temperature: f64) -> Option<&MockRule> {
        let band_ok = |r: &&MockRule| {
            r.temperature
                .map(|b| b.contains(temperature))
                .unwrap_or(true)
        };
        self.rules
            .iter()
            .filter(|r| r.matcher.is_exact())
            .filter(band_ok)
            .find(|r| r.matcher.matches(prompt))
            .or_else(|| {
                self.rules
                    .iter()
                    .filter(|r| !r.matcher.is_exact())
                    .filter(band_ok)
                    .find(|r| r.matcher.matches(prompt))
            })
    }
}

pub struct MockProvider {
    script: MockScript,
    profile: ProviderProfile,
}

impl MockProvider {
    pub fn new(script: MockScript, profile: ProviderProfile) -> Self {
        Self { script, profile }
    }

    /// Mock with the default chat profile (temperature 0..=2, system
    /// messages, logprobs available so scripted logprobs pass through).
    pub fn chat(script: MockScript) -> Self {
        Self::new(script, ProviderProfile::chat("mock").with_logprobs(true))
    }

    pub fn script(&self) -> &MockScript {
        &self.script
    }

    /// Per-call RNG, a pure function of (script seed, input, ordinal).
    fn call_rng(&self, input: &ModelInput, ordinal: u64) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(self.script.seed.to_le_bytes());
        hasher.update(
            serde_json::to_string(input)
                .expect("ModelInput serializes")
                .as_bytes(),
        );
        hasher.update(ordinal.to_le_bytes());
        let digest = hasher.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }

    fn respond(
        &self,
        matched_prompt: &str,
        input: &ModelInput,
        ordinal: u64,
    ) -> Result<GenerationSample, GatewayError> {
        input.validate()?;
        if input.request_logprobs && !self.profile.supports_logprobs {
            return Err(GatewayError::Capability("logprobs".into()));
        }
        let temperature = self.profile.clamp_temperature(input.temperature);
        let rule = self
            .script
            .find_rule(matched_prompt, temperature)
            .ok_or_else(|| GatewayError::MockNoRule {
                prompt: matched_prompt.to_string(),
            })?;

        if rule.paraphrase_echo {
            let text = paraphrase_echo_response(matched_prompt)?;
            return Ok(GenerationSample {
                text,
                token_logprobs: None,
                provider_id: self.profile.name.clone(),
                variant_index: ordinal,
            });
        }

        let total: f64 = rule.respond.iter().map(|c| c.weight).sum();
        if total <= 0.0 {
            return Err(GatewayError::InvalidInput(
                "mock rule weights sum to zero".into(),
            ));
        }
        let mut rng = self.call_rng(input, ordinal);
        let mut draw = rng.random_range(0.0..total);
        let mut picked = rule.respond.last().expect("non-empty respond");
        for choice in &rule.respond {
            if draw < choice.weight {
                picked = choice;
                break;
            }
            draw -= choice.weight;
        }

        Ok(GenerationSample {
            text: picked.text.clone(),
            token_logprobs: if input.request_logprobs {
                picked.token_logprobs.clone()
            } else {
                None
            },
            provider_id: self.profile.name.clone(),
            variant_index: ordinal,
        })
    }
}

impl TextGenerator for MockProvider {
    fn profile(&self) -> &ProviderProfile {
        &self.profile
    }

    fn generate(&self, input: &ModelInput, ordinal: u64) -> Result<GenerationSample, GatewayError> {
        self.respond(&input.user_prompt, input, ordinal)
    }

    /// Follow-ups match rules against the follow-up question (the last user
    /// turn), so scripts can answer e.g. confidence elicitations generically.
    fn generate_followup(
        &self,
        input: &ModelInput,
        prior_answer: &str,
        followup: &str,
        ordinal: u64,
    ) -> Result<GenerationSample, GatewayError> {
        let mut turn = input.clone();
        turn.user_prompt = format!("{}\n{}\n{}", input.user_prompt, prior_answer, followup);
        turn.request_logprobs = false;
        self.respond(followup, &turn, ordinal)
    }
}

/// Build the echoed paraphrase list for a paraphrase request: k comes from
/// the "Suggest {k} ways" phrase, the source text from the triple quotes.
fn paraphrase_echo_response(prompt: &str) -> Result<String, GatewayError> {
    let k = prompt
        .split("Suggest ")
        .nth(1)
        .and_then(|rest| rest.split_whitespace().next())
        .and_then(|tok| tok.parse::<usize>().ok())
        .ok_or_else(|| {
            GatewayError::MalformedResponse("paraphrase echo: no `Suggest {k}` phrase".into())
        })?;
    let open = prompt.find("\"\"\"").ok_or_else(|| {
        GatewayError::MalformedResponse("paraphrase echo: no opening triple quote".into())
    })?;
    let rest = &prompt[open + 3..];
    let close = rest.find("\"\"\"").ok_or_else(|| {
        GatewayError::MalformedResponse("paraphrase echo: no closing triple quote".into())
    })?;
    let original = rest[..close].trim();
    let items: Vec<String> = (1..=k)
        .map(|i| format!("{original} (rephrased {i})"))
        .collect();
    Ok(
        serde_json::to_string(&serde_json::json!({ "paraphrased": items }))
            .expect("json serializes"),
    )
}

/// Embedding mock: each distinct string maps to a (near-)unit basis vector,
/// so distinct strings have cosine 0 and identical strings cosine 1.
pub struct MockEmbedder {
    pub dimension: usize,
}

impl Default for MockEmbedder {
    fn default() -> Self {
        Self { dimension: 4096 }
    }
}

impl Embedder for MockEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        let digest = Sha256::digest(text.as_bytes());
        let idx = u64::from_le_bytes(digest[..8].try_into().unwrap()) as usize % self.dimension;
        let mut v = vec![0.0; self.dimension];
        v[idx] = 1.0;
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jayz_script() -> MockScript {
        MockScript::new(7)
            .exact(
                "Will Jay-Z reach the age of 60 before Kendrick Lamar?",
                "No",
            )
            .rule(
                Matcher::Contains("Jay-Z".into()),
                vec![
                    MockChoice::weighted("Yes", 0.5),
                    MockChoice::weighted("No", 0.5),
                ],
            )
    }

    #[test]
    fn exact_rule_beats_pattern_rule() {
        let mock = MockProvider::chat(jayz_script());
        let input = ModelInput::new("Will Jay-Z reach the age of 60 before Kendrick Lamar?", 0.7);
        for ordinal in 0..20 {
            assert_eq!(mock.generate(&input, ordinal).unwrap().text, "No");
        }
    }

    #[test]
    fn same_input_and_ordinal_reproduce_the_same_draw() {
        let mock = MockProvider::chat(jayz_script());
        let input = ModelInput::new("Is it likely that Jay-Z will turn 60 first?", 0.7);
        let a = mock.generate(&input, 3).unwrap();
        let b = mock.generate(&input, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn seeded_bernoulli_frequency_matches_the_distribution() {
        let script = MockScript::new(99).rule(
            Matcher::Any,
            vec![
                MockChoice::weighted("Yes", 0.5),
                MockChoice::weighted("No", 0.5),
            ],
        );
        let mock = MockProvider::chat(script);
        let input = ModelInput::new("coin?", 1.0);
        let yes = (0..1000)
            .filter(|&i| mock.generate(&input, i).unwrap().text == "Yes")
            .count() as f64;
        let fraction = yes / 1000.0;
        assert!(
            (fraction - 0.5).abs() <= 0.05,
            "Yes fraction {fraction} outside 0.5 ± 0.05"
        );
    }

    #[test]
    fn temperature_bands_select_rules_after_clamping() {
        let script = MockScript::new(1)
            .rule_in_band(
                Matcher::Any,
                TempBand { min: 0.0, max: 1.0 },
                vec![MockChoice::text("cool")],
            )
            .rule_in_band(
                Matcher::Any,
                TempBand { min: 1.0, max: 2.0 },
                vec![MockChoice::text("hot")],
            );
        let mock = MockProvider::chat(script);
        assert_eq!(
            mock.generate(&ModelInput::new("q", 0.3), 0).unwrap().text,
            "cool"
        );
        assert_eq!(
            mock.generate(&ModelInput::new("q", 1.7), 0).unwrap().text,
            "hot"
        );
        // 9.9 clamps to the profile max of 2.0, landing in the hot band.
        assert_eq!(
            mock.generate(&ModelInput::new("q", 9.9), 0).unwrap().text,
            "hot"
        );
    }

    #[test]
    fn unmatched_prompt_is_an_error() {
        let mock = MockProvider::chat(MockScript::new(0).exact("a", "b"));
        let err = mock
            .generate(&ModelInput::new("something else", 0.7), 0)
            .unwrap_err();
        assert!(matches!(err, GatewayError::MockNoRule { .. }));
    }

    #[test]
    fn paraphrase_echo_returns_k_json_items() {
        let mock = MockProvider::chat(MockScript::new(0).paraphrase_echo_rule());
        let prompt = "\"\"\"\nWill it rain?\n\"\"\"\nSuggest 3 ways to paraphrase the text in triple quotes above.";
        let out = mock.generate(&ModelInput::new(prompt, 0.7), 0).unwrap();
        let v: serde_json::Value = serde_json::from_str(&out.text).unwrap();
        let items = v["paraphrased"].as_array().unwrap();
        assert_eq!(items.len(), 3);
        for item in items {
            assert!(item.as_str().unwrap().contains("Will it rain?"));
        }
    }

    #[test]
    fn followup_matches_on_the_followup_text() {
        let script = MockScript::new(0).exact("What is 2+2?", "4").rule(
            Matcher::Contains("Your confidence is?".into()),
            vec![MockChoice::text("high")],
        );
        let mock = MockProvider::chat(script);
        let input = ModelInput::new("What is 2+2?", 0.7);
        let reply = mock
            .generate_followup(&input, "4", "Your confidence is? (low, medium, high)", 10)
            .unwrap();
        assert_eq!(reply.text, "high");
    }

    #[test]
    fn scripted_logprobs_flow_through_when_requested() {
        let script = MockScript::new(0).rule(
            Matcher::Any,
            vec![MockChoice::text("sure").with_logprobs(vec![-0.1, -0.2])],
        );
        let mock = MockProvider::chat(script);
        let with = mock
            .generate(&ModelInput::new("q", 0.7).with_logprobs(true), 0)
            .unwrap();
        assert_eq!(with.token_logprobs, Some(vec![-0.1, -0.2]));
        let without = mock.generate(&ModelInput::new("q", 0.7), 0).unwrap();
        assert_eq!(without.token_logprobs, None);
    }

    #[test]
    fn logprob_request_against_incapable_profile_is_a_capability_error() {
        let profile = ProviderProfile::chat("mock"); // supports_logprobs = false
        let mock = MockProvider::new(MockScript::new(0).exact("q", "a"), profile);
        let err = mock
            .generate(&ModelInput::new("q", 0.7).with_logprobs(true), 0)
            .unwrap_err();
        assert!(matches!(err, GatewayError::Capability(c) if c == "logprobs"));
    }

    #[test]
    fn mock_embedder_maps_distinct_strings_to_orthogonal_vectors() {
        let e = MockEmbedder::default();
        let a = e.embed("alpha").unwrap();
        let b = e.embed("beta").unwrap();
        let a2 = e.embed("alpha").unwrap();
        assert_eq!(a, a2);
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert_eq!(dot, 0.0);
        let norm: f64 = a.iter().map(|x| x * x).sum();
        assert_eq!(norm, 1.0);
    }
}
