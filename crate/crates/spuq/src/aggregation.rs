//! Confidence aggregation over the sample set {y₀..y_k}.
//!
//! Inter-sample: the prompt-weighted mean similarity of each sample to the
//! anchor output, c = Σ_{i≠j} s(y_j, y_i)·wᵢ / Σ_{i≠j} wᵢ, anchored at the
//! original (j = 0). With exact match and uniform weights this reduces to
//! majority voting against the anchor. Intra-sample: the plain mean of
//! per-sample confidences c(xᵢ, yᵢ) obtained from token likelihoods or by
//! asking the model to verbalize its confidence.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{GatewayError, GenerationSample, ModelInput, TextGenerator};
use crate::similarity::{SimilarityError, SimilarityMetric, TextSimilarity};

#[derive(Debug, Error)]
pub enum AggregationError {
    /// Σ wᵢ over the non-anchor samples is zero; the caller decides the
    /// fallback, we never silently return 0.
    #[error("all prompt weights are zero; inter-sample confidence is undefined")]
    DegenerateWeights,
    #[error("samples at indices {indices:?} are missing an intra-sample confidence")]
    MissingIntraConfidence { indices: Vec<usize> },
    #[error("need the original plus at least one perturbed sample, got {n}")]
    TooFewSamples { n: usize },
    #[error("anchor index {anchor} out of range for {n} samples")]
    AnchorOutOfRange { anchor: usize, n: usize },
    #[error("provider lacks capability: {0}")]
    Capability(String),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Where intra-sample confidences come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntraSource {
    /// exp(mean token log-probability) — length-normalized likelihood.
    Likelihood,
    /// "low" / "medium" / "high" mapped to 0.25 / 0.5 / 0.75.
    VerbalizedWords,
    /// A number in [0, 1], parsed out of the reply.
    VerbalizedNumbers,
}

impl std::fmt::Display for IntraSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            IntraSource::Likelihood => "likelihood",
            IntraSource::VerbalizedWords => "verbalized_words",
            IntraSource::VerbalizedNumbers => "verbalized_numbers",
        })
    }
}

/// How prompt weights wᵢ are assigned.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    /// wᵢ = s(x₀, xᵢ) under the aggregation metric (the default).
    #[default]
    SameAsMetric,
    /// wᵢ = 1 for all i (majority-vote style).
    Uniform,
    /// wᵢ = s(x₀, xᵢ) under a separately chosen metric.
    Metric(SimilarityMetric),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AggregationConfig {
    InterSample {
        metric: SimilarityMetric,
        #[serde(default)]
        weights: WeightScheme,
    },
    IntraSample {
        source: IntraSource,
    },
}

impl Default for AggregationConfig {
    fn default() -> Self {
        AggregationConfig::InterSample {
            metric: SimilarityMetric::rouge_l(),
            weights: WeightScheme::default(),
        }
    }
}

impl AggregationConfig {
    /// The metric used for prompt weights. Intra-sample aggregation never
    /// uses the weights in its mean, but variants still record them.
    pub fn weight_metric(&self) -> Option<SimilarityMetric> {
        match self {
            AggregationConfig::InterSample { metric, weights } => match weights {
                WeightScheme::SameAsMetric => Some(*metric),
                WeightScheme::Uniform => None,
                WeightScheme::Metric(m) => Some(*m),
            },
            AggregationConfig::IntraSample { .. } => Some(SimilarityMetric::rouge_l()),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            AggregationConfig::InterSample { metric, .. } => {
                format!("inter-sample, {}", metric.kind)
            }
            AggregationConfig::IntraSample { source } => format!("intra-sample, {source}"),
        }
    }
}

/// One generation plus its weight and (optional) per-sample confidence.
/// Position 0 holds the original sample and must carry weight 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub sample: GenerationSample,
    pub prompt_weight: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intra_confidence: Option<f64>,
}

impl ScoredSample {
    pub fn new(sample: GenerationSample, prompt_weight: f64) -> Self {
        Self {
            sample,
            prompt_weight,
            intra_confidence: None,
        }
    }
}

/// Weighted agreement with the anchor sample.
pub fn inter_sample_confidence(
    samples: &[ScoredSample],
    scorer: &dyn TextSimilarity,
    anchor: usize,
) -> Result<f64, AggregationError> {
    Ok(inter_sample_confidence_detailed(samples, scorer, anchor)?.0)
}

/// As [`inter_sample_confidence`], also returning s(y_anchor, yᵢ) per
/// sample (`None` at the anchor position) for diagnostics.
pub fn inter_sample_confidence_detailed(
    samples: &[ScoredSample],
    scorer: &dyn TextSimilarity,
    anchor: usize,
) -> Result<(f64, Vec<Option<f64>>), AggregationError> {
    let n = samples.len();
    if n < 2 {
        return Err(AggregationError::TooFewSamples { n });
    }
    if anchor >= n {
        return Err(AggregationError::AnchorOutOfRange { anchor, n });
    }
    let anchor_text = &samples[anchor].sample.text;
    let mut similarities = Vec::with_capacity(n);
    let mut numerator = 0.0;
    let mut denominator = 0.0;
    for (i, s) in samples.iter().enumerate() {
        if i == anchor {
            similarities.push(None);
            continue;
        }
        let sim = scorer.score(anchor_text, &s.sample.text)?;
        similarities.push(Some(sim));
        numerator += sim * s.prompt_weight;
        denominator += s.prompt_weight;
    }
    if denominator <= 0.0 {
        return Err(AggregationError::DegenerateWeights);
    }
    Ok((numerator / denominator, similarities))
}

/// Mean of the k+1 per-sample confidences.
pub fn intra_sample_confidence(samples: &[ScoredSample]) -> Result<f64, AggregationError> {
    let n = samples.len();
    if n < 2 {
        return Err(AggregationError::TooFewSamples { n });
    }
    let missing: Vec<usize> = samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.intra_confidence.is_none())
        .map(|(i, _)| i)
        .collect();
    if !missing.is_empty() {
        return Err(AggregationError::MissingIntraConfidence { indices: missing });
    }
    let sum: f64 = samples.iter().map(|s| s.intra_confidence.unwrap()).sum();
    Ok(sum / n as f64)
}

/// Length-normalized likelihood: exp(mean token log-probability).
pub fn likelihood_confidence(sample: &GenerationSample) -> Result<f64, AggregationError> {
    let lp = sample
        .token_logprobs
        .as_ref()
        .filter(|v| !v.is_empty())
        .ok_or_else(|| AggregationError::Capability("logprobs".into()))?;
    let mean = lp.iter().sum::<f64>() / lp.len() as f64;
    Ok(mean.exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerbalizedStyle {
    Words,
    Numbers,
}

/// The follow-up question eliciting a verbalized confidence; chat and
/// completion providers get slightly different phrasings.
pub fn verbalized_prompt(style: VerbalizedStyle, chat: bool) -> &'static str {
    match (style, chat) {
        (VerbalizedStyle::Words, true) => "Your confidence is? (low, medium, high)",
        (VerbalizedStyle::Words, false) => "Confidence (low, medium, high):",
        (VerbalizedStyle::Numbers, true) => "Your confidence is? (a score between 0.0 to 1.0)",
        (VerbalizedStyle::Numbers, false) => "Confidence (a score between 0.0 to 1.0):",
    }
}

pub fn parse_verbalized_words(reply: &str) -> Option<f64> {
    let lowered = reply.to_lowercase();
    lowered
        .split(|c: char| !c.is_alphanumeric())
        .find_map(|token| match token {
            "low" => Some(0.25),
            "medium" => Some(0.5),
            "high" => Some(0.75),
            _ => None,
        })
}

pub fn parse_verbalized_numbers(reply: &str) -> Option<f64> {
    // A bare number is taken at face value and clamped into [0, 1].
    if let Ok(v) = reply.trim().trim_end_matches(['.', '!']).parse::<f64>() {
        if v.is_finite() {
            return Some(v.clamp(0.0, 1.0));
        }
    }
    // Otherwise scan the prose for the first real literal within [0, 1].
    let mut current = String::new();
    let mut candidates = Vec::new();
    for ch in reply.chars() {
        if ch.is_ascii_digit() || ch == '.' {
            current.push(ch);
        } else if !current.is_empty() {
            candidates.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        candidates.push(current);
    }
    candidates
        .iter()
        .filter_map(|c| c.trim_matches('.').parse::<f64>().ok())
        .find(|v| (0.0..=1.0).contains(v))
}

/// Outcome of a verbalized-confidence elicitation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerbalizedReply {
    pub confidence: f64,
    /// Set when neither attempt parsed and the neutral 0.5 was recorded.
    pub parse_failed: bool,
    pub raw_reply: String,
}

/// Asks the provider how confident it is in `sample_output`, retrying once
/// on an unparseable reply, then falling back to a flagged neutral 0.5.
pub fn verbalized_confidence(
    sample_input: &ModelInput,
    sample_output: &str,
    style: VerbalizedStyle,
    provider: &dyn TextGenerator,
    ordinal_base: u64,
) -> Result<VerbalizedReply, AggregationError> {
    let chat = provider.profile().supports_system_message;
    let question = verbalized_prompt(style, chat);
    let mut raw = String::new();
    for attempt in 0..2u64 {
        let reply = provider.generate_followup(
            sample_input,
            sample_output,
            question,
            ordinal_base + attempt,
        )?;
        raw = reply.text;
        let parsed = match style {
            VerbalizedStyle::Words => parse_verbalized_words(&raw),
            VerbalizedStyle::Numbers => parse_verbalized_numbers(&raw),
        };
        if let Some(confidence) = parsed {
            return Ok(VerbalizedReply {
                confidence,
                parse_failed: false,
                raw_reply: raw,
            });
        }
    }
    log::warn!("verbalized confidence unparseable after retry: {raw:?}; recording neutral 0.5");
    Ok(VerbalizedReply {
        confidence: 0.5,
        parse_failed: true,
        raw_reply: raw,
    })
}
