//! Runs an uncertainty method over a dataset, producing graded outcomes
//! and per-example JSONL trace records. Shared by the CLI and the tuner.

use serde::{Deserialize, Serialize};

use crate::aggregation::VerbalizedStyle;
use crate::dataset::ExampleRecord;
use crate::engine::{EngineError, SpuqConfig, SpuqResult, SpuqRunner};
use crate::evaluation::{accuracy, EvalOutcome};
use crate::gateway::ModelInput;
use crate::similarity::SimilarityMetric;

/// The uncertainty methods the harness can evaluate.
#[derive(Debug, Clone, PartialEq)]
pub enum Method {
    Spuq(SpuqConfig),
    /// Sampling without perturbation: k+1 draws at the unmodified input.
    Sampling {
        k: usize,
        metric: SimilarityMetric,
    },
    /// One-pass length-normalized likelihood.
    Likelihood,
    /// One-pass verbalized confidence.
    Verbalized(VerbalizedStyle),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Spuq(_) => "spuq",
            Method::Sampling { .. } => "sampling",
            Method::Likelihood => "likelihood",
            Method::Verbalized(_) => "verbalized",
        }
    }

    /// Hash of the method configuration, for the reproducibility line.
    pub fn config_hash(&self) -> String {
        match self {
            Method::Spuq(config) => config.config_hash(),
            Method::Sampling { k, metric } => {
                let body = serde_json::to_string(&serde_json::json!({
                    "method": "sampling", "k": k, "metric": metric,
                }))
                .expect("serializes");
                hex::encode(sha2::Sha256::digest(body.as_bytes()))
            }
            Method::Likelihood => hex::encode(sha2::Sha256::digest(b"likelihood")),
            Method::Verbalized(style) => hex::encode(sha2::Sha256::digest(match style {
                VerbalizedStyle::Words => b"verbalized_words".as_slice(),
                VerbalizedStyle::Numbers => b"verbalized_numbers".as_slice(),
            })),
        }
    }
}

use sha2::Digest;

/// Request shape applied to every example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RequestSettings {
    pub temperature: f64,
    pub max_tokens: u32,
    pub system_message: Option<String>,
}

impl Default for RequestSettings {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            max_tokens: 256,
            system_message: None,
        }
    }
}

impl RequestSettings {
    pub fn input_for(&self, record: &ExampleRecord) -> ModelInput {
        ModelInput {
            temperature: self.temperature,
            system_message: record
                .system_message
                .clone()
                .or_else(|| self.system_message.clone()),
            user_prompt: record.question.clone(),
            max_tokens: self.max_tokens,
            request_logprobs: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceVariant {
    pub index: usize,
    pub temperature: f64,
    pub prompt: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system_message: Option<String>,
    pub weight: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub similarity_to_original: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intra_confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub parse_failed: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub paraphrase_fallback: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub dropped: bool,
}

/// One JSONL trace line per evaluated example.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub example_id: String,
    pub method: String,
    pub config_hash: String,
    pub seed: u64,
    pub question: String,
    pub answer: String,
    pub confidence: f64,
    pub accuracy: f64,
    pub variants: Vec<TraceVariant>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct MethodRun {
    pub outcomes: Vec<EvalOutcome>,
    pub traces: Vec<TraceRecord>,
    /// Count of per-example warnings (parse failures, drops, fallbacks).
    pub warning_count: usize,
}

/// splitmix64-style seed derivation, so per-example and per-repeat seeds
/// are decorrelated but reproducible.
pub fn mix_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(salt.wrapping_add(1));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn trace_from(
    record: &ExampleRecord,
    method: &Method,
    seed: u64,
    result: &SpuqResult,
    graded: f64,
) -> TraceRecord {
    TraceRecord {
        example_id: record.id.clone(),
        method: method.name().to_string(),
        config_hash: method.config_hash(),
        seed,
        question: record.question.clone(),
        answer: result.original_output.clone(),
        confidence: result.confidence,
        accuracy: graded,
        variants: result
            .variants
            .iter()
            .map(|v| TraceVariant {
                index: v.variant.index,
                temperature: v.variant.input.temperature,
                prompt: v.variant.input.user_prompt.clone(),
                system_message: v.variant.input.system_message.clone(),
                weight: v.variant.prompt_weight,
                output: v.sample.as_ref().map(|s| s.text.clone()),
                similarity_to_original: v.diagnostics.similarity_to_original,
                intra_confidence: v.diagnostics.intra_confidence,
                parse_failed: v.diagnostics.parse_failed,
                paraphrase_fallback: v.diagnostics.paraphrase_fallback,
                dropped: v.diagnostics.dropped,
            })
            .collect(),
        warnings: result.warnings.clone(),
    }
}

/// Evaluates `method` on every record: one confidence from the engine, one
/// accuracy from the grader. Per-example seeds derive from `base_seed`.
pub fn run_method(
    records: &[ExampleRecord],
    method: &Method,
    runner: &SpuqRunner<'_>,
    request: &RequestSettings,
    base_seed: u64,
) -> Result<MethodRun, EngineError> {
    let mut outcomes = Vec::with_capacity(records.len());
    let mut traces = Vec::with_capacity(records.len());
    let mut warning_count = 0usize;
    for (i, record) in records.iter().enumerate() {
        let input = request.input_for(record);
        let seed = mix_seed(base_seed, i as u64);
        let result = match method {
            Method::Spuq(config) => {
                let per_example = SpuqConfig {
                    seed,
                    ..config.clone()
                };
                runner.run_spuq(&input, &per_example)?
            }
            Method::Sampling { k, metric } => runner.run_baseline_sampling(&input, *k, *metric)?,
            Method::Likelihood => runner.run_likelihood_baseline(&input)?,
            Method::Verbalized(style) => runner.run_verbalized_baseline(&input, *style)?,
        };
        let graded = accuracy(&result.original_output, record);
        warning_count += result.warnings.len();
        outcomes.push(EvalOutcome {
            confidence: result.confidence,
            accuracy: graded,
        });
        traces.push(trace_from(record, method, seed, &result, graded));
    }
    Ok(MethodRun {
        outcomes,
        traces,
        warning_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::TaskType;
    use crate::gateway::{Matcher, MockChoice, MockProvider, MockScript};

    fn records(n: usize) -> Vec<ExampleRecord> {
        (0..n)
            .map(|i| ExampleRecord {
                id: i.to_string(),
                question: format!("Is {i} even?"),
                references: vec![if i % 2 == 0 {
                    "Yes".into()
                } else {
                    "No".into()
                }],
                task_type: TaskType::Classification,
                system_message: None,
            })
            .collect()
    }

    #[test]
    fn run_method_grades_against_references() {
        let script = MockScript::new(0).rule(Matcher::Any, vec![MockChoice::text("Yes")]);
        let mock = MockProvider::chat(script);
        let runner = SpuqRunner::new(&mock);
        let run = run_method(
            &records(4),
            &Method::Sampling {
                k: 2,
                metric: SimilarityMetric::exact_match(),
            },
            &runner,
            &RequestSettings::default(),
            7,
        )
        .unwrap();
        assert_eq!(run.outcomes.len(), 4);
        // "Yes" is right for even ids only.
        let accs: Vec<f64> = run.outcomes.iter().map(|o| o.accuracy).collect();
        assert_eq!(accs, vec![1.0, 0.0, 1.0, 0.0]);
        // Echo mock always agrees with itself.
        assert!(run.outcomes.iter().all(|o| o.confidence == 1.0));
        assert_eq!(run.traces.len(), 4);
        assert_eq!(run.traces[0].method, "sampling");
    }

    #[test]
    fn per_example_seeds_differ_but_reproduce() {
        assert_ne!(mix_seed(1, 0), mix_seed(1, 1));
        assert_eq!(mix_seed(1, 5), mix_seed(1, 5));
        assert_ne!(mix_seed(1, 5), mix_seed(2, 5));
    }
}
