//! The end-to-end pipeline: perturb → sample → aggregate → confidence.
//!
//! `run_spuq` issues exactly k+1 generation calls per example (one for the
//! original, one per perturbed variant), plus one paraphraser call when
//! paraphrasing is active and k+1 follow-up calls in verbalized intra
//! mode. The baselines reuse the same machinery: sampling without
//! perturbation draws k+1 times at the unmodified input, and the one-pass
//! likelihood / verbalized baselines score a single generation.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aggregation::{
    self, AggregationConfig, AggregationError, IntraSource, ScoredSample, VerbalizedStyle,
};
use crate::gateway::{Embedder, GatewayError, GenerationSample, ModelInput, TextGenerator};
use crate::perturb::{
    PerturbError, PerturbationConfig, PerturbationSets, PerturbedVariant, Perturber,
};
use crate::similarity::{MetricScorer, SimilarityMetric, TextSimilarity, UniformSimilarity};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("perturbation stage: {0}")]
    Perturbation(#[source] PerturbError),
    #[error("generation stage (variant {index}): {source}")]
    Generation {
        index: usize,
        #[source]
        source: GatewayError,
    },
    #[error("aggregation stage: {0}")]
    Aggregation(#[from] AggregationError),
}

/// What to do when one variant's generation fails after retries.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    /// Abort the whole example (the default).
    #[default]
    FailRun,
    /// Drop the failed variant from both sides of the weighted mean and
    /// record a warning.
    DropAndRenormalize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpuqConfig {
    pub perturbation: PerturbationConfig,
    pub aggregation: AggregationConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub failure_policy: FailurePolicy,
}

impl SpuqConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        self.perturbation
            .validate()
            .map_err(|e| EngineError::Config(e.to_string()))
    }

    /// Stable content hash of the configuration; emitted with every run so
    /// results are reproducible from the (config hash, seed) pair.
    pub fn config_hash(&self) -> String {
        let body = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(body.as_bytes()))
    }
}

/// Per-variant audit trail.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct VariantDiagnostics {
    /// s(y₀, yᵢ) under the aggregation metric (inter mode only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub similarity_to_original: Option<f64>,
    /// c(xᵢ, yᵢ) (intra mode only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub intra_confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub parse_failed: bool,
    /// The paraphraser came up short and this slot fell back to a
    /// dummy-token variant.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub paraphrase_fallback: bool,
    /// Dropped under [`FailurePolicy::DropAndRenormalize`].
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub dropped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantOutcome {
    pub variant: PerturbedVariant,
    /// `None` when the variant was dropped.
    pub sample: Option<GenerationSample>,
    pub diagnostics: VariantDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpuqResult {
    /// The aggregated confidence c ∈ [0, 1]; higher means less uncertainty.
    pub confidence: f64,
    /// y₀, generated at the unmodified (T₀, x₀).
    pub original_output: String,
    /// c(x₀, y₀) in intra mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub original_intra_confidence: Option<f64>,
    pub variants: Vec<VariantOutcome>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Ties a provider (plus optional paraphraser and embedder) to the
/// pipeline. Immutable during a run; the k+1 generations execute
/// concurrently and are joined in variant-index order.
pub struct SpuqRunner<'a> {
    provider: &'a dyn TextGenerator,
    paraphraser: Option<&'a dyn TextGenerator>,
    embedder: Option<&'a dyn Embedder>,
    sets: PerturbationSets,
}

impl<'a> SpuqRunner<'a> {
    pub fn new(provider: &'a dyn TextGenerator) -> Self {
        Self {
            provider,
            paraphraser: None,
            embedder: None,
            sets: PerturbationSets::default(),
        }
    }

    /// Use a dedicated paraphraser provider (defaults to the provider
    /// under test).
    pub fn with_paraphraser(mut self, paraphraser: &'a dyn TextGenerator) -> Self {
        self.paraphraser = Some(paraphraser);
        self
    }

    pub fn with_embedder(mut self, embedder: &'a dyn Embedder) -> Self {
        self.embedder = Some(embedder);
        self
    }

    pub fn with_sets(mut self, sets: PerturbationSets) -> Self {
        self.sets = sets;
        self
    }

    pub fn provider(&self) -> &'a dyn TextGenerator {
        self.provider
    }

    pub fn has_embedder(&self) -> bool {
        self.embedder.is_some()
    }

    fn weight_scorer(&self, config: &AggregationConfig) -> Box<dyn TextSimilarity + '_> {
        match config.weight_metric() {
            Some(metric) => Box::new(MetricScorer {
                metric,
                embedder: self.embedder,
            }),
            None => Box::new(UniformSimilarity),
        }
    }

    fn metric_scorer(&self, metric: SimilarityMetric) -> MetricScorer<'_> {
        MetricScorer {
            metric,
            embedder: self.embedder,
        }
    }

    /// Algorithm entry point: perturb, sample the original plus all
    /// variants, aggregate.
    pub fn run_spuq(
        &self,
        original: &ModelInput,
        config: &SpuqConfig,
    ) -> Result<SpuqResult, EngineError> {
        config.validate()?;
        let mut warnings = Vec::new();
        let weight_scorer = self.weight_scorer(&config.aggregation);
        let perturber = Perturber {
            profile: self.provider.profile(),
            paraphraser: self.paraphraser.or(Some(self.provider)),
            weight_scorer: weight_scorer.as_ref(),
            sets: &self.sets,
        };
        let mut fallback_indices = Vec::new();
        let variants = match perturber.perturb(original, &config.perturbation, config.seed) {
            Ok(v) => v,
            Err(PerturbError::DegradedParaphrase {
                variants,
                fallback_indices: idx,
                raw,
            }) => {
                warnings.push(format!(
                    "paraphraser shortfall: indices {idx:?} fell back to dummy tokens (raw: {raw:?})"
                ));
                fallback_indices = idx;
                variants
            }
            Err(e) => return Err(EngineError::Perturbation(e)),
        };
        self.sample_and_aggregate(original, variants, config, warnings, fallback_indices)
    }

    /// Sampling-without-perturbation baseline: k+1 draws at the unmodified
    /// (T₀, x₀), uniform weights, anchored at the original.
    pub fn run_baseline_sampling(
        &self,
        original: &ModelInput,
        k: usize,
        metric: SimilarityMetric,
    ) -> Result<SpuqResult, EngineError> {
        if k < 1 {
            return Err(EngineError::Config("k must be ≥ 1".into()));
        }
        let variants: Vec<PerturbedVariant> = (1..=k)
            .map(|index| PerturbedVariant {
                index,
                input: original.clone(),
                prompt_weight: 1.0,
            })
            .collect();
        let config = SpuqConfig {
            perturbation: PerturbationConfig {
                k,
                temperature_mode: crate::perturb::TemperatureMode::None,
                prompt_mode: crate::perturb::PromptMode::None,
            },
            aggregation: AggregationConfig::InterSample {
                metric,
                weights: crate::aggregation::WeightScheme::Uniform,
            },
            seed: 0,
            failure_policy: FailurePolicy::FailRun,
        };
        self.sample_and_aggregate(original, variants, &config, Vec::new(), Vec::new())
    }

    /// One-pass likelihood baseline: confidence = exp(mean logprob of y₀).
    pub fn run_likelihood_baseline(
        &self,
        original: &ModelInput,
    ) -> Result<SpuqResult, EngineError> {
        let mut input = original.clone();
        input.request_logprobs = true;
        let y0 = self
            .provider
            .generate(&input, 0)
            .map_err(|source| EngineError::Generation { index: 0, source })?;
        let confidence = aggregation::likelihood_confidence(&y0)?;
        Ok(SpuqResult {
            confidence,
            original_output: y0.text,
            original_intra_confidence: Some(confidence),
            variants: Vec::new(),
            warnings: Vec::new(),
        })
    }

    /// One-pass verbalized baseline: generate once, then ask the model for
    /// its confidence.
    pub fn run_verbalized_baseline(
        &self,
        original: &ModelInput,
        style: VerbalizedStyle,
    ) -> Result<SpuqResult, EngineError> {
        let y0 = self
            .provider
            .generate(original, 0)
            .map_err(|source| EngineError::Generation { index: 0, source })?;
        let reply =
            aggregation::verbalized_confidence(original, &y0.text, style, self.provider, 1)?;
        let mut warnings = Vec::new();
        if reply.parse_failed {
            warnings.push(format!(
                "verbalized confidence unparseable; neutral 0.5 recorded (raw: {:?})",
                reply.raw_reply
            ));
        }
        Ok(SpuqResult {
            confidence: reply.confidence,
            original_output: y0.text,
            original_intra_confidence: Some(reply.confidence),
            variants: Vec::new(),
            warnings,
        })
    }

    fn sample_and_aggregate(
        &self,
        original: &ModelInput,
        variants: Vec<PerturbedVariant>,
        config: &SpuqConfig,
        mut warnings: Vec<String>,
        fallback_indices: Vec<usize>,
    ) -> Result<SpuqResult, EngineError> {
        let needs_logprobs = matches!(
            config.aggregation,
            AggregationConfig::IntraSample {
                source: IntraSource::Likelihood
            }
        );

        let mut inputs: Vec<ModelInput> = Vec::with_capacity(variants.len() + 1);
        inputs.push(original.clone());
        inputs.extend(variants.iter().map(|v| v.input.clone()));
        if needs_logprobs {
            for input in &mut inputs {
                input.request_logprobs = true;
            }
        }

        // The k+1 generations run concurrently; results land in variant
        // order so aggregation inputs are ordered reproducibly.
        let results = self.generate_all(&inputs);

        let mut results = results.into_iter();
        let y0 = results
            .next()
            .expect("one result per input")
            .map_err(|source| EngineError::Generation { index: 0, source })?;

        let mut outcomes: Vec<VariantOutcome> = Vec::with_capacity(variants.len());
        for (variant, result) in variants.into_iter().zip(results) {
            let mut diagnostics = VariantDiagnostics {
                paraphrase_fallback: fallback_indices.contains(&variant.index),
                ..VariantDiagnostics::default()
            };
            let sample = match result {
                Ok(sample) => Some(sample),
                Err(source) => match config.failure_policy {
                    FailurePolicy::FailRun => {
                        return Err(EngineError::Generation {
                            index: variant.index,
                            source,
                        })
                    }
                    FailurePolicy::DropAndRenormalize => {
                        warnings.push(format!(
                            "variant {} dropped after generation failure: {source}",
                            variant.index
                        ));
                        diagnostics.dropped = true;
                        None
                    }
                },
            };
            outcomes.push(VariantOutcome {
                variant,
                sample,
                diagnostics,
            });
        }

        // Index 0 is the original with weight 1; dropped variants are
        // excluded from both the numerator and denominator.
        let mut scored: Vec<ScoredSample> = Vec::with_capacity(outcomes.len() + 1);
        scored.push(ScoredSample::new(y0.clone(), 1.0));
        let kept: Vec<usize> = outcomes
            .iter()
            .enumerate()
            .filter(|(_, o)| o.sample.is_some())
            .map(|(i, _)| i)
            .collect();
        for &i in &kept {
            let o = &outcomes[i];
            scored.push(ScoredSample::new(
                o.sample.clone().unwrap(),
                o.variant.prompt_weight,
            ));
        }

        let mut original_intra_confidence = None;
        let confidence = match &config.aggregation {
            AggregationConfig::InterSample { metric, .. } => {
                let scorer = self.metric_scorer(*metric);
                let (confidence, sims) =
                    aggregation::inter_sample_confidence_detailed(&scored, &scorer, 0)?;
                for (pos, &i) in kept.iter().enumerate() {
                    outcomes[i].diagnostics.similarity_to_original = sims[pos + 1];
                }
                confidence
            }
            AggregationConfig::IntraSample { source } => {
                let k = outcomes.len();
                for (pos, scored_sample) in scored.iter_mut().enumerate() {
                    let input = if pos == 0 {
                        original
                    } else {
                        &outcomes[kept[pos - 1]].variant.input
                    };
                    let confidence = match source {
                        IntraSource::Likelihood => {
                            aggregation::likelihood_confidence(&scored_sample.sample)?
                        }
                        IntraSource::VerbalizedWords | IntraSource::VerbalizedNumbers => {
                            let style = if *source == IntraSource::VerbalizedWords {
                                VerbalizedStyle::Words
                            } else {
                                VerbalizedStyle::Numbers
                            };
                            let ordinal_base = (k as u64 + 1) + 2 * pos as u64;
                            let reply = aggregation::verbalized_confidence(
                                input,
                                &scored_sample.sample.text,
                                style,
                                self.provider,
                                ordinal_base,
                            )?;
                            if reply.parse_failed {
                                warnings.push(format!(
                                    "sample {pos}: verbalized confidence unparseable; neutral 0.5 recorded"
                                ));
                                if pos > 0 {
                                    outcomes[kept[pos - 1]].diagnostics.parse_failed = true;
                                }
                            }
                            reply.confidence
                        }
                    };
                    scored_sample.intra_confidence = Some(confidence);
                    if pos == 0 {
                        original_intra_confidence = Some(confidence);
                    } else {
                        outcomes[kept[pos - 1]].diagnostics.intra_confidence = Some(confidence);
                    }
                }
                aggregation::intra_sample_confidence(&scored)?
            }
        };

        Ok(SpuqResult {
            confidence,
            original_output: y0.text,
            original_intra_confidence,
            variants: outcomes,
            warnings,
        })
    }

    fn generate_all(&self, inputs: &[ModelInput]) -> Vec<Result<GenerationSample, GatewayError>> {
        let provider = self.provider;
        let mut results: Vec<Option<Result<GenerationSample, GatewayError>>> =
            (0..inputs.len()).map(|_| None).collect();
        std::thread::scope(|scope| {
            let handles: Vec<_> = inputs
                .iter()
                .enumerate()
                .map(|(i, input)| scope.spawn(move || (i, provider.generate(input, i as u64))))
                .collect();
            for handle in handles {
                let (i, result) = handle.join().expect("generation thread panicked");
                results[i] = Some(result);
            }
        });
        results
            .into_iter()
            .map(|r| r.expect("every slot filled"))
            .collect()
    }
}
