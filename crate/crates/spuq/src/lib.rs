//! Perturbation-based sampling for uncertainty quantification of
//! text-generation models.
//!
//! Large language models are routinely confidently wrong: resampling the
//! same prompt yields the same wrong answer, so sampling-based confidence
//! scores come out overconfident. This crate quantifies that epistemic
//! uncertainty by perturbing the model *input* — temperature shifts,
//! paraphrased prompts, dummy tokens, swapped system messages — sampling one
//! output per perturbed variant, and aggregating the outputs into a single
//! confidence score in `[0, 1]`.
//!
//! The crate ships:
//!
//! - [`gateway`] — provider-agnostic access to generation and embedding
//!   endpoints, a deterministic scripted mock provider, and a disk cache;
//! - [`perturb`] — the perturbation strategies;
//! - [`similarity`] — exact-match, ROUGE-L, and embedding-cosine text
//!   similarity;
//! - [`aggregation`] — inter-sample (weighted similarity to the original
//!   output) and intra-sample (likelihood / verbalized) confidence;
//! - [`engine`] — the end-to-end pipeline plus the sampling-without-
//!   perturbation, likelihood, and verbalized baselines;
//! - [`evaluation`] — accuracy scoring, expected calibration error,
//!   Pearson correlation, reliability buckets;
//! - [`tuner`] — grid search over perturbation/aggregation hyperparameters
//!   on a development split;
//! - [`dataset`] — JSONL question-answering dataset IO;
//! - [`cli`] — the `spuq` command-line entry points.
//!
//! Every capability is demonstrated by a runnable example under
//! `examples/`; all of them run offline against the scripted mock provider.

pub mod aggregation;
pub mod artifacts;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod engine;
pub mod evaluation;
pub mod gateway;
pub mod harness;
pub mod perturb;
pub mod similarity;
pub mod tuner;

pub use aggregation::{AggregationConfig, IntraSource, ScoredSample, WeightScheme};
pub use engine::{FailurePolicy, SpuqConfig, SpuqResult, SpuqRunner};
pub use evaluation::{CalibrationReport, EvalOutcome, Weighting};
pub use gateway::{Embedder, GenerationSample, ModelInput, ProviderProfile, TextGenerator};
pub use perturb::{PerturbationConfig, PerturbedVariant, PromptMode, TemperatureMode};
pub use similarity::{MetricKind, Normalization, SimilarityMetric};
