//! Grid search over perturbation/aggregation hyperparameters.
//!
//! Every grid point is evaluated on a seeded development split and ranked
//! by ECE (ties broken by higher Pearson correlation, then by grid order).
//! Repeats resample the development split with derived seeds and report
//! per-repeat winners, so the robustness of the selection is visible.
//! Grid points the provider cannot support are skipped with a recorded
//! reason, never fatal.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::AggregationConfig;
use crate::dataset::{split, DatasetError, ExampleRecord};
use crate::engine::{FailurePolicy, SpuqConfig, SpuqRunner};
use crate::evaluation::{expected_calibration_error, pearson_correlation, EvalError, Weighting};
use crate::harness::{mix_seed, run_method, Method, RequestSettings};
use crate::perturb::{PerturbationConfig, PromptMode, TemperatureMode, OFFSET_GRID};
use crate::similarity::{MetricKind, SimilarityMetric};

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("tuning grid is empty")]
    EmptyGrid,
    #[error("every grid point was skipped")]
    AllSkipped,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Candidate values per hyperparameter axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningGrid {
    pub temperature_modes: Vec<TemperatureMode>,
    pub prompt_modes: Vec<PromptMode>,
    pub aggregations: Vec<AggregationConfig>,
}

impl Default for TuningGrid {
    fn default() -> Self {
        let mut temperature_modes = vec![TemperatureMode::None];
        temperature_modes.extend(OFFSET_GRID.iter().map(|&d| TemperatureMode::FixedOffset(d)));
        temperature_modes.push(TemperatureMode::RandomUniform);
        Self {
            temperature_modes,
            prompt_modes: vec![
                PromptMode::None,
                PromptMode::Paraphrasing,
                PromptMode::DummyTokens,
                PromptMode::SystemMessages,
            ],
            aggregations: vec![
                AggregationConfig::InterSample {
                    metric: SimilarityMetric::exact_match(),
                    weights: Default::default(),
                },
                AggregationConfig::InterSample {
                    metric: SimilarityMetric::rouge_l(),
                    weights: Default::default(),
                },
                AggregationConfig::InterSample {
                    metric: SimilarityMetric::embedding_cosine(),
                    weights: Default::default(),
                },
                AggregationConfig::IntraSample {
                    source: crate::aggregation::IntraSource::Likelihood,
                },
                AggregationConfig::IntraSample {
                    source: crate::aggregation::IntraSource::VerbalizedWords,
                },
                AggregationConfig::IntraSample {
                    source: crate::aggregation::IntraSource::VerbalizedNumbers,
                },
            ],
        }
    }
}

impl TuningGrid {
    /// Enumerates valid grid points in deterministic lexicographic order.
    /// The no-perturbation combination is not a valid configuration and is
    /// excluded up front.
    pub fn enumerate(&self, k: usize) -> Vec<(PerturbationConfig, AggregationConfig)> {
        let mut points = Vec::new();
        for &t in &self.temperature_modes {
            for &p in &self.prompt_modes {
                if t == TemperatureMode::None && p == PromptMode::None {
                    continue;
                }
                for agg in &self.aggregations {
                    points.push((
                        PerturbationConfig {
                            k,
                            temperature_mode: t,
                            prompt_mode: p,
                        },
                        agg.clone(),
                    ));
                }
            }
        }
        points
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningSpec {
    pub grid: TuningGrid,
    pub k: usize,
    pub dev_size: usize,
    pub repeats: usize,
    pub seed: u64,
    pub num_buckets: usize,
    pub weighting: Weighting,
}

impl Default for TuningSpec {
    fn default() -> Self {
        Self {
            grid: TuningGrid::default(),
            k: 5,
            dev_size: 30,
            repeats: 5,
            seed: 0,
            num_buckets: 10,
            weighting: Weighting::default(),
        }
    }
}

/// One evaluated grid point: mean ECE and correlation across repeats.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeaderboardRow {
    /// Grid index (stable across runs of the same spec).
    pub index: usize,
    pub temperature_mode: TemperatureMode,
    pub prompt_mode: PromptMode,
    pub aggregation: AggregationConfig,
    pub ece: f64,
    pub pearson_rho: Option<f64>,
}

/// A grid point the provider could not run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkippedPoint {
    pub index: usize,
    pub temperature_mode: TemperatureMode,
    pub prompt_mode: PromptMode,
    pub aggregation: AggregationConfig,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TuneResult {
    pub best: SpuqConfig,
    /// Grid index of the winner.
    pub best_index: usize,
    /// Every non-skipped grid point, exactly once.
    pub leaderboard: Vec<LeaderboardRow>,
    pub skipped: Vec<SkippedPoint>,
    /// Winning grid index of each repeat run.
    pub repeat_winners: Vec<usize>,
}

/// Ranks evaluated rows: minimal ECE, ties broken by higher Pearson
/// correlation, then by grid order.
pub fn select_best(rows: &[LeaderboardRow]) -> Option<usize> {
    rows.iter()
        .min_by(|a, b| {
            a.ece
                .partial_cmp(&b.ece)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| {
                    let ra = a.pearson_rho.unwrap_or(f64::NEG_INFINITY);
                    let rb = b.pearson_rho.unwrap_or(f64::NEG_INFINITY);
                    rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal)
                })
                .then(a.index.cmp(&b.index))
        })
        .map(|r| r.index)
}

fn capability_skip(
    point: &(PerturbationConfig, AggregationConfig),
    runner: &SpuqRunner<'_>,
) -> Option<String> {
    let profile = runner.provider().profile();
    if point.0.prompt_mode == PromptMode::SystemMessages && !profile.supports_system_message {
        return Some("provider lacks system_message support".into());
    }
    match &point.1 {
        AggregationConfig::IntraSample {
            source: crate::aggregation::IntraSource::Likelihood,
        } if !profile.supports_logprobs => Some("provider lacks logprobs".into()),
        AggregationConfig::InterSample { metric, .. }
            if metric.kind == MetricKind::EmbeddingCosine && !runner.has_embedder() =>
        {
            Some("no embedding endpoint configured".into())
        }
        _ => None,
    }
}

/// Evaluates every grid point on `repeats` resampled development splits
/// and returns the argmin-ECE configuration plus the full leaderboard.
pub fn tune(
    records: &[ExampleRecord],
    spec: &TuningSpec,
    runner: &SpuqRunner<'_>,
    request: &RequestSettings,
) -> Result<TuneResult, TuneError> {
    let points = spec.grid.enumerate(spec.k);
    if points.is_empty() {
        return Err(TuneError::EmptyGrid);
    }

    // Measure every runnable point on every repeat first; points that fail
    // at runtime join the skipped set so winners are consistent across
    // repeats.
    let mut skip_reason: Vec<Option<String>> =
        points.iter().map(|p| capability_skip(p, runner)).collect();
    let mut measurements: Vec<Vec<(f64, Option<f64>)>> = points
        .iter()
        .map(|_| Vec::with_capacity(spec.repeats))
        .collect();

    for repeat in 0..spec.repeats {
        let split_seed = mix_seed(spec.seed, repeat as u64);
        let (dev, _test) = split(records, spec.dev_size, split_seed)?;
        for (index, point) in points.iter().enumerate() {
            if skip_reason[index].is_some() {
                continue;
            }
            let config = SpuqConfig {
                perturbation: point.0.clone(),
                aggregation: point.1.clone(),
                seed: mix_seed(split_seed, index as u64),
                failure_policy: FailurePolicy::FailRun,
            };
            match run_method(&dev, &Method::Spuq(config), runner, request, split_seed) {
                Ok(run) => {
                    let ece = expected_calibration_error(
                        &run.outcomes,
                        spec.num_buckets,
                        spec.weighting,
                    )?;
                    let rho = pearson_correlation(&run.outcomes).unwrap_or(None);
                    measurements[index].push((ece, rho));
                }
                Err(e) => {
                    skip_reason[index] = Some(format!("failed: {e}"));
                    measurements[index].clear();
                }
            }
        }
    }

    let row_for = |index: usize, ece: f64, rho: Option<f64>| LeaderboardRow {
        index,
        temperature_mode: points[index].0.temperature_mode,
        prompt_mode: points[index].0.prompt_mode,
        aggregation: points[index].1.clone(),
        ece,
        pearson_rho: rho,
    };

    // Per-repeat winners over the surviving points.
    let alive: Vec<usize> = (0..points.len())
        .filter(|&i| skip_reason[i].is_none())
        .collect();
    let mut repeat_winners = Vec::with_capacity(spec.repeats);
    for repeat in 0..spec.repeats {
        let rows: Vec<LeaderboardRow> = alive
            .iter()
            .filter(|&&i| measurements[i].len() > repeat)
            .map(|&i| {
                let (ece, rho) = measurements[i][repeat];
                row_for(i, ece, rho)
            })
            .collect();
        if let Some(winner) = select_best(&rows) {
            repeat_winners.push(winner);
        }
    }

    // Leaderboard: mean across repeats, one row per non-skipped point.
    let leaderboard: Vec<LeaderboardRow> = alive
        .iter()
        .filter(|&&i| !measurements[i].is_empty())
        .map(|&i| {
            let per_repeat = &measurements[i];
            let ece = per_repeat.iter().map(|(e, _)| e).sum::<f64>() / per_repeat.len() as f64;
            let rhos: Vec<f64> = per_repeat.iter().filter_map(|(_, r)| *r).collect();
            let rho = (!rhos.is_empty()).then(|| rhos.iter().sum::<f64>() / rhos.len() as f64);
            row_for(i, ece, rho)
        })
        .collect();
    let skipped: Vec<SkippedPoint> = (0..points.len())
        .filter_map(|i| {
            skip_reason[i].clone().map(|reason| SkippedPoint {
                index: i,
                temperature_mode: points[i].0.temperature_mode,
                prompt_mode: points[i].0.prompt_mode,
                aggregation: points[i].1.clone(),
                reason,
            })
        })
        .collect();

    let best_index = select_best(&leaderboard).ok_or(TuneError::AllSkipped)?;
    let best = SpuqConfig {
        perturbation: points[best_index].0.clone(),
        aggregation: points[best_index].1.clone(),
        seed: spec.seed,
        failure_policy: FailurePolicy::FailRun,
    };
    Ok(TuneResult {
        best,
        best_index,
        leaderboard,
        skipped,
        repeat_winners,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::WeightScheme;
    use crate::dataset::TaskType;
    use crate::gateway::{Matcher, MockChoice, MockProvider, MockScript};

    fn grid_row(index: usize, ece: f64, rho: Option<f64>) -> LeaderboardRow {
        LeaderboardRow {
            index,
            temperature_mode: TemperatureMode::None,
            prompt_mode: PromptMode::DummyTokens,
            aggregation: AggregationConfig::default(),
            ece,
            pearson_rho: rho,
        }
    }

    fn synth_records(n: usize) -> Vec<ExampleRecord> {
        (0..n)
            .map(|i| ExampleRecord {
                id: i.to_string(),
                question: format!("q{i}?"),
                references: vec!["A".into()],
                task_type: TaskType::Classification,
                system_message: None,
            })
            .collect()
    }

    #[test]
    fn ties_break_by_correlation_then_order() {
        let rows = vec![
            grid_row(0, 0.2, Some(0.6)),
            grid_row(1, 0.2, Some(0.7)),
            grid_row(2, 0.3, Some(0.9)),
        ];
        assert_eq!(
            select_best(&rows),
            Some(1),
            "equal ECE resolves to higher rho"
        );

        let rows = vec![grid_row(0, 0.2, Some(0.7)), grid_row(1, 0.2, Some(0.7))];
        assert_eq!(
            select_best(&rows),
            Some(0),
            "full tie resolves to grid order"
        );

        let rows = vec![grid_row(3, 0.2, None), grid_row(4, 0.2, Some(0.1))];
        assert_eq!(select_best(&rows), Some(4), "undefined rho loses a tie");
    }

    #[test]
    fn single_point_grid_returns_that_point() {
        let records = synth_records(12);
        let script = MockScript::new(0).rule(Matcher::Any, vec![MockChoice::text("A")]);
        let mock = MockProvider::chat(script);
        let runner = SpuqRunner::new(&mock);
        let spec = TuningSpec {
            grid: TuningGrid {
                temperature_modes: vec![TemperatureMode::FixedOffset(0.3)],
                prompt_modes: vec![PromptMode::DummyTokens],
                aggregations: vec![AggregationConfig::InterSample {
                    metric: SimilarityMetric::exact_match(),
                    weights: WeightScheme::Uniform,
                }],
            },
            k: 2,
            dev_size: 8,
            repeats: 2,
            seed: 5,
            ..TuningSpec::default()
        };
        let result = tune(&records, &spec, &runner, &RequestSettings::default()).unwrap();
        assert_eq!(result.leaderboard.len(), 1);
        assert!(result.skipped.is_empty());
        assert_eq!(result.best_index, 0);
        assert_eq!(result.repeat_winners, vec![0, 0]);
        assert_eq!(
            result.best.perturbation.prompt_mode,
            PromptMode::DummyTokens
        );
    }

    #[test]
    fn capability_gaps_are_skipped_not_fatal() {
        let records = synth_records(12);
        let script = MockScript::new(0).rule(Matcher::Any, vec![MockChoice::text("A")]);
        // Default chat profile has no logprobs.
        let mock = MockProvider::new(script, crate::gateway::ProviderProfile::chat("mock"));
        let runner = SpuqRunner::new(&mock);
        let spec = TuningSpec {
            grid: TuningGrid {
                temperature_modes: vec![TemperatureMode::FixedOffset(0.3)],
                prompt_modes: vec![PromptMode::DummyTokens],
                aggregations: vec![
                    AggregationConfig::InterSample {
                        metric: SimilarityMetric::exact_match(),
                        weights: WeightScheme::Uniform,
                    },
                    AggregationConfig::IntraSample {
                        source: crate::aggregation::IntraSource::Likelihood,
                    },
                    AggregationConfig::InterSample {
                        metric: SimilarityMetric::embedding_cosine(),
                        weights: WeightScheme::SameAsMetric,
                    },
                ],
            },
            k: 2,
            dev_size: 6,
            repeats: 1,
            seed: 5,
            ..TuningSpec::default()
        };
        let result = tune(&records, &spec, &runner, &RequestSettings::default()).unwrap();
        assert_eq!(result.leaderboard.len(), 1, "grid size 3 minus 2 skipped");
        assert_eq!(result.skipped.len(), 2);
        assert!(result.skipped.iter().any(|s| s.reason.contains("logprobs")));
        assert!(result
            .skipped
            .iter()
            .any(|s| s.reason.contains("embedding")));
        assert_eq!(result.best_index, 0);
    }

    #[test]
    fn tune_is_deterministic_for_a_seed() {
        let records: Vec<ExampleRecord> = (0..16)
            .map(|i| ExampleRecord {
                id: i.to_string(),
                question: format!("is {i} even?"),
                references: vec![if i % 2 == 0 {
                    "Yes".into()
                } else {
                    "No".into()
                }],
                task_type: TaskType::Classification,
                system_message: None,
            })
            .collect();
        let script = MockScript::new(3).rule(
            Matcher::Any,
            vec![
                MockChoice::weighted("Yes", 0.5),
                MockChoice::weighted("No", 0.5),
            ],
        );
        let mock = MockProvider::chat(script);
        let runner = SpuqRunner::new(&mock);
        let spec = TuningSpec {
            grid: TuningGrid {
                temperature_modes: vec![
                    TemperatureMode::FixedOffset(0.3),
                    TemperatureMode::FixedOffset(1.3),
                ],
                prompt_modes: vec![PromptMode::DummyTokens],
                aggregations: vec![AggregationConfig::InterSample {
                    metric: SimilarityMetric::exact_match(),
                    weights: WeightScheme::Uniform,
                }],
            },
            k: 2,
            dev_size: 10,
            repeats: 2,
            seed: 9,
            ..TuningSpec::default()
        };
        let a = tune(&records, &spec, &runner, &RequestSettings::default()).unwrap();
        let b = tune(&records, &spec, &runner, &RequestSettings::default()).unwrap();
        assert_eq!(a.best_index, b.best_index);
        assert_eq!(a.repeat_winners, b.repeat_winners);
        assert_eq!(
            serde_json::to_string(&a.leaderboard).unwrap(),
            serde_json::to_string(&b.leaderboard).unwrap()
        );
    }
}
