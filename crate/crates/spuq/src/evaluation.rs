//! Accuracy scoring and calibration metrics.
//!
//! Accuracy: exact match for classification tasks, token-level F1 (best
//! over references) for generation tasks, both under QA-style answer
//! normalization. Calibration: expected calibration error over equal-width
//! confidence buckets, Pearson correlation between confidence and accuracy,
//! and a confidence histogram.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ExampleRecord, TaskType};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no outcomes to evaluate")]
    EmptyInput,
    #[error("need at least 2 outcomes for a correlation, got {n}")]
    InsufficientData { n: usize },
    #[error("num_buckets must be ≥ 1")]
    NoBuckets,
}

/// One evaluated example: the method's confidence and the graded accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub confidence: f64,
    pub accuracy: f64,
}

/// QA answer normalization: lowercase, drop punctuation, drop the articles
/// a/an/the, split on whitespace. Distinct from (and stricter than) the
/// similarity-metric tokenizer, which keeps articles and punctuation.
pub fn qa_tokens(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| c.is_whitespace() || c.is_ascii_punctuation())
        .filter(|t| !t.is_empty() && *t != "a" && *t != "an" && *t != "the")
        .map(str::to_string)
        .collect()
}

/// Token-level F1 between a prediction and a single reference.
pub fn token_f1(prediction: &str, reference: &str) -> f64 {
    let pred = qa_tokens(prediction);
    let gold = qa_tokens(reference);
    if pred.is_empty() || gold.is_empty() {
        return 0.0;
    }
    let mut counts = std::collections::HashMap::<&str, isize>::new();
    for t in &gold {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in &pred {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / pred.len() as f64;
    let recall = overlap as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Grades a prediction against a record: exact match (0/1) for
/// classification, best token-F1 over the references for generation.
/// An empty prediction scores 0; that is a result, not an error.
pub fn accuracy(prediction: &str, record: &ExampleRecord) -> f64 {
    match record.task_type {
        TaskType::Classification => {
            let pred = qa_tokens(prediction);
            let hit = record.references.iter().any(|r| qa_tokens(r) == pred) && !pred.is_empty();
            if hit {
                1.0
            } else {
                0.0
            }
        }
        TaskType::Generation => record
            .references
            .iter()
            .map(|r| token_f1(prediction, r))
            .fold(0.0, f64::max),
    }
}

/// How bucket gaps are combined into the final ECE number.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Plain mean of |accuracy − confidence| over non-empty buckets.
    #[default]
    Unweighted,
    /// Buckets weighted by their population share (the common ECE form).
    Population,
}

impl std::fmt::Display for Weighting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Weighting::Unweighted => "unweighted",
            Weighting::Population => "population",
        })
    }
}

/// Per-bucket reliability statistics. Buckets are equal-width over [0, 1],
/// left-closed, with the last bucket right-closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketStat {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_confidence: Option<f64>,
    pub mean_accuracy: Option<f64>,
}

fn bucket_index(confidence: f64, num_buckets: usize) -> usize {
    let v = confidence.clamp(0.0, 1.0);
    ((v * num_buckets as f64).floor() as usize).min(num_buckets - 1)
}

/// Partitions outcomes into `num_buckets` reliability buckets.
pub fn reliability_buckets(
    outcomes: &[EvalOutcome],
    num_buckets: usize,
) -> Result<Vec<BucketStat>, EvalError> {
    if num_buckets == 0 {
        return Err(EvalError::NoBuckets);
    }
    if outcomes.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut count = vec![0usize; num_buckets];
    let mut conf_sum = vec![0.0f64; num_buckets];
    let mut acc_sum = vec![0.0f64; num_buckets];
    for o in outcomes {
        let b = bucket_index(o.confidence, num_buckets);
        count[b] += 1;
        conf_sum[b] += o.confidence;
        acc_sum[b] += o.accuracy;
    }
    Ok((0..num_buckets)
        .map(|b| BucketStat {
            lo: b as f64 / num_buckets as f64,
            hi: (b + 1) as f64 / num_buckets as f64,
            count: count[b],
            mean_confidence: (count[b] > 0).then(|| conf_sum[b] / count[b] as f64),
            mean_accuracy: (count[b] > 0).then(|| acc_sum[b] / count[b] as f64),
        })
        .collect())
}

/// ECE recomputed from bucket statistics.
pub fn ece_from_buckets(buckets: &[BucketStat], weighting: Weighting) -> f64 {
    let gaps: Vec<(usize, f64)> = buckets
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| {
            (
                b.count,
                (b.mean_accuracy.unwrap() - b.mean_confidence.unwrap()).abs(),
            )
        })
        .collect();
    if gaps.is_empty() {
        return 0.0;
    }
    match weighting {
        Weighting::Unweighted => gaps.iter().map(|(_, g)| g).sum::<f64>() / gaps.len() as f64,
        Weighting::Population => {
            let n: usize = gaps.iter().map(|(c, _)| c).sum();
            gaps.iter().map(|(c, g)| *c as f64 * g).sum::<f64>() / n as f64
        }
    }
}

/// Expected calibration error over equal-width confidence buckets.
pub fn expected_calibration_error(
    outcomes: &[EvalOutcome],
    num_buckets: usize,
    weighting: Weighting,
) -> Result<f64, EvalError> {
    Ok(ece_from_buckets(
        &reliability_buckets(outcomes, num_buckets)?,
        weighting,
    ))
}

/// Pearson correlation between confidence and accuracy. `Ok(None)` when
/// either variable has zero variance (the correlation is undefined).
pub fn pearson_correlation(outcomes: &[EvalOutcome]) -> Result<Option<f64>, EvalError> {
    let n = outcomes.len();
    if n < 2 {
        return Err(EvalError::InsufficientData { n });
    }
    let nf = n as f64;
    let mean_c = outcomes.iter().map(|o| o.confidence).sum::<f64>() / nf;
    let mean_a = outcomes.iter().map(|o| o.accuracy).sum::<f64>() / nf;
    let mut cov = 0.0;
    let mut var_c = 0.0;
    let mut var_a = 0.0;
    for o in outcomes {
        let dc = o.confidence - mean_c;
        let da = o.accuracy - mean_a;
        cov += dc * da;
        var_c += dc * dc;
        var_a += da * da;
    }
    if var_c == 0.0 || var_a == 0.0 {
        return Ok(None);
    }
    Ok(Some(cov / (var_c.sqrt() * var_a.sqrt())))
}

/// Confidence counts per equal-width bucket; sums to `outcomes.len()`.
pub fn confidence_histogram(outcomes: &[EvalOutcome], num_buckets: usize) -> Vec<usize> {
    let mut counts = vec![0usize; num_buckets.max(1)];
    for o in outcomes {
        counts[bucket_index(o.confidence, num_buckets.max(1))] += 1;
    }
    counts
}

/// The full calibration summary emitted by the evaluation harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub n: usize,
    pub num_buckets: usize,
    pub weighting: Weighting,
    pub ece: f64,
    /// `None` when the correlation is undefined (zero variance).
    pub pearson_rho: Option<f64>,
    pub buckets: Vec<BucketStat>,
    pub confidence_histogram: Vec<usize>,
}

impl CalibrationReport {
    pub fn from_outcomes(
        outcomes: &[EvalOutcome],
        num_buckets: usize,
        weighting: Weighting,
    ) -> Result<Self, EvalError> {
        let buckets = reliability_buckets(outcomes, num_buckets)?;
        let ece = ece_from_buckets(&buckets, weighting);
        let pearson_rho = match pearson_correlation(outcomes) {
            Ok(rho) => rho,
            Err(EvalError::InsufficientData { .. }) => None,
            Err(e) => return Err(e),
        };
        Ok(Self {
            n: outcomes.len(),
            num_buckets,
            weighting,
            ece,
            pearson_rho,
            buckets,
            confidence_histogram: confidence_histogram(outcomes, num_buckets),
        })
    }

    /// ASCII reliability diagram: one bar per bucket, accuracy vs confidence.
    pub fn reliability_diagram(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "reliability diagram (n={}, ece={:.4}, weighting={})\n",
            self.n, self.ece, self.weighting
        ));
        let width = 40usize;
        for b in &self.buckets {
            let (acc, conf) = match (b.mean_accuracy, b.mean_confidence) {
                (Some(a), Some(c)) => (a, c),
                _ => {
                    out.push_str(&format!("[{:.2},{:.2})  (empty)\n", b.lo, b.hi));
                    continue;
                }
            };
            let bar = "#".repeat((acc * width as f64).round() as usize);
            out.push_str(&format!(
                "[{:.2},{:.2}) {:<width$} acc={:.3} conf={:.3} n={}\n",
                b.lo,
                b.hi,
                bar,
                acc,
                conf,
                b.count,
                width = width
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(task_type: TaskType, references: &[&str]) -> ExampleRecord {
        ExampleRecord {
            id: "t".into(),
            question: "q".into(),
            references: references.iter().map(|s| s.to_string()).collect(),
            task_type,
            system_message: None,
        }
    }

    fn outcome(confidence: f64, accuracy: f64) -> EvalOutcome {
        EvalOutcome {
            confidence,
            accuracy,
        }
    }

    #[test]
    fn classification_accuracy_is_exact_match_after_normalization() {
        let r = record(TaskType::Classification, &["No"]);
        assert_eq!(accuracy("No", &r), 1.0);
        assert_eq!(accuracy("Yes", &r), 0.0);
        // "yes." normalizes to "yes".
        let r = record(TaskType::Classification, &["Yes"]);
        assert_eq!(accuracy("yes.", &r), 1.0);
        assert_eq!(accuracy("", &r), 0.0);
    }

    #[test]
    fn generation_accuracy_is_token_f1() {
        // "in Paris France" vs "Paris": P = 1/3, R = 1, F1 = 0.5.
        let r = record(TaskType::Generation, &["Paris"]);
        assert!((accuracy("in Paris France", &r) - 0.5).abs() < 1e-12);
        // Articles are stripped: "the Paris" == "Paris".
        assert_eq!(accuracy("the Paris", &r), 1.0);
        // Best over references.
        let r = record(TaskType::Generation, &["London", "Paris France"]);
        let got = accuracy("Paris", &r);
        let expect = 2.0 * 1.0 * 0.5 / 1.5;
        assert!((got - expect).abs() < 1e-12);
        assert_eq!(accuracy("", &r), 0.0);
    }

    #[test]
    fn token_f1_swapping_roles_swaps_precision_and_recall() {
        // F1 itself is symmetric under swapping prediction and reference.
        assert_eq!(
            token_f1("in Paris France", "Paris"),
            token_f1("Paris", "in Paris France")
        );
    }

    #[test]
    fn ece_hand_case_is_030_for_both_weightings() {
        let outcomes = vec![
            outcome(0.95, 1.0),
            outcome(0.95, 0.0),
            outcome(0.15, 0.0),
            outcome(0.15, 0.0),
        ];
        // Bucket [0.1,0.2): |0 − 0.15| = 0.15; bucket [0.9,1.0]: |0.5 − 0.95| = 0.45.
        // Unweighted mean: 0.30. Equal counts make the weighted form agree.
        let unweighted = expected_calibration_error(&outcomes, 10, Weighting::Unweighted).unwrap();
        assert!((unweighted - 0.30).abs() < 1e-12, "unweighted {unweighted}");
        let weighted = expected_calibration_error(&outcomes, 10, Weighting::Population).unwrap();
        assert!((weighted - 0.30).abs() < 1e-12, "weighted {weighted}");
    }

    #[test]
    fn perfectly_calibrated_bucket_scores_zero() {
        // All confidence 0.75, accuracy averaging 0.75.
        let outcomes = vec![
            outcome(0.75, 1.0),
            outcome(0.75, 1.0),
            outcome(0.75, 1.0),
            outcome(0.75, 0.0),
        ];
        let ece = expected_calibration_error(&outcomes, 10, Weighting::Unweighted).unwrap();
        assert!(ece.abs() < 1e-12);
    }

    #[test]
    fn empty_outcomes_are_an_error() {
        assert!(matches!(
            expected_calibration_error(&[], 10, Weighting::Unweighted),
            Err(EvalError::EmptyInput)
        ));
    }

    #[test]
    fn pearson_hand_cases() {
        // Confidence equal to accuracy: rho = 1.
        let outcomes: Vec<EvalOutcome> = [0.1, 0.4, 0.9].iter().map(|&v| outcome(v, v)).collect();
        let rho = pearson_correlation(&outcomes).unwrap().unwrap();
        assert!((rho - 1.0).abs() < 1e-12);

        // Constant confidence: undefined.
        let outcomes = vec![outcome(0.5, 0.0), outcome(0.5, 1.0)];
        assert_eq!(pearson_correlation(&outcomes).unwrap(), None);

        // {(0.9,1),(0.8,1),(0.2,0),(0.1,0)}: closed form gives
        // cov = 0.7, var_c = 0.5, var_a = 1.0 (unnormalized sums), so
        // rho = 0.7 / sqrt(0.5) = 0.9899494936611665.
        let outcomes = vec![
            outcome(0.9, 1.0),
            outcome(0.8, 1.0),
            outcome(0.2, 0.0),
            outcome(0.1, 0.0),
        ];
        let rho = pearson_correlation(&outcomes).unwrap().unwrap();
        assert!((rho - 0.7 / 0.5f64.sqrt()).abs() < 1e-12, "rho {rho}");

        assert!(matches!(
            pearson_correlation(&[outcome(1.0, 1.0)]),
            Err(EvalError::InsufficientData { n: 1 })
        ));
    }

    #[test]
    fn histogram_counts_sum_to_n() {
        let outcomes = vec![
            outcome(0.0, 0.0),
            outcome(0.05, 0.0),
            outcome(0.95, 1.0),
            outcome(1.0, 1.0),
        ];
        let hist = confidence_histogram(&outcomes, 10);
        assert_eq!(hist.iter().sum::<usize>(), 4);
        assert_eq!(hist[0], 2);
        // 1.0 lands in the right-closed last bucket.
        assert_eq!(hist[9], 2);
    }

    #[test]
    fn report_round_trips_through_json() {
        let outcomes = vec![
            outcome(0.9, 1.0),
            outcome(0.8, 1.0),
            outcome(0.2, 0.0),
            outcome(0.1, 0.0),
        ];
        let report =
            CalibrationReport::from_outcomes(&outcomes, 10, Weighting::Unweighted).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        let reloaded: CalibrationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(report.ece, reloaded.ece);
        assert_eq!(report.pearson_rho, reloaded.pearson_rho);
        assert_eq!(report, reloaded);
    }

    #[test]
    fn ece_is_recomputable_from_buckets() {
        let outcomes: Vec<EvalOutcome> = (0..17)
            .map(|i| outcome(i as f64 / 16.0, if i % 3 == 0 { 1.0 } else { 0.0 }))
            .collect();
        let report =
            CalibrationReport::from_outcomes(&outcomes, 10, Weighting::Population).unwrap();
        let recomputed = ece_from_buckets(&report.buckets, Weighting::Population);
        assert!((report.ece - recomputed).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn ece_is_bounded_and_permutation_invariant(
            values in proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 1..60),
            rotation in 0usize..60,
        ) {
            let outcomes: Vec<EvalOutcome> =
                values.iter().map(|&(c, a)| outcome(c, a)).collect();
            let ece = expected_calibration_error(&outcomes, 10, Weighting::Unweighted).unwrap();
            prop_assert!((0.0..=1.0).contains(&ece));
            let mut rotated = outcomes.clone();
            let len = rotated.len().max(1);
            rotated.rotate_left(rotation % len);
            let ece_rot = expected_calibration_error(&rotated, 10, Weighting::Unweighted).unwrap();
            prop_assert!((ece - ece_rot).abs() < 1e-12);
        }

        #[test]
        fn histogram_always_sums_to_n(
            values in proptest::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), 0..40),
            buckets in 1usize..20,
        ) {
            let outcomes: Vec<EvalOutcome> =
                values.iter().map(|&(c, a)| outcome(c, a)).collect();
            let hist = confidence_histogram(&outcomes, buckets);
            prop_assert_eq!(hist.iter().sum::<usize>(), outcomes.len());
            prop_assert_eq!(hist.len(), buckets);
        }
    }
}
