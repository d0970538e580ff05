//! Textual similarity `s(·,·)` used for output agreement and prompt weights.
//!
//! Three metrics: exact match over normalized token sequences, ROUGE-L
//! (the LCS-based F-measure with β = 1), and cosine similarity over an
//! external embedding endpoint. All scores live in `[0, 1]` and satisfy
//! `s(a, a) = 1` for non-empty `a`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Embedder, GatewayError};

#[derive(Debug, Error)]
pub enum SimilarityError {
    /// The embedding-cosine metric was requested but no embedder is wired up.
    #[error("provider lacks capability: {0}")]
    Capability(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Tokenizer settings shared by the similarity metrics.
///
/// Text is trimmed, optionally lowercased, punctuation is separated into
/// its own tokens (or dropped entirely with `strip_punctuation`), then the
/// result is split on whitespace. Articles are kept — the QA accuracy
/// scorer in [`crate::evaluation`] uses its own, stricter normalizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Normalization {
    pub lowercase: bool,
    pub strip_punctuation: bool,
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            lowercase: true,
            strip_punctuation: false,
        }
    }
}

impl Normalization {
    pub fn tokenize(&self, text: &str) -> Vec<String> {
        let text = if self.lowercase {
            text.to_lowercase()
        } else {
            text.to_string()
        };
        let mut tokens = Vec::new();
        let mut current = String::new();
        for ch in text.trim().chars() {
            if ch.is_whitespace() {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
            } else if ch.is_ascii_punctuation() {
                if !current.is_empty() {
                    tokens.push(std::mem::take(&mut current));
                }
                if !self.strip_punctuation {
                    tokens.push(ch.to_string());
                }
            } else {
                current.push(ch);
            }
        }
        if !current.is_empty() {
            tokens.push(current);
        }
        tokens
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    ExactMatch,
    RougeL,
    EmbeddingCosine,
}

impl std::fmt::Display for MetricKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MetricKind::ExactMatch => "exact_match",
            MetricKind::RougeL => "rouge_l",
            MetricKind::EmbeddingCosine => "embedding_cosine",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMetric {
    pub kind: MetricKind,
    #[serde(default)]
    pub normalization: Normalization,
}

impl SimilarityMetric {
    pub fn exact_match() -> Self {
        Self {
            kind: MetricKind::ExactMatch,
            normalization: Normalization::default(),
        }
    }

    pub fn rouge_l() -> Self {
        Self {
            kind: MetricKind::RougeL,
            normalization: Normalization::default(),
        }
    }

    pub fn embedding_cosine() -> Self {
        Self {
            kind: MetricKind::EmbeddingCosine,
            normalization: Normalization::default(),
        }
    }
}

impl Default for SimilarityMetric {
    fn default() -> Self {
        Self::rouge_l()
    }
}

/// Longest-common-subsequence length. `O(|a|·|b|)` time, two-row memory
/// kept at `O(min(|a|, |b|))`.
pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; short.len() + 1];
    let mut curr = vec![0usize; short.len() + 1];
    for item in long {
        for (j, s) in short.iter().enumerate() {
            curr[j + 1] = if item == s {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[short.len()]
}

/// ROUGE-L F-measure (β = 1) over already-normalized token sequences.
pub fn rouge_l_tokens(a: &[String], b: &[String]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let lcs = lcs_length(a, b) as f64;
    let precision = lcs / a.len() as f64;
    let recall = lcs / b.len() as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Anything that can score a pair of texts in `[0, 1]`.
///
/// The production implementation is [`MetricScorer`]; tests substitute
/// table-driven scorers to exercise the aggregation arithmetic directly.
pub trait TextSimilarity: Sync {
    fn score(&self, a: &str, b: &str) -> Result<f64, SimilarityError>;
}

/// Scores texts with a [`SimilarityMetric`], deferring to an [`Embedder`]
/// for the embedding-cosine metric.
pub struct MetricScorer<'a> {
    pub metric: SimilarityMetric,
    pub embedder: Option<&'a dyn Embedder>,
}

impl<'a> MetricScorer<'a> {
    pub fn new(metric: SimilarityMetric) -> Self {
        Self {
            metric,
            embedder: None,
        }
    }

    pub fn with_embedder(metric: SimilarityMetric, embedder: &'a dyn Embedder) -> Self {
        Self {
            metric,
            embedder: Some(embedder),
        }
    }
}

impl TextSimilarity for MetricScorer<'_> {
    fn score(&self, a: &str, b: &str) -> Result<f64, SimilarityError> {
        let norm = self.metric.normalization;
        let ta = norm.tokenize(a);
        let tb = norm.tokenize(b);
        // Empty-after-normalization is a defined result, not an error.
        if ta.is_empty() || tb.is_empty() {
            let score = if ta.is_empty() && tb.is_empty() {
                1.0
            } else {
                0.0
            };
            log::debug!("similarity over empty-normalized text: {score}");
            return Ok(score);
        }
        match self.metric.kind {
            MetricKind::ExactMatch => Ok(if ta == tb { 1.0 } else { 0.0 }),
            MetricKind::RougeL => Ok(rouge_l_tokens(&ta, &tb)),
            MetricKind::EmbeddingCosine => {
                let embedder = self
                    .embedder
                    .ok_or_else(|| SimilarityError::Capability("embedding endpoint".into()))?;
                if a == b {
                    return Ok(1.0);
                }
                let va = embedder.embed(a)?;
                let vb = embedder.embed(b)?;
                Ok(cosine(&va, &vb).clamp(0.0, 1.0))
            }
        }
    }
}

/// Convenience wrapper for the non-embedding metrics.
pub fn similarity(a: &str, b: &str, metric: SimilarityMetric) -> Result<f64, SimilarityError> {
    MetricScorer::new(metric).score(a, b)
}

/// Assigns 1.0 to every pair; realizes uniform (majority-vote style)
/// prompt weights.
pub struct UniformSimilarity;

impl TextSimilarity for UniformSimilarity {
    fn score(&self, _a: &str, _b: &str) -> Result<f64, SimilarityError> {
        Ok(1.0)
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
