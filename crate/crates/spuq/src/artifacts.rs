//! Evaluation output files: `report.json`, `buckets.csv`,
//! `confidences.csv`, `traces.jsonl`, and the tuner's `leaderboard.csv`.
//! All files are written atomically (temp file + rename) at the end of a
//! run and contain nothing non-deterministic, so identical seeded runs
//! produce byte-identical artifacts.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{BucketStat, CalibrationReport};
use crate::harness::TraceRecord;
use crate::tuner::{LeaderboardRow, SkippedPoint};

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error at {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

/// Mean ± standard deviation across repeat runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatSummary {
    pub runs: usize,
    pub ece_mean: f64,
    pub ece_std: f64,
    pub rho_mean: Option<f64>,
    pub rho_std: Option<f64>,
}

impl RepeatSummary {
    pub fn from_reports(reports: &[CalibrationReport]) -> Option<Self> {
        if reports.len() < 2 {
            return None;
        }
        let eces: Vec<f64> = reports.iter().map(|r| r.ece).collect();
        let rhos: Vec<f64> = reports.iter().filter_map(|r| r.pearson_rho).collect();
        let (ece_mean, ece_std) = mean_std(&eces);
        let (rho_mean, rho_std) = if rhos.len() == reports.len() {
            let (m, s) = mean_std(&rhos);
            (Some(m), Some(s))
        } else {
            (None, None)
        };
        Some(Self {
            runs: reports.len(),
            ece_mean,
            ece_std,
            rho_mean,
            rho_std,
        })
    }
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Top-level `report.json` body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReportFile {
    pub method: String,
    pub config_hash: String,
    pub seed: u64,
    pub report: CalibrationReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeats: Option<RepeatSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, ArtifactError> {
    let path = dir.join(name);
    let io_err = |source| ArtifactError::Io {
        path: path.clone(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(io_err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(bytes).map_err(io_err)?;
    tmp.persist(&path).map_err(|e| io_err(e.error))?;
    Ok(path)
}

pub fn write_report_json(
    dir: &Path,
    report: &EvaluationReportFile,
) -> Result<PathBuf, ArtifactError> {
    let mut body = serde_json::to_vec_pretty(report).expect("report serializes");
    body.push(b'\n');
    write_atomic(dir, "report.json", &body)
}

pub fn write_buckets_csv(dir: &Path, buckets: &[BucketStat]) -> Result<PathBuf, ArtifactError> {
    let path = dir.join("buckets.csv");
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |source| ArtifactError::Csv {
        path: path.clone(),
        source,
    };
    w.write_record(["lo", "hi", "count", "mean_confidence", "mean_accuracy"])
        .map_err(csv_err)?;
    for b in buckets {
        w.write_record([
            b.lo.to_string(),
            b.hi.to_string(),
            b.count.to_string(),
            b.mean_confidence.map(|v| v.to_string()).unwrap_or_default(),
            b.mean_accuracy.map(|v| v.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().expect("csv into_inner");
    write_atomic(dir, "buckets.csv", &bytes)
}

pub fn read_buckets_csv(path: &Path) -> Result<Vec<BucketStat>, ArtifactError> {
    let csv_err = |source| ArtifactError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(|source| ArtifactError::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let mut buckets = Vec::new();
    for result in r.records() {
        let record = result.map_err(csv_err)?;
        let parse = |i: usize| record.get(i).and_then(|s| s.parse::<f64>().ok());
        buckets.push(BucketStat {
            lo: parse(0).unwrap_or(0.0),
            hi: parse(1).unwrap_or(0.0),
            count: record.get(2).and_then(|s| s.parse().ok()).unwrap_or(0),
            mean_confidence: parse(3),
            mean_accuracy: parse(4),
        });
    }
    Ok(buckets)
}

pub fn write_confidences_csv(dir: &Path, traces: &[TraceRecord]) -> Result<PathBuf, ArtifactError> {
    let path = dir.join("confidences.csv");
    let csv_err = |source| ArtifactError::Csv {
        path: path.clone(),
        source,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["example_id", "confidence", "accuracy"])
        .map_err(csv_err)?;
    for t in traces {
        w.write_record([
            t.example_id.clone(),
            t.confidence.to_string(),
            t.accuracy.to_string(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().expect("csv into_inner");
    write_atomic(dir, "confidences.csv", &bytes)
}

pub fn write_traces_jsonl(dir: &Path, traces: &[TraceRecord]) -> Result<PathBuf, ArtifactError> {
    let mut body = Vec::new();
    for t in traces {
        serde_json::to_writer(&mut body, t).expect("trace serializes");
        body.push(b'\n');
    }
    write_atomic(dir, "traces.jsonl", &body)
}

pub fn write_leaderboard_csv(
    dir: &Path,
    rows: &[LeaderboardRow],
) -> Result<PathBuf, ArtifactError> {
    let path = dir.join("leaderboard.csv");
    let csv_err = |source| ArtifactError::Csv {
        path: path.clone(),
        source,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "index",
        "temperature_mode",
        "prompt_mode",
        "aggregation",
        "ece",
        "pearson_rho",
    ])
    .map_err(csv_err)?;
    for row in rows {
        w.write_record([
            row.index.to_string(),
            row.temperature_mode.to_string(),
            row.prompt_mode.to_string(),
            row.aggregation.describe(),
            row.ece.to_string(),
            row.pearson_rho.map(|v| v.to_string()).unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().expect("csv into_inner");
    write_atomic(dir, "leaderboard.csv", &bytes)
}

/// Grid points the provider could not run, with their reasons.
pub fn write_skipped_csv(dir: &Path, rows: &[SkippedPoint]) -> Result<PathBuf, ArtifactError> {
    let path = dir.join("skipped.csv");
    let csv_err = |source| ArtifactError::Csv {
        path: path.clone(),
        source,
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "index",
        "temperature_mode",
        "prompt_mode",
        "aggregation",
        "reason",
    ])
    .map_err(csv_err)?;
    for row in rows {
        w.write_record([
            row.index.to_string(),
            row.temperature_mode.to_string(),
            row.prompt_mode.to_string(),
            row.aggregation.describe(),
            row.reason.clone(),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w.into_inner().expect("csv into_inner");
    write_atomic(dir, "skipped.csv", &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{ece_from_buckets, EvalOutcome, Weighting};

    #[test]
    fn buckets_csv_round_trips_exactly() {
        let outcomes: Vec<EvalOutcome> = (0..23)
            .map(|i| EvalOutcome {
                confidence: (i as f64 / 22.0) * 0.999,
                accuracy: if i % 2 == 0 { 1.0 } else { 0.0 },
            })
            .collect();
        let report =
            CalibrationReport::from_outcomes(&outcomes, 10, Weighting::Unweighted).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = write_buckets_csv(dir.path(), &report.buckets).unwrap();
        let reloaded = read_buckets_csv(&path).unwrap();
        let recomputed = ece_from_buckets(&reloaded, Weighting::Unweighted);
        assert!(
            (recomputed - report.ece).abs() < 1e-9,
            "recomputed {recomputed} vs reported {}",
            report.ece
        );
    }

    #[test]
    fn repeat_summary_reports_mean_and_std() {
        let mk = |ece: f64| CalibrationReport {
            n: 4,
            num_buckets: 10,
            weighting: Weighting::Unweighted,
            ece,
            pearson_rho: Some(0.5),
            buckets: vec![],
            confidence_histogram: vec![],
        };
        let summary = RepeatSummary::from_reports(&[mk(0.2), mk(0.4)]).unwrap();
        assert!((summary.ece_mean - 0.3).abs() < 1e-12);
        assert!((summary.ece_std - 0.1).abs() < 1e-12);
        assert_eq!(summary.rho_mean, Some(0.5));
        assert!(RepeatSummary::from_reports(&[mk(0.2)]).is_none());
    }
}
