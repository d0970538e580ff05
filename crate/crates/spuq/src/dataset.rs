//! JSONL question-answering dataset IO.
//!
//! One canonical line schema covers every dataset:
//! `{"id"?, "question", "answers": list|scalar, "system_message"?}`, with an
//! optional `{"schema": "spuq-qa-v1"}` header line. Conversion from public
//! QA datasets into this shape is a documentation-level concern; the crate
//! ships desk-scale fixtures under `fixtures/`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: &str = "spuq-qa-v1";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: malformed record: {reason}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        reason: String,
    },
    #[error("unsupported schema {found:?} (expected {SCHEMA_VERSION:?})")]
    Schema { found: String },
    #[error("dev_size {dev_size} must be smaller than the dataset ({n} records)")]
    DevSizeTooLarge { dev_size: usize, n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    /// References come from a finite label set; accuracy is exact match.
    Classification,
    /// Free-form answers; accuracy is token-level F1 against references.
    Generation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub question: String,
    pub references: Vec<String>,
    pub task_type: TaskType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_message: Option<String>,
}

#[derive(Debug, Deserialize)]
struct RawLine {
    #[serde(default)]
    schema: Option<String>,
    #[serde(default)]
    id: Option<serde_json::Value>,
    #[serde(default)]
    question: Option<String>,
    #[serde(default)]
    answers: Option<serde_json::Value>,
    #[serde(default)]
    system_message: Option<String>,
}

fn scalar_to_string(v: &serde_json::Value) -> Option<String> {
    match v {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        serde_json::Value::Bool(b) => Some(b.to_string()),
        _ => None,
    }
}

/// Loads a JSONL file into records. Scalar `answers` are wrapped into
/// singleton lists; missing ids become the record's 0-based index.
/// Malformed lines fail fast with the offending line number.
pub fn load_jsonl(
    path: impl AsRef<Path>,
    task_type: TaskType,
) -> Result<Vec<ExampleRecord>, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut records = Vec::new();
    for (line_idx, line) in text.lines().enumerate() {
        let line_no = line_idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| DatasetError::MalformedLine {
            path: path.to_path_buf(),
            line: line_no,
            reason,
        };
        let raw: RawLine = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        if let Some(schema) = raw.schema {
            if records.is_empty() && raw.question.is_none() {
                if schema != SCHEMA_VERSION {
                    return Err(DatasetError::Schema { found: schema });
                }
                continue;
            }
        }
        let question = raw
            .question
            .filter(|q| !q.is_empty())
            .ok_or_else(|| malformed("missing or empty `question`".into()))?;
        let references = match raw.answers {
            Some(serde_json::Value::Array(items)) => {
                let refs: Option<Vec<String>> = items.iter().map(scalar_to_string).collect();
                refs.filter(|r| !r.is_empty())
                    .ok_or_else(|| malformed("`answers` list must hold scalars".into()))?
            }
            Some(ref scalar) => vec![scalar_to_string(scalar)
                .ok_or_else(|| malformed("`answers` must be a scalar or list".into()))?],
            None => return Err(malformed("missing `answers`".into())),
        };
        let id = match raw.id {
            Some(v) => {
                scalar_to_string(&v).ok_or_else(|| malformed("`id` must be a scalar".into()))?
            }
            None => records.len().to_string(),
        };
        records.push(ExampleRecord {
            id,
            question,
            references,
            task_type,
            system_message: raw.system_message,
        });
    }
    Ok(records)
}

/// Writes records back out as canonical JSONL (inverse of [`load_jsonl`]).
pub fn save_jsonl(records: &[ExampleRecord], path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for record in records {
        let mut line = serde_json::json!({
            "id": record.id,
            "question": record.question,
            "answers": record.references,
        });
        if let Some(sm) = &record.system_message {
            line["system_message"] = serde_json::json!(sm);
        }
        writeln!(out, "{line}").expect("writing to Vec cannot fail");
    }
    fs::write(path, out).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Seeded uniform split without replacement into (dev, test). The two
/// halves are disjoint, exhaustive, and keep the input order within each
/// half.
pub fn split(
    records: &[ExampleRecord],
    dev_size: usize,
    seed: u64,
) -> Result<(Vec<ExampleRecord>, Vec<ExampleRecord>), DatasetError> {
    let n = records.len();
    if dev_size >= n {
        return Err(DatasetError::DevSizeTooLarge { dev_size, n });
    }
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..dev_size {
        let j = rng.random_range(i..n);
        indices.swap(i, j);
    }
    let mut in_dev = vec![false; n];
    for &i in &indices[..dev_size] {
        in_dev[i] = true;
    }
    let mut dev = Vec::with_capacity(dev_size);
    let mut test = Vec::with_capacity(n - dev_size);
    for (i, record) in records.iter().enumerate() {
        if in_dev[i] {
            dev.push(record.clone());
        } else {
            test.push(record.clone());
        }
    }
    Ok((dev, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn synth(n: usize) -> Vec<ExampleRecord> {
        (0..n)
            .map(|i| ExampleRecord {
                id: i.to_string(),
                question: format!("question {i}?"),
                references: vec!["Yes".into()],
                task_type: TaskType::Classification,
                system_message: None,
            })
            .collect()
    }

    #[test]
    fn loads_list_and_scalar_answers() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        fs::write(
            &path,
            concat!(
                "{\"schema\":\"spuq-qa-v1\"}\n",
                "{\"question\":\"Q\",\"answers\":[\"Yes\"]}\n",
                "{\"question\":\"Capital of France?\",\"answers\":\"Paris\"}\n",
            ),
        )
        .unwrap();
        let records = load_jsonl(&path, TaskType::Classification).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].references, vec!["Yes"]);
        assert_eq!(records[1].references, vec!["Paris"]);
    }

    #[test]
    fn missing_ids_become_record_indices() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let lines: String = (0..8)
            .map(|i| format!("{{\"question\":\"q{i}\",\"answers\":\"a\"}}\n"))
            .collect();
        fs::write(&path, lines).unwrap();
        let records = load_jsonl(&path, TaskType::Generation).unwrap();
        assert_eq!(records.len(), 8);
        let ids: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
        assert_eq!(ids, (0..8).map(|i| i.to_string()).collect::<Vec<_>>());
    }

    #[test]
    fn malformed_line_errors_cite_the_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        fs::write(&path, "{\"question\":\"ok\",\"answers\":\"a\"}\nnot json\n").unwrap();
        match load_jsonl(&path, TaskType::Classification) {
            Err(DatasetError::MalformedLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected MalformedLine, got {other:?}"),
        }
    }

    #[test]
    fn unknown_schema_header_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        fs::write(&path, "{\"schema\":\"spuq-qa-v9\"}\n").unwrap();
        assert!(matches!(
            load_jsonl(&path, TaskType::Classification),
            Err(DatasetError::Schema { .. })
        ));
    }

    #[test]
    fn bundled_fixtures_load() {
        let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
        let binary = load_jsonl(root.join("binary_qa.jsonl"), TaskType::Classification).unwrap();
        assert_eq!(binary.len(), 8);
        assert_eq!(
            binary.iter().map(|r| r.id.as_str()).collect::<Vec<_>>(),
            vec!["0", "1", "2", "3", "4", "5", "6", "7"],
        );
        let open = load_jsonl(root.join("open_qa.jsonl"), TaskType::Generation).unwrap();
        assert_eq!(open.len(), 8);
        assert_eq!(open[0].id, "coqa-0");
        assert!(open.iter().all(|r| !r.references.is_empty()));
    }

    #[test]
    fn jsonl_round_trip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let mut records = synth(5);
        records[3].system_message = Some("You are a helpful assistant".into());
        records[2].references = vec!["a".into(), "b".into()];
        save_jsonl(&records, &path).unwrap();
        let reloaded = load_jsonl(&path, TaskType::Classification).unwrap();
        assert_eq!(records, reloaded);
    }

    #[test]
    fn split_is_disjoint_and_exhaustive() {
        let records = synth(50);
        let (dev, test) = split(&records, 30, 17).unwrap();
        assert_eq!(dev.len(), 30);
        assert_eq!(test.len(), 20);
        let dev_ids: HashSet<_> = dev.iter().map(|r| r.id.clone()).collect();
        let test_ids: HashSet<_> = test.iter().map(|r| r.id.clone()).collect();
        assert!(dev_ids.is_disjoint(&test_ids));
        assert_eq!(dev_ids.len() + test_ids.len(), 50);
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let records = synth(50);
        let (dev_a, _) = split(&records, 30, 17).unwrap();
        let (dev_b, _) = split(&records, 30, 17).unwrap();
        assert_eq!(dev_a, dev_b);
    }

    #[test]
    fn distinct_seeds_rarely_collide() {
        let records = synth(50);
        let splits: Vec<Vec<String>> = (0..100)
            .map(|seed| {
                split(&records, 10, seed)
                    .unwrap()
                    .0
                    .iter()
                    .map(|r| r.id.clone())
                    .collect()
            })
            .collect();
        let distinct: HashSet<_> = splits.iter().collect();
        // 100 seeds choosing 10 of 50: collisions should be essentially absent.
        assert!(
            distinct.len() >= 99,
            "only {} distinct dev splits",
            distinct.len()
        );
    }

    #[test]
    fn oversized_dev_split_is_rejected() {
        let records = synth(10);
        assert!(matches!(
            split(&records, 10, 0),
            Err(DatasetError::DevSizeTooLarge { .. })
        ));
    }
}
