//! Labeled samples: a query, its gold schemas, and gold argument values.

use crate::schema::Language;
use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("duplicate sample_id {0}")]
    DuplicateId(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
    #[default]
    Unassigned,
}

/// Extracted values for one event instance: argument name -> value list.
/// Arguments absent from the event are simply missing keys; present keys
/// always carry at least one value. Key order is preserved (it mirrors
/// schema declaration order in canonical serializations).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct ArgumentValueMap {
    pub values: IndexMap<String, Vec<String>>,
}

impl ArgumentValueMap {
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn insert(&mut self, argument: impl Into<String>, values: Vec<String>) {
        self.values.insert(argument.into(), values);
    }
}

impl<S: Into<String>> FromIterator<(S, Vec<String>)> for ArgumentValueMap {
    fn from_iter<T: IntoIterator<Item = (S, Vec<String>)>>(iter: T) -> Self {
        ArgumentValueMap {
            values: iter.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }
}

/// One gold annotation: the schema plus every event instance of that
/// schema present in the query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldEntry {
    pub schema_id: String,
    pub events: Vec<ArgumentValueMap>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub sample_id: String,
    pub query: String,
    pub language: Language,
    #[serde(default)]
    pub source_dataset: String,
    #[serde(default)]
    pub split: Split,
    #[serde(default)]
    pub gold: Vec<GoldEntry>,
}

impl Sample {
    /// Ids of all gold schemas, in annotation order.
    pub fn gold_schema_ids(&self) -> Vec<&str> {
        self.gold.iter().map(|g| g.schema_id.as_str()).collect()
    }

    /// Total number of gold event instances across all schemas.
    pub fn total_event_count(&self) -> usize {
        self.gold.iter().map(|g| g.events.len()).sum()
    }
}

/// Loads samples from JSONL, rejecting duplicate sample ids and empty
/// value lists.
pub fn load_samples(path: &Path) -> Result<Vec<Sample>, CorpusError> {
    let display = path.display().to_string();
    let file = std::fs::File::open(path).map_err(|source| CorpusError::Io {
        path: display.clone(),
        source,
    })?;
    let mut samples = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (idx, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io {
            path: display.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: Sample = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            path: display.clone(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(sample.sample_id.clone()) {
            return Err(CorpusError::DuplicateId(sample.sample_id));
        }
        for gold in &sample.gold {
            for event in &gold.events {
                if event.values.values().any(|vals| vals.is_empty()) {
                    return Err(CorpusError::Parse {
                        path: display.clone(),
                        line: idx + 1,
                        message: format!(
                            "empty value list in gold events of schema {}",
                            gold.schema_id
                        ),
                    });
                }
            }
        }
        samples.push(sample);
    }
    Ok(samples)
}

/// Writes samples as JSONL in input order; byte-stable for equal input.
pub fn save_samples(samples: &[Sample], path: &Path) -> Result<(), CorpusError> {
    let display = path.display().to_string();
    let io_err = |source| CorpusError::Io {
        path: display.clone(),
        source,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    let io_err = |source| CorpusError::Io {
        path: display.clone(),
        source,
    };
    for sample in samples {
        serde_json::to_writer(&mut out, sample).map_err(|e| CorpusError::Parse {
            path: display.clone(),
            line: 0,
            message: e.to_string(),
        })?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;
    Ok(())
}
