//! The JSONL iteration log: one header record, then one record per
//! iteration.
//!
//! The log is append-only. Every record is serialized to a full line in
//! memory and written with a single call, so readers (and crash recovery)
//! never see a parse-failing final line. The header pins the parameters
//! the run used, which is what lets `replay` detect drift later.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{StabilityParams, StabilitySnapshot};
use crate::policy::{PolicyEvent, WeightTable};
use crate::probe::ProbeOutcome;

pub const LOG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("log {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("log {path} line {line}: {source}")]
    Malformed {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
    #[error("log {path} does not start with a header record")]
    MissingHeader { path: PathBuf },
    #[error("log {path} line {line}: unexpected second header")]
    DuplicateHeader { path: PathBuf, line: usize },
    #[error("log {path} line {line}: iteration {found} after {previous} is not increasing")]
    NonMonotonic {
        path: PathBuf,
        line: usize,
        previous: u64,
        found: u64,
    },
}

/// First line of every log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub version: u32,
    pub params: StabilityParams,
    pub scale_base: u32,
    /// Line names in id order.
    pub lines: Vec<String>,
}

/// One line's slice of an iteration record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineRecord {
    /// 1-based line id.
    pub line: u32,
    pub tick: u32,
    pub status: u32,
    pub historical: u32,
    pub stability: f64,
    pub bandwidth_factor: u32,
    pub weight: u32,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u64,
    /// Seconds since the Unix epoch (synthetic time for simulations).
    pub timestamp: f64,
    pub lines: Vec<LineRecord>,
    pub consistency: u32,
    pub pipe_stability: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub events: Vec<PolicyEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probes: Option<Vec<ProbeOutcome>>,
}

impl IterationRecord {
    /// Combine one iteration's snapshot and weight table into a record.
    pub fn from_parts(
        snapshot: &StabilitySnapshot,
        table: &WeightTable,
        timestamp: f64,
        events: Vec<PolicyEvent>,
        probes: Option<Vec<ProbeOutcome>>,
    ) -> Self {
        debug_assert_eq!(snapshot.iteration, table.iteration);
        debug_assert_eq!(snapshot.lines.len(), table.entries.len());
        IterationRecord {
            iteration: snapshot.iteration,
            timestamp,
            lines: snapshot
                .lines
                .iter()
                .zip(&table.entries)
                .map(|(sample, entry)| LineRecord {
                    line: entry.line,
                    tick: sample.tick,
                    status: sample.status,
                    historical: sample.historical,
                    stability: sample.stability,
                    bandwidth_factor: entry.bandwidth_factor,
                    weight: entry.weight,
                    in_service: entry.in_service,
                })
                .collect(),
            consistency: snapshot.consistency,
            pipe_stability: snapshot.pipe_stability,
            events,
            probes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Header(LogHeader),
    Iteration(IterationRecord),
}

/// Appends records one whole line at a time.
pub struct LogWriter {
    path: PathBuf,
    file: File,
}

impl LogWriter {
    /// Create (or truncate) the log and write its header.
    pub fn create(path: &Path, header: &LogHeader) -> Result<Self, RecordError> {
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)
            .map_err(|source| RecordError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        let mut writer = LogWriter {
            path: path.to_path_buf(),
            file,
        };
        writer.append(&LogRecord::Header(header.clone()))?;
        Ok(writer)
    }

    pub fn append(&mut self, record: &LogRecord) -> Result<(), RecordError> {
        let mut line = serde_json::to_string(record).expect("log records always serialize");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|source| RecordError::Io {
                path: self.path.clone(),
                source,
            })
    }

    pub fn append_iteration(&mut self, record: IterationRecord) -> Result<(), RecordError> {
        self.append(&LogRecord::Iteration(record))
    }

    pub fn sync(&mut self) -> Result<(), RecordError> {
        self.file.sync_all().map_err(|source| RecordError::Io {
            path: self.path.clone(),
            source,
        })
    }
}

/// Read a whole log back: header first, then iteration records with
/// strictly increasing iteration numbers.
pub fn read_log(path: &Path) -> Result<(LogHeader, Vec<IterationRecord>), RecordError> {
    let file = File::open(path).map_err(|source| RecordError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut header: Option<LogHeader> = None;
    let mut records: Vec<IterationRecord> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| RecordError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: LogRecord =
            serde_json::from_str(&line).map_err(|source| RecordError::Malformed {
                path: path.to_path_buf(),
                line: line_no,
                source,
            })?;
        match record {
            LogRecord::Header(h) => {
                if header.is_some() {
                    return Err(RecordError::DuplicateHeader {
                        path: path.to_path_buf(),
                        line: line_no,
                    });
                }
                if !records.is_empty() {
                    return Err(RecordError::MissingHeader {
                        path: path.to_path_buf(),
                    });
                }
                header = Some(h);
            }
            LogRecord::Iteration(record) => {
                if header.is_none() {
                    return Err(RecordError::MissingHeader {
                        path: path.to_path_buf(),
                    });
                }
                if let Some(prev) = records.last() {
                    if record.iteration <= prev.iteration {
                        return Err(RecordError::NonMonotonic {
                            path: path.to_path_buf(),
                            line: line_no,
                            previous: prev.iteration,
                            found: record.iteration,
                        });
                    }
                }
                records.push(record);
            }
        }
    }
    match header {
        Some(header) => Ok((header, records)),
        None => Err(RecordError::MissingHeader {
            path: path.to_path_buf(),
        }),
    }
}
