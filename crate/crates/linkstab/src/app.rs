//! The operational shell: the measurement loop and the offline commands.
//!
//! Everything here is plain library code so it can be tested directly;
//! the CLI binary only parses arguments, installs signal flags, and maps
//! [`AppError`] to an exit code.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use thiserror::Error;

use crate::config::{AppConfig, ConfigError, ScenarioFile};
use crate::http::HttpTransport;
use crate::model::{ModelError, StabilityParams, TickHistory};
use crate::policy::{self, PolicyError, WeightTable};
use crate::probe::{probe_iteration, ProbeError};
use crate::record::{
    read_log, IterationRecord, LogHeader, LogWriter, RecordError, LOG_FORMAT_VERSION,
};
use crate::report::{self, ReportError};
use crate::sim::{self, SimError, TickRecord};

/// Exit 1: something failed while operating on valid inputs.
/// Exit 2: the invocation or a configuration file is wrong.
pub const EXIT_OPERATIONAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Probe(#[from] ProbeError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("replay diverged at iteration {iteration}: {detail}")]
    ReplayMismatch { iteration: u64, detail: String },
    #[error("log parameters do not match: {detail}")]
    ParameterMismatch { detail: String },
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Config(_) | AppError::ParameterMismatch { .. } => EXIT_USAGE,
            _ => EXIT_OPERATIONAL,
        }
    }
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap_or(Duration::ZERO)
        .as_secs_f64()
}

#[derive(Serialize)]
struct WeightFileEntry {
    bandwidth_factor: u32,
    weight: u32,
    in_service: bool,
}

/// Rewrite the weight-table file whole (write-temp-then-rename), keyed by
/// line name, so pollers always read a complete table.
fn write_weight_file(path: &Path, names: &[String], table: &WeightTable) -> Result<(), AppError> {
    let map: BTreeMap<&str, WeightFileEntry> = table
        .entries
        .iter()
        .map(|entry| {
            (
                names[entry.line as usize - 1].as_str(),
                WeightFileEntry {
                    bandwidth_factor: entry.bandwidth_factor,
                    weight: entry.weight,
                    in_service: entry.in_service,
                },
            )
        })
        .collect();
    let json = serde_json::to_string_pretty(&map).expect("weight table serializes");
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, json.as_bytes()).map_err(|source| AppError::Io {
        path: tmp.clone(),
        source,
    })?;
    fs::rename(&tmp, path).map_err(|source| AppError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Sleep out the rest of the interval in short slices so a shutdown flag
/// is honored promptly.
fn sleep_until(deadline: Instant, shutdown: &AtomicBool) {
    while !shutdown.load(Ordering::SeqCst) {
        let now = Instant::now();
        if now >= deadline {
            return;
        }
        std::thread::sleep((deadline - now).min(Duration::from_millis(50)));
    }
}

/// The live measurement loop: probe, step, weigh, persist — every
/// interval, until `shutdown` is set. Probe failures feed the model as
/// low ticks; they never stop the loop.
pub fn run(config: &AppConfig, shutdown: &AtomicBool) -> Result<(), AppError> {
    config.validate()?;
    let params = &config.params;
    let lines = config.line_bindings()?;
    let targets = config.probe_targets()?;
    let names = config.line_names();
    let transport = HttpTransport::new(&lines)?;
    let factors = policy::bandwidth_factor(
        &lines.iter().map(|l| l.bandwidth_mbps).collect::<Vec<_>>(),
        config.scale_base,
    )?;
    let header = LogHeader {
        version: LOG_FORMAT_VERSION,
        params: params.clone(),
        scale_base: config.scale_base,
        lines: names.clone(),
    };
    let mut writer = LogWriter::create(&config.log_path, &header)?;
    let mut history = TickHistory::new(params)?;
    let mut previous: Option<WeightTable> = None;
    let mut admission_granted: Option<bool> = None;

    log::info!(
        "monitoring {} lines against {} targets every {:?}",
        lines.len(),
        targets.len(),
        params.interval()
    );
    while !shutdown.load(Ordering::SeqCst) {
        let started = Instant::now();
        let timestamp = unix_now();
        let (ticks, outcomes) = probe_iteration(&transport, &lines, &targets, params.timeout());
        let snapshot = history.step(&ticks)?;
        let (table, mut events) =
            policy::build_weight_table(&snapshot, &factors, previous.as_ref())?;
        // Advisory admission state: record the initial verdict and every
        // crossing of the threshold.
        let decision = policy::admission_decision(&snapshot, config.admission_threshold);
        if admission_granted != Some(decision.granted) {
            events.push(decision.to_event(snapshot.iteration));
            admission_granted = Some(decision.granted);
        }
        for event in &events {
            log::info!(
                "iteration {}: {:?} line {:?}: {}",
                event.iteration,
                event.kind,
                event.line,
                event.detail
            );
        }
        let record = IterationRecord::from_parts(
            &snapshot,
            &table,
            timestamp,
            events,
            config.log_probes.then_some(outcomes),
        );
        writer.append_iteration(record)?;
        write_weight_file(&config.weights_path, &names, &table)?;
        log::debug!(
            "iteration {} done: pipe stability {:.4}",
            snapshot.iteration,
            snapshot.pipe_stability
        );
        previous = Some(table);
        sleep_until(started + params.interval(), shutdown);
    }
    writer.sync()?;
    log::info!("shutting down after {} iterations", history.iteration());
    Ok(())
}

/// Run a scenario file offline and persist its records. Deterministic:
/// the same file produces byte-identical output, with synthetic
/// timestamps spaced by the configured interval from time zero.
pub fn simulate_to_file(scenario_path: &Path, out_path: &Path) -> Result<(), AppError> {
    let file = ScenarioFile::load(scenario_path)?;
    let scenario = file.to_scenario();
    let run = sim::simulate(&scenario)?;
    let header = LogHeader {
        version: LOG_FORMAT_VERSION,
        params: scenario.params.clone(),
        scale_base: scenario.scale_base,
        lines: file.line_names(),
    };
    let mut writer = LogWriter::create(out_path, &header)?;
    for (idx, (snapshot, table)) in run.snapshots.iter().zip(&run.weight_tables).enumerate() {
        let events = run
            .events
            .iter()
            .filter(|e| e.iteration == snapshot.iteration)
            .cloned()
            .collect();
        let record = IterationRecord::from_parts(
            snapshot,
            table,
            snapshot.iteration as f64 * scenario.params.interval_secs,
            events,
            file.log_probes.then(|| run.outcomes[idx].clone()),
        );
        writer.append_iteration(record)?;
    }
    writer.sync()?;
    Ok(())
}

/// Export a log as CSV.
pub fn report_csv<W: std::io::Write>(log_path: &Path, out: W) -> Result<(), AppError> {
    let (header, records) = read_log(log_path)?;
    report::write_csv(&header, &records, out)?;
    Ok(())
}

/// Re-derive every index from the ticks persisted in a log and compare
/// against what the log claims. Returns the number of verified
/// iterations; any divergence is an error naming the first bad iteration.
///
/// With `expected_params` (typically from the current config) the log
/// header is also checked for parameter drift before anything is
/// recomputed.
pub fn replay_verify(
    log_path: &Path,
    expected_params: Option<&StabilityParams>,
) -> Result<u64, AppError> {
    let (header, records) = read_log(log_path)?;
    if let Some(expected) = expected_params {
        let actual = &header.params;
        if actual.line_count != expected.line_count
            || actual.max_tick != expected.max_tick
            || actual.history_depth != expected.history_depth
            || actual.consistency_depth != expected.consistency_depth
        {
            return Err(AppError::ParameterMismatch {
                detail: format!(
                    "log has (n={}, m={}, k={}, z={}), expected (n={}, m={}, k={}, z={})",
                    actual.line_count,
                    actual.max_tick,
                    actual.history_depth,
                    actual.consistency_depth,
                    expected.line_count,
                    expected.max_tick,
                    expected.history_depth,
                    expected.consistency_depth,
                ),
            });
        }
    }
    header.params.validate()?;

    let tick_log: Vec<TickRecord> = records
        .iter()
        .map(|r| TickRecord {
            iteration: r.iteration,
            ticks: r.lines.iter().map(|l| l.tick).collect(),
        })
        .collect();
    let snapshots = sim::replay(&tick_log, &header.params)?;

    for (snapshot, record) in snapshots.iter().zip(&records) {
        let mismatch = |detail: String| AppError::ReplayMismatch {
            iteration: record.iteration,
            detail,
        };
        if snapshot.consistency != record.consistency {
            return Err(mismatch(format!(
                "consistency {} != logged {}",
                snapshot.consistency, record.consistency
            )));
        }
        if snapshot.pipe_stability != record.pipe_stability {
            return Err(mismatch(format!(
                "pipe stability {} != logged {}",
                snapshot.pipe_stability, record.pipe_stability
            )));
        }
        for (idx, (sample, line)) in snapshot.lines.iter().zip(&record.lines).enumerate() {
            if sample.stability != line.stability {
                return Err(mismatch(format!(
                    "line {} stability {} != logged {}",
                    idx + 1,
                    sample.stability,
                    line.stability
                )));
            }
            if sample.status != line.status || sample.historical != line.historical {
                return Err(mismatch(format!(
                    "line {} status/historical ({}, {}) != logged ({}, {})",
                    idx + 1,
                    sample.status,
                    sample.historical,
                    line.status,
                    line.historical
                )));
            }
        }
    }
    Ok(records.len() as u64)
}
