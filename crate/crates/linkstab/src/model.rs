//! Tick history and the stability-index arithmetic.
//!
//! Each measurement iteration produces one tick per line: the number of
//! probe targets (out of `max_tick`) that answered. From the recent tick
//! window this module derives, per line, a binary status, the worst tick
//! seen over the last `history_depth + 1` iterations, and — shared by all
//! lines — a consistency count of change-free iterations over the last
//! `consistency_depth`. The per-line stability index is the product
//! `status * previous_tick * worst_recent * consistency` normalized by its
//! maximum `consistency_depth * max_tick^2`; the pipe index is the
//! aggregate analogue normalized by `consistency_depth * max_tick * n^2`.
//!
//! Iterations before the first real one are treated as if every line had
//! answered perfectly (virtual ticks equal to `max_tick`), so iteration 1
//! is well-defined and a fresh history starts fully stable.
//!
//! All factors are exact integers; only the final normalization divides.
//! Parameter validation caps the products below 2^53 so that division is
//! the only rounding step and equal histories always produce bit-equal
//! indices.

use std::collections::VecDeque;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default window length for the per-line worst-tick minimum.
pub const DEFAULT_HISTORY_DEPTH: u32 = 10;
/// Default window length for the shared consistency count.
pub const DEFAULT_CONSISTENCY_DEPTH: u32 = 10;
/// Default seconds between measurement iterations.
pub const DEFAULT_INTERVAL_SECS: f64 = 60.0;
/// Default per-probe timeout in seconds.
pub const DEFAULT_TIMEOUT_SECS: f64 = 5.0;

// Integer products must stay below 2^53 so the final f64 division is the
// only inexact step.
const EXACT_LIMIT: u128 = 1 << 53;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("tick {tick} out of range 0..={max_tick}")]
    TickOutOfRange { tick: u32, max_tick: u32 },
    #[error("tick vector has {got} entries, expected {expected}")]
    WrongVectorLength { expected: usize, got: usize },
    #[error("line index {line} out of range for {count} lines")]
    LineOutOfRange { line: usize, count: usize },
    #[error("iteration {iteration} is outside the retained history window")]
    OutOfWindow { iteration: i64 },
}

/// The measurement constants plus loop timing.
///
/// `line_count` is the number of uplinks, `max_tick` the number of probe
/// targets (and therefore the best possible tick). `history_depth` and
/// `consistency_depth` size the two sliding windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityParams {
    pub line_count: u32,
    pub max_tick: u32,
    #[serde(default = "default_history_depth")]
    pub history_depth: u32,
    #[serde(default = "default_consistency_depth")]
    pub consistency_depth: u32,
    #[serde(default = "default_interval_secs")]
    pub interval_secs: f64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: f64,
}

fn default_history_depth() -> u32 {
    DEFAULT_HISTORY_DEPTH
}

fn default_consistency_depth() -> u32 {
    DEFAULT_CONSISTENCY_DEPTH
}

fn default_interval_secs() -> f64 {
    DEFAULT_INTERVAL_SECS
}

fn default_timeout_secs() -> f64 {
    DEFAULT_TIMEOUT_SECS
}

impl StabilityParams {
    /// Parameters for `line_count` lines and `max_tick` targets, defaults
    /// for everything else.
    pub fn new(line_count: u32, max_tick: u32) -> Self {
        StabilityParams {
            line_count,
            max_tick,
            history_depth: DEFAULT_HISTORY_DEPTH,
            consistency_depth: DEFAULT_CONSISTENCY_DEPTH,
            interval_secs: DEFAULT_INTERVAL_SECS,
            timeout_secs: DEFAULT_TIMEOUT_SECS,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.line_count < 1 {
            return Err(ModelError::InvalidParams("line_count must be >= 1".into()));
        }
        if self.max_tick < 1 {
            return Err(ModelError::InvalidParams("max_tick must be >= 1".into()));
        }
        if self.history_depth < 1 {
            return Err(ModelError::InvalidParams(
                "history_depth must be >= 1".into(),
            ));
        }
        if self.consistency_depth < 1 {
            return Err(ModelError::InvalidParams(
                "consistency_depth must be >= 1".into(),
            ));
        }
        if !(self.interval_secs.is_finite() && self.interval_secs > 0.0) {
            return Err(ModelError::InvalidParams(
                "interval_secs must be a positive number".into(),
            ));
        }
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(ModelError::InvalidParams(
                "timeout_secs must be a positive number".into(),
            ));
        }
        let n = self.line_count as u128;
        let m = self.max_tick as u128;
        let z = self.consistency_depth as u128;
        if z * m * m >= EXACT_LIMIT || z * m * n * n >= EXACT_LIMIT {
            return Err(ModelError::InvalidParams(
                "line_count, max_tick and consistency_depth are too large for exact arithmetic"
                    .into(),
            ));
        }
        Ok(())
    }

    pub fn interval(&self) -> Duration {
        Duration::from_secs_f64(self.interval_secs)
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    /// Iterations the history keeps around: one more than the deepest
    /// window so the previous iteration can still be inspected in full.
    pub fn retention(&self) -> usize {
        self.history_depth.max(self.consistency_depth) as usize + 2
    }
}

/// Binary line status derived from a tick: dead (0) when no target
/// answered, alive (1) otherwise. Masks the stability index to zero for
/// dead lines.
pub fn line_status(tick: u32, max_tick: u32) -> Result<u32, ModelError> {
    if tick > max_tick {
        return Err(ModelError::TickOutOfRange { tick, max_tick });
    }
    Ok(if tick == 0 { 0 } else { 1 })
}

/// One line's share of a snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSample {
    /// Successful probes this iteration, 0..=max_tick.
    pub tick: u32,
    /// Alive flag, 0 or 1.
    pub status: u32,
    /// Minimum tick over the historical window (current tick included).
    pub historical: u32,
    /// Normalized stability index in [0, 1].
    pub stability: f64,
}

/// Full output of one iteration: per-line samples plus the shared
/// consistency count and the aggregate pipe stability index.
///
/// Snapshots are immutable values; hand them to any thread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilitySnapshot {
    pub iteration: u64,
    pub lines: Vec<LineSample>,
    /// Change-free iterations in the consistency window, 0..=consistency_depth.
    pub consistency: u32,
    /// Normalized pipe stability index in [0, 1].
    pub pipe_stability: f64,
}

/// Append-only ring buffer of per-line ticks with the virtual pre-history
/// rule built in.
///
/// Only the most recent `params.retention()` iterations are kept; older
/// ticks are irrecoverable by design (persistence lives in the iteration
/// log, not in memory). `step` is the single writer; reads on a quiescent
/// history are safe from any thread.
#[derive(Debug, Clone)]
pub struct TickHistory {
    params: StabilityParams,
    /// Latest recorded iteration, 0 while empty.
    iteration: u64,
    /// Per line, newest at the back.
    ticks: Vec<VecDeque<u32>>,
}

impl TickHistory {
    pub fn new(params: &StabilityParams) -> Result<Self, ModelError> {
        params.validate()?;
        let retention = params.retention();
        Ok(TickHistory {
            params: params.clone(),
            iteration: 0,
            ticks: vec![VecDeque::with_capacity(retention + 1); params.line_count as usize],
        })
    }

    pub fn params(&self) -> &StabilityParams {
        &self.params
    }

    /// Latest recorded iteration number (0 when nothing recorded yet).
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Tick of `line` at iteration `iter`; iterations at or before 0 are
    /// virtual and count as `max_tick`.
    pub fn tick_at(&self, line: usize, iter: i64) -> Result<u32, ModelError> {
        let count = self.ticks.len();
        if line >= count {
            return Err(ModelError::LineOutOfRange { line, count });
        }
        if iter <= 0 {
            return Ok(self.params.max_tick);
        }
        let latest = self.iteration as i64;
        let stored = self.ticks[line].len() as i64;
        let oldest = latest - stored + 1;
        if iter > latest || iter < oldest {
            return Err(ModelError::OutOfWindow { iteration: iter });
        }
        Ok(self.ticks[line][(iter - oldest) as usize])
    }

    /// Worst tick over the window ending at `iter`, `history_depth + 1`
    /// values with the current tick included.
    pub fn historical_status(&self, line: usize, iter: u64) -> Result<u32, ModelError> {
        let j = iter as i64;
        let k = self.params.history_depth as i64;
        let mut worst = u32::MAX;
        for p in (j - k)..=j {
            worst = worst.min(self.tick_at(line, p)?);
        }
        Ok(worst)
    }

    fn consistence_at(&self, iter: i64) -> Result<bool, ModelError> {
        for line in 0..self.ticks.len() {
            if self.tick_at(line, iter)? != self.tick_at(line, iter - 1)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// True iff no line's tick changed between `iter - 1` and `iter`.
    pub fn iteration_consistence(&self, iter: u64) -> Result<bool, ModelError> {
        self.consistence_at(iter as i64)
    }

    /// Count of change-free iterations over the `consistency_depth` most
    /// recent ones ending at `iter`. Virtual iterations count as
    /// change-free.
    pub fn consistency_value(&self, iter: u64) -> Result<u32, ModelError> {
        let j = iter as i64;
        let z = self.params.consistency_depth as i64;
        let mut value = 0u32;
        for r in (j - z + 1)..=j {
            if self.consistence_at(r)? {
                value += 1;
            }
        }
        Ok(value)
    }

    /// Stability index of `line` at `iter`:
    /// `status * previous_tick * worst_recent * consistency` over its
    /// maximum value.
    pub fn line_stability(&self, line: usize, iter: u64) -> Result<f64, ModelError> {
        let consistency = self.consistency_value(iter)?;
        self.line_stability_with(line, iter, consistency)
    }

    fn line_stability_with(
        &self,
        line: usize,
        iter: u64,
        consistency: u32,
    ) -> Result<f64, ModelError> {
        let j = iter as i64;
        let current = self.tick_at(line, j)?;
        let status = line_status(current, self.params.max_tick)? as u64;
        let previous = self.tick_at(line, j - 1)? as u64;
        let worst = self.historical_status(line, iter)? as u64;
        let m = self.params.max_tick as u64;
        let z = self.params.consistency_depth as u64;
        let numerator = status * previous * worst * consistency as u64;
        Ok(numerator as f64 / (z * m * m) as f64)
    }

    /// Aggregate pipe stability at `iter`:
    /// `sum(status) * sum(worst_recent) * consistency` over its maximum.
    pub fn pipe_stability(&self, iter: u64) -> Result<f64, ModelError> {
        let consistency = self.consistency_value(iter)?;
        self.pipe_stability_with(iter, consistency)
    }

    fn pipe_stability_with(&self, iter: u64, consistency: u32) -> Result<f64, ModelError> {
        let j = iter as i64;
        let mut status_sum = 0u64;
        let mut worst_sum = 0u64;
        for line in 0..self.ticks.len() {
            let current = self.tick_at(line, j)?;
            status_sum += line_status(current, self.params.max_tick)? as u64;
            worst_sum += self.historical_status(line, iter)? as u64;
        }
        let n = self.params.line_count as u64;
        let m = self.params.max_tick as u64;
        let z = self.params.consistency_depth as u64;
        let numerator = status_sum * worst_sum * consistency as u64;
        Ok(numerator as f64 / (z * m * n * n) as f64)
    }

    /// Assemble the full snapshot for a retained iteration.
    pub fn snapshot_at(&self, iter: u64) -> Result<StabilitySnapshot, ModelError> {
        if iter == 0 {
            return Err(ModelError::OutOfWindow { iteration: 0 });
        }
        let consistency = self.consistency_value(iter)?;
        let mut lines = Vec::with_capacity(self.ticks.len());
        for line in 0..self.ticks.len() {
            let tick = self.tick_at(line, iter as i64)?;
            lines.push(LineSample {
                tick,
                status: line_status(tick, self.params.max_tick)?,
                historical: self.historical_status(line, iter)?,
                stability: self.line_stability_with(line, iter, consistency)?,
            });
        }
        Ok(StabilitySnapshot {
            iteration: iter,
            lines,
            consistency,
            pipe_stability: self.pipe_stability_with(iter, consistency)?,
        })
    }

    /// Record one iteration's tick vector and return its snapshot.
    ///
    /// Rejects a vector of the wrong length or with out-of-range ticks
    /// without touching the history. Single writer: call from one logical
    /// thread at a time.
    pub fn step(&mut self, ticks: &[u32]) -> Result<StabilitySnapshot, ModelError> {
        if ticks.len() != self.ticks.len() {
            return Err(ModelError::WrongVectorLength {
                expected: self.ticks.len(),
                got: ticks.len(),
            });
        }
        for &tick in ticks {
            if tick > self.params.max_tick {
                return Err(ModelError::TickOutOfRange {
                    tick,
                    max_tick: self.params.max_tick,
                });
            }
        }
        let retention = self.params.retention();
        self.iteration += 1;
        for (line, &tick) in ticks.iter().enumerate() {
            let buf = &mut self.ticks[line];
            buf.push_back(tick);
            while buf.len() > retention {
                buf.pop_front();
            }
        }
        self.snapshot_at(self.iteration)
    }
}
