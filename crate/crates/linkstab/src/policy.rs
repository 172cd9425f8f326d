//! Routing policy derived from stability snapshots.
//!
//! The static bandwidth factor splits a weight budget proportionally to
//! provisioned bandwidth; each iteration the dynamic routing weight demotes
//! a line to half or a third of its factor as its stability index degrades,
//! and removes it from service entirely when the index hits zero. Weight
//! changes are diffed against the previous table into policy events. There
//! is deliberately no hysteresis: the tier rule is stateless per iteration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::StabilitySnapshot;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("line {line} has non-positive bandwidth {bandwidth}")]
    NonPositiveBandwidth { line: u32, bandwidth: f64 },
    #[error("scale_base must be >= 1")]
    InvalidScaleBase,
    #[error("snapshot has {snapshot} lines but {factors} bandwidth factors")]
    LengthMismatch { snapshot: usize, factors: usize },
    #[error("no lines configured")]
    NoLines,
}

/// Split `scale_base` weight units across lines proportionally to their
/// bandwidth, rounding up so every line keeps at least one unit.
pub fn bandwidth_factor(bandwidths: &[f64], scale_base: u32) -> Result<Vec<u32>, PolicyError> {
    if bandwidths.is_empty() {
        return Err(PolicyError::NoLines);
    }
    if scale_base < 1 {
        return Err(PolicyError::InvalidScaleBase);
    }
    for (idx, &bw) in bandwidths.iter().enumerate() {
        if !(bw.is_finite() && bw > 0.0) {
            return Err(PolicyError::NonPositiveBandwidth {
                line: idx as u32 + 1,
                bandwidth: bw,
            });
        }
    }
    let total: f64 = bandwidths.iter().sum();
    Ok(bandwidths
        .iter()
        .map(|bw| (scale_base as f64 * bw / total).ceil() as u32)
        .collect())
}

/// Tiered dynamic weight: the full factor from 0.95 up, half of it from
/// 0.90, a third below that, and zero for a dead line. The reduced tiers
/// round to nearest but never drop below one unit, so a live-but-poor line
/// still receives traffic; zero is reserved for failover.
pub fn routing_weight(stability: f64, bandwidth_factor: u32) -> u32 {
    debug_assert!((0.0..=1.0).contains(&stability), "stability {stability}");
    if stability >= 0.95 {
        bandwidth_factor
    } else if stability >= 0.90 {
        (((bandwidth_factor as f64) / 2.0).round() as u32).max(1)
    } else if stability > 0.0 {
        (((bandwidth_factor as f64) / 3.0).round() as u32).max(1)
    } else {
        0
    }
}

/// One line's routing state for one iteration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightEntry {
    /// 1-based line id.
    pub line: u32,
    pub bandwidth_factor: u32,
    pub weight: u32,
    pub in_service: bool,
}

/// The full weighted-round-robin table for one iteration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WeightTable {
    pub iteration: u64,
    pub entries: Vec<WeightEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyEventKind {
    LineRemoved,
    LineRestored,
    TierChanged,
    AdmissionGranted,
    AdmissionDenied,
}

/// A routing-policy transition worth logging. Events are log records, not
/// callbacks into the OS.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyEvent {
    pub kind: PolicyEventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<u32>,
    pub iteration: u64,
    pub detail: String,
}

/// Build the weight table for a snapshot and diff it against the previous
/// table. The first table (no previous) emits no events.
pub fn build_weight_table(
    snapshot: &StabilitySnapshot,
    bandwidth_factors: &[u32],
    previous: Option<&WeightTable>,
) -> Result<(WeightTable, Vec<PolicyEvent>), PolicyError> {
    if snapshot.lines.len() != bandwidth_factors.len() {
        return Err(PolicyError::LengthMismatch {
            snapshot: snapshot.lines.len(),
            factors: bandwidth_factors.len(),
        });
    }
    if let Some(prev) = previous {
        if prev.entries.len() != snapshot.lines.len() {
            return Err(PolicyError::LengthMismatch {
                snapshot: snapshot.lines.len(),
                factors: prev.entries.len(),
            });
        }
    }

    let entries: Vec<WeightEntry> = snapshot
        .lines
        .iter()
        .zip(bandwidth_factors)
        .enumerate()
        .map(|(idx, (sample, &factor))| {
            let weight = routing_weight(sample.stability, factor);
            WeightEntry {
                line: idx as u32 + 1,
                bandwidth_factor: factor,
                weight,
                in_service: weight > 0,
            }
        })
        .collect();

    let mut events = Vec::new();
    if let Some(prev) = previous {
        for (entry, before) in entries.iter().zip(&prev.entries) {
            if before.in_service && !entry.in_service {
                events.push(PolicyEvent {
                    kind: PolicyEventKind::LineRemoved,
                    line: Some(entry.line),
                    iteration: snapshot.iteration,
                    detail: format!("weight {} -> 0, removed from routing", before.weight),
                });
            } else if !before.in_service && entry.in_service {
                events.push(PolicyEvent {
                    kind: PolicyEventKind::LineRestored,
                    line: Some(entry.line),
                    iteration: snapshot.iteration,
                    detail: format!("weight 0 -> {}, back in routing", entry.weight),
                });
            } else if entry.in_service && before.weight != entry.weight {
                events.push(PolicyEvent {
                    kind: PolicyEventKind::TierChanged,
                    line: Some(entry.line),
                    iteration: snapshot.iteration,
                    detail: format!("weight {} -> {}", before.weight, entry.weight),
                });
            }
        }
    }

    Ok((
        WeightTable {
            iteration: snapshot.iteration,
            entries,
        },
        events,
    ))
}

/// Advisory call for admitting a critical connection (e.g. a VPN).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissionDecision {
    /// Whether the pipe as a whole clears the threshold.
    pub granted: bool,
    /// 1-based id of the steadiest line, ties broken by lowest id.
    pub best_line: u32,
}

impl AdmissionDecision {
    pub fn to_event(self, iteration: u64) -> PolicyEvent {
        PolicyEvent {
            kind: if self.granted {
                PolicyEventKind::AdmissionGranted
            } else {
                PolicyEventKind::AdmissionDenied
            },
            line: Some(self.best_line),
            iteration,
            detail: format!("best line {}", self.best_line),
        }
    }
}

/// Grant when the pipe stability index clears `threshold`; point the
/// caller at the line with the highest stability index either way.
pub fn admission_decision(snapshot: &StabilitySnapshot, threshold: f64) -> AdmissionDecision {
    let mut best = 0usize;
    for (idx, sample) in snapshot.lines.iter().enumerate() {
        if sample.stability > snapshot.lines[best].stability {
            best = idx;
        }
    }
    AdmissionDecision {
        granted: snapshot.pipe_stability >= threshold,
        best_line: best as u32 + 1,
    }
}
