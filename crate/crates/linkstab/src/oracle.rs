//! From-scratch snapshot recomputation over a complete tick log.
//!
//! [`oracle_recompute`] shares no state and no window bookkeeping with
//! [`TickHistory`](crate::model::TickHistory): it indexes the full tick
//! sequences directly and applies the defining formulas, with iterations
//! at or before 0 counting as perfect (`max_tick`). The windowed stepper
//! must agree with it exactly at every iteration; log verification and the
//! equivalence test suite rely on that.

use crate::model::{LineSample, ModelError, StabilityParams, StabilitySnapshot};

/// Recompute the snapshot for `iteration` from the full tick history
/// (`ticks[j - 1][line]` is line `line`'s tick at iteration `j`).
pub fn oracle_recompute(
    ticks: &[Vec<u32>],
    iteration: u64,
    params: &StabilityParams,
) -> Result<StabilitySnapshot, ModelError> {
    params.validate()?;
    let n = params.line_count as usize;
    let m = params.max_tick as u64;
    let k = params.history_depth as i64;
    let z = params.consistency_depth as i64;

    if iteration == 0 || iteration as usize > ticks.len() {
        return Err(ModelError::OutOfWindow {
            iteration: iteration as i64,
        });
    }
    for row in &ticks[..iteration as usize] {
        if row.len() != n {
            return Err(ModelError::WrongVectorLength {
                expected: n,
                got: row.len(),
            });
        }
        for &tick in row {
            if tick > params.max_tick {
                return Err(ModelError::TickOutOfRange {
                    tick,
                    max_tick: params.max_tick,
                });
            }
        }
    }

    let tick = |line: usize, p: i64| -> u64 {
        if p <= 0 {
            m
        } else {
            ticks[p as usize - 1][line] as u64
        }
    };
    let status = |line: usize, p: i64| -> u64 { u64::from(tick(line, p) > 0) };
    let worst =
        |line: usize, j: i64| -> u64 { ((j - k)..=j).map(|p| tick(line, p)).min().unwrap_or(m) };
    let consistence =
        |r: i64| -> u64 { u64::from((0..n).all(|line| tick(line, r) == tick(line, r - 1))) };
    let consistency = |j: i64| -> u64 { ((j - z + 1)..=j).map(consistence).sum() };

    let j = iteration as i64;
    let shared = consistency(j);
    let line_norm = (z as u64) * m * m;
    let mut lines = Vec::with_capacity(n);
    let mut status_sum = 0u64;
    let mut worst_sum = 0u64;
    for line in 0..n {
        let line_status = status(line, j);
        let line_worst = worst(line, j);
        status_sum += line_status;
        worst_sum += line_worst;
        let numerator = line_status * tick(line, j - 1) * line_worst * shared;
        lines.push(LineSample {
            tick: tick(line, j) as u32,
            status: line_status as u32,
            historical: line_worst as u32,
            stability: numerator as f64 / line_norm as f64,
        });
    }
    let pipe_norm = (z as u64) * m * (n as u64) * (n as u64);
    Ok(StabilitySnapshot {
        iteration,
        lines,
        consistency: shared as u32,
        pipe_stability: (status_sum * worst_sum * shared) as f64 / pipe_norm as f64,
    })
}
