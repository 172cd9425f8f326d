//! Probe types, tick counting, and the transport seam.
//!
//! One iteration issues one GET per (line, target) pair; a line's tick is
//! the number of its probes that succeeded. The transport is abstract so
//! the scenario simulator can substitute a synthetic one — the real HTTP
//! transport lives in [`crate::http`].

use std::net::IpAddr;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("invalid probe target {label:?}: {reason}")]
    InvalidTarget { label: String, reason: String },
    #[error("got {got} outcomes, expected {expected}")]
    OutcomeCount { expected: usize, got: usize },
    #[error("outcomes mix lines {first} and {second}")]
    MixedLines { first: u32, second: u32 },
    #[error("failed to build HTTP client for line {line}: {reason}")]
    ClientBuild { line: u32, reason: String },
}

/// One stable server to GET against.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeTarget {
    /// Short name used in outcome records.
    pub label: String,
    pub url: Url,
}

impl ProbeTarget {
    /// Parse and validate a target URL; it must be absolute http(s) with a
    /// host component.
    pub fn new(label: impl Into<String>, url: &str) -> Result<Self, ProbeError> {
        let label = label.into();
        let parsed = Url::parse(url).map_err(|e| ProbeError::InvalidTarget {
            label: label.clone(),
            reason: e.to_string(),
        })?;
        if parsed.scheme() != "http" && parsed.scheme() != "https" {
            return Err(ProbeError::InvalidTarget {
                label,
                reason: format!("unsupported scheme {:?}", parsed.scheme()),
            });
        }
        if parsed.host_str().is_none() {
            return Err(ProbeError::InvalidTarget {
                label,
                reason: "URL has no host".into(),
            });
        }
        Ok(ProbeTarget { label, url: parsed })
    }
}

/// How a line's probe traffic egresses via that uplink.
///
/// The engine only binds the local side; the host's routing must honor
/// source binding (installing policy routes is out of scope).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SourceBinding {
    /// Bind the local socket address.
    Address(IpAddr),
    /// Bind the named interface (`SO_BINDTODEVICE`, needs privileges).
    Interface(String),
}

/// One uplink.
#[derive(Debug, Clone, PartialEq)]
pub struct LineBinding {
    /// 1-based line id, unique.
    pub id: u32,
    pub name: String,
    pub source: Option<SourceBinding>,
    /// Provisioned bandwidth in Mbps, used for the static weight split.
    pub bandwidth_mbps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureKind {
    None,
    Timeout,
    ConnectError,
    HttpError,
}

/// Result of one GET against one target on one line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub line: u32,
    pub target: String,
    pub success: bool,
    pub elapsed_secs: f64,
    pub failure_kind: FailureKind,
}

impl ProbeOutcome {
    pub fn success(line: u32, target: impl Into<String>, elapsed: Duration) -> Self {
        ProbeOutcome {
            line,
            target: target.into(),
            success: true,
            elapsed_secs: elapsed.as_secs_f64(),
            failure_kind: FailureKind::None,
        }
    }

    pub fn failure(
        line: u32,
        target: impl Into<String>,
        elapsed: Duration,
        kind: FailureKind,
    ) -> Self {
        debug_assert!(kind != FailureKind::None);
        ProbeOutcome {
            line,
            target: target.into(),
            success: false,
            elapsed_secs: elapsed.as_secs_f64(),
            failure_kind: kind,
        }
    }
}

/// The seam between the measurement loop and the network.
///
/// Implementations must never panic on network failure: every error is
/// absorbed into a failed [`ProbeOutcome`].
pub trait ProbeTransport: Send + Sync {
    fn probe(&self, line: &LineBinding, target: &ProbeTarget, timeout: Duration) -> ProbeOutcome;

    /// Whether `probe` blocks on I/O. Blocking transports get one thread
    /// per probe so an iteration's wall time stays near one timeout;
    /// synthetic transports that answer instantly skip the threads.
    fn is_blocking(&self) -> bool {
        true
    }
}

/// Count the successes among one line's outcomes for one iteration.
pub fn compute_tick(outcomes: &[ProbeOutcome], expected: usize) -> Result<u32, ProbeError> {
    if outcomes.len() != expected {
        return Err(ProbeError::OutcomeCount {
            expected,
            got: outcomes.len(),
        });
    }
    if let Some(first) = outcomes.first() {
        if let Some(other) = outcomes.iter().find(|o| o.line != first.line) {
            return Err(ProbeError::MixedLines {
                first: first.line,
                second: other.line,
            });
        }
    }
    Ok(outcomes.iter().filter(|o| o.success).count() as u32)
}

/// Probe every (line, target) pair once and reduce each line's outcomes
/// to a tick.
///
/// For a blocking transport every probe runs on its own thread, so the
/// wall time of an iteration is bounded by the timeout plus scheduling
/// overhead regardless of the pair count; no retries within an iteration.
/// Outcomes are returned grouped by line in configuration order, so equal
/// transports yield equal sequences.
pub fn probe_iteration<T: ProbeTransport + ?Sized>(
    transport: &T,
    lines: &[LineBinding],
    targets: &[ProbeTarget],
    timeout: Duration,
) -> (Vec<u32>, Vec<ProbeOutcome>) {
    let mut outcomes = Vec::with_capacity(lines.len() * targets.len());
    if transport.is_blocking() {
        thread::scope(|scope| {
            let handles: Vec<Vec<_>> = lines
                .iter()
                .map(|line| {
                    targets
                        .iter()
                        .map(|target| scope.spawn(move || transport.probe(line, target, timeout)))
                        .collect()
                })
                .collect();
            for per_line in handles {
                for handle in per_line {
                    outcomes.push(handle.join().expect("probe thread panicked"));
                }
            }
        });
    } else {
        for line in lines {
            for target in targets {
                outcomes.push(transport.probe(line, target, timeout));
            }
        }
    }
    let ticks = outcomes
        .chunks(targets.len())
        .map(|chunk| compute_tick(chunk, targets.len()).expect("per-line outcome grouping"))
        .collect();
    (ticks, outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Instant;

    fn bindings(n: u32) -> Vec<LineBinding> {
        (1..=n)
            .map(|id| LineBinding {
                id,
                name: format!("line-{id}"),
                source: None,
                bandwidth_mbps: 10.0,
            })
            .collect()
    }

    fn targets(m: usize) -> Vec<ProbeTarget> {
        (1..=m)
            .map(|i| {
                ProbeTarget::new(format!("t{i:02}"), &format!("http://t{i:02}.example/")).unwrap()
            })
            .collect()
    }

    /// Succeeds unless the (line, target) pair is listed as down.
    struct FakeTransport {
        down: Vec<(u32, String)>,
        delay: Duration,
    }

    impl ProbeTransport for FakeTransport {
        fn probe(
            &self,
            line: &LineBinding,
            target: &ProbeTarget,
            timeout: Duration,
        ) -> ProbeOutcome {
            std::thread::sleep(self.delay);
            let down = self
                .down
                .iter()
                .any(|(l, t)| *l == line.id && *t == target.label);
            if down {
                ProbeOutcome::failure(line.id, &target.label, timeout, FailureKind::Timeout)
            } else {
                ProbeOutcome::success(line.id, &target.label, self.delay)
            }
        }
    }

    #[test]
    fn target_validation() {
        assert!(ProbeTarget::new("ok", "https://example.com/").is_ok());
        assert!(ProbeTarget::new("bad", "not a url").is_err());
        assert!(ProbeTarget::new("bad", "ftp://example.com/").is_err());
        assert!(ProbeTarget::new("bad", "http://").is_err());
    }

    #[test]
    fn compute_tick_counts_successes() {
        let all: Vec<_> = (0..10)
            .map(|i| ProbeOutcome::success(1, format!("t{i}"), Duration::from_millis(5)))
            .collect();
        assert_eq!(compute_tick(&all, 10).unwrap(), 10);

        let none: Vec<_> = (0..10)
            .map(|i| {
                ProbeOutcome::failure(
                    1,
                    format!("t{i}"),
                    Duration::from_secs(5),
                    FailureKind::Timeout,
                )
            })
            .collect();
        assert_eq!(compute_tick(&none, 10).unwrap(), 0);

        let mixed: Vec<_> = (0..10)
            .map(|i| {
                if i < 7 {
                    ProbeOutcome::success(1, format!("t{i}"), Duration::from_millis(5))
                } else {
                    ProbeOutcome::failure(
                        1,
                        format!("t{i}"),
                        Duration::from_secs(5),
                        FailureKind::ConnectError,
                    )
                }
            })
            .collect();
        assert_eq!(compute_tick(&mixed, 10).unwrap(), 7);
    }

    #[test]
    fn compute_tick_input_domain() {
        let outcomes = vec![ProbeOutcome::success(1, "t1", Duration::from_millis(1))];
        assert!(matches!(
            compute_tick(&outcomes, 2),
            Err(ProbeError::OutcomeCount {
                expected: 2,
                got: 1
            })
        ));
        let mixed = vec![
            ProbeOutcome::success(1, "t1", Duration::from_millis(1)),
            ProbeOutcome::success(2, "t2", Duration::from_millis(1)),
        ];
        assert!(matches!(
            compute_tick(&mixed, 2),
            Err(ProbeError::MixedLines {
                first: 1,
                second: 2
            })
        ));
    }

    #[test]
    fn iteration_all_healthy() {
        let transport = FakeTransport {
            down: vec![],
            delay: Duration::ZERO,
        };
        let (ticks, outcomes) = probe_iteration(
            &transport,
            &bindings(3),
            &targets(10),
            Duration::from_secs(1),
        );
        assert_eq!(ticks, vec![10, 10, 10]);
        assert_eq!(outcomes.len(), 30);
    }

    #[test]
    fn iteration_lines_are_independent() {
        // Line 2 fully down; tick order and the other lines unaffected.
        let transport = FakeTransport {
            down: (1..=10).map(|i| (2, format!("t{i:02}"))).collect(),
            delay: Duration::ZERO,
        };
        let (ticks, outcomes) = probe_iteration(
            &transport,
            &bindings(3),
            &targets(10),
            Duration::from_secs(1),
        );
        assert_eq!(ticks, vec![10, 0, 10]);
        // Ticks always equal the per-line success counts.
        for (idx, line) in bindings(3).iter().enumerate() {
            let successes = outcomes
                .iter()
                .filter(|o| o.line == line.id && o.success)
                .count() as u32;
            assert_eq!(ticks[idx], successes);
        }
    }

    #[test]
    fn iteration_runs_probes_concurrently() {
        let transport = FakeTransport {
            down: vec![],
            delay: Duration::from_millis(150),
        };
        let start = Instant::now();
        let (ticks, _) = probe_iteration(
            &transport,
            &bindings(2),
            &targets(3),
            Duration::from_secs(1),
        );
        assert_eq!(ticks, vec![3, 3]);
        // Six serial probes would take ~900ms.
        assert!(start.elapsed() < Duration::from_millis(600));
    }
}
