//! Deterministic synthetic transport and scenario runner.
//!
//! A scenario scripts each line through phases that either fix the tick
//! outright or draw per-target successes from a Bernoulli distribution.
//! The runner drives the real pipeline — [`probe_iteration`] with the
//! synthetic transport, then the history stepper, then the weight table —
//! so everything above the socket layer is exercised offline.
//!
//! Every random draw is keyed by (seed, iteration, line, target), so the
//! outcome stream is independent of probe scheduling order and a scenario
//! replays bit-identically under the same seed.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::model::{ModelError, StabilityParams, StabilitySnapshot, TickHistory};
use crate::policy::{self, PolicyError, PolicyEvent, WeightTable};
use crate::probe::{
    probe_iteration, FailureKind, LineBinding, ProbeOutcome, ProbeTarget, ProbeTransport,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("tick log gap: expected iteration {expected}, found {found}")]
    ReplayGap { expected: u64, found: u64 },
    #[error("bad tick record at iteration {iteration}: {source}")]
    ReplayRecord { iteration: u64, source: ModelError },
}

/// What a line does during one stretch of iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhaseKind {
    /// Exactly this many targets answer, no randomness.
    FixedTick(u32),
    /// Each target answers independently with this probability.
    Bernoulli(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    /// How many iterations the phase lasts, >= 1.
    pub iterations: u64,
    pub kind: PhaseKind,
}

/// A line's scripted behavior. The last phase repeats if the scenario
/// outlives the script.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkModel {
    /// 1-based line id.
    pub line: u32,
    pub phases: Vec<Phase>,
}

impl LinkModel {
    fn kind_at(&self, iteration: u64) -> PhaseKind {
        let mut remaining = iteration;
        for phase in &self.phases {
            if remaining <= phase.iterations {
                return phase.kind;
            }
            remaining -= phase.iterations;
        }
        self.phases.last().expect("validated non-empty").kind
    }
}

/// A complete offline experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub params: StabilityParams,
    pub models: Vec<LinkModel>,
    pub seed: u64,
    /// Total iterations to run.
    pub length: u64,
    /// Per-line bandwidth used for the static weight split.
    pub bandwidths: Vec<f64>,
    pub scale_base: u32,
}

impl Scenario {
    /// Scenario with equal bandwidths and the default weight budget.
    pub fn new(params: StabilityParams, models: Vec<LinkModel>, seed: u64, length: u64) -> Self {
        let lines = params.line_count as usize;
        Scenario {
            params,
            models,
            seed,
            length,
            bandwidths: vec![1.0; lines],
            scale_base: 10,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.params.validate()?;
        let n = self.params.line_count as usize;
        if self.length < 1 {
            return Err(SimError::InvalidScenario("length must be >= 1".into()));
        }
        if self.models.len() != n {
            return Err(SimError::InvalidScenario(format!(
                "{} link models for {} lines",
                self.models.len(),
                n
            )));
        }
        let mut seen = vec![false; n];
        for model in &self.models {
            if model.line < 1 || model.line as usize > n {
                return Err(SimError::InvalidScenario(format!(
                    "link model for unknown line {}",
                    model.line
                )));
            }
            let idx = model.line as usize - 1;
            if seen[idx] {
                return Err(SimError::InvalidScenario(format!(
                    "duplicate link model for line {}",
                    model.line
                )));
            }
            seen[idx] = true;
            if model.phases.is_empty() {
                return Err(SimError::InvalidScenario(format!(
                    "line {} has no phases",
                    model.line
                )));
            }
            for phase in &model.phases {
                if phase.iterations < 1 {
                    return Err(SimError::InvalidScenario(format!(
                        "line {} has a zero-length phase",
                        model.line
                    )));
                }
                match phase.kind {
                    PhaseKind::FixedTick(t) if t > self.params.max_tick => {
                        return Err(SimError::InvalidScenario(format!(
                            "line {} fixes tick {} above max {}",
                            model.line, t, self.params.max_tick
                        )));
                    }
                    PhaseKind::Bernoulli(p) if !(0.0..=1.0).contains(&p) || p.is_nan() => {
                        return Err(SimError::InvalidScenario(format!(
                            "line {} has success probability {} outside [0, 1]",
                            model.line, p
                        )));
                    }
                    _ => {}
                }
            }
        }
        if self.bandwidths.len() != n {
            return Err(SimError::InvalidScenario(format!(
                "{} bandwidths for {} lines",
                self.bandwidths.len(),
                n
            )));
        }
        Ok(())
    }
}

/// Synthetic targets standing in for the stable-server panel.
pub fn sim_targets(count: u32) -> Vec<ProbeTarget> {
    (1..=count)
        .map(|i| {
            ProbeTarget::new(
                format!("target-{i:02}"),
                &format!("http://target-{i:02}.sim.invalid/"),
            )
            .expect("synthetic target URL")
        })
        .collect()
}

/// Synthetic line bindings matching a scenario's bandwidth list.
pub fn sim_bindings(bandwidths: &[f64]) -> Vec<LineBinding> {
    bandwidths
        .iter()
        .enumerate()
        .map(|(idx, &bw)| LineBinding {
            id: idx as u32 + 1,
            name: format!("line-{}", idx + 1),
            source: None,
            bandwidth_mbps: bw,
        })
        .collect()
}

const SIM_SUCCESS_ELAPSED: Duration = Duration::from_millis(10);

/// Probe transport that answers from the scenario script instead of the
/// network. The runner advances `set_iteration` before each sweep.
pub struct SimTransport {
    models: Vec<LinkModel>,
    target_index: HashMap<String, u32>,
    seed: u64,
    iteration: AtomicU64,
}

impl SimTransport {
    pub fn new(scenario: &Scenario, targets: &[ProbeTarget]) -> Self {
        let mut models = scenario.models.clone();
        models.sort_by_key(|m| m.line);
        SimTransport {
            models,
            target_index: targets
                .iter()
                .enumerate()
                .map(|(idx, t)| (t.label.clone(), idx as u32))
                .collect(),
            seed: scenario.seed,
            iteration: AtomicU64::new(1),
        }
    }

    pub fn set_iteration(&self, iteration: u64) {
        self.iteration.store(iteration, Ordering::SeqCst);
    }

    /// Uniform draw in [0, 1) keyed by (seed, iteration, line, target).
    fn roll(&self, iteration: u64, line: u32, target: u32) -> f64 {
        let mut key = [0u8; 32];
        key[0..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&iteration.to_le_bytes());
        key[16..20].copy_from_slice(&line.to_le_bytes());
        key[20..24].copy_from_slice(&target.to_le_bytes());
        ChaCha12Rng::from_seed(key).random::<f64>()
    }
}

impl ProbeTransport for SimTransport {
    /// Answers come from the script, not from sockets.
    fn is_blocking(&self) -> bool {
        false
    }

    fn probe(&self, line: &LineBinding, target: &ProbeTarget, timeout: Duration) -> ProbeOutcome {
        let iteration = self.iteration.load(Ordering::SeqCst);
        let target_idx = self.target_index[&target.label];
        let model = &self.models[line.id as usize - 1];
        let success = match model.kind_at(iteration) {
            PhaseKind::FixedTick(t) => target_idx < t,
            PhaseKind::Bernoulli(p) => self.roll(iteration, line.id, target_idx) < p,
        };
        if success {
            ProbeOutcome::success(line.id, &target.label, SIM_SUCCESS_ELAPSED)
        } else {
            ProbeOutcome::failure(line.id, &target.label, timeout, FailureKind::Timeout)
        }
    }
}

/// Everything a scenario run produces, iteration by iteration.
#[derive(Debug, Clone)]
pub struct SimulationRun {
    pub snapshots: Vec<StabilitySnapshot>,
    pub weight_tables: Vec<WeightTable>,
    /// All policy events, each carrying its iteration.
    pub events: Vec<PolicyEvent>,
    pub ticks: Vec<Vec<u32>>,
    /// Per-iteration probe outcomes, aligned with `ticks`.
    pub outcomes: Vec<Vec<ProbeOutcome>>,
    pub bandwidth_factors: Vec<u32>,
}

/// Run a scenario through the full pipeline.
pub fn simulate(scenario: &Scenario) -> Result<SimulationRun, SimError> {
    scenario.validate()?;
    let params = &scenario.params;
    let targets = sim_targets(params.max_tick);
    let lines = sim_bindings(&scenario.bandwidths);
    let transport = SimTransport::new(scenario, &targets);
    let factors = policy::bandwidth_factor(&scenario.bandwidths, scenario.scale_base)?;

    let mut history = TickHistory::new(params)?;
    let mut run = SimulationRun {
        snapshots: Vec::with_capacity(scenario.length as usize),
        weight_tables: Vec::with_capacity(scenario.length as usize),
        events: Vec::new(),
        ticks: Vec::with_capacity(scenario.length as usize),
        outcomes: Vec::with_capacity(scenario.length as usize),
        bandwidth_factors: factors.clone(),
    };
    let mut previous: Option<WeightTable> = None;
    for iteration in 1..=scenario.length {
        transport.set_iteration(iteration);
        let (ticks, outcomes) = probe_iteration(&transport, &lines, &targets, params.timeout());
        let snapshot = history.step(&ticks)?;
        let (table, mut events) =
            policy::build_weight_table(&snapshot, &factors, previous.as_ref())?;
        run.ticks.push(ticks);
        run.outcomes.push(outcomes);
        run.snapshots.push(snapshot);
        run.events.append(&mut events);
        previous = Some(table.clone());
        run.weight_tables.push(table);
    }
    Ok(run)
}

/// One persisted iteration's ticks, as read back from a log.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub iteration: u64,
    pub ticks: Vec<u32>,
}

/// Re-derive the snapshot sequence from persisted ticks. Records must be
/// consecutive from iteration 1; the output equals what the live stepper
/// produced from the same ticks.
pub fn replay(
    log: &[TickRecord],
    params: &StabilityParams,
) -> Result<Vec<StabilitySnapshot>, SimError> {
    let mut history = TickHistory::new(params)?;
    let mut snapshots = Vec::with_capacity(log.len());
    for (idx, record) in log.iter().enumerate() {
        let expected = idx as u64 + 1;
        if record.iteration != expected {
            return Err(SimError::ReplayGap {
                expected,
                found: record.iteration,
            });
        }
        let snapshot = history
            .step(&record.ticks)
            .map_err(|source| SimError::ReplayRecord {
                iteration: record.iteration,
                source,
            })?;
        snapshots.push(snapshot);
    }
    Ok(snapshots)
}
