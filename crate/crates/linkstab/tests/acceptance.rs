//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its measurements (run with `--nocapture` to see them).

use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use linkstab::app;
use linkstab::config::{LineConfig, ModelConfig, PhaseConfig, ScenarioFile};
use linkstab::model::{StabilityParams, TickHistory};
use linkstab::oracle::oracle_recompute;
use linkstab::policy::{routing_weight, PolicyEventKind};
use linkstab::record::LogRecord;
use linkstab::sim::{simulate, LinkModel, Phase, PhaseKind, Scenario};

fn params(n: u32, m: u32, k: u32, z: u32) -> StabilityParams {
    let mut p = StabilityParams::new(n, m);
    p.history_depth = k;
    p.consistency_depth = z;
    p
}

fn fixed(iterations: u64, tick: u32) -> Phase {
    Phase {
        iterations,
        kind: PhaseKind::FixedTick(tick),
    }
}

/// Criterion 1: with the reference configuration (3 lines, 10 targets,
/// both windows at 10), feeding perfect ticks for 25 iterations keeps
/// every index at exactly 1.0 from the very first iteration.
#[test]
fn criterion_1_saturation_exactness() {
    let started = Instant::now();
    let p = params(3, 10, 10, 10);
    let mut history = TickHistory::new(&p).unwrap();
    for iteration in 1..=25 {
        let snap = history.step(&[10, 10, 10]).unwrap();
        assert_eq!(snap.iteration, iteration);
        for (idx, line) in snap.lines.iter().enumerate() {
            assert_eq!(
                line.stability,
                1.0,
                "line {} not saturated at iteration {iteration}",
                idx + 1
            );
        }
        assert_eq!(
            snap.pipe_stability, 1.0,
            "pipe index at iteration {iteration}"
        );
        assert_eq!(snap.consistency, 10);
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, budget 1s");
    println!("acceptance 1 (saturation exactness): PASS in {elapsed:?}");
}

/// Criterion 2: across >= 1000 randomized histories the incremental
/// stepper equals the from-scratch recomputation at every iteration,
/// exactly.
#[test]
fn criterion_2_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = StdRng::seed_from_u64(0x5eed_2024);
    let mut iterations_checked = 0u64;
    for case in 0..1000 {
        let p = params(
            rng.random_range(1..=4),
            rng.random_range(1..=10),
            rng.random_range(1..=10),
            rng.random_range(1..=10),
        );
        let length = rng.random_range(1..=50u64);
        let mut history = TickHistory::new(&p).unwrap();
        let mut ticks: Vec<Vec<u32>> = Vec::with_capacity(length as usize);
        for iteration in 1..=length {
            let row: Vec<u32> = (0..p.line_count)
                .map(|_| rng.random_range(0..=p.max_tick))
                .collect();
            ticks.push(row.clone());
            let stepped = history.step(&row).unwrap();
            let recomputed = oracle_recompute(&ticks, iteration, &p).unwrap();
            assert_eq!(
                stepped, recomputed,
                "case {case}: stepper and oracle diverge at iteration {iteration} \
                 (n={}, m={}, k={}, z={})",
                p.line_count, p.max_tick, p.history_depth, p.consistency_depth
            );
            iterations_checked += 1;
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}, budget 30s");
    println!(
        "acceptance 2 (oracle equivalence): PASS, 1000 histories / {iterations_checked} \
         iterations in {elapsed:?}"
    );
}

/// Criterion 3: the hand-computed trace — one line, two targets, both
/// windows at 2, ticks 2 then 1 then 2 — gives indices 1.0, 0.25, 0.0.
/// Checked against the oracle first, then the stepper.
#[test]
fn criterion_3_hand_computed_trace() {
    let p = params(1, 2, 2, 2);
    let ticks = vec![vec![2], vec![1], vec![2]];
    let expected = [1.0, 0.25, 0.0];

    for (idx, want) in expected.iter().enumerate() {
        let snap = oracle_recompute(&ticks, idx as u64 + 1, &p).unwrap();
        assert_eq!(
            snap.lines[0].stability,
            *want,
            "oracle S at iteration {}",
            idx + 1
        );
        assert_eq!(
            snap.pipe_stability,
            *want,
            "oracle IS at iteration {}",
            idx + 1
        );
    }

    let mut history = TickHistory::new(&p).unwrap();
    for (idx, row) in ticks.iter().enumerate() {
        let snap = history.step(row).unwrap();
        assert_eq!(snap.lines[0].stability, expected[idx]);
        assert_eq!(snap.pipe_stability, expected[idx]);
    }
    println!("acceptance 3 (hand-computed trace): PASS, S = IS = [1.0, 0.25, 0.0]");
}

/// Criterion 4: the dynamic-weight tier table for a factor of 6, with the
/// exact closed-open boundary semantics.
#[test]
fn criterion_4_tier_table() {
    let cases = [
        (1.0, 6),
        (0.95, 6),
        (0.949, 3),
        (0.90, 3),
        (0.899, 2),
        (0.5, 2),
        (0.0, 0),
    ];
    for (stability, expected) in cases {
        assert_eq!(
            routing_weight(stability, 6),
            expected,
            "weight for stability {stability}"
        );
    }
    println!(
        "acceptance 4 (tier table): PASS, {} boundary cases",
        cases.len()
    );
}

/// The qualitative-reproduction scenario: line 1 rock solid, lines 2 and 3
/// dipping to tick 7 for one full consistency window twice, transitions a
/// window apart.
fn envelope_scenario() -> Scenario {
    let p = params(3, 10, 10, 10);
    let dipping = |line| LinkModel {
        line,
        phases: vec![
            fixed(149, 10),
            fixed(10, 7),
            fixed(160, 10),
            fixed(10, 7),
            fixed(171, 10),
        ],
    };
    Scenario::new(
        p,
        vec![
            LinkModel {
                line: 1,
                phases: vec![fixed(500, 10)],
            },
            dipping(2),
            dipping(3),
        ],
        2718,
        500,
    )
}

/// Criterion 5: over 500 iterations the stable line dominates both
/// dipping lines, holds the top tier at >= 90% of iterations while the
/// dipping lines sit below 0.90 during their dips, and the pipe index
/// never rises above the stable line's index.
#[test]
fn criterion_5_envelope_reproduction() {
    let started = Instant::now();
    let run = simulate(&envelope_scenario()).unwrap();
    assert_eq!(run.snapshots.len(), 500);

    let mut sums = [0.0f64; 3];
    let mut top_tier = 0usize;
    for snap in &run.snapshots {
        for (idx, line) in snap.lines.iter().enumerate() {
            sums[idx] += line.stability;
        }
        let s1 = snap.lines[0].stability;
        if s1 >= 0.95 {
            top_tier += 1;
        }
        assert!(
            snap.pipe_stability <= s1,
            "pipe index {} above stable line {} at iteration {}",
            snap.pipe_stability,
            s1,
            snap.iteration
        );
        // Dip windows: both flapping lines below the half tier.
        let dipping =
            (150..=159).contains(&snap.iteration) || (320..=329).contains(&snap.iteration);
        if dipping {
            assert!(
                snap.lines[1].stability < 0.90 && snap.lines[2].stability < 0.90,
                "dipping lines not degraded at iteration {}",
                snap.iteration
            );
        }
    }
    assert!(
        sums[0] > sums[1] && sums[0] > sums[2],
        "line 1 does not dominate: {sums:?}"
    );
    let fraction = top_tier as f64 / 500.0;
    assert!(
        fraction >= 0.90,
        "line 1 on top tier only {fraction:.3} of the time"
    );

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}, budget 5s");
    println!(
        "acceptance 5 (envelope reproduction): PASS, mean S = [{:.4}, {:.4}, {:.4}], \
         top tier {:.1}% of iterations, in {elapsed:?}",
        sums[0] / 500.0,
        sums[1] / 500.0,
        sums[2] / 500.0,
        fraction * 100.0
    );
}

fn failover_scenario() -> Scenario {
    let p = params(2, 10, 10, 10);
    Scenario::new(
        p,
        vec![
            LinkModel {
                line: 1,
                phases: vec![fixed(60, 10)],
            },
            LinkModel {
                line: 2,
                phases: vec![fixed(30, 10), fixed(5, 0), fixed(25, 10)],
            },
        ],
        99,
        60,
    )
}

/// Criterion 6: a dead tick zeroes the routing weight the same iteration
/// and removes the line exactly once; recovery back to the top tier
/// restores the full factor with a restore event.
#[test]
fn criterion_6_failover_semantics() {
    let run = simulate(&failover_scenario()).unwrap();
    let bwf = run.bandwidth_factors[1];

    for (ticks, table) in run.ticks.iter().zip(&run.weight_tables) {
        if ticks[1] == 0 {
            assert_eq!(table.entries[1].weight, 0, "iteration {}", table.iteration);
            assert!(!table.entries[1].in_service);
        }
    }

    let removed: Vec<_> = run
        .events
        .iter()
        .filter(|e| e.kind == PolicyEventKind::LineRemoved && e.line == Some(2))
        .collect();
    assert_eq!(
        removed.len(),
        1,
        "expected exactly one removal: {removed:?}"
    );
    assert_eq!(
        removed[0].iteration, 31,
        "first dead iteration emits the removal"
    );

    let restored: Vec<_> = run
        .events
        .iter()
        .filter(|e| e.kind == PolicyEventKind::LineRestored && e.line == Some(2))
        .collect();
    assert_eq!(
        restored.len(),
        1,
        "expected exactly one restore: {restored:?}"
    );
    let at = restored[0].iteration;
    let snap = &run.snapshots[at as usize - 1];
    let table = &run.weight_tables[at as usize - 1];
    assert!(
        snap.lines[1].stability >= 0.95,
        "restore at S = {}",
        snap.lines[1].stability
    );
    assert_eq!(table.entries[1].weight, bwf);
    println!(
        "acceptance 6 (failover semantics): PASS, removed at 31, restored at {at} with S = {}",
        snap.lines[1].stability
    );
}

fn shared_consistency_scenario() -> Scenario {
    let p = params(2, 10, 10, 10);
    Scenario::new(
        p,
        vec![
            LinkModel {
                line: 1,
                phases: vec![fixed(80, 10)],
            },
            LinkModel {
                line: 2,
                // Changes at 13, 22, 31 and 35; 22->31 and 31->35 overlap
                // inside one consistency window.
                phases: vec![
                    fixed(12, 10),
                    fixed(9, 7),
                    fixed(9, 10),
                    fixed(4, 3),
                    fixed(46, 10),
                ],
            },
        ],
        1,
        80,
    )
}

/// Criterion 7: every scenario in this suite survives the persistence
/// round trip — simulate to JSONL, replay, exact match — and editing any
/// single stability value makes replay fail naming that iteration.
#[test]
fn criterion_7_persistence_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let scenarios: Vec<(&str, ScenarioFile, u64)> = vec![
        (
            "saturation",
            scenario_file(&params(3, 10, 10, 10), 25, saturation_models(3)),
            13,
        ),
        ("envelope", to_file(envelope_scenario()), 200),
        ("failover", to_file(failover_scenario()), 33),
        (
            "shared-consistency",
            to_file(shared_consistency_scenario()),
            23,
        ),
    ];

    for (name, file, tamper_at) in &scenarios {
        let scenario_path = dir.path().join(format!("{name}.json"));
        let log_path = dir.path().join(format!("{name}.jsonl"));
        std::fs::write(&scenario_path, serde_json::to_string_pretty(file).unwrap()).unwrap();

        app::simulate_to_file(&scenario_path, &log_path).unwrap();
        let verified = app::replay_verify(&log_path, None).unwrap();
        assert_eq!(verified, file.length, "scenario {name}");

        // Flip one stability value and expect the exact iteration back.
        let text = std::fs::read_to_string(&log_path).unwrap();
        let edited: Vec<String> = text
            .lines()
            .map(|line| {
                let mut record: LogRecord = serde_json::from_str(line).unwrap();
                if let LogRecord::Iteration(ref mut r) = record {
                    if r.iteration == *tamper_at {
                        r.lines[0].stability = (r.lines[0].stability - 0.625).abs();
                    }
                }
                serde_json::to_string(&record).unwrap()
            })
            .collect();
        std::fs::write(&log_path, edited.join("\n") + "\n").unwrap();
        match app::replay_verify(&log_path, None) {
            Err(app::AppError::ReplayMismatch { iteration, .. }) => {
                assert_eq!(iteration, *tamper_at, "scenario {name}")
            }
            other => panic!("scenario {name}: expected mismatch at {tamper_at}, got {other:?}"),
        }
    }
    println!(
        "acceptance 7 (persistence round trip): PASS for {} scenarios",
        scenarios.len()
    );
}

/// Criterion 8: when only line 2 ever changes, the shared consistency
/// count equals the window length minus the change iterations inside the
/// window, and line 1's index is scaled by exactly that fraction of its
/// saturated value.
#[test]
fn criterion_8_shared_consistency_property() {
    let scenario = shared_consistency_scenario();
    let z = scenario.params.consistency_depth as u64;
    let run = simulate(&scenario).unwrap();

    // Derive the change iterations straight from the emitted ticks.
    let mut changes: Vec<u64> = Vec::new();
    let mut previous = vec![scenario.params.max_tick; 2];
    for (idx, ticks) in run.ticks.iter().enumerate() {
        if *ticks != previous {
            changes.push(idx as u64 + 1);
        }
        previous = ticks.clone();
    }
    assert_eq!(changes, vec![13, 22, 31, 35], "scenario script drifted");

    for snap in &run.snapshots {
        let j = snap.iteration;
        let window_lo = j.saturating_sub(z - 1).max(1);
        let in_window = changes
            .iter()
            .filter(|&&r| r >= window_lo && r <= j)
            .count() as u64;
        let expected_c = (z - in_window) as u32;
        assert_eq!(snap.consistency, expected_c, "consistency at iteration {j}");
        // Line 1 held perfect ticks throughout, so its index is the
        // saturated 1.0 scaled by consistency / window.
        assert_eq!(
            snap.lines[0].stability,
            expected_c as f64 / z as f64,
            "line 1 scaling at iteration {j}"
        );
    }
    println!(
        "acceptance 8 (shared consistency): PASS over {} iterations, {} changes",
        run.snapshots.len(),
        changes.len()
    );
}

fn saturation_models(n: u32) -> Vec<ModelConfig> {
    (1..=n)
        .map(|line| ModelConfig {
            line,
            phases: vec![PhaseConfig::Fixed {
                iterations: 25,
                tick: 10,
            }],
        })
        .collect()
}

fn scenario_file(p: &StabilityParams, length: u64, models: Vec<ModelConfig>) -> ScenarioFile {
    ScenarioFile {
        params: p.clone(),
        lines: (1..=p.line_count)
            .map(|i| LineConfig {
                name: format!("line-{i}"),
                source: None,
                bandwidth_mbps: 10.0,
            })
            .collect(),
        scale_base: 10,
        seed: 5,
        length,
        models,
        log_probes: false,
    }
}

fn to_file(scenario: Scenario) -> ScenarioFile {
    ScenarioFile {
        params: scenario.params.clone(),
        lines: scenario
            .bandwidths
            .iter()
            .enumerate()
            .map(|(idx, &bw)| LineConfig {
                name: format!("line-{}", idx + 1),
                source: None,
                bandwidth_mbps: bw,
            })
            .collect(),
        scale_base: scenario.scale_base,
        seed: scenario.seed,
        length: scenario.length,
        models: scenario
            .models
            .iter()
            .map(|m| ModelConfig {
                line: m.line,
                phases: m
                    .phases
                    .iter()
                    .map(|phase| match phase.kind {
                        PhaseKind::FixedTick(tick) => PhaseConfig::Fixed {
                            iterations: phase.iterations,
                            tick,
                        },
                        PhaseKind::Bernoulli(p) => PhaseConfig::Random {
                            iterations: phase.iterations,
                            success_probability: p,
                        },
                    })
                    .collect(),
            })
            .collect(),
        log_probes: false,
    }
}
