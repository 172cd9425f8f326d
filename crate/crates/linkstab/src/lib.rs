//! linkstab — link-stability measurement for multi-homed internet gateways.
//!
//! The library probes each uplink with HTTP GETs against a fixed panel of
//! stable servers, turns the per-iteration success counts (ticks) into a
//! per-line stability index and an aggregate pipe stability index, and
//! derives weighted-round-robin routing weights plus failover events from
//! them.
//!
//! Modules:
//! - [`model`] — tick history and the index arithmetic (the stepper).
//! - [`oracle`] — from-scratch reference recomputation used for verification.
//! - [`probe`] — probe types, tick counting, and the transport seam.
//! - [`http`] — the real HTTP GET transport.
//! - [`policy`] — bandwidth factors, routing weights, failover events.
//! - [`sim`] — deterministic synthetic transport and scenario runner.
//! - [`config`], [`record`], [`report`], [`app`] — the operational shell.

pub mod app;
pub mod config;
pub mod http;
pub mod model;
pub mod oracle;
pub mod policy;
pub mod probe;
pub mod record;
pub mod report;
pub mod sim;

pub use config::{AppConfig, ConfigError, ScenarioFile};
pub use model::{LineSample, ModelError, StabilityParams, StabilitySnapshot, TickHistory};
pub use policy::{PolicyError, PolicyEvent, PolicyEventKind, WeightEntry, WeightTable};
pub use probe::{FailureKind, LineBinding, ProbeOutcome, ProbeTarget, ProbeTransport};
pub use sim::{LinkModel, Phase, PhaseKind, Scenario, SimError, TickRecord};
