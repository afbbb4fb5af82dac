//! Deterministic simulation of compositional "living off the land" attack
//! chains over mocked agent tool services, paired with the defense they call
//! for: a cross-service correlation engine.
//!
//! Every step an attack chain takes is an individually authorized service
//! call that passes that service's own policy. Per-service monitors
//! ([`detector::scan_service_log`]) therefore stay quiet, while the
//! cross-service view ([`detector::correlate`]) sees the same calls converge
//! on one target entity and raises an alert. That asymmetry is the core
//! invariant this crate exists to make executable and testable.
//!
//! # Modules
//!
//! - [`catalog`] — the task universe: six service categories, 271 tasks,
//!   combination enumeration, and the danger matrix.
//! - [`atlas`] — adversarial-AI technique registry and chain mappings.
//! - [`chainspec`] — the chain grammar, parser, and the bundled
//!   seven-scenario pack.
//! - [`simulator`] — seeded discrete-event execution producing per-service
//!   isolated logs with calibrated stochastic outcomes.
//! - [`detector`] — per-service policy scans, chain signatures, sliding
//!   window correlation, and evaluation against ground truth.
//! - [`harness`] — run directories, report files, and the `compchain`
//!   command entry points.
//!
//! # Examples
//!
//! One runnable example per capability lives under `examples/`:
//!
//! ```bash
//! cargo run --example danger_matrix          # enumerate and score combinations
//! cargo run --example canonical_chains      # the seven-chain scenario pack
//! cargo run --example run_single_chain      # execute one chain, dump its logs
//! cargo run --example calibrate_outcomes    # fit and verify the outcome model
//! cargo run --example detection_asymmetry   # per-service silence vs correlation
//! cargo run --example surveillance_repeat   # repeated low-and-slow profiling
//! cargo run --example benign_baseline       # false-positive control
//! cargo run --example full_pipeline         # run + detect + evaluate end to end
//! ```

pub mod atlas;
pub mod catalog;
pub mod chainspec;
pub mod detector;
pub mod harness;
pub mod simulator;

pub use atlas::{AtlasRegistry, Technique, TechniqueId, TtpMapping};
pub use catalog::{
    pair_count, CapabilityTag, CombinationKey, DangerMatrix, ServiceCategory, TaskCatalog,
    TaskSpec,
};
pub use chainspec::{canonical_pack, parse_chain, surveillance_chain, ChainSpec, ChainStep, EntityRef};
pub use detector::{
    correlate, evaluate, scan_service_log, signature_similarity, Alert, AlertKind, ChainSignature,
    DetectorConfig, PolicyRule,
};
pub use harness::{
    cmd_calibrate, cmd_danger, cmd_detect, cmd_run, CatalogSource, HarnessError, MetricsReport,
    PackSelector, RunConfig,
};
pub use simulator::{
    fit_outcome_model, run_benign_workload, run_chain, sample_outcome, AgentRun, Outcome,
    OutcomeModel, ServiceEvent, ServiceLog,
};
