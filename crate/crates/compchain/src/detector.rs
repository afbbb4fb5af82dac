//! Per-service monitors and the cross-service correlation engine.
//!
//! The per-service scan is the baseline: it sees one service's log and that
//! service's policy, nothing else. The correlation engine merges every log
//! into one entity-keyed timeline and looks for windows where diverse
//! actions converge on a single target, either by matching a known chain
//! signature or by crossing a danger-weighted coherence threshold.
//!
//! Per-service scans may run concurrently per log; correlation merges to one
//! time-ordered view first and sorts alerts deterministically at the end.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::catalog::{CapabilityTag, CombinationKey, DangerMatrix, ServiceCategory};
use crate::chainspec::{ChainSpec, EntityRef};
use crate::harness::MetricsReport;
use crate::simulator::{ServiceEvent, ServiceLog};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DetectorError {
    #[error("policy for {rule} applied to the {log} log")]
    ServiceMismatch {
        rule: ServiceCategory,
        log: ServiceCategory,
    },
    #[error("alert references run {0} absent from ground truth")]
    UnknownRun(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

// ---------------------------------------------------------------------------
// Policy and per-service scanning
// ---------------------------------------------------------------------------

/// What one service allows: a capability whitelist and an hourly rate cap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyRule {
    pub service: ServiceCategory,
    pub allowed_capabilities: BTreeSet<CapabilityTag>,
    /// Maximum events per sliding simulated hour.
    pub max_rate: u32,
}

/// Default events-per-hour cap; generous enough that day-scale chains never
/// trip it, so any asymmetry comes from structure rather than volume.
pub const DEFAULT_MAX_RATE: u32 = 60;

impl PolicyRule {
    /// The standard per-service policy: the catalog capability alphabet plus
    /// the default rate cap.
    pub fn standard(service: ServiceCategory) -> PolicyRule {
        PolicyRule {
            service,
            allowed_capabilities: crate::catalog::standard_capability_map()
                .remove(&service)
                .expect("every category has an alphabet"),
            max_rate: DEFAULT_MAX_RATE,
        }
    }
}

/// Alert classification: single-log policy hit or cross-log correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlertKind {
    PerService,
    CrossService,
}

impl AlertKind {
    pub fn label(self) -> &'static str {
        match self {
            AlertKind::PerService => "PER_SERVICE",
            AlertKind::CrossService => "CROSS_SERVICE",
        }
    }
}

/// A reference to one contributing event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRef {
    pub run_id: String,
    pub service: ServiceCategory,
    pub timestamp: u64,
}

impl EventRef {
    fn of(event: &ServiceEvent) -> EventRef {
        EventRef {
            run_id: event.run_id.clone(),
            service: event.service,
            timestamp: event.timestamp,
        }
    }
}

/// Detector output: one suspicious window on one entity.
#[derive(Debug, Clone, PartialEq)]
pub struct Alert {
    pub kind: AlertKind,
    pub entity: EntityRef,
    pub window_start: u64,
    pub window_end: u64,
    pub matched_signature: Option<String>,
    pub score: f64,
    pub contributing_events: Vec<EventRef>,
}

/// Flag capability and rate violations visible within a single service log.
///
/// Never consults any other log; this is the whole point of the baseline.
pub fn scan_service_log(log: &ServiceLog, rule: &PolicyRule) -> Result<Vec<Alert>, DetectorError> {
    if rule.service != log.service() {
        return Err(DetectorError::ServiceMismatch {
            rule: rule.service,
            log: log.service(),
        });
    }
    let mut alerts = Vec::new();
    let events = log.events();

    for event in events {
        if !rule.allowed_capabilities.contains(&event.capability) {
            alerts.push(Alert {
                kind: AlertKind::PerService,
                entity: event.target.clone(),
                window_start: event.timestamp,
                window_end: event.timestamp,
                matched_signature: None,
                score: 1.0,
                contributing_events: vec![EventRef::of(event)],
            });
        }
    }

    // Rate scan: one alert per burst episode, anchored at the first event
    // whose trailing hour exceeds the cap.
    let mut previous_violated = false;
    for (i, event) in events.iter().enumerate() {
        let window_end = event.timestamp + 60;
        let in_window: Vec<&ServiceEvent> = events[i..]
            .iter()
            .take_while(|e| e.timestamp < window_end)
            .collect();
        let violated = in_window.len() as u32 > rule.max_rate;
        if violated && !previous_violated {
            alerts.push(Alert {
                kind: AlertKind::PerService,
                entity: in_window[0].target.clone(),
                window_start: event.timestamp,
                window_end,
                matched_signature: None,
                score: 1.0,
                contributing_events: in_window.iter().map(|e| EventRef::of(e)).collect(),
            });
        }
        previous_violated = violated;
    }

    alerts.sort_by(|a, b| (a.window_start, a.entity.as_str()).cmp(&(b.window_start, b.entity.as_str())));
    Ok(alerts)
}

// ---------------------------------------------------------------------------
// Signatures and similarity
// ---------------------------------------------------------------------------

/// A chain projected onto its (service, capability) sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainSignature {
    pub name: String,
    pub alphabet_sequence: Vec<(ServiceCategory, CapabilityTag)>,
    pub source_chain: String,
}

impl ChainSignature {
    pub fn from_chain(chain: &ChainSpec) -> ChainSignature {
        ChainSignature {
            name: chain.name.clone(),
            alphabet_sequence: chain
                .steps
                .iter()
                .map(|s| (s.category, s.capability))
                .collect(),
            source_chain: chain.name.clone(),
        }
    }
}

fn lcs_length(a: &[(ServiceCategory, CapabilityTag)], b: &[(ServiceCategory, CapabilityTag)]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut prev_diag = 0;
        for (k, y) in b.iter().enumerate() {
            let tmp = row[k + 1];
            row[k + 1] = if x == y {
                prev_diag + 1
            } else {
                row[k + 1].max(row[k])
            };
            prev_diag = tmp;
        }
    }
    row[b.len()]
}

/// Length-normalized longest-common-subsequence similarity in [0, 1].
///
/// Empty-versus-empty is defined as 1.
pub fn signature_similarity(
    observed: &[(ServiceCategory, CapabilityTag)],
    signature: &ChainSignature,
) -> f64 {
    let longest = observed.len().max(signature.alphabet_sequence.len());
    if longest == 0 {
        return 1.0;
    }
    lcs_length(observed, &signature.alphabet_sequence) as f64 / longest as f64
}

// ---------------------------------------------------------------------------
// Coherence
// ---------------------------------------------------------------------------

fn coherence_of(categories: &BTreeSet<ServiceCategory>, danger: &DangerMatrix) -> f64 {
    if categories.len() < 2 {
        return 0.0;
    }
    let key = CombinationKey::new(categories.iter().copied()).expect("two or more categories");
    danger.score(&key).map(|entry| entry.score).unwrap_or(0.0)
}

/// Danger score of the distinct categories touching one entity within a
/// window; 0 when fewer than two categories are involved.
pub fn coherence_score(events: &[&ServiceEvent], danger: &DangerMatrix) -> f64 {
    let categories: BTreeSet<ServiceCategory> = events.iter().map(|e| e.service).collect();
    coherence_of(&categories, danger)
}

// ---------------------------------------------------------------------------
// Correlation
// ---------------------------------------------------------------------------

/// Correlation engine tuning; all values overridable from a key=value file.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorConfig {
    /// Sliding window length in simulated minutes.
    pub window: u64,
    /// Minimum distinct service categories before a window can alert.
    pub min_categories: usize,
    pub similarity_threshold: f64,
    pub coherence_threshold: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            window: 4_320,
            min_categories: 3,
            similarity_threshold: 0.6,
            coherence_threshold: 0.7,
        }
    }
}

impl DetectorConfig {
    /// Parse `key=value` lines; unset keys keep their defaults.
    pub fn parse(source: &str) -> Result<DetectorConfig, DetectorError> {
        let mut cfg = DetectorConfig::default();
        for (line_no, line) in crate::catalog::numbered_lines(source) {
            let (key, value) = line.split_once('=').ok_or_else(|| DetectorError::Parse {
                line: line_no,
                msg: format!("expected key=value, got `{line}`"),
            })?;
            let bad = |what: &str| DetectorError::Parse {
                line: line_no,
                msg: format!("bad {what} value `{value}`"),
            };
            match key.trim() {
                "window" => cfg.window = value.trim().parse().map_err(|_| bad("window"))?,
                "min_categories" => {
                    cfg.min_categories = value.trim().parse().map_err(|_| bad("min_categories"))?
                }
                "similarity_threshold" => {
                    cfg.similarity_threshold =
                        value.trim().parse().map_err(|_| bad("similarity_threshold"))?
                }
                "coherence_threshold" => {
                    cfg.coherence_threshold =
                        value.trim().parse().map_err(|_| bad("coherence_threshold"))?
                }
                other => {
                    return Err(DetectorError::Parse {
                        line: line_no,
                        msg: format!("unknown config key {other}"),
                    })
                }
            }
        }
        if cfg.window == 0 {
            return Err(DetectorError::Parse {
                line: 0,
                msg: "window must be positive".into(),
            });
        }
        for (name, v) in [
            ("similarity_threshold", cfg.similarity_threshold),
            ("coherence_threshold", cfg.coherence_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(DetectorError::Parse {
                    line: 0,
                    msg: format!("{name} must be in [0, 1]"),
                });
            }
        }
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        format!(
            "window={}\nmin_categories={}\nsimilarity_threshold={}\ncoherence_threshold={}\n",
            self.window, self.min_categories, self.similarity_threshold, self.coherence_threshold
        )
    }
}

/// Merge every log into one entity-keyed timeline and emit a cross-service
/// alert for each window anchor whose best contiguous segment both spans
/// enough categories and either matches a signature or scores coherent.
///
/// Output is deterministic and independent of log ingestion order: events
/// are totally ordered by (timestamp, run, sequence, service) before any
/// window is considered, and alerts are finally sorted by (start, entity).
pub fn correlate(
    logs: &[&ServiceLog],
    signatures: &[ChainSignature],
    danger: &DangerMatrix,
    cfg: &DetectorConfig,
) -> Vec<Alert> {
    let mut events: Vec<&ServiceEvent> = logs.iter().flat_map(|l| l.events().iter()).collect();
    events.sort_by(|a, b| {
        (a.timestamp, &a.run_id, a.seq, a.service.label(), &a.task_id)
            .cmp(&(b.timestamp, &b.run_id, b.seq, b.service.label(), &b.task_id))
    });

    let mut per_entity: BTreeMap<&EntityRef, Vec<&ServiceEvent>> = BTreeMap::new();
    for event in events {
        per_entity.entry(&event.target).or_default().push(event);
    }

    let mut sorted_signatures: Vec<&ChainSignature> = signatures.iter().collect();
    sorted_signatures.sort_by(|a, b| a.name.cmp(&b.name));

    let mut alerts = Vec::new();
    for (entity, events) in per_entity {
        let projected: Vec<(ServiceCategory, CapabilityTag)> =
            events.iter().map(|e| (e.service, e.capability)).collect();
        for anchor in 0..events.len() {
            let horizon = events[anchor].timestamp + cfg.window;
            let mut best: Option<(f64, Option<String>, usize)> = None;
            let mut categories: BTreeSet<ServiceCategory> = BTreeSet::new();
            for end in anchor..events.len() {
                if events[end].timestamp >= horizon {
                    break;
                }
                categories.insert(events[end].service);
                if categories.len() < cfg.min_categories {
                    continue;
                }
                let segment = &projected[anchor..=end];
                // Highest similarity wins; remaining ties go to the
                // lexicographically first signature name.
                let mut best_similarity = 0.0f64;
                let mut best_name: Option<&str> = None;
                for signature in &sorted_signatures {
                    let similarity = signature_similarity(segment, signature);
                    if similarity > best_similarity {
                        best_similarity = similarity;
                        best_name = Some(&signature.name);
                    }
                }
                let coherence = coherence_of(&categories, danger);
                let similar = best_similarity >= cfg.similarity_threshold;
                let coherent = coherence >= cfg.coherence_threshold;
                if !similar && !coherent {
                    continue;
                }
                let score = best_similarity.max(coherence);
                let matched = if similar {
                    best_name.map(str::to_string)
                } else {
                    None
                };
                if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
                    best = Some((score, matched, end));
                }
            }
            if let Some((score, matched_signature, end)) = best {
                alerts.push(Alert {
                    kind: AlertKind::CrossService,
                    entity: entity.clone(),
                    window_start: events[anchor].timestamp,
                    window_end: events[end].timestamp,
                    matched_signature,
                    score,
                    contributing_events: events[anchor..=end].iter().map(|e| EventRef::of(e)).collect(),
                });
            }
        }
    }

    alerts.sort_by(|a, b| {
        (a.window_start, a.entity.as_str(), a.window_end)
            .cmp(&(b.window_start, b.entity.as_str(), b.window_end))
    });
    alerts
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Ground-truth label for one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunLabel {
    pub malicious: bool,
    pub chain: Option<String>,
}

pub type GroundTruth = BTreeMap<String, RunLabel>;

/// Score alerts against ground truth.
///
/// A run counts as flagged when at least one cross-service alert references
/// one of its events. Precision and recall report 1.0 on empty denominators;
/// the false-positive rate reports 0.
pub fn evaluate(alerts: &[Alert], ground_truth: &GroundTruth) -> Result<MetricsReport, DetectorError> {
    let mut flagged: BTreeSet<&str> = BTreeSet::new();
    for alert in alerts {
        if alert.kind != AlertKind::CrossService {
            continue;
        }
        for event in &alert.contributing_events {
            if !ground_truth.contains_key(&event.run_id) {
                return Err(DetectorError::UnknownRun(event.run_id.clone()));
            }
            flagged.insert(&event.run_id);
        }
    }

    let mut true_positives = 0usize;
    let mut false_positives = 0usize;
    let mut malicious_total = 0usize;
    let mut benign_total = 0usize;
    let mut per_chain_detected: BTreeMap<String, bool> = BTreeMap::new();
    for (run_id, label) in ground_truth {
        let hit = flagged.contains(run_id.as_str());
        if label.malicious {
            malicious_total += 1;
            if hit {
                true_positives += 1;
            }
            if let Some(chain) = &label.chain {
                let entry = per_chain_detected.entry(chain.clone()).or_insert(false);
                *entry = *entry || hit;
            }
        } else {
            benign_total += 1;
            if hit {
                false_positives += 1;
            }
        }
    }

    let flagged_total = true_positives + false_positives;
    let precision = if flagged_total == 0 {
        1.0
    } else {
        true_positives as f64 / flagged_total as f64
    };
    let recall = if malicious_total == 0 {
        1.0
    } else {
        true_positives as f64 / malicious_total as f64
    };
    let fpr = if benign_total == 0 {
        0.0
    } else {
        false_positives as f64 / benign_total as f64
    };

    Ok(MetricsReport {
        per_chain_detected,
        precision,
        recall,
        fpr,
        calibration_deltas: BTreeMap::new(),
        danger_top_k: Vec::new(),
    })
}
