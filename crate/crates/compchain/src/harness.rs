//! Orchestration: run directories, ground truth, report emission, and the
//! four command entry points behind the `compchain` binary.
//!
//! Every emitted file is plain delimited text beginning with a `<name> v1`
//! header, written atomically (write-then-rename), and parseable by the
//! readers in this module.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::atlas::AtlasError;
use crate::catalog::{
    enumerate_combinations, numbered_lines, CatalogError, CombinationKey, DangerMatrix,
    ServiceCategory, TaskCatalog,
};
use crate::chainspec::{canonical_pack, parse_chain, surveillance_chain, ChainError, ChainSpec};
use crate::detector::{
    correlate, evaluate, scan_service_log, Alert, ChainSignature, DetectorConfig, DetectorError,
    GroundTruth, PolicyRule, RunLabel,
};
use crate::simulator::{
    run_benign_workload, run_chain_with_id, sample_outcome, AgentRun, Outcome, OutcomeModel,
    ServiceLog, SimError,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Atlas(#[from] AtlasError),
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error("missing ground truth file {0}")]
    MissingGroundTruth(PathBuf),
    #[error("{path}:{line}: malformed log: {msg}")]
    MalformedLog {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    /// Process exit status: 2 for validation failures, 1 for internal errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Io { .. } => 1,
            _ => 2,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write a file atomically: stage to a sibling temp path, then rename.
pub fn write_atomic(path: &Path, content: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(path))?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, content).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Where the task catalog comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CatalogSource {
    Reference,
    Path(PathBuf),
}

impl CatalogSource {
    pub fn load(&self) -> Result<TaskCatalog, HarnessError> {
        match self {
            CatalogSource::Reference => Ok(TaskCatalog::reference()),
            CatalogSource::Path(path) => {
                let text = fs::read_to_string(path).map_err(io_err(path))?;
                Ok(TaskCatalog::parse(&text)?)
            }
        }
    }

    fn manifest_value(&self) -> String {
        match self {
            CatalogSource::Reference => "reference".to_string(),
            CatalogSource::Path(path) => path.display().to_string(),
        }
    }
}

/// Which chains a run executes (besides the benign workload).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PackSelector {
    Canonical,
    Surveillance,
    /// Explicit chain files; empty means a benign-only run.
    Custom(Vec<PathBuf>),
}

impl PackSelector {
    pub fn load(&self) -> Result<Vec<ChainSpec>, HarnessError> {
        match self {
            PackSelector::Canonical => Ok(canonical_pack()),
            PackSelector::Surveillance => Ok(vec![surveillance_chain()]),
            PackSelector::Custom(paths) => paths
                .iter()
                .map(|path| {
                    let text = fs::read_to_string(path).map_err(io_err(path))?;
                    Ok(parse_chain(&text)?)
                })
                .collect(),
        }
    }

    fn manifest_value(&self) -> String {
        match self {
            PackSelector::Canonical => "canonical".to_string(),
            PackSelector::Surveillance => "surveillance".to_string(),
            PackSelector::Custom(paths) if paths.is_empty() => "none".to_string(),
            PackSelector::Custom(_) => "custom".to_string(),
        }
    }
}

/// Everything `run` needs.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub catalog: CatalogSource,
    pub pack: PackSelector,
    pub benign_runs: u32,
    pub entity_pool: u32,
    pub output_dir: PathBuf,
}

impl RunConfig {
    fn digest(&self) -> String {
        let canonical = format!(
            "seed={}\ncatalog={}\npack={}\nbenign_runs={}\nentity_pool={}\n",
            self.seed,
            self.catalog.manifest_value(),
            self.pack.manifest_value(),
            self.benign_runs,
            self.entity_pool
        );
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------------
// Metrics report
// ---------------------------------------------------------------------------

/// Detection, calibration, and danger summary for one evaluated run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub per_chain_detected: BTreeMap<String, bool>,
    pub precision: f64,
    pub recall: f64,
    pub fpr: f64,
    /// Per calibration group: (rate delta, mean-iteration delta), signed.
    pub calibration_deltas: BTreeMap<String, (f64, f64)>,
    pub danger_top_k: Vec<(CombinationKey, f64)>,
}

impl MetricsReport {
    pub fn to_text(&self) -> String {
        let mut out = String::from("metrics v1\n");
        out.push_str(&format!("precision {:.6}\n", self.precision));
        out.push_str(&format!("recall {:.6}\n", self.recall));
        out.push_str(&format!("fpr {:.6}\n", self.fpr));
        for (chain, detected) in &self.per_chain_detected {
            let state = if *detected { "detected" } else { "missed" };
            out.push_str(&format!("chain {chain} {state}\n"));
        }
        for (group, (rate_delta, iter_delta)) in &self.calibration_deltas {
            out.push_str(&format!(
                "calibration {group} rate_delta {rate_delta:+.6} iter_delta {iter_delta:+.6}\n"
            ));
        }
        for (key, score) in &self.danger_top_k {
            out.push_str(&format!("danger {key} {score:.6}\n"));
        }
        out
    }

    pub fn parse(source: &str) -> Result<MetricsReport, HarnessError> {
        let mut lines = numbered_lines(source);
        let (line_no, header) = lines.next().ok_or_else(|| {
            HarnessError::InvalidConfig("empty metrics file".to_string())
        })?;
        if header != "metrics v1" {
            return Err(HarnessError::InvalidConfig(format!(
                "line {line_no}: expected `metrics v1` header"
            )));
        }
        let mut report = MetricsReport::default();
        for (line_no, line) in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = || {
                HarnessError::InvalidConfig(format!("line {line_no}: malformed metrics row `{line}`"))
            };
            match fields.first().copied() {
                Some("precision") if fields.len() == 2 => {
                    report.precision = fields[1].parse().map_err(|_| bad())?
                }
                Some("recall") if fields.len() == 2 => {
                    report.recall = fields[1].parse().map_err(|_| bad())?
                }
                Some("fpr") if fields.len() == 2 => {
                    report.fpr = fields[1].parse().map_err(|_| bad())?
                }
                Some("chain") if fields.len() == 3 => {
                    report
                        .per_chain_detected
                        .insert(fields[1].to_string(), fields[2] == "detected");
                }
                Some("calibration") if fields.len() == 6 => {
                    let rate: f64 = fields[3].parse().map_err(|_| bad())?;
                    let iters: f64 = fields[5].parse().map_err(|_| bad())?;
                    report
                        .calibration_deltas
                        .insert(fields[1].to_string(), (rate, iters));
                }
                Some("danger") if fields.len() == 3 => {
                    let key = parse_combination(fields[1])?;
                    report.danger_top_k.push((key, fields[2].parse().map_err(|_| bad())?));
                }
                _ => return Err(bad()),
            }
        }
        Ok(report)
    }
}

fn parse_combination(text: &str) -> Result<CombinationKey, HarnessError> {
    let categories = text
        .split('+')
        .map(|label| label.parse::<ServiceCategory>())
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CombinationKey::new(categories)?)
}

// ---------------------------------------------------------------------------
// Labels, manifest, alerts files
// ---------------------------------------------------------------------------

pub fn labels_to_text(truth: &GroundTruth) -> String {
    let mut out = String::from("labels v1\n");
    for (run_id, label) in truth {
        if label.malicious {
            let chain = label.chain.as_deref().unwrap_or("-");
            out.push_str(&format!("run {run_id} malicious chain={chain}\n"));
        } else {
            out.push_str(&format!("run {run_id} benign\n"));
        }
    }
    out
}

pub fn parse_labels(source: &str) -> Result<GroundTruth, HarnessError> {
    let mut lines = numbered_lines(source);
    let (line_no, header) = lines
        .next()
        .ok_or_else(|| HarnessError::InvalidConfig("empty labels file".to_string()))?;
    if header != "labels v1" {
        return Err(HarnessError::InvalidConfig(format!(
            "line {line_no}: expected `labels v1` header"
        )));
    }
    let mut truth = GroundTruth::new();
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split_whitespace().collect();
        let bad = |msg: &str| {
            HarnessError::InvalidConfig(format!("line {line_no}: {msg} in `{line}`"))
        };
        if fields.len() < 3 || fields[0] != "run" {
            return Err(bad("expected `run <id> <malicious|benign>`"));
        }
        let run_id = fields[1].to_string();
        let label = match fields[2] {
            "benign" => RunLabel {
                malicious: false,
                chain: None,
            },
            "malicious" => {
                let chain = fields
                    .get(3)
                    .and_then(|f| f.strip_prefix("chain="))
                    .map(str::to_string);
                RunLabel {
                    malicious: true,
                    chain,
                }
            }
            _ => return Err(bad("label must be malicious or benign")),
        };
        if truth.insert(run_id.clone(), label).is_some() {
            return Err(bad(&format!("run {run_id} labeled twice")));
        }
    }
    Ok(truth)
}

pub fn alerts_to_text(alerts: &[Alert]) -> String {
    let mut out = String::from("alerts v1\n");
    for alert in alerts {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{:.6}\t{}\n",
            alert.kind.label(),
            alert.entity,
            alert.window_start,
            alert.window_end,
            alert.matched_signature.as_deref().unwrap_or("-"),
            alert.score,
            alert.contributing_events.len()
        ));
    }
    out
}

/// One row of an alerts file (event references are summarized as a count).
#[derive(Debug, Clone, PartialEq)]
pub struct AlertRecord {
    pub kind: String,
    pub entity: String,
    pub window_start: u64,
    pub window_end: u64,
    pub signature: Option<String>,
    pub score: f64,
    pub event_count: usize,
}

pub fn parse_alerts(source: &str) -> Result<Vec<AlertRecord>, HarnessError> {
    let mut lines = source.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (line_no, header) = lines
        .next()
        .ok_or_else(|| HarnessError::InvalidConfig("empty alerts file".to_string()))?;
    if header != "alerts v1" {
        return Err(HarnessError::InvalidConfig(format!(
            "line {line_no}: expected `alerts v1` header"
        )));
    }
    let mut records = Vec::new();
    for (line_no, line) in lines.filter(|(_, l)| !l.is_empty()) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 7 {
            return Err(HarnessError::InvalidConfig(format!(
                "line {line_no}: expected 7 tab-separated fields"
            )));
        }
        let bad = |what: &str| {
            HarnessError::InvalidConfig(format!("line {line_no}: bad {what}"))
        };
        records.push(AlertRecord {
            kind: fields[0].to_string(),
            entity: fields[1].to_string(),
            window_start: fields[2].parse().map_err(|_| bad("window_start"))?,
            window_end: fields[3].parse().map_err(|_| bad("window_end"))?,
            signature: (fields[4] != "-").then(|| fields[4].to_string()),
            score: fields[5].parse().map_err(|_| bad("score"))?,
            event_count: fields[6].parse().map_err(|_| bad("event_count"))?,
        });
    }
    Ok(records)
}

fn manifest_to_text(config: &RunConfig, created_unix: u64) -> String {
    format!(
        "manifest v1\nseed {}\npack {}\ncatalog {}\nbenign_runs {}\nentity_pool {}\nconfig_digest {}\ntool compchain {}\ncreated {}\n",
        config.seed,
        config.pack.manifest_value(),
        config.catalog.manifest_value(),
        config.benign_runs,
        config.entity_pool,
        config.digest(),
        env!("CARGO_PKG_VERSION"),
        created_unix,
    )
}

pub fn parse_manifest(source: &str) -> Result<BTreeMap<String, String>, HarnessError> {
    let mut lines = numbered_lines(source);
    let (line_no, header) = lines
        .next()
        .ok_or_else(|| HarnessError::InvalidConfig("empty manifest".to_string()))?;
    if header != "manifest v1" {
        return Err(HarnessError::InvalidConfig(format!(
            "line {line_no}: expected `manifest v1` header"
        )));
    }
    let mut entries = BTreeMap::new();
    for (line_no, line) in lines {
        let (key, value) = line.split_once(' ').ok_or_else(|| {
            HarnessError::InvalidConfig(format!("line {line_no}: expected `<key> <value>`"))
        })?;
        entries.insert(key.to_string(), value.to_string());
    }
    Ok(entries)
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

/// What `run` produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub malicious_runs: usize,
    pub benign_runs: usize,
    pub total_events: usize,
}

fn run_dir(base: &Path, run_id: &str) -> PathBuf {
    base.join("runs").join(run_id)
}

fn log_file_name(service: ServiceCategory) -> String {
    format!("events-{}.log", service.label().to_lowercase())
}

fn write_run(base: &Path, run: &AgentRun) -> Result<usize, HarnessError> {
    let dir = run_dir(base, &run.run_id);
    let mut events = 0;
    for (service, log) in &run.logs {
        events += log.events().len();
        write_atomic(&dir.join(log_file_name(*service)), &log.to_text())?;
    }
    Ok(events)
}

fn path_safe(name: &str) -> bool {
    !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

/// Execute the selected chains plus the benign workload and lay down a
/// self-contained run directory: per-service event logs per run, the chain
/// specs used, a ground-truth labels file, and a manifest.
pub fn cmd_run(config: &RunConfig) -> Result<RunSummary, HarnessError> {
    if config.entity_pool == 0 {
        return Err(HarnessError::InvalidConfig(
            "entity_pool must be at least 1".to_string(),
        ));
    }
    let catalog = config.catalog.load()?;
    let model = OutcomeModel::standard();
    let chains = config.pack.load()?;
    for chain in &chains {
        if !path_safe(&chain.name) {
            return Err(HarnessError::InvalidConfig(format!(
                "chain name `{}` is not usable as a run id",
                chain.name
            )));
        }
    }
    {
        let mut names: Vec<&str> = chains.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != chains.len() {
            return Err(HarnessError::InvalidConfig(
                "duplicate chain names in pack".to_string(),
            ));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut truth = GroundTruth::new();
    let mut total_events = 0;

    for chain in &chains {
        let run_seed = rng.gen::<u64>();
        let run = run_chain_with_id(chain, &catalog, &model, run_seed, &chain.name)?;
        total_events += write_run(&config.output_dir, &run)?;
        write_atomic(
            &config.output_dir.join("chains").join(format!("{}.chain", chain.name)),
            &chain.to_text(),
        )?;
        truth.insert(
            run.run_id.clone(),
            RunLabel {
                malicious: true,
                chain: Some(chain.name.clone()),
            },
        );
    }

    let benign_seed = rng.gen::<u64>();
    let benign = run_benign_workload(
        &catalog,
        &model,
        config.benign_runs,
        config.entity_pool,
        benign_seed,
    )?;
    for run in &benign {
        total_events += write_run(&config.output_dir, run)?;
        truth.insert(
            run.run_id.clone(),
            RunLabel {
                malicious: false,
                chain: None,
            },
        );
    }

    write_atomic(&config.output_dir.join("labels"), &labels_to_text(&truth))?;
    let created = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    write_atomic(
        &config.output_dir.join("manifest"),
        &manifest_to_text(config, created),
    )?;

    Ok(RunSummary {
        output_dir: config.output_dir.clone(),
        malicious_runs: chains.len(),
        benign_runs: benign.len(),
        total_events,
    })
}

// ---------------------------------------------------------------------------
// detect
// ---------------------------------------------------------------------------

/// What `detect` produced.
#[derive(Debug, Clone)]
pub struct DetectSummary {
    pub alerts_path: PathBuf,
    pub metrics_path: PathBuf,
    pub per_service_alerts: usize,
    pub cross_service_alerts: usize,
    pub report: MetricsReport,
}

fn read_dir_sorted(path: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut entries: Vec<PathBuf> = fs::read_dir(path)
        .map_err(io_err(path))?
        .collect::<Result<Vec<_>, _>>()
        .map_err(io_err(path))?
        .into_iter()
        .map(|e| e.path())
        .collect();
    entries.sort();
    Ok(entries)
}

fn load_logs(logs_dir: &Path) -> Result<Vec<ServiceLog>, HarnessError> {
    let runs = logs_dir.join("runs");
    if !runs.is_dir() {
        return Err(HarnessError::MalformedLog {
            path: runs,
            line: 0,
            msg: "run directory not found".to_string(),
        });
    }
    let mut logs = Vec::new();
    for run_dir in read_dir_sorted(&runs)? {
        if !run_dir.is_dir() {
            continue;
        }
        for file in read_dir_sorted(&run_dir)? {
            let name = file
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .to_string();
            let service_label = match name
                .strip_prefix("events-")
                .and_then(|n| n.strip_suffix(".log"))
            {
                Some(label) => label.to_uppercase(),
                None => continue,
            };
            let service: ServiceCategory =
                service_label
                    .parse()
                    .map_err(|_| HarnessError::MalformedLog {
                        path: file.clone(),
                        line: 0,
                        msg: format!("unknown service in file name {name}"),
                    })?;
            let text = fs::read_to_string(&file).map_err(io_err(&file))?;
            let log = ServiceLog::parse(service, &text).map_err(|e| match e {
                SimError::Parse { line, msg } => HarnessError::MalformedLog {
                    path: file.clone(),
                    line,
                    msg,
                },
                other => HarnessError::Sim(other),
            })?;
            logs.push(log);
        }
    }
    Ok(logs)
}

fn load_signatures(logs_dir: &Path) -> Result<Vec<ChainSignature>, HarnessError> {
    let chains_dir = logs_dir.join("chains");
    if !chains_dir.is_dir() {
        return Ok(Vec::new());
    }
    let mut signatures = Vec::new();
    for file in read_dir_sorted(&chains_dir)? {
        if file.extension().and_then(|e| e.to_str()) != Some("chain") {
            continue;
        }
        let text = fs::read_to_string(&file).map_err(io_err(&file))?;
        signatures.push(ChainSignature::from_chain(&parse_chain(&text)?));
    }
    Ok(signatures)
}

fn calibration_deltas_from_logs(
    logs: &[ServiceLog],
    catalog: &TaskCatalog,
    model: &OutcomeModel,
) -> BTreeMap<String, (f64, f64)> {
    let mut per_group: BTreeMap<String, (usize, usize, u64)> = BTreeMap::new();
    for log in logs {
        for event in log.events() {
            let Some(task) = catalog.task(&event.task_id) else {
                continue;
            };
            let entry = per_group
                .entry(task.calibration_group.clone())
                .or_insert((0, 0, 0));
            entry.0 += 1;
            if event.outcome == Outcome::Success {
                entry.1 += 1;
            }
            entry.2 += event.iterations as u64;
        }
    }
    let mut deltas = BTreeMap::new();
    for (group, (events, successes, iterations)) in per_group {
        let Ok(params) = model.group(&group) else {
            continue;
        };
        let rate = successes as f64 / events as f64;
        let mean = iterations as f64 / events as f64;
        deltas.insert(
            group,
            (
                rate - params.target_success_rate,
                mean - params.target_mean_iterations,
            ),
        );
    }
    deltas
}

/// Top combinations by danger score over all sizes up to `max_size`.
pub fn danger_ranking(
    danger: &DangerMatrix,
    max_size: usize,
) -> Result<Vec<(CombinationKey, f64, String)>, HarnessError> {
    if !(2..=6).contains(&max_size) {
        return Err(HarnessError::Catalog(CatalogError::OutOfRange(max_size)));
    }
    let mut rows = Vec::new();
    for k in 2..=max_size {
        for key in enumerate_combinations(k)? {
            let entry = danger.score(&key)?;
            rows.push((key, entry.score, entry.label));
        }
    }
    rows.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("scores are finite")
            .then_with(|| a.0.cmp(&b.0))
    });
    Ok(rows)
}

/// Scan every per-service log, correlate across them, and score the result
/// against the run directory's ground truth. Writes `alerts` and `metrics`
/// files beside the logs (or under `out` when given).
pub fn cmd_detect(
    logs_dir: &Path,
    detector_config: &DetectorConfig,
    out: Option<&Path>,
) -> Result<DetectSummary, HarnessError> {
    let labels_path = logs_dir.join("labels");
    if !labels_path.is_file() {
        return Err(HarnessError::MissingGroundTruth(labels_path));
    }
    let truth = parse_labels(&fs::read_to_string(&labels_path).map_err(io_err(&labels_path))?)?;

    let logs = load_logs(logs_dir)?;
    let signatures = load_signatures(logs_dir)?;
    let catalog = match parse_manifest(
        &fs::read_to_string(logs_dir.join("manifest"))
            .map_err(io_err(&logs_dir.join("manifest")))?,
    )?
    .get("catalog")
    .map(String::as_str)
    {
        Some("reference") | None => CatalogSource::Reference,
        Some(path) => CatalogSource::Path(PathBuf::from(path)),
    }
    .load()?;
    let model = OutcomeModel::standard();
    let danger = DangerMatrix::standard();

    let mut alerts: Vec<Alert> = Vec::new();
    for log in &logs {
        alerts.extend(scan_service_log(log, &PolicyRule::standard(log.service()))?);
    }
    let per_service_alerts = alerts.len();

    let log_refs: Vec<&ServiceLog> = logs.iter().collect();
    let cross = correlate(&log_refs, &signatures, &danger, detector_config);
    let cross_service_alerts = cross.len();
    alerts.extend(cross);

    let mut report = evaluate(&alerts, &truth)?;
    report.calibration_deltas = calibration_deltas_from_logs(&logs, &catalog, &model);
    report.danger_top_k = danger_ranking(&danger, 6)?
        .into_iter()
        .take(5)
        .map(|(key, score, _)| (key, score))
        .collect();

    let out_dir = out.unwrap_or(logs_dir);
    let alerts_path = out_dir.join("alerts");
    let metrics_path = out_dir.join("metrics");
    write_atomic(&alerts_path, &alerts_to_text(&alerts))?;
    write_atomic(&metrics_path, &report.to_text())?;

    Ok(DetectSummary {
        alerts_path,
        metrics_path,
        per_service_alerts,
        cross_service_alerts,
        report,
    })
}

// ---------------------------------------------------------------------------
// danger
// ---------------------------------------------------------------------------

/// Write the ranked danger report for all combinations up to size `k`.
pub fn cmd_danger(
    catalog: &CatalogSource,
    k: usize,
    out_path: &Path,
) -> Result<Vec<(CombinationKey, f64, String)>, HarnessError> {
    catalog.load()?; // validates the catalog source
    let rows = danger_ranking(&DangerMatrix::standard(), k)?;
    let mut text = String::from("danger v1\n");
    for (key, score, label) in &rows {
        text.push_str(&format!("combo {key} {score:.6} {label}\n"));
    }
    write_atomic(out_path, &text)?;
    Ok(rows)
}

pub fn parse_danger_report(
    source: &str,
) -> Result<Vec<(CombinationKey, f64, String)>, HarnessError> {
    let mut lines = numbered_lines(source);
    let (line_no, header) = lines
        .next()
        .ok_or_else(|| HarnessError::InvalidConfig("empty danger report".to_string()))?;
    if header != "danger v1" {
        return Err(HarnessError::InvalidConfig(format!(
            "line {line_no}: expected `danger v1` header"
        )));
    }
    let mut rows = Vec::new();
    for (line_no, line) in lines {
        let mut fields = line.splitn(4, ' ');
        let bad = || HarnessError::InvalidConfig(format!("line {line_no}: malformed danger row"));
        if fields.next() != Some("combo") {
            return Err(bad());
        }
        let key = parse_combination(fields.next().ok_or_else(bad)?)?;
        let score: f64 = fields.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let label = fields.next().ok_or_else(bad)?.to_string();
        rows.push((key, score, label));
    }
    Ok(rows)
}

// ---------------------------------------------------------------------------
// calibrate
// ---------------------------------------------------------------------------

/// Monte-Carlo estimate for one calibration group.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRow {
    pub group: String,
    pub target_rate: f64,
    pub empirical_rate: f64,
    pub target_mean_iterations: f64,
    pub empirical_mean_iterations: f64,
}

impl CalibrationRow {
    pub fn rate_delta(&self) -> f64 {
        self.empirical_rate - self.target_rate
    }

    pub fn iteration_delta(&self) -> f64 {
        self.empirical_mean_iterations - self.target_mean_iterations
    }
}

/// Rate-delta tolerance: two percentage points.
pub const CALIBRATION_RATE_TOLERANCE: f64 = 0.02;

/// Sample every group `runs_per_group` times and compare against targets.
///
/// Returns the per-group rows; the caller decides how to treat tolerance
/// breaches (the binary exits nonzero).
pub fn cmd_calibrate(
    runs_per_group: u32,
    seed: u64,
    out_path: &Path,
) -> Result<Vec<CalibrationRow>, HarnessError> {
    if runs_per_group == 0 {
        return Err(HarnessError::InvalidConfig(
            "runs_per_group must be at least 1".to_string(),
        ));
    }
    let model = OutcomeModel::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    for (group, params) in model.groups() {
        let mut successes = 0u64;
        let mut iterations = 0u64;
        for _ in 0..runs_per_group {
            let (outcome, attempts) = sample_outcome(group, &model, &mut rng)?;
            if outcome == Outcome::Success {
                successes += 1;
            }
            iterations += attempts as u64;
        }
        rows.push(CalibrationRow {
            group: group.clone(),
            target_rate: params.target_success_rate,
            empirical_rate: successes as f64 / runs_per_group as f64,
            target_mean_iterations: params.target_mean_iterations,
            empirical_mean_iterations: iterations as f64 / runs_per_group as f64,
        });
    }

    let mut text = String::from("calibration v1\n");
    for row in &rows {
        text.push_str(&format!(
            "group {} target_rate {:.6} rate {:.6} rate_delta {:+.6} target_iters {:.6} iters {:.6} iters_delta {:+.6}\n",
            row.group,
            row.target_rate,
            row.empirical_rate,
            row.rate_delta(),
            row.target_mean_iterations,
            row.empirical_mean_iterations,
            row.iteration_delta(),
        ));
    }
    write_atomic(out_path, &text)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn small_config(dir: &Path, seed: u64) -> RunConfig {
        RunConfig {
            seed,
            catalog: CatalogSource::Reference,
            pack: PackSelector::Canonical,
            benign_runs: 20,
            entity_pool: 50,
            output_dir: dir.to_path_buf(),
        }
    }

    #[test]
    fn run_lays_down_a_complete_directory() {
        let tmp = TempDir::new().unwrap();
        let summary = cmd_run(&small_config(tmp.path(), 42)).unwrap();
        assert_eq!(summary.malicious_runs, 7);
        assert_eq!(summary.benign_runs, 20);
        assert!(tmp.path().join("labels").is_file());
        assert!(tmp.path().join("manifest").is_file());
        assert!(tmp.path().join("chains/gluttony.chain").is_file());
        assert!(tmp.path().join("runs/gluttony").is_dir());

        let truth =
            parse_labels(&fs::read_to_string(tmp.path().join("labels")).unwrap()).unwrap();
        assert_eq!(truth.len(), 27);
        // Every run id in the logs is labeled exactly once.
        let logs = load_logs(tmp.path()).unwrap();
        for log in &logs {
            for event in log.events() {
                assert!(truth.contains_key(&event.run_id), "{} unlabeled", event.run_id);
            }
        }
    }

    #[test]
    fn surveillance_pack_is_one_run() {
        let tmp = TempDir::new().unwrap();
        let config = RunConfig {
            pack: PackSelector::Surveillance,
            benign_runs: 0,
            ..small_config(tmp.path(), 1)
        };
        let summary = cmd_run(&config).unwrap();
        assert_eq!(summary.malicious_runs, 1);
        assert_eq!(summary.benign_runs, 0);
    }

    #[test]
    fn detect_finds_the_canonical_chains() {
        let tmp = TempDir::new().unwrap();
        cmd_run(&small_config(tmp.path(), 42)).unwrap();
        let summary = cmd_detect(tmp.path(), &DetectorConfig::default(), None).unwrap();
        assert_eq!(summary.per_service_alerts, 0);
        let detected = summary
            .report
            .per_chain_detected
            .values()
            .filter(|d| **d)
            .count();
        assert!(detected >= 6, "only {detected} of 7 chains detected");
        assert!(summary.alerts_path.is_file());
        assert!(summary.metrics_path.is_file());

        // Emitted files parse under this module's own readers.
        let alerts =
            parse_alerts(&fs::read_to_string(&summary.alerts_path).unwrap()).unwrap();
        assert_eq!(
            alerts.len(),
            summary.per_service_alerts + summary.cross_service_alerts
        );
        let report =
            MetricsReport::parse(&fs::read_to_string(&summary.metrics_path).unwrap()).unwrap();
        assert_eq!(report.per_chain_detected, summary.report.per_chain_detected);
    }

    #[test]
    fn detect_requires_ground_truth() {
        let tmp = TempDir::new().unwrap();
        fs::create_dir_all(tmp.path().join("runs")).unwrap();
        assert!(matches!(
            cmd_detect(tmp.path(), &DetectorConfig::default(), None),
            Err(HarnessError::MissingGroundTruth(_))
        ));
    }

    #[test]
    fn detect_rejects_malformed_logs() {
        let tmp = TempDir::new().unwrap();
        cmd_run(&RunConfig {
            benign_runs: 0,
            pack: PackSelector::Surveillance,
            ..small_config(tmp.path(), 3)
        })
        .unwrap();
        let bad = tmp.path().join("runs/surveillance/events-web_search.log");
        fs::write(&bad, "events v1\nnot a log line\n").unwrap();
        assert!(matches!(
            cmd_detect(tmp.path(), &DetectorConfig::default(), None),
            Err(HarnessError::MalformedLog { .. })
        ));
    }

    #[test]
    fn run_directories_are_reproducible() {
        let tmp_a = TempDir::new().unwrap();
        let tmp_b = TempDir::new().unwrap();
        cmd_run(&small_config(tmp_a.path(), 7)).unwrap();
        cmd_run(&small_config(tmp_b.path(), 7)).unwrap();
        let snapshot = |dir: &Path| -> BTreeMap<String, String> {
            let mut files = BTreeMap::new();
            let mut stack = vec![dir.to_path_buf()];
            while let Some(current) = stack.pop() {
                for entry in read_dir_sorted(&current).unwrap() {
                    if entry.is_dir() {
                        stack.push(entry);
                    } else {
                        let rel = entry.strip_prefix(dir).unwrap().display().to_string();
                        if rel == "manifest" {
                            continue; // creation note differs
                        }
                        files.insert(rel, fs::read_to_string(&entry).unwrap());
                    }
                }
            }
            files
        };
        assert_eq!(snapshot(tmp_a.path()), snapshot(tmp_b.path()));
    }

    #[test]
    fn danger_report_round_trips() {
        let tmp = TempDir::new().unwrap();
        let out = tmp.path().join("danger.txt");
        let rows = cmd_danger(&CatalogSource::Reference, 2, &out).unwrap();
        assert_eq!(rows.len(), 15);
        assert_eq!(rows[0].2, "Infrastructure Compromise");
        let reparsed = parse_danger_report(&fs::read_to_string(&out).unwrap()).unwrap();
        assert_eq!(reparsed.len(), 15);
        assert_eq!(reparsed[0].1, rows[0].1);

        let all = cmd_danger(&CatalogSource::Reference, 6, &out).unwrap();
        assert_eq!(all.len(), 15 + 20 + 15 + 6 + 1);
        assert!(all
            .iter()
            .any(|(key, _, label)| key.len() == 6 && label == "Orchestrated Campaign"));
        assert!(matches!(
            cmd_danger(&CatalogSource::Reference, 7, &out),
            Err(HarnessError::Catalog(CatalogError::OutOfRange(7)))
        ));
    }

    #[test]
    fn calibrate_small_sample_stays_close() {
        let tmp = TempDir::new().unwrap();
        let out = tmp.path().join("calibration.txt");
        let rows = cmd_calibrate(2_000, 42, &out).unwrap();
        assert_eq!(rows.len(), OutcomeModel::standard().groups().count());
        let notion = rows.iter().find(|r| r.group == "search_notion").unwrap();
        assert_eq!(notion.empirical_rate, 0.0);
        let text = fs::read_to_string(&out).unwrap();
        assert!(text.starts_with("calibration v1\n"));
    }

    #[test]
    fn metrics_report_round_trips() {
        let mut report = MetricsReport {
            precision: 0.875,
            recall: 1.0,
            fpr: 0.004,
            ..MetricsReport::default()
        };
        report.per_chain_detected.insert("gluttony".into(), true);
        report.per_chain_detected.insert("wrath".into(), false);
        report
            .calibration_deltas
            .insert("web_search".into(), (-0.0012, 0.03));
        report.danger_top_k = danger_ranking(&DangerMatrix::standard(), 6)
            .unwrap()
            .into_iter()
            .take(3)
            .map(|(key, score, _)| (key, score))
            .collect();
        let reparsed = MetricsReport::parse(&report.to_text()).unwrap();
        assert_eq!(report, reparsed);
    }

    #[test]
    fn labels_round_trip_and_reject_duplicates() {
        let mut truth = GroundTruth::new();
        truth.insert(
            "gluttony".into(),
            RunLabel {
                malicious: true,
                chain: Some("gluttony".into()),
            },
        );
        truth.insert(
            "benign_0000".into(),
            RunLabel {
                malicious: false,
                chain: None,
            },
        );
        let reparsed = parse_labels(&labels_to_text(&truth)).unwrap();
        assert_eq!(truth, reparsed);
        assert!(parse_labels("labels v1\nrun a benign\nrun a benign\n").is_err());
    }
}
