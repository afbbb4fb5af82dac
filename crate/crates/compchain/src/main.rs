//! Thin command-line front end over the library's harness entry points.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use compchain::harness::{
    cmd_calibrate, cmd_danger, cmd_detect, cmd_run, CatalogSource, HarnessError, PackSelector,
    RunConfig, CALIBRATION_RATE_TOLERANCE,
};
use compchain::DetectorConfig;

#[derive(Parser)]
#[command(name = "compchain", version, about = "Simulate compositional attack chains over mocked services and detect them by cross-service correlation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a chain pack plus a benign workload into a run directory.
    Run {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output run directory.
        #[arg(long)]
        out: PathBuf,
        /// key=value settings file (pack, benign_runs, entity_pool, catalog).
        #[arg(long)]
        config: Option<PathBuf>,
        /// canonical | surveillance | none | comma-separated chain files.
        #[arg(long)]
        pack: Option<String>,
        #[arg(long)]
        benign_runs: Option<u32>,
        #[arg(long)]
        entity_pool: Option<u32>,
        /// Catalog file path; defaults to COMPCHAIN_CATALOG or the built-in.
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Scan and correlate a run directory, writing alerts and metrics.
    Detect {
        /// Run directory produced by `run`.
        logs_dir: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Where to write alerts/metrics (defaults to the run directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Detector settings file (window, min_categories, thresholds).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Rank service-category combinations by danger score.
    Danger {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Report file path.
        #[arg(long)]
        out: PathBuf,
        /// key=value settings file (k, catalog).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Largest combination size to score (2..=6).
        #[arg(short, long, default_value_t = 2)]
        k: usize,
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Monte-Carlo check of the outcome model against its targets.
    Calibrate {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Report file path.
        #[arg(long)]
        out: PathBuf,
        /// key=value settings file (runs_per_group).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 10_000)]
        runs_per_group: u32,
    },
}

fn read_settings(path: &Option<PathBuf>) -> Result<BTreeMap<String, String>, HarnessError> {
    let Some(path) = path else {
        return Ok(BTreeMap::new());
    };
    let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
        path: path.clone(),
        source,
    })?;
    let mut settings = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            HarnessError::InvalidConfig(format!("expected key=value in {}: `{line}`", path.display()))
        })?;
        settings.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(settings)
}

fn parse_pack(value: &str) -> PackSelector {
    match value {
        "canonical" => PackSelector::Canonical,
        "surveillance" => PackSelector::Surveillance,
        "none" => PackSelector::Custom(Vec::new()),
        paths => PackSelector::Custom(paths.split(',').map(PathBuf::from).collect()),
    }
}

fn catalog_source(flag: Option<PathBuf>, settings: &BTreeMap<String, String>) -> CatalogSource {
    if let Some(path) = flag {
        return CatalogSource::Path(path);
    }
    if let Some(path) = settings.get("catalog") {
        return CatalogSource::Path(PathBuf::from(path));
    }
    match std::env::var("COMPCHAIN_CATALOG") {
        Ok(path) if !path.is_empty() => CatalogSource::Path(PathBuf::from(path)),
        _ => CatalogSource::Reference,
    }
}

fn setting<T: std::str::FromStr>(
    settings: &BTreeMap<String, String>,
    key: &str,
) -> Result<Option<T>, HarnessError> {
    settings
        .get(key)
        .map(|raw| {
            raw.parse().map_err(|_| {
                HarnessError::InvalidConfig(format!("bad value for {key}: `{raw}`"))
            })
        })
        .transpose()
}

fn execute(cli: Cli) -> Result<ExitCode, HarnessError> {
    match cli.command {
        Command::Run {
            seed,
            out,
            config,
            pack,
            benign_runs,
            entity_pool,
            catalog,
        } => {
            let settings = read_settings(&config)?;
            let pack = pack
                .as_deref()
                .or(settings.get("pack").map(String::as_str))
                .map(parse_pack)
                .unwrap_or(PackSelector::Canonical);
            let run_config = RunConfig {
                seed,
                catalog: catalog_source(catalog, &settings),
                pack,
                benign_runs: benign_runs
                    .or(setting(&settings, "benign_runs")?)
                    .unwrap_or(0),
                entity_pool: entity_pool
                    .or(setting(&settings, "entity_pool")?)
                    .unwrap_or(500),
                output_dir: out,
            };
            let summary = cmd_run(&run_config)?;
            println!(
                "run: {} chain runs + {} benign runs, {} events -> {}",
                summary.malicious_runs,
                summary.benign_runs,
                summary.total_events,
                summary.output_dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Detect {
            logs_dir,
            seed: _,
            out,
            config,
        } => {
            let detector_config = match &config {
                Some(path) => {
                    let text =
                        std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
                            path: path.clone(),
                            source,
                        })?;
                    DetectorConfig::parse(&text)?
                }
                None => DetectorConfig::default(),
            };
            let summary = cmd_detect(&logs_dir, &detector_config, out.as_deref())?;
            println!(
                "detect: {} per-service alerts, {} cross-service alerts",
                summary.per_service_alerts, summary.cross_service_alerts
            );
            println!(
                "detect: precision {:.3} recall {:.3} fpr {:.3} -> {}",
                summary.report.precision,
                summary.report.recall,
                summary.report.fpr,
                summary.metrics_path.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Danger {
            seed: _,
            out,
            config,
            k,
            catalog,
        } => {
            let settings = read_settings(&config)?;
            let k = setting(&settings, "k")?.unwrap_or(k);
            let rows = cmd_danger(&catalog_source(catalog, &settings), k, &out)?;
            println!("danger: {} combinations ranked -> {}", rows.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Calibrate {
            seed,
            out,
            config,
            runs_per_group,
        } => {
            let settings = read_settings(&config)?;
            let runs = setting(&settings, "runs_per_group")?.unwrap_or(runs_per_group);
            let rows = cmd_calibrate(runs, seed, &out)?;
            let mut breached = false;
            for row in &rows {
                let flag = if row.rate_delta().abs() > CALIBRATION_RATE_TOLERANCE {
                    breached = true;
                    " BREACH"
                } else {
                    ""
                };
                println!(
                    "calibrate: {} rate {:.4} (target {:.4}) iters {:.2} (target {:.2}){}",
                    row.group,
                    row.empirical_rate,
                    row.target_rate,
                    row.empirical_mean_iterations,
                    row.target_mean_iterations,
                    flag
                );
            }
            println!("calibrate: report -> {}", out.display());
            if breached {
                eprintln!("calibrate: a rate delta exceeded {CALIBRATION_RATE_TOLERANCE}");
                return Ok(ExitCode::from(2));
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("compchain: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
