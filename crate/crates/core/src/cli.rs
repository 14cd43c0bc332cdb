//! The `lm` command line. Each subcommand opens the data root and calls one
//! or two library operations.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::demo;
use crate::domain::{Cohort, Digest};
use crate::features::{standard_features, FeatureDefinition, FeatureRef};
use crate::http::{AppState, API_KEY_HEADER};
use crate::inference::{FeedbackRecord, PredictionRecord};
use crate::ingest::{
    build_cohort, generate_synthetic, normalize_to_cdm, save_cohort, save_events, save_timelines,
    split_cohort, GeneratorConfig, IndexRule, RawSourceRecord, SourceMappings,
};
use crate::monitoring::MonitorConfig;
use crate::registry::{get_lineage, Stage};
use crate::training::TrainConfig;
use crate::workspace::DataRoot;
use crate::{Error, Platform};

const DEFAULT_DATA_ROOT: &str = "lm-data";
const DEFAULT_ADDR: &str = "127.0.0.1:8080";
const LATEST_COHORT_FILE: &str = "latest";

/// Settings shared by every subcommand, read from `--config`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub data_root: Option<PathBuf>,
    pub addr: Option<String>,
    pub api_key: Option<String>,
    pub seed: Option<u64>,
    pub monitor: MonitorConfig,
}

impl CliConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Other(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Other(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Parser)]
#[command(name = "lm", version, about = "Model lifecycle over longitudinal patient records")]
pub struct Cli {
    /// Data directory holding every store.
    #[arg(long, global = true, env = "LM_DATA_ROOT")]
    pub data_root: Option<PathBuf>,
    /// TOML file with data_root, addr, api_key, seed and a `[monitor]` table.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Print structured JSON instead of text.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Produce or convert raw claims.
    #[command(subcommand)]
    Ingest(IngestCmd),
    /// Build or split labelled cohorts.
    #[command(subcommand)]
    Cohort(CohortCmd),
    /// Manage the feature catalog and store.
    #[command(subcommand)]
    Features(FeaturesCmd),
    /// Run the training pipeline.
    #[command(subcommand)]
    Train(TrainCmd),
    /// Inspect and promote registered models.
    #[command(subcommand)]
    Registry(RegistryCmd),
    /// Start the HTTP service.
    Serve(ServeArgs),
    /// Replay prediction requests and feedback.
    #[command(subcommand)]
    Traffic(TrafficCmd),
    /// Run drift and accuracy checks.
    #[command(subcommand)]
    Monitor(MonitorCmd),
    /// Trace a model back to its data.
    #[command(subcommand)]
    Provenance(ProvenanceCmd),
}

#[derive(Debug, Subcommand)]
pub enum IngestCmd {
    /// Write a seeded synthetic population.
    Generate {
        #[arg(long, default_value_t = 2000)]
        patients: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 12.0)]
        mean_events: f64,
        #[arg(long, default_value_t = 0.3)]
        injection_rate: f64,
    },
    /// Convert raw source records (JSONL) into events.
    Normalize {
        input: PathBuf,
        /// Extra source mappings (JSON array).
        #[arg(long)]
        mappings: Option<PathBuf>,
        /// Suffix of the events file written.
        #[arg(long, default_value = "normalized")]
        name: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum CohortCmd {
    /// Label every patient for the reference admission task.
    Build {
        #[arg(long)]
        index_date: Option<NaiveDate>,
        #[arg(long, default_value_t = demo::HORIZON_DAYS)]
        horizon_days: u32,
    },
    /// Split a cohort by patient and save both parts.
    Split {
        #[arg(long)]
        cohort: Option<String>,
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum FeaturesCmd {
    /// Register the standard feature set, or definitions from a JSON array.
    Register {
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Compute features at every row of a cohort.
    Materialize {
        #[arg(long)]
        cohort: Option<String>,
        /// Feature names; all catalog features when omitted.
        #[arg(long, value_delimiter = ',')]
        features: Vec<String>,
    },
    /// Find definitions by name, generator or group.
    Search { query: String },
}

#[derive(Debug, Subcommand)]
pub enum TrainCmd {
    Run(TrainArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TrainConfig TOML; the flags below override it.
    #[arg(long = "train-config")]
    pub train_config: Option<PathBuf>,
    #[arg(long)]
    pub cohort: Option<String>,
    #[arg(long)]
    pub task: Option<String>,
    #[arg(long)]
    pub model_id: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub features: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<u32>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub l2: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub serving_handle: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum RegistryCmd {
    List {
        #[arg(long)]
        task: Option<String>,
    },
    Show { model_id: String, version: u32 },
    Promote {
        model_id: String,
        version: u32,
        /// None, Staging, Production or Archived.
        stage: Stage,
        #[arg(long, default_value = "cli")]
        actor: String,
    },
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub addr: Option<String>,
    #[arg(long)]
    pub api_key: Option<String>,
    /// Seconds between monitor runs; 0 disables.
    #[arg(long)]
    pub monitor_interval: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum TrafficCmd {
    /// Send predictions for random patients and report outcomes for some.
    Simulate {
        #[arg(long, default_value_t = 1000)]
        requests: usize,
        #[arg(long, default_value_t = 200)]
        feedback: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Base URL of a running service; in-process when omitted.
        #[arg(long)]
        url: Option<String>,
        #[arg(long)]
        api_key: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum MonitorCmd {
    RunOnce {
        #[arg(long)]
        url: Option<String>,
        #[arg(long)]
        api_key: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ProvenanceCmd {
    Show { digest: String },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Domain(#[from] Error),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    fn other(msg: impl std::fmt::Display) -> Self {
        CliError::Domain(Error::Other(msg.to_string()))
    }
}

type CliResult<T = ()> = Result<T, CliError>;

/// Parses `argv` and runs it. Returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let json = cli.json;
    match Ctx::new(&cli).and_then(|ctx| ctx.dispatch(cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            if json {
                eprintln!("{}", json!({ "error": e.to_string() }));
            } else {
                eprintln!("error: {e}");
            }
            match e {
                CliError::Usage(_) => 2,
                CliError::Domain(_) => 1,
            }
        }
    }
}

struct Ctx {
    root: DataRoot,
    config: CliConfig,
    json: bool,
}

impl Ctx {
    fn new(cli: &Cli) -> CliResult<Self> {
        let config = match &cli.config {
            Some(p) => CliConfig::load(p).map_err(|e| CliError::Usage(e.to_string()))?,
            None => CliConfig::default(),
        };
        let path = cli
            .data_root
            .clone()
            .or_else(|| config.data_root.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_ROOT));
        Ok(Ctx { root: DataRoot::new(path), config, json: cli.json })
    }

    fn seed(&self, flag: Option<u64>, fallback: u64) -> u64 {
        flag.or(self.config.seed).unwrap_or(fallback)
    }

    fn platform(&self) -> CliResult<Platform> {
        std::fs::create_dir_all(self.root.path())
            .map_err(|e| CliError::other(format!("data root {} is not writable: {e}", self.root.path().display())))?;
        Ok(Platform::open(&self.root)?)
    }

    fn emit(&self, value: &impl Serialize, text: impl FnOnce() -> String) {
        let mut out = std::io::stdout().lock();
        if self.json {
            let _ = writeln!(out, "{}", serde_json::to_string(value).unwrap_or_default());
        } else {
            let _ = writeln!(out, "{}", text());
        }
        let _ = out.flush();
    }

    fn dispatch(&self, cmd: Command) -> CliResult {
        match cmd {
            Command::Ingest(c) => self.ingest(c),
            Command::Cohort(c) => self.cohort(c),
            Command::Features(c) => self.features(c),
            Command::Train(TrainCmd::Run(a)) => self.train(a),
            Command::Registry(c) => self.registry(c),
            Command::Serve(a) => self.serve(a),
            Command::Traffic(c) => self.traffic(c),
            Command::Monitor(c) => self.monitor(c),
            Command::Provenance(ProvenanceCmd::Show { digest }) => self.provenance(&digest),
        }
    }

    fn ingest(&self, cmd: IngestCmd) -> CliResult {
        std::fs::create_dir_all(self.root.path()).map_err(CliError::other)?;
        match cmd {
            IngestCmd::Generate { patients, seed, mean_events, injection_rate } => {
                let cfg = GeneratorConfig {
                    seed: self.seed(seed, GeneratorConfig::default().seed),
                    n_patients: patients,
                    mean_events_per_patient: mean_events,
                    target_injection_rate: injection_rate,
                    ..Default::default()
                };
                let tls = generate_synthetic(&cfg).map_err(Error::from)?;
                let events = save_timelines(&self.root, crate::ingest::SYNTHETIC_SOURCE, &tls).map_err(Error::from)?;
                self.emit(&json!({ "patients": tls.len(), "events": events, "seed": cfg.seed }), || {
                    format!("generated {} patients, {events} events (seed {})", tls.len(), cfg.seed)
                });
            }
            IngestCmd::Normalize { input, mappings, name } => {
                let mut m = SourceMappings::builtin();
                if let Some(p) = mappings {
                    m.load_file(&p).map_err(Error::from)?;
                }
                let records: Vec<RawSourceRecord> = crate::jsonl::read_all(&input).map_err(CliError::other)?;
                let out = normalize_to_cdm(&records, &m).map_err(Error::from)?;
                let n = save_events(&self.root, &name, &out.events).map_err(Error::from)?;
                self.emit(&json!({ "events": n, "rejects": out.rejects }), || {
                    let mut s = format!("normalized {n} events, {} rejected", out.rejects.len());
                    for r in &out.rejects {
                        s.push_str(&format!("\n  record {} ({}): {}", r.index, r.source_name, r.reason));
                    }
                    s
                });
            }
        }
        Ok(())
    }

    fn latest_cohort_path(&self) -> PathBuf {
        self.root.cohorts_dir().join(LATEST_COHORT_FILE)
    }

    fn cohort_id(&self, flag: Option<String>) -> CliResult<String> {
        if let Some(id) = flag {
            return Ok(id);
        }
        match std::fs::read_to_string(self.latest_cohort_path()) {
            Ok(s) if !s.trim().is_empty() => Ok(s.trim().to_string()),
            _ => Err(CliError::Usage("no cohort given and none built yet; run `lm cohort build` or pass --cohort".into())),
        }
    }

    fn cohort(&self, cmd: CohortCmd) -> CliResult {
        match cmd {
            CohortCmd::Build { index_date, horizon_days } => {
                let platform = self.platform()?;
                let ids = platform.timelines.patient_ids();
                let tls: Vec<_> = ids.iter().filter_map(|id| platform.timelines.get(id)).map(|t| (*t).clone()).collect();
                let target = crate::domain::TargetSpec { horizon_days, ..demo::target() };
                let rule = IndexRule::FixedDate { date: index_date.unwrap_or_else(demo::index_date) };
                let cohort = build_cohort(&tls, &target, &rule).map_err(Error::from)?;
                platform.add_cohort(&cohort)?;
                std::fs::write(self.latest_cohort_path(), &cohort.cohort_id).map_err(CliError::other)?;
                self.emit(&cohort_summary(&cohort), || {
                    format!(
                        "cohort {} rows={} positives={} digest={}",
                        cohort.cohort_id,
                        cohort.rows.len(),
                        positives(&cohort),
                        cohort.data_digest
                    )
                });
            }
            CohortCmd::Split { cohort, train_fraction, seed } => {
                let platform = self.platform()?;
                let id = self.cohort_id(cohort)?;
                let c = crate::training::CohortSource::cohort(&platform, &id).map_err(Error::from)?;
                let seed = self.seed(seed, crate::training::Hyperparameters::default().seed);
                let (a, b) = split_cohort(&c, (train_fraction, 1.0 - train_fraction), seed).map_err(Error::from)?;
                save_cohort(&self.root, &a).map_err(Error::from)?;
                save_cohort(&self.root, &b).map_err(Error::from)?;
                let v = json!({ "train": cohort_summary(&a), "test": cohort_summary(&b), "seed": seed });
                self.emit(&v, || {
                    format!(
                        "train {} ({} rows)\ntest  {} ({} rows)",
                        a.cohort_id,
                        a.rows.len(),
                        b.cohort_id,
                        b.rows.len()
                    )
                });
            }
        }
        Ok(())
    }

    fn features(&self, cmd: FeaturesCmd) -> CliResult {
        let platform = self.platform()?;
        match cmd {
            FeaturesCmd::Register { file } => {
                let defs: Vec<FeatureDefinition> = match file {
                    Some(p) => {
                        let text = std::fs::read_to_string(&p).map_err(CliError::other)?;
                        serde_json::from_str(&text).map_err(|e| CliError::other(format!("{}: {e}", p.display())))?
                    }
                    None => standard_features(),
                };
                let mut receipts = Vec::with_capacity(defs.len());
                for d in defs {
                    receipts.push(platform.features.register_feature(d).map_err(Error::from)?);
                }
                let created = receipts.iter().filter(|r| r.created).count();
                self.emit(&receipts, || {
                    format!(
                        "registered {} definitions ({created} new), catalog holds {}",
                        receipts.len(),
                        platform.features.catalog_len()
                    )
                });
            }
            FeaturesCmd::Materialize { cohort, features } => {
                let id = self.cohort_id(cohort)?;
                let c = crate::training::CohortSource::cohort(&platform, &id).map_err(Error::from)?;
                let names = if features.is_empty() {
                    let mut n: Vec<String> = platform.features.search_catalog("").into_iter().map(|d| d.name).collect();
                    n.dedup();
                    n
                } else {
                    features
                };
                let refs = platform.features.latest_refs(&names).map_err(Error::from)?;
                let points: Vec<(String, NaiveDate)> =
                    c.rows.iter().map(|r| (r.patient_id.clone(), r.index_date)).collect();
                let report =
                    platform.features.materialize_points(platform.timelines.as_ref(), &refs, &points).map_err(Error::from)?;
                let summary = json!({
                    "cohort_id": id,
                    "features": refs.len(),
                    "points": points.len(),
                    "written": report.written,
                    "skipped": report.skipped,
                    "failures": report.failures,
                    "stages": report.stages.len(),
                });
                self.emit(&summary, || {
                    format!(
                        "materialized {} features at {} points: written={} skipped={} failed={} stages={}",
                        refs.len(),
                        points.len(),
                        report.written,
                        report.skipped,
                        report.failures.len(),
                        report.stages.len()
                    )
                });
                if !report.failures.is_empty() {
                    return Err(CliError::other(format!("{} cells failed", report.failures.len())));
                }
            }
            FeaturesCmd::Search { query } => {
                let hits = platform.features.search_catalog(&query);
                self.emit(&hits, || {
                    hits.iter()
                        .map(|d| format!("{}@v{}  {}  {:?}", d.name, d.version, d.generator_id, d.dependencies))
                        .collect::<Vec<_>>()
                        .join("\n")
                });
            }
        }
        Ok(())
    }

    fn train(&self, a: TrainArgs) -> CliResult {
        let mut cfg = match &a.train_config {
            Some(p) => TrainConfig::load(p).map_err(|e| CliError::Usage(e.to_string()))?,
            None => demo::train_config(&self.cohort_id(a.cohort.clone())?),
        };
        if let Some(c) = a.cohort {
            cfg.cohort_id = c;
        }
        if let Some(t) = a.task {
            cfg.task_id = t;
        }
        if a.model_id.is_some() {
            cfg.model_id = a.model_id;
        }
        if !a.features.is_empty() {
            cfg.features = a.features;
        }
        let hp = &mut cfg.hyperparameters;
        if let Some(s) = a.seed.or(self.config.seed.filter(|_| a.train_config.is_none())) {
            hp.seed = s;
        }
        if let Some(v) = a.epochs {
            hp.epochs = v;
        }
        if let Some(v) = a.learning_rate {
            hp.learning_rate = v;
        }
        if let Some(v) = a.l2 {
            hp.l2 = v;
        }
        if let Some(v) = a.batch_size {
            hp.batch_size = v;
        }
        if let Some(h) = a.serving_handle {
            cfg.serving_handle = h;
        }
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;

        let platform = self.platform()?;
        let out = platform.train(&cfg)?;
        let v = json!({
            "run_id": out.run_id,
            "model_id": out.spec.model_id,
            "version": out.spec.version,
            "created": out.created,
            "artifact_digest": out.spec.artifact_digest,
            "provenance_ref": out.spec.provenance_ref,
            "report": out.report,
            "importance": out.importance.iter().take(10).collect::<Vec<_>>(),
        });
        self.emit(&v, || {
            let mut s = format!(
                "run {} registered {} v{}{}\nartifact   {}\nprovenance {}\n{}",
                out.run_id,
                out.spec.model_id,
                out.spec.version,
                if out.created { "" } else { " (existing)" },
                out.spec.artifact_digest,
                out.spec.provenance_ref,
                out.report.table()
            );
            s.push_str("\ntop features:");
            for f in out.importance.iter().take(5) {
                s.push_str(&format!("\n  {:<28} {:.4}", f.feature, f.importance));
            }
            s
        });
        Ok(())
    }

    fn registry(&self, cmd: RegistryCmd) -> CliResult {
        let platform = self.platform()?;
        let reg = &platform.registry;
        match cmd {
            RegistryCmd::List { task } => {
                let specs = reg.list(task.as_deref());
                self.emit(&specs, || {
                    let mut s = format!("{:<36} {:>4} {:<10} {:>9}", "model", "ver", "stage", "auc_test");
                    for m in &specs {
                        let auc = m.metrics.get("auc_test").map(|v| format!("{v:.4}")).unwrap_or_default();
                        s.push_str(&format!("\n{:<36} {:>4} {:<10} {:>9}", m.model_id, m.version, m.stage, auc));
                    }
                    s
                });
            }
            RegistryCmd::Show { model_id, version } => {
                let spec = reg
                    .get(&model_id, version)
                    .ok_or_else(|| CliError::other(format!("model {model_id} v{version} not found")))?;
                self.emit(&spec, || serde_json::to_string_pretty(&spec).unwrap_or_default());
            }
            RegistryCmd::Promote { model_id, version, stage, actor } => {
                let spec = reg.transition_stage(&model_id, version, stage, &actor).map_err(Error::from)?;
                self.emit(&spec, || format!("{} v{} is now {}", spec.model_id, spec.version, spec.stage));
            }
        }
        Ok(())
    }

    fn serve(&self, a: ServeArgs) -> CliResult {
        init_tracing();
        let platform = Arc::new(self.platform()?);
        let addr = a.addr.or_else(|| self.config.addr.clone()).unwrap_or_else(|| DEFAULT_ADDR.into());
        let mut monitor = self.config.monitor.clone();
        if let Some(i) = a.monitor_interval {
            monitor.interval_secs = i;
        }
        let api_key = a.api_key.or_else(|| self.config.api_key.clone());
        let state = AppState::new(platform, api_key, monitor);
        let rt = tokio::runtime::Runtime::new().map_err(CliError::other)?;
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind(&addr).await.map_err(|e| CliError::other(format!("{addr}: {e}")))?;
            let local = listener.local_addr().map_err(CliError::other)?;
            self.emit(&json!({ "listening": format!("http://{local}") }), || format!("listening on http://{local}"));
            let shutdown = async {
                let _ = tokio::signal::ctrl_c().await;
            };
            crate::http::serve(listener, state, Duration::from_secs(2), shutdown).await.map_err(CliError::other)
        })
    }

    fn traffic(&self, cmd: TrafficCmd) -> CliResult {
        let TrafficCmd::Simulate { requests, feedback, seed, url, api_key } = cmd;
        let platform = self.platform()?;
        let plan = demo::traffic_plan(&platform.timelines, requests, self.seed(seed, 11));
        let api_key = api_key.or_else(|| self.config.api_key.clone());
        let mut served: Vec<PredictionRecord> = Vec::with_capacity(plan.len());
        let mut n_feedback = 0;
        match url {
            Some(base) => {
                let remote = Remote::new(&base, api_key);
                for case in &plan {
                    served.push(remote.post("/v1/predict", &case.request)?);
                }
                for (case, rec) in plan.iter().zip(&served).take(feedback) {
                    let _: Value = remote.post("/v1/feedback", &FeedbackRecord::new(&rec.request_id, case.outcome, "reviewed"))?;
                    n_feedback += 1;
                }
            }
            None => {
                let service = platform.inference(None);
                for case in &plan {
                    served.push(service.predict(&case.request, None).map_err(Error::from)?);
                }
                for (case, rec) in plan.iter().zip(&served).take(feedback) {
                    service
                        .submit_feedback(FeedbackRecord::new(&rec.request_id, case.outcome, "reviewed"), None)
                        .map_err(Error::from)?;
                    n_feedback += 1;
                }
            }
        }
        let mut latency: Vec<f64> = served.iter().map(|r| r.latency_ms).collect();
        latency.sort_by(f64::total_cmp);
        let pct = |q: f64| latency.get(((latency.len() as f64 - 1.0) * q).round() as usize).copied().unwrap_or(0.0);
        let flagged = served.iter().filter(|r| r.decision == 1).count();
        let v = json!({
            "predictions": served.len(),
            "feedback": n_feedback,
            "flagged": flagged,
            "latency_ms_p50": pct(0.5),
            "latency_ms_p95": pct(0.95),
        });
        self.emit(&v, || {
            format!(
                "served {} predictions ({flagged} flagged), {n_feedback} feedback records; latency p50 {:.3} ms, p95 {:.3} ms",
                served.len(),
                pct(0.5),
                pct(0.95)
            )
        });
        Ok(())
    }

    fn monitor(&self, cmd: MonitorCmd) -> CliResult {
        let MonitorCmd::RunOnce { url, api_key } = cmd;
        let run: Value = match url {
            Some(base) => Remote::new(&base, api_key.or_else(|| self.config.api_key.clone())).post("/v1/monitor/run", &json!({}))?,
            None => {
                let platform = self.platform()?;
                let run = platform.monitor(self.config.monitor.clone()).evaluate_and_notify().map_err(Error::from)?;
                serde_json::to_value(run).map_err(CliError::other)?
            }
        };
        self.emit(&run, || {
            let mut s = String::new();
            for m in run["models"].as_array().into_iter().flatten() {
                s.push_str(&format!(
                    "{} v{} window={} accuracy={}\n",
                    m["model_id"].as_str().unwrap_or("?"),
                    m["model_version"],
                    m["window"],
                    m["accuracy"]
                ));
            }
            let alerts = run["new_alerts"].as_array().map_or(0, Vec::len);
            let resolved = run["resolved"].as_array().map_or(0, Vec::len);
            s.push_str(&format!("{alerts} new alerts, {resolved} resolved"));
            for a in run["new_alerts"].as_array().into_iter().flatten() {
                s.push_str(&format!(
                    "\n  [{}] {} {} = {:.4} (threshold {})",
                    a["severity"].as_str().unwrap_or("?"),
                    a["kind"].as_str().unwrap_or("?"),
                    a["metric_name"].as_str().unwrap_or("?"),
                    a["value"].as_f64().unwrap_or(f64::NAN),
                    a["threshold"]
                ));
            }
            s
        });
        Ok(())
    }

    fn provenance(&self, digest: &str) -> CliResult {
        let d: Digest = digest.parse().map_err(|e| CliError::Usage(format!("{digest}: {e}")))?;
        let platform = self.platform()?;
        let lineage = get_lineage(platform.registry.blobs(), &d, Some(&platform.features)).map_err(Error::from)?;
        self.emit(&lineage, || {
            let r = &lineage.record;
            let mut s = format!(
                "provenance {}\nalgorithm {}  code {}\ntrain cohort {}\ntest cohort  {}",
                r.record_digest, r.algorithm, r.code_revision, r.train_cohort_digest, r.test_cohort_digest
            );
            for c in &lineage.cohorts {
                let opt = |v: Option<usize>| v.map_or_else(|| "missing".to_string(), |n| n.to_string());
                s.push_str(&format!(
                    "\n  {:<5} {} rows={} positives={}",
                    c.role,
                    c.digest,
                    opt(c.n_rows),
                    opt(c.n_positive)
                ));
            }
            s.push_str(&format!("\n{} features:", lineage.features.len()));
            for f in &lineage.features {
                let flag = match (&f.definition, f.params_match) {
                    (None, _) => "  NOT IN CATALOG",
                    (Some(_), false) => "  PARAMS CHANGED",
                    (Some(_), true) => "",
                };
                s.push_str(&format!("\n  {:<28} {}{flag}", FeatureRef::to_string(&f.feature), f.generator_id));
            }
            let metrics: BTreeMap<_, _> = r.metrics.iter().collect();
            s.push_str(&format!("\nmetrics {metrics:?}"));
            s
        });
        Ok(())
    }
}

fn positives(c: &Cohort) -> usize {
    c.rows.iter().filter(|r| r.label == 1).count()
}

fn cohort_summary(c: &Cohort) -> Value {
    json!({
        "cohort_id": c.cohort_id,
        "rows": c.rows.len(),
        "positives": positives(c),
        "data_digest": c.data_digest,
    })
}

struct Remote {
    base: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl Remote {
    fn new(base: &str, api_key: Option<String>) -> Self {
        Remote {
            base: base.trim_end_matches('/').to_string(),
            api_key,
            client: reqwest::blocking::Client::builder().timeout(Duration::from_secs(30)).build().expect("http client"),
        }
    }

    fn post<T: serde::de::DeserializeOwned>(&self, path: &str, body: &impl Serialize) -> CliResult<T> {
        let mut req = self.client.post(format!("{}{path}", self.base)).json(body);
        if let Some(k) = &self.api_key {
            req = req.header(API_KEY_HEADER, k);
        }
        let resp = req.send().map_err(|e| CliError::other(format!("{}{path}: {e}", self.base)))?;
        let status = resp.status();
        let text = resp.text().map_err(CliError::other)?;
        if !status.is_success() {
            return Err(CliError::other(format!("{path} returned {status}: {text}")));
        }
        serde_json::from_str(&text).map_err(|e| CliError::other(format!("{path}: {e}")))
    }
}

fn init_tracing() {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .try_init();
}
