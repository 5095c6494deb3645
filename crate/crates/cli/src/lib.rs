//! Configuration loading, study dispatch and result writers behind the
//! `grantfree` binary.
//!
//! Configs are flat `key = value` files (JSON also accepted, including the
//! full spec snapshot written into run manifests); command-line flags
//! override file values. Studies emit CSV tables plus a JSON manifest whose
//! config snapshot reproduces the run byte-for-byte (timestamps aside).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use grantfree_core::model::SystemConfig;
use grantfree_core::montecarlo::{
    self, ConvergenceOutput, DetectorKind, ExperimentSpec, InitKind, RocRow, SliceRow, Study,
    SweepOutput,
};

/// Environment variable consulted for the seed when neither a flag nor a
/// config file provides one.
pub const SEED_ENV_VAR: &str = "GRANTFREE_SEED";

/// Errors surfaced by the CLI, each with a machine-parseable category.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config field `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Stable category token for scripted error handling.
    pub fn category(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::Io { .. } => "io",
            CliError::Internal(_) => "internal",
        }
    }

    /// Process exit code for this category.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Io { .. } => 3,
            CliError::Internal(_) => 4,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Size presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// CI-speed runs: K = 100, M = 32, T = 10, 500 trials.
    Desk,
    /// Full-scale runs: K = 500, M = 64, T = 10, 10000 trials.
    Paper,
}

impl Profile {
    fn apply(&self, cfg: &mut SystemConfig) {
        match self {
            Profile::Desk => {
                cfg.k = 100;
                cfg.m = 32;
                cfg.t = 10;
                cfg.n_trials = 500;
            }
            Profile::Paper => {
                cfg.k = 500;
                cfg.m = 64;
                cfg.t = 10;
                cfg.n_trials = 10_000;
            }
        }
    }
}

/// Field overrides collected from command-line flags.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub k: Option<usize>,
    pub m: Option<usize>,
    pub t: Option<usize>,
    pub snr_db: Option<f64>,
    pub epsilon_a: Option<f64>,
    pub lambda: Option<f64>,
    pub rho: Option<f64>,
    pub n_sweeps: Option<usize>,
    pub sweep_values: Option<Vec<f64>>,
    pub target_pfa: Option<Vec<f64>>,
    pub fixed_pilots: Option<bool>,
}

fn parse_scalar<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .trim()
        .parse()
        .map_err(|_| CliError::config(key, format!("cannot parse `{}`", value.trim())))
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>, CliError> {
    value
        .split(',')
        .map(|item| parse_scalar::<f64>(key, item))
        .collect()
}

fn apply_key(
    spec: &mut ExperimentSpec,
    key: &str,
    value: &str,
    seen: &mut std::collections::BTreeSet<String>,
) -> Result<(), CliError> {
    seen.insert(key.to_string());
    match key {
        "k" => spec.base.k = parse_scalar(key, value)?,
        "m" => spec.base.m = parse_scalar(key, value)?,
        "t" => spec.base.t = parse_scalar(key, value)?,
        "snr_db" => spec.base.snr_db = parse_scalar(key, value)?,
        "epsilon_a" => spec.base.epsilon_a = parse_scalar(key, value)?,
        "lambda" => spec.base.lambda = parse_scalar(key, value)?,
        "rho" => spec.base.rho = parse_scalar(key, value)?,
        "n_trials" => spec.base.n_trials = parse_scalar(key, value)?,
        "n_sweeps" => spec.base.n_sweeps = parse_scalar(key, value)?,
        "seed" => spec.base.seed = parse_scalar(key, value)?,
        "sweep_values" => spec.sweep_values = parse_list(key, value)?,
        "target_pfa" => spec.target_pfa = parse_list(key, value)?,
        "v_grid_db" => spec.v_grid_db = parse_list(key, value)?,
        "fixed_pilots" => spec.fixed_pilots = parse_scalar(key, value)?,
        "study" => {
            spec.study = match value.trim() {
                "convergence" => Study::Convergence,
                "lambda_sweep" => Study::LambdaSweep,
                "snr_sweep" => Study::SnrSweep,
                "single" => Study::Single,
                other => return Err(CliError::config(key, format!("unknown study `{other}`"))),
            }
        }
        "initializers" => {
            spec.initializers = value
                .split(',')
                .map(|item| match item.trim() {
                    "zero" => Ok(InitKind::Zero),
                    "zf" => Ok(InitKind::Zf),
                    "lmmse" => Ok(InitKind::Lmmse),
                    "mf" => Ok(InitKind::Mf),
                    "genie" => Ok(InitKind::Genie),
                    other => Err(CliError::config(
                        key,
                        format!("unknown initializer `{other}`"),
                    )),
                })
                .collect::<Result<_, _>>()?
        }
        "detectors" => {
            spec.detectors = value
                .split(',')
                .map(|item| match item.trim() {
                    "iterative_ml" => Ok(DetectorKind::IterativeMl),
                    "lmmse_threshold_baseline" => Ok(DetectorKind::LmmseThresholdBaseline),
                    other => Err(CliError::config(key, format!("unknown detector `{other}`"))),
                })
                .collect::<Result<_, _>>()?
        }
        other => return Err(CliError::config(other, "unknown config key")),
    }
    Ok(())
}

/// Parses a flat `key = value` config body (# starts a comment).
fn parse_kv_body(
    spec: &mut ExperimentSpec,
    body: &str,
    seen: &mut std::collections::BTreeSet<String>,
) -> Result<(), CliError> {
    for (lineno, raw) in body.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::config(
                format!("line {}", lineno + 1),
                format!("expected `key = value`, got `{line}`"),
            )
        })?;
        apply_key(spec, key.trim(), value.trim(), seen)?;
    }
    Ok(())
}

fn json_value_to_string(value: &serde_json::Value) -> String {
    match value {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Array(items) => items
            .iter()
            .map(json_value_to_string)
            .collect::<Vec<_>>()
            .join(","),
        other => other.to_string(),
    }
}

fn parse_json_body(
    spec: &mut ExperimentSpec,
    body: &str,
    seen: &mut std::collections::BTreeSet<String>,
) -> Result<(), CliError> {
    let value: serde_json::Value = serde_json::from_str(body)
        .map_err(|e| CliError::config("<json>", format!("invalid JSON: {e}")))?;
    // A manifest config snapshot deserializes directly as a full spec.
    if value.get("base").is_some() {
        *spec = serde_json::from_value(value)
            .map_err(|e| CliError::config("<json>", format!("invalid spec snapshot: {e}")))?;
        seen.insert("seed".to_string());
        return Ok(());
    }
    let map: BTreeMap<String, serde_json::Value> = serde_json::from_value(value)
        .map_err(|e| CliError::config("<json>", format!("expected an object: {e}")))?;
    for (key, val) in &map {
        apply_key(spec, key, &json_value_to_string(val), seen)?;
    }
    Ok(())
}

/// Resolves the experiment spec for one invocation.
///
/// Precedence, lowest to highest: built-in defaults, `--profile`, config
/// file, individual flags. The seed falls back to the `GRANTFREE_SEED`
/// environment variable when nothing else sets it. The subcommand always
/// decides the study.
pub fn parse_config(
    study: Study,
    profile: Option<Profile>,
    config_path: Option<&Path>,
    overrides: &Overrides,
) -> Result<ExperimentSpec, CliError> {
    let mut spec = ExperimentSpec::new(SystemConfig::default(), study);
    let mut seen = std::collections::BTreeSet::new();

    if let Some(p) = profile {
        p.apply(&mut spec.base);
    }
    if let Some(path) = config_path {
        let body = fs::read_to_string(path).map_err(io_err(path))?;
        if body.trim_start().starts_with('{') {
            parse_json_body(&mut spec, &body, &mut seen)?;
        } else {
            parse_kv_body(&mut spec, &body, &mut seen)?;
        }
        // A snapshot carries its own study; the subcommand still decides.
        spec.study = study;
        let defaults = ExperimentSpec::new(spec.base.clone(), study);
        if spec.sweep_values.is_empty() {
            spec.sweep_values = defaults.sweep_values;
        }
    }
    let mut seed_was_set = seen.contains("seed");

    let o = overrides;
    if let Some(v) = o.k {
        spec.base.k = v;
    }
    if let Some(v) = o.m {
        spec.base.m = v;
    }
    if let Some(v) = o.t {
        spec.base.t = v;
    }
    if let Some(v) = o.snr_db {
        spec.base.snr_db = v;
    }
    if let Some(v) = o.epsilon_a {
        spec.base.epsilon_a = v;
    }
    if let Some(v) = o.lambda {
        spec.base.lambda = v;
    }
    if let Some(v) = o.rho {
        spec.base.rho = v;
    }
    if let Some(v) = o.trials {
        spec.base.n_trials = v;
    }
    if let Some(v) = o.n_sweeps {
        spec.base.n_sweeps = v;
    }
    if let Some(v) = &o.sweep_values {
        spec.sweep_values = v.clone();
    }
    if let Some(v) = &o.target_pfa {
        spec.target_pfa = v.clone();
    }
    if let Some(v) = o.fixed_pilots {
        spec.fixed_pilots = v;
    }
    if let Some(v) = o.seed {
        spec.base.seed = v;
        seed_was_set = true;
    }
    if !seed_was_set {
        if let Ok(env_seed) = std::env::var(SEED_ENV_VAR) {
            spec.base.seed = parse_scalar(SEED_ENV_VAR, &env_seed)?;
        }
    }

    spec.validate().map_err(|e| match e {
        grantfree_core::model::ModelError::InvalidConfig { field, message } => {
            CliError::config(field, message)
        }
        other => CliError::config("<config>", other.to_string()),
    })?;
    Ok(spec)
}

/// Serializes a float with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    {
        let mut file = fs::File::create(&tmp).map_err(io_err(&tmp))?;
        file.write_all(bytes).map_err(io_err(&tmp))?;
        file.sync_all().map_err(io_err(&tmp))?;
    }
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Writes the convergence table (`initializer,update_index,mean_loglik,
/// mean_mse`).
pub fn emit_convergence(output: &ConvergenceOutput, path: &Path) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["initializer", "update_index", "mean_loglik", "mean_mse"])
        .map_err(|e| CliError::Internal(e.to_string()))?;
    for row in &output.rows {
        writer
            .write_record([
                row.initializer.clone(),
                row.update_index.to_string(),
                fmt_f64(row.mean_loglik),
                fmt_f64(row.mean_mse),
            ])
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    write_atomic(path, &bytes)
}

/// Writes ROC rows (`detector,sweep_value,v_db,p_fa,p_md`).
pub fn emit_roc(rows: &[RocRow], path: &Path) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["detector", "sweep_value", "v_db", "p_fa", "p_md"])
        .map_err(|e| CliError::Internal(e.to_string()))?;
    for row in rows {
        writer
            .write_record([
                row.detector.clone(),
                fmt_f64(row.sweep_value),
                fmt_f64(row.v_db),
                fmt_f64(row.p_fa),
                fmt_f64(row.p_md),
            ])
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    write_atomic(path, &bytes)
}

/// Writes slice rows (`detector,sweep_value,target_pfa,p_md`).
pub fn emit_slices(rows: &[SliceRow], path: &Path) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["detector", "sweep_value", "target_pfa", "p_md"])
        .map_err(|e| CliError::Internal(e.to_string()))?;
    for row in rows {
        writer
            .write_record([
                row.detector.clone(),
                fmt_f64(row.sweep_value),
                fmt_f64(row.target_pfa),
                fmt_f64(row.p_md),
            ])
            .map_err(|e| CliError::Internal(e.to_string()))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    write_atomic(path, &bytes)
}

/// Run metadata written alongside every CSV.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub config: ExperimentSpec,
    pub config_sha256: String,
    pub seed: u64,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<String>,
    pub trials_per_point: usize,
    pub direct_inversions: u64,
    pub degenerate_cubics: u64,
    pub zf_ill_conditioned: u64,
    pub workers: usize,
    pub code_version: String,
}

/// Hex SHA-256 of the canonical JSON encoding of the spec.
pub fn config_hash(spec: &ExperimentSpec) -> String {
    let json = serde_json::to_vec(spec).expect("spec serializes");
    let digest = Sha256::digest(&json);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn new(spec: &ExperimentSpec, started_at: String, workers: usize) -> Self {
        Self {
            config_sha256: config_hash(spec),
            seed: spec.base.seed,
            config: spec.clone(),
            started_at,
            finished_at: String::new(),
            outputs: Vec::new(),
            trials_per_point: 0,
            direct_inversions: 0,
            degenerate_cubics: 0,
            zf_ill_conditioned: 0,
            workers,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let json =
            serde_json::to_vec_pretty(self).map_err(|e| CliError::Internal(e.to_string()))?;
        write_atomic(path, &json)
    }
}

/// Timestamp for manifests.
pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339()
}

/// One CLI invocation after argument parsing.
#[derive(Debug, Clone)]
pub enum Request {
    Simulate { v_db: f64 },
    Convergence,
    SweepLambda,
    SweepSnr,
    Roc,
}

impl Request {
    pub fn study(&self) -> Study {
        match self {
            Request::Simulate { .. } | Request::Roc => Study::Single,
            Request::Convergence => Study::Convergence,
            Request::SweepLambda => Study::LambdaSweep,
            Request::SweepSnr => Study::SnrSweep,
        }
    }
}

fn install_pool<T: Send>(workers: usize, job: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    if workers == 0 {
        return Ok(job());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Internal(e.to_string()))?;
    Ok(pool.install(job))
}

fn record_sweep(manifest: &mut RunManifest, output: &SweepOutput) {
    manifest.trials_per_point = output.trials_per_point;
    manifest.direct_inversions = output.fallbacks.direct_inversions;
    manifest.degenerate_cubics = output.fallbacks.degenerate_cubics;
    manifest.zf_ill_conditioned = output.zf_ill_conditioned;
}

/// Runs a request and writes its outputs under `out_dir`. Returns the paths
/// written (manifest last).
pub fn run_request(
    request: &Request,
    spec: &ExperimentSpec,
    out_dir: &Path,
    workers: usize,
) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut manifest = RunManifest::new(spec, now_rfc3339(), workers);
    let mut written = Vec::new();

    match request {
        Request::Simulate { v_db } => {
            let v_db = *v_db;
            let spec_clone = spec.clone();
            let (report, output) = install_pool(workers, move || {
                (
                    montecarlo::simulate_report(&spec_clone, v_db),
                    montecarlo::single_study(&spec_clone),
                )
            })?;
            let report_path = out_dir.join("report.json");
            let json = serde_json::to_vec_pretty(&report)
                .map_err(|e| CliError::Internal(e.to_string()))?;
            write_atomic(&report_path, &json)?;
            written.push(report_path);
            let roc_path = out_dir.join("roc.csv");
            emit_roc(&output.roc, &roc_path)?;
            written.push(roc_path);
            record_sweep(&mut manifest, &output);
        }
        Request::Convergence => {
            let spec_clone = spec.clone();
            let output = install_pool(workers, move || montecarlo::convergence_study(&spec_clone))?;
            let path = out_dir.join("convergence.csv");
            emit_convergence(&output, &path)?;
            written.push(path);
            manifest.trials_per_point = output.n_trials;
            manifest.direct_inversions = output.fallbacks.direct_inversions;
            manifest.degenerate_cubics = output.fallbacks.degenerate_cubics;
            manifest.zf_ill_conditioned = output.zf_ill_conditioned;
        }
        Request::SweepLambda | Request::SweepSnr => {
            let spec_clone = spec.clone();
            let is_lambda = matches!(request, Request::SweepLambda);
            let output = install_pool(workers, move || {
                if is_lambda {
                    montecarlo::lambda_sweep(&spec_clone)
                } else {
                    montecarlo::snr_sweep(&spec_clone)
                }
            })?;
            let roc_path = out_dir.join("roc.csv");
            emit_roc(&output.roc, &roc_path)?;
            written.push(roc_path);
            let slice_path = out_dir.join("slices.csv");
            emit_slices(&output.slices, &slice_path)?;
            written.push(slice_path);
            record_sweep(&mut manifest, &output);
        }
        Request::Roc => {
            let spec_clone = spec.clone();
            let output = install_pool(workers, move || montecarlo::single_study(&spec_clone))?;
            let roc_path = out_dir.join("roc.csv");
            emit_roc(&output.roc, &roc_path)?;
            written.push(roc_path);
            record_sweep(&mut manifest, &output);
        }
    }

    manifest.outputs = written
        .iter()
        .map(|p| p.to_string_lossy().into_owned())
        .collect();
    manifest.finished_at = now_rfc3339();
    let manifest_path = out_dir.join("manifest.json");
    manifest.write(&manifest_path)?;
    written.push(manifest_path);
    Ok(written)
}
