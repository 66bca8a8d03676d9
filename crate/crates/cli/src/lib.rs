//! Run-directory persistence and the four `tradeoff` subcommands.
//!
//! A run directory holds:
//!
//! ```text
//! config.toml                 resolved configuration
//! points/NNN/run.json         full federation run (releases, universes)
//! points/NNN/dist_o.csv       unprotected releases
//! points/NNN/dist_<view>.csv  protected releases per view
//! points/NNN/traces.csv       noiseless reference rounds
//! reports/NNN_<view>.json     trade-off reports
//! curve.csv, choices.json     from `curve`
//! attacks.csv                 from `attack`
//! verdict.json                from `verify`
//! manifest.json               written last
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use nfl_core::experiment::{
    choose_per_budget, curve_row, posterior_attack_rows, run_attack_suite, run_sweep, verify_reports, BudgetChoice,
    SweepPoint,
};
use nfl_core::flsim::{generate_datasets, EmpiricalModelDist, FederationRun, RoundTrace};
use nfl_core::{CheckOutcome, ExperimentConfig, FederationConfig, TradeoffReport, SCHEMA_VERSION};

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "TRADEOFF_OUT_ROOT";
pub const MANIFEST: &str = "manifest.json";
pub const VERDICT: &str = "verdict.json";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config {path}: {message}")]
    Config { path: String, message: String },
    #[error("incomplete run {dir}: missing {}", missing.join(", "))]
    Incomplete { dir: String, missing: Vec<String> },
    #[error("{path}: {message}")]
    Load { path: String, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Run(nfl_core::Error),
    #[error("{failed} gated check(s) failed")]
    Verification { failed: usize },
}

impl From<nfl_core::Error> for CliError {
    fn from(e: nfl_core::Error) -> Self {
        match e {
            nfl_core::Error::Config { path, message } => Self::Config { path, message },
            e => Self::Run(e),
        }
    }
}

impl CliError {
    /// 1 usage/config, 2 run failure, 3 verification failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Config { .. } | Self::Incomplete { .. } | Self::Load { .. } => 1,
            Self::Io { .. } | Self::Run(_) => 2,
            Self::Verification { .. } => 3,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.display().to_string(), source }
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(bytes).map_err(io_err(path))
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s.into_bytes()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Parses and validates an experiment config, applying a seed override.
pub fn load_config(path: &Path, seed: Option<u64>) -> CliResult<ExperimentConfig> {
    let cfg_err = |message: String| CliError::Config { path: path.display().to_string(), message };
    let text = fs::read_to_string(path).map_err(|e| cfg_err(e.to_string()))?;
    let mut cfg: ExperimentConfig = toml::from_str(&text).map_err(|e| cfg_err(e.to_string()))?;
    if let Some(s) = seed {
        cfg.federation.seed = s;
    }
    validate_config(&cfg).map_err(|e| cfg_err(e.to_string()))?;
    Ok(cfg)
}

pub fn validate_config(cfg: &ExperimentConfig) -> nfl_core::Result<()> {
    cfg.validate()?;
    let data = generate_datasets(&cfg.federation.dataset, cfg.federation.clients, cfg.federation.seed)?;
    let dim = cfg.federation.model.dim(data[0].n_features());
    for mechanism in cfg.mechanisms() {
        FederationConfig { mechanism, ..cfg.federation.clone() }.validate(dim)?;
    }
    Ok(())
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    sha256_hex(&serde_json::to_vec(cfg).expect("serializable"))
}

/// Run directory: explicit `out`, else `<root>/<config stem>-<seed>` with
/// the root from the config, the environment, or `runs`.
pub fn resolve_out(out: Option<&Path>, config_path: &Path, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(o) = out {
        return o.to_path_buf();
    }
    let root = cfg
        .output_dir
        .clone()
        .or_else(|| std::env::var_os(OUT_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"));
    let stem = config_path.file_stem().map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned());
    root.join(format!("{stem}-{}", cfg.federation.seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub files: Vec<FileEntry>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Collects written files and emits the manifest last.
struct Writer {
    dir: PathBuf,
    files: Vec<FileEntry>,
    /// Start a new manifest instead of extending the existing one.
    fresh: bool,
}

impl Writer {
    fn new(dir: &Path) -> Self {
        Self { dir: dir.to_path_buf(), files: vec![], fresh: false }
    }

    fn fresh(dir: &Path) -> Self {
        Self { fresh: true, ..Self::new(dir) }
    }

    fn put(&mut self, rel: &str, bytes: &[u8]) -> CliResult<()> {
        write_file(&self.dir.join(rel), bytes)?;
        self.files.retain(|f| f.path != rel);
        self.files.push(FileEntry { path: rel.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 });
        Ok(())
    }

    /// Merges into an existing manifest, keeping entries for files not
    /// rewritten here.
    fn finish(self, config_hash: &str, started: u64) -> CliResult<RunManifest> {
        let path = self.dir.join(MANIFEST);
        let mut manifest = if path.exists() && !self.fresh {
            load_manifest(&self.dir)?
        } else {
            RunManifest {
                schema_version: SCHEMA_VERSION,
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                config_hash: config_hash.to_string(),
                started_unix: started,
                finished_unix: 0,
                files: vec![],
            }
        };
        for f in self.files {
            manifest.files.retain(|g| g.path != f.path);
            manifest.files.push(f);
        }
        manifest.files.sort_by(|a, b| a.path.cmp(&b.path));
        manifest.finished_unix = now();
        write_file(&path, &to_json(&manifest))?;
        Ok(manifest)
    }
}

fn schema_checked<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let load = |message: String| CliError::Load { path: path.display().to_string(), message };
    let text = fs::read_to_string(path).map_err(|e| load(e.to_string()))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| load(e.to_string()))?;
    match value.get("schema_version").and_then(serde_json::Value::as_u64) {
        Some(v) if v == u64::from(SCHEMA_VERSION) => {}
        Some(v) => return Err(load(format!("schema_version {v}, expected {SCHEMA_VERSION}"))),
        None => return Err(load("missing schema_version".into())),
    }
    serde_json::from_value(value).map_err(|e| load(e.to_string()))
}

pub fn load_manifest(dir: &Path) -> CliResult<RunManifest> {
    schema_checked(&dir.join(MANIFEST))
}

pub fn load_report(path: &Path) -> CliResult<TradeoffReport> {
    schema_checked(path)
}

fn dist_csv(dist_clients: &[EmpiricalModelDist], aggregate: &EmpiricalModelDist) -> CliResult<Vec<u8>> {
    let dim = aggregate.dim();
    let mut w = csv::Writer::from_writer(vec![]);
    let mut header = vec!["trial".to_string(), "client".to_string(), "domain".to_string()];
    header.extend((0..dim).map(|i| format!("w{i}")));
    w.write_record(&header).map_err(|e| CliError::Run(nfl_core::Error::InvalidParameter(e.to_string())))?;
    for t in 0..aggregate.len() {
        let rows = dist_clients.iter().enumerate().map(|(k, d)| (k.to_string(), d)).chain([("agg".to_string(), aggregate)]);
        for (label, d) in rows {
            let mut rec = vec![t.to_string(), label, format!("{:?}", d.domain).to_lowercase()];
            rec.extend(d.samples[t].iter().map(|x| x.to_string()));
            w.write_record(&rec).map_err(|e| CliError::Run(nfl_core::Error::InvalidParameter(e.to_string())))?;
        }
    }
    w.into_inner().map_err(|e| CliError::Run(nfl_core::Error::InvalidParameter(e.to_string())))
}

fn csv_rows<T: Serialize>(rows: &[T]) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(vec![]);
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Run(nfl_core::Error::InvalidParameter(e.to_string())))?;
    }
    w.into_inner().map_err(|e| CliError::Run(nfl_core::Error::InvalidParameter(e.to_string())))
}

#[derive(Serialize)]
struct TraceRow {
    round: usize,
    mean_utility: f64,
    grad_norm: f64,
    /// Space-separated global weights after the round.
    global: String,
}

fn traces_csv(traces: &[RoundTrace]) -> CliResult<Vec<u8>> {
    let rows: Vec<TraceRow> = traces
        .iter()
        .map(|t| TraceRow {
            round: t.round,
            mean_utility: t.mean_utility,
            grad_norm: t.grad_norm,
            global: t.global.iter().map(f64::to_string).collect::<Vec<_>>().join(" "),
        })
        .collect();
    csv_rows(&rows)
}

pub fn point_dir(i: usize) -> String {
    format!("points/{i:03}")
}

pub fn report_name(i: usize, view: &str) -> String {
    format!("reports/{i:03}_{view}.json")
}

fn write_points(w: &mut Writer, points: &[SweepPoint], hash: &str) -> CliResult<Vec<TradeoffReport>> {
    let mut reports = vec![];
    for (i, p) in points.iter().enumerate() {
        let dir = point_dir(i);
        w.put(&format!("{dir}/run.json"), &to_json(&p.run))?;
        w.put(&format!("{dir}/dist_o.csv"), &dist_csv(&p.run.dist_o.per_client, &p.run.dist_o.aggregate)?)?;
        for v in &p.run.views {
            w.put(&format!("{dir}/dist_{}.csv", v.name), &dist_csv(&v.release.per_client, &v.release.aggregate)?)?;
        }
        w.put(&format!("{dir}/traces.csv"), &traces_csv(&p.run.traces)?)?;
        for r in &p.reports {
            let mut r = r.clone();
            r.config_hash = hash.to_string();
            w.put(&report_name(i, &r.view), &to_json(&r))?;
            reports.push(r);
        }
    }
    Ok(reports)
}

fn in_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| CliError::Usage(format!("--jobs {n}: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub struct SimulateOutput {
    pub dir: PathBuf,
    pub reports: Vec<TradeoffReport>,
    pub budgets: Vec<f64>,
}

fn execute(cfg: &ExperimentConfig, dir: &Path, jobs: Option<usize>, curve: bool) -> CliResult<SimulateOutput> {
    let started = now();
    let points = in_pool(jobs, || run_sweep(cfg))??;
    let hash = config_hash(cfg);
    let mut w = Writer::fresh(dir);
    let resolved = toml::to_string(cfg).map_err(|e| CliError::Usage(format!("config does not serialize: {e}")))?;
    w.put("config.toml", resolved.as_bytes())?;
    let reports = write_points(&mut w, &points, &hash)?;
    if curve {
        let rows = reports.iter().map(|r| curve_row(r, &cfg.budgets)).collect::<nfl_core::Result<Vec<_>>>()?;
        w.put("curve.csv", &csv_rows(&rows)?)?;
        // Indices refer to curve.csv data rows.
        let choices: Vec<BudgetChoice> = choose_per_budget(&reports, &cfg.budgets)?;
        w.put("choices.json", &to_json(&Choices { schema_version: SCHEMA_VERSION, choices }))?;
    }
    w.finish(&hash, started)?;
    Ok(SimulateOutput { dir: dir.to_path_buf(), reports, budgets: cfg.budgets.clone() })
}

#[derive(Serialize, Deserialize)]
struct Choices {
    schema_version: u32,
    choices: Vec<BudgetChoice>,
}

/// Runs the configured federation sweep and writes releases, traces and
/// reports.
pub fn cmd_simulate(cfg: &ExperimentConfig, dir: &Path, jobs: Option<usize>) -> CliResult<SimulateOutput> {
    execute(cfg, dir, jobs, false)
}

/// As [`cmd_simulate`], plus one curve row per report and the constrained
/// choice for every budget.
pub fn cmd_curve(cfg: &ExperimentConfig, dir: &Path, jobs: Option<usize>) -> CliResult<SimulateOutput> {
    execute(cfg, dir, jobs, true)
}

fn recorded_points(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let points = dir.join("points");
    let mut out = vec![];
    if points.is_dir() {
        for e in fs::read_dir(&points).map_err(io_err(&points))? {
            let p = e.map_err(io_err(&points))?.path().join("run.json");
            if p.is_file() {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Runs the attack suite plus the posterior arg-max attack on every recorded
/// point; writes `attacks.csv`.
pub fn cmd_attack(cfg: &ExperimentConfig, dir: &Path, jobs: Option<usize>) -> CliResult<PathBuf> {
    if !dir.is_dir() {
        return Err(CliError::Incomplete { dir: dir.display().to_string(), missing: vec!["run directory".into()] });
    }
    let runs = recorded_points(dir)?;
    if runs.is_empty() {
        return Err(CliError::Incomplete { dir: dir.display().to_string(), missing: vec!["points/*/run.json".into()] });
    }
    let started = now();
    let mut rows = in_pool(jobs, || run_attack_suite(&cfg.attacks, None))??;
    for (i, p) in runs.iter().enumerate() {
        let text = fs::read_to_string(p).map_err(io_err(p))?;
        let run: FederationRun =
            serde_json::from_str(&text).map_err(|e| CliError::Load { path: p.display().to_string(), message: e.to_string() })?;
        rows.extend(posterior_attack_rows(&run, &format!(":{i:03}"))?);
    }
    let mut w = Writer::new(dir);
    w.put("attacks.csv", &csv_rows(&rows)?)?;
    w.finish(&config_hash(cfg), started)?;
    Ok(dir.join("attacks.csv"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub schema_version: u32,
    pub pass: bool,
    pub failed: usize,
    pub checks: Vec<CheckOutcome>,
}

/// Loads every report in a run, runs all applicable checks and re-hashes
/// every manifest entry. Writes `verdict.json`; `pass` is false iff a gated
/// check fails.
pub fn cmd_verify(dir: &Path) -> CliResult<Verdict> {
    let mut missing = vec![];
    if !dir.join(MANIFEST).is_file() {
        missing.push(MANIFEST.to_string());
    }
    let reports_dir = dir.join("reports");
    let mut report_paths = vec![];
    if reports_dir.is_dir() {
        for e in fs::read_dir(&reports_dir).map_err(io_err(&reports_dir))? {
            let p = e.map_err(io_err(&reports_dir))?.path();
            if p.extension().is_some_and(|x| x == "json") {
                report_paths.push(p);
            }
        }
    }
    if report_paths.is_empty() {
        missing.push("reports/*.json".to_string());
    }
    if !missing.is_empty() {
        return Err(CliError::Incomplete { dir: dir.display().to_string(), missing });
    }
    report_paths.sort();
    let manifest = load_manifest(dir)?;
    let reports = report_paths.iter().map(|p| load_report(p)).collect::<CliResult<Vec<_>>>()?;
    let mut checks = verify_reports(&reports);
    let mut worst = 0.0;
    let mut bad = vec![];
    for f in manifest.files.iter().filter(|f| f.path != VERDICT) {
        let p = dir.join(&f.path);
        match fs::read(&p) {
            Ok(bytes) if sha256_hex(&bytes) == f.sha256 => {}
            _ => {
                worst = 1.0;
                bad.push(f.path.clone());
            }
        }
    }
    let mut integrity = CheckOutcome::le("manifest_integrity", worst, 0.0, 0.0);
    if !bad.is_empty() {
        integrity = integrity.with_note(format!("changed or missing: {}", bad.join(", ")));
    }
    checks.push(integrity);
    let failed = checks.iter().filter(|c| c.fails()).count();
    let verdict = Verdict { schema_version: SCHEMA_VERSION, pass: failed == 0, failed, checks };
    let mut w = Writer::new(dir);
    w.put(VERDICT, &to_json(&verdict))?;
    w.finish(&manifest.config_hash, manifest.started_unix)?;
    Ok(verdict)
}

/// One line per check: status, name, slack and tolerance.
pub fn format_check(c: &CheckOutcome) -> String {
    let status = match (&c.skipped, c.pass, c.gated) {
        (Some(_), _, _) => "SKIP",
        (None, true, _) => "pass",
        (None, false, true) => "FAIL",
        (None, false, false) => "warn",
    };
    let mut line = format!("{status} {} lhs={:.6e} rhs={:.6e} slack={:.3e} tol={:.3e}", c.name, c.lhs, c.rhs, c.slack, c.tolerance);
    if let Some(s) = &c.skipped {
        line = format!("{status} {} {s}", c.name);
    }
    if let Some(n) = &c.note {
        line.push_str(&format!(" ({n})"));
    }
    line
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Usage("x".into()).exit_code(), 1);
        assert_eq!(CliError::Config { path: "a".into(), message: "b".into() }.exit_code(), 1);
        assert_eq!(CliError::Run(nfl_core::Error::EmptyGrid).exit_code(), 2);
        assert_eq!(CliError::Verification { failed: 1 }.exit_code(), 3);
        let e: CliError = nfl_core::Error::Config { path: "p".into(), message: "m".into() }.into();
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn out_dir_resolution() {
        let cfg = ExperimentConfig::default();
        assert_eq!(resolve_out(Some(Path::new("x")), Path::new("c.toml"), &cfg), PathBuf::from("x"));
        let cfg = ExperimentConfig { output_dir: Some("root".into()), ..cfg };
        assert_eq!(resolve_out(None, Path::new("dir/sweep.toml"), &cfg), PathBuf::from("root/sweep-0"));
    }
}
