//! Command-line driver. Every subcommand writes a manifest into its output
//! directory before doing any work.
//!
//! Exit codes: 0 success, 1 configuration error, 2 runtime failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibration::{bucket_stats, BucketStat};
use crate::error::{Error, Result};
use crate::io;
use crate::model::ModelParams;
use crate::report::{ablation_rows, csv_table, svg_bar_chart, text_table, transfer_table, ReportRow};
use crate::simulator::SimConfig;
use crate::trainer::{
    evaluate, predict, run_ablation, run_transfer, simulate, thread_count, train, AblationReport, ExperimentConfig,
    PreparedData, TrainOutcome, TransferReport, Variant,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "calicausal", version, about = "Calibrated, constrained, counterfactual ranking experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate examples, an impression log and the ground truth.
    Simulate(RunArgs),
    /// Train the full model and write checkpoint, history and reports.
    Train(RunArgs),
    /// Re-evaluate a saved checkpoint on the test split.
    Evaluate(EvaluateArgs),
    /// Train the full model and its single-component ablations.
    Ablate(RunArgs),
    /// Cross-segment AUC retention over seeded cluster splits.
    Transfer(RunArgs),
    /// Compare finished runs in a table and a bar chart.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Root seed; for `ablate` and `transfer` it replaces the seed list.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overwrite an existing run directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories to compare.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    /// Accepted for symmetry with the other subcommands; unused.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_path: Option<PathBuf>,
    pub seed: Option<u64>,
    /// `sha256("blob <len>\0" + config bytes)`.
    pub config_hash: Option<String>,
    pub out_dir: PathBuf,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
}

impl RunManifest {
    fn same_run(&self, other: &RunManifest) -> bool {
        self.subcommand == other.subcommand && self.seed == other.seed && self.config_hash == other.config_hash
    }
}

/// Git-style content hash of a config file.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

enum Prepared {
    Ready(PathBuf, RunManifest),
    UpToDate(PathBuf),
}

/// Creates the run directory and writes the manifest, unless an identical
/// finished run is already there.
fn start_run(
    subcommand: &str,
    out: Option<&Path>,
    config_path: Option<&Path>,
    config_bytes: Option<&[u8]>,
    seed: Option<u64>,
    force: bool,
) -> Result<Prepared> {
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("runs").join(subcommand));
    let manifest = RunManifest {
        subcommand: subcommand.to_string(),
        config_path: config_path.map(Path::to_path_buf),
        seed,
        config_hash: config_bytes.map(content_hash),
        out_dir: out.clone(),
        started_unix: now(),
        finished_unix: None,
    };
    let path = out.join("manifest.json");
    if path.exists() && !force {
        let old: Option<RunManifest> = io::read_json(&path).ok();
        return match old {
            Some(old) if old.same_run(&manifest) && old.finished_unix.is_some() => Ok(Prepared::UpToDate(out)),
            _ => Err(Error::config(
                "out",
                format!("{} already holds a different run; pass --force to overwrite", out.display()),
            )),
        };
    }
    fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    io::write_json(&path, &manifest)?;
    Ok(Prepared::Ready(out, manifest))
}

fn finish_run(out: &Path, mut manifest: RunManifest) -> Result<()> {
    manifest.finished_unix = Some(now());
    io::write_json(&out.join("manifest.json"), &manifest)
}

fn read_config(path: &Path) -> Result<(Vec<u8>, ExperimentConfig)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let cfg: ExperimentConfig = serde_json::from_slice(&bytes).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    cfg.validate()?;
    Ok((bytes, cfg))
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn seeded(cfg: ExperimentConfig, seed: Option<u64>) -> ExperimentConfig {
    match seed {
        Some(s) => cfg.for_seed(s),
        None => cfg,
    }
}

/// Simulator config from either a full run config or a bare simulator document.
fn read_sim_config(path: &Path) -> Result<(Vec<u8>, SimConfig)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value =
        serde_json::from_slice(&bytes).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    let is_run = value.get("train").is_some() || value.get("simulator").is_some();
    let sim = if is_run {
        let (_, cfg) = read_config(path)?;
        cfg.simulator
    } else {
        serde_json::from_value::<SimConfig>(value).map_err(|e| Error::config(path.display().to_string(), e.to_string()))?
    };
    sim.validate()?;
    Ok((bytes, sim))
}

fn cmd_simulate(a: &RunArgs) -> Result<()> {
    let (bytes, mut sim) = read_sim_config(&a.config)?;
    if let Some(s) = a.seed {
        sim.seed = s;
    }
    let (out, manifest) = match start_run("simulate", a.out.as_deref(), Some(&a.config), Some(&bytes), a.seed, a.force)? {
        Prepared::Ready(o, m) => (o, m),
        Prepared::UpToDate(o) => return up_to_date(&o),
    };
    let (simulator, examples, log) = simulate(&sim)?;
    io::write_examples_csv(&out.join("examples.csv"), &examples)?;
    io::write_impressions_csv(&out.join("impressions.csv"), &log)?;
    io::write_json(&out.join("ground_truth.json"), simulator.truth())?;
    println!(
        "wrote {} examples and {} impressions to {}",
        examples.len(),
        log.len(),
        out.display()
    );
    finish_run(&out, manifest)
}

fn up_to_date(out: &Path) -> Result<()> {
    println!("{} is up to date; pass --force to rerun", out.display());
    Ok(())
}

fn training_bucket_report(params: &ModelParams, data: &PreparedData, cfg: &ExperimentConfig) -> Result<Vec<BucketStat>> {
    let key = data.bucket_key(&cfg.train)?;
    let pred = predict(params, data, &data.train, &cfg.train)?;
    let buckets: Vec<usize> = data.train.iter().map(|i| key.bucket_of(data.example(i.example_id))).collect();
    let col = |t: usize| -> Vec<f64> { pred.scores.iter().map(|s| s[t]).collect() };
    let clicks: Vec<f64> = data.train.iter().map(|i| i.clicked as u8 as f64).collect();
    let risk: Vec<f64> = data.train.iter().map(|i| data.example(i.example_id).true_risk).collect();
    let clicked: Vec<usize> = (0..data.train.len()).filter(|&i| data.train[i].clicked).collect();
    let rev_p: Vec<f64> = clicked.iter().map(|&i| pred.scores[i][1]).collect();
    let rev_y: Vec<f64> = clicked.iter().map(|&i| data.train[i].converted as u8 as f64).collect();
    let rev_b: Vec<usize> = clicked.iter().map(|&i| buckets[i]).collect();
    let k = key.k;
    let mut out = bucket_stats("rel", &col(0), &clicks, &buckets, k);
    out.extend(bucket_stats("rev", &rev_p, &rev_y, &rev_b, k));
    out.extend(bucket_stats("risk", &col(2), &risk, &buckets, k));
    Ok(out)
}

fn write_predictions(path: &Path, params: &ModelParams, data: &PreparedData, cfg: &ExperimentConfig) -> Result<()> {
    let pred = predict(params, data, &data.test, &cfg.train)?;
    let mut text = String::from("example_id,position,clicked,converted,s_rel,s_rev,s_risk,ranking_score\n");
    for (i, imp) in data.test.iter().enumerate() {
        let s = pred.scores[i];
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            imp.example_id, imp.position, imp.clicked as u8, imp.converted as u8, s[0], s[1], s[2], pred.ranking[i]
        ));
    }
    io::write_text(path, &text)
}

fn cmd_train(a: &RunArgs) -> Result<()> {
    let (bytes, cfg) = read_config(&a.config)?;
    let cfg = seeded(cfg, a.seed);
    let (out, manifest) = match start_run("train", a.out.as_deref(), Some(&a.config), Some(&bytes), a.seed, a.force)? {
        Prepared::Ready(o, m) => (o, m),
        Prepared::UpToDate(o) => return up_to_date(&o),
    };
    let data = PreparedData::load(&cfg, &base_dir(&a.config))?;
    io::write_propensity_csv(&out.join("propensities.csv"), &data.table)?;
    let td = data.train_data(&cfg.train, &data.table, |_| true)?;
    let TrainOutcome { params, history, .. } = match train(&td, &cfg.train) {
        Ok(o) => o,
        Err(Error::Diverged { epoch, reason, history }) => {
            io::write_history_csv(&out.join("history.csv"), &history)?;
            io::write_constraint_trace_csv(&out.join("constraint_trace.csv"), &history)?;
            return Err(Error::Diverged { epoch, reason, history });
        }
        Err(e) => return Err(e),
    };
    io::write_text(&out.join("checkpoint.json"), &params.to_checkpoint_json()?)?;
    io::write_history_csv(&out.join("history.csv"), &history)?;
    io::write_constraint_trace_csv(&out.join("constraint_trace.csv"), &history)?;
    io::write_bucket_report_csv(&out.join("bucket_report.csv"), &training_bucket_report(&params, &data, &cfg)?)?;
    write_predictions(&out.join("predictions.csv"), &params, &data, &cfg)?;
    let report = evaluate(&params, &data, &data.test, &data.table, &cfg)?;
    io::write_json(&out.join("eval_report.json"), &report)?;
    print!("{}", text_table(&[ReportRow::from_eval("full", &report)]));
    finish_run(&out, manifest)
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let r = &a.run;
    let (bytes, cfg) = read_config(&r.config)?;
    let cfg = seeded(cfg, r.seed);
    let text = fs::read_to_string(&a.checkpoint).map_err(|e| Error::io(&a.checkpoint, e))?;
    let params = ModelParams::from_checkpoint_json(&text)?;
    let (out, manifest) = match start_run("evaluate", r.out.as_deref(), Some(&r.config), Some(&bytes), r.seed, r.force)? {
        Prepared::Ready(o, m) => (o, m),
        Prepared::UpToDate(o) => return up_to_date(&o),
    };
    let data = PreparedData::load(&cfg, &base_dir(&r.config))?;
    let report = evaluate(&params, &data, &data.test, &data.table, &cfg)?;
    io::write_json(&out.join("eval_report.json"), &report)?;
    print!("{}", text_table(&[ReportRow::from_eval("checkpoint", &report)]));
    finish_run(&out, manifest)
}

fn write_ablation(out: &Path, report: &AblationReport) -> Result<()> {
    let rows = ablation_rows(report);
    io::write_json(&out.join("ablation.json"), report)?;
    io::write_text(&out.join("ablation_table.txt"), &text_table(&rows))?;
    io::write_text(&out.join("ablation_table.csv"), &csv_table(&rows))?;
    io::write_text(&out.join("ablation.svg"), &svg_bar_chart(&rows))
}

fn cmd_ablate(a: &RunArgs) -> Result<()> {
    let (bytes, mut cfg) = read_config(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seeds = vec![s];
    }
    let (out, manifest) = match start_run("ablate", a.out.as_deref(), Some(&a.config), Some(&bytes), a.seed, a.force)? {
        Prepared::Ready(o, m) => (o, m),
        Prepared::UpToDate(o) => return up_to_date(&o),
    };
    if cfg.data.is_some() {
        return Err(Error::config("data", "ablate simulates one dataset per seed; remove `data`"));
    }
    let report = run_ablation(&cfg, &Variant::ALL, thread_count())?;
    write_ablation(&out, &report)?;
    print!("{}", text_table(&ablation_rows(&report)));
    finish_run(&out, manifest)
}

fn cmd_transfer(a: &RunArgs) -> Result<()> {
    let (bytes, mut cfg) = read_config(&a.config)?;
    if let Some(s) = a.seed {
        cfg.transfer.seeds = vec![s];
    }
    let (out, manifest) = match start_run("transfer", a.out.as_deref(), Some(&a.config), Some(&bytes), a.seed, a.force)? {
        Prepared::Ready(o, m) => (o, m),
        Prepared::UpToDate(o) => return up_to_date(&o),
    };
    let report = run_transfer(&cfg, thread_count())?;
    io::write_json(&out.join("transfer.json"), &report)?;
    io::write_text(&out.join("transfer_table.txt"), &transfer_table(&report))?;
    print!("{}", transfer_table(&report));
    finish_run(&out, manifest)
}

/// Rows contributed by one run directory.
fn rows_from_run(dir: &Path) -> Result<Vec<ReportRow>> {
    let name = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string());
    let eval = dir.join("eval_report.json");
    let abl = dir.join("ablation.json");
    if eval.exists() {
        let r = io::read_json(&eval)?;
        return Ok(vec![ReportRow::from_eval(name, &r)]);
    }
    if abl.exists() {
        let r: AblationReport = io::read_json(&abl)?;
        return Ok(ablation_rows(&r)
            .into_iter()
            .map(|mut row| {
                row.name = format!("{name}/{}", row.name);
                row
            })
            .collect());
    }
    if dir.join("transfer.json").exists() {
        let _: TransferReport = io::read_json(&dir.join("transfer.json"))?;
        return Ok(Vec::new());
    }
    Err(Error::Data {
        path: dir.to_path_buf(),
        message: "no eval_report.json or ablation.json".into(),
    })
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let (out, manifest) = match start_run("report", a.out.as_deref(), a.config.as_deref(), None, None, a.force)? {
        Prepared::Ready(o, m) => (o, m),
        Prepared::UpToDate(o) => return up_to_date(&o),
    };
    let mut rows = Vec::new();
    let mut missing = Vec::new();
    for dir in &a.runs {
        match rows_from_run(dir) {
            Ok(r) => rows.extend(r),
            Err(e) => missing.push(format!("{}: {e}", dir.display())),
        }
    }
    for m in &missing {
        eprintln!("skipped {m}");
    }
    let table = text_table(&rows);
    io::write_text(&out.join("report.txt"), &table)?;
    io::write_text(&out.join("report.csv"), &csv_table(&rows))?;
    io::write_text(&out.join("report.svg"), &svg_bar_chart(&rows))?;
    if !missing.is_empty() {
        io::write_text(&out.join("missing.txt"), &(missing.join("\n") + "\n"))?;
    }
    print!("{table}");
    finish_run(&out, manifest)
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => EXIT_CONFIG,
        _ => EXIT_RUNTIME,
    }
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Transfer(a) => cmd_transfer(a),
        Command::Report(a) => cmd_report(a),
    }
}

/// Parses `args` (including the program name) and runs the subcommand,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
