//! `plan`, `sweep` and `check` commands.
//!
//! All three read the same TOML config. Machine-readable results go to files
//! under the output directory (`plan.toml`, `sweep.csv`); progress goes to
//! standard error; `check` prints its report to standard output.

mod config;

pub use config::{BetaConfig, FilesConfig, ModelConfig, Planner, PlannerConfig, SyntheticConfig};

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::latency::ProfileKey;
use crate::setup_search::{retain, select_setup, Retention, SearchContext, SearchOutcome, SweepRecord};

/// Process exit status of a command that did not fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// No feasible plan, or nothing to sweep.
    Infeasible,
}

impl Status {
    pub fn code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::Infeasible => 2,
        }
    }
}

/// Exit code for errors.
pub const ERROR_EXIT: i32 = 1;

/// Command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub parallelism: Option<usize>,
    pub seed: Option<u64>,
}

pub const PLAN_FILE: &str = "plan.toml";
pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Debug, Serialize)]
struct PlanDoc {
    status: &'static str,
    gpu_count: usize,
    arrival_rate: f64,
    latency_target_ms: f64,
    metric: String,
    enumerated: usize,
    retained: usize,
    evaluated: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    setup_id: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    latency_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    models: Vec<PlanModel>,
}

#[derive(Debug, Serialize)]
struct PlanModel {
    name: String,
    tp: u32,
    rho: f64,
    w: f64,
    load_rps: f64,
    latency_ms: f64,
    out_of_range: bool,
    gpus: Vec<usize>,
}

fn search(planner: &Planner, opts: &RunOptions) -> Result<SearchOutcome> {
    let c = &planner.config;
    let ctx = SearchContext {
        gpus: c.gpu_count,
        rho_min: c.rho_min()?,
        memory: &planner.memory,
        routing: planner.routing(),
        parallelism: opts.parallelism.or(c.parallelism),
    };
    select_setup(&planner.space, &ctx, &c.beta_params())
}

fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn plan_document(planner: &Planner, outcome: &SearchOutcome) -> Result<String> {
    let c = &planner.config;
    let mut doc = PlanDoc {
        status: "INFEASIBLE",
        gpu_count: c.gpu_count,
        arrival_rate: c.arrival_rate,
        latency_target_ms: c.latency_target_ms,
        metric: c.metric.to_string(),
        enumerated: outcome.enumerated_count,
        retained: outcome.retained_count,
        evaluated: outcome.evaluated_count,
        setup_id: None,
        score: None,
        latency_ms: None,
        beta: None,
        models: Vec::new(),
    };
    if let Some(p) = &outcome.best {
        doc.status = "FEASIBLE";
        doc.setup_id = Some(p.setup_id);
        doc.score = Some(p.score);
        doc.latency_ms = Some(p.latency);
        doc.beta = Some(p.beta);
        doc.models = p
            .setup
            .per_model
            .iter()
            .enumerate()
            .map(|(i, ms)| PlanModel {
                name: ms.model.clone(),
                tp: ms.tp,
                rho: ms.rho.value(),
                w: p.w[i],
                load_rps: p.loads[i],
                latency_ms: p.model_latencies[i],
                out_of_range: p.out_of_range[i],
                gpus: p.placement[i].clone(),
            })
            .collect();
    }
    toml::to_string(&doc).map_err(|e| Error::validation(format!("cannot serialize plan: {e}")))
}

/// Solves the full problem and writes `plan.toml`.
pub fn run_plan(config: &Path, opts: &RunOptions) -> Result<Status> {
    let planner = Planner::load(config, opts.seed)?;
    eprintln!(
        "planning over {} candidate setups on {} GPUs",
        planner.space.size(),
        planner.config.gpu_count
    );
    let outcome = search(&planner, opts)?;
    eprintln!(
        "{} enumerated, {} retained, {} evaluated",
        outcome.enumerated_count, outcome.retained_count, outcome.evaluated_count
    );
    let doc = plan_document(&planner, &outcome)?;
    create_out(&opts.out_dir)?;
    let path = opts.out_dir.join(PLAN_FILE);
    std::fs::write(&path, doc).map_err(|e| Error::io(&path, e))?;
    match &outcome.best {
        Some(p) => {
            eprintln!("selected {} (score {:.6}, latency {:.3} ms)", p.setup, p.score, p.latency);
            Ok(Status::Ok)
        }
        None => {
            eprintln!("INFEASIBLE: no retained setup meets the latency target");
            Ok(Status::Infeasible)
        }
    }
}

fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// Writes sweep records as CSV: one row per retained setup.
pub fn write_sweep<W: std::io::Write>(models: &[String], records: &[SweepRecord], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| Error::csv(SWEEP_FILE, e);
    let mut header = vec!["setup_id".to_string()];
    for m in models {
        header.push(format!("tp_{m}"));
        header.push(format!("rho_{m}"));
    }
    header.extend(["score", "latency_ms", "feasible", "beta"].map(String::from));
    header.extend(models.iter().map(|m| format!("w_{m}")));
    wtr.write_record(&header).map_err(to_err)?;
    for r in records {
        let mut row = vec![r.setup_id.to_string()];
        for ms in &r.setup.per_model {
            row.push(ms.tp.to_string());
            row.push(ms.rho.to_string());
        }
        row.push(fmt_f64(r.score));
        row.push(fmt_f64(r.latency));
        row.push(r.feasible.to_string());
        row.push(r.beta.map(fmt_f64).unwrap_or_default());
        row.extend(r.w.iter().map(|&x| fmt_f64(x)));
        wtr.write_record(&row).map_err(to_err)?;
    }
    wtr.flush().map_err(|e| Error::io(SWEEP_FILE, e))
}

/// Evaluates every retained setup and writes `sweep.csv`.
pub fn run_sweep(config: &Path, opts: &RunOptions) -> Result<Status> {
    let planner = Planner::load(config, opts.seed)?;
    let outcome = search(&planner, opts)?;
    eprintln!(
        "{} enumerated, {} retained, {} feasible",
        outcome.enumerated_count,
        outcome.retained_count,
        outcome.records.iter().filter(|r| r.feasible).count()
    );
    create_out(&opts.out_dir)?;
    let path = opts.out_dir.join(SWEEP_FILE);
    let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
    write_sweep(&planner.config.model_names(), &outcome.records, std::io::BufWriter::new(file))?;
    if outcome.records.is_empty() {
        eprintln!("no retained setups");
        return Ok(Status::Infeasible);
    }
    Ok(Status::Ok)
}

/// Result of a dry-run validation.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub text: String,
    pub problems: Vec<String>,
}

/// Validates config, memory table, profile coverage and scores without
/// optimizing. The report lists every problem found.
pub fn check(config: &Path, seed: Option<u64>) -> Result<CheckReport> {
    let planner = Planner::load(config, seed)?;
    let c = &planner.config;
    let mut text = String::new();
    let mut problems = Vec::new();

    let _ = writeln!(text, "config: {}", config.display());
    let _ = writeln!(text, "gpus: {}  arrival_rate: {}  target: {} ms ({})", c.gpu_count, c.arrival_rate, c.latency_target_ms, c.metric);

    for mc in &planner.space.models {
        for &tp in &mc.tp {
            if planner.memory.get(&mc.model, tp).is_none() {
                problems.push(format!("missing memory entry for ({}, tp={tp})", mc.model));
            }
        }
    }

    let mut enumerated = 0usize;
    let mut retained = 0usize;
    let mut rejected = std::collections::BTreeMap::new();
    let mut needed = BTreeSet::new();
    if problems.is_empty() {
        let rho_min = c.rho_min()?;
        for setup in crate::setup_search::enumerate_setups(&planner.space)? {
            enumerated += 1;
            match retain(&setup, c.gpu_count, rho_min, &planner.memory)? {
                Retention::Retained => {
                    retained += 1;
                    for ms in setup.per_model {
                        needed.insert(ProfileKey { model: ms.model, tp: ms.tp, rho: ms.rho, metric: c.metric });
                    }
                }
                Retention::Rejected(r) => *rejected.entry(r).or_insert(0usize) += 1,
            }
        }
    } else {
        enumerated = planner.space.size();
    }
    let _ = writeln!(text, "enumerated: {enumerated}");
    let _ = writeln!(text, "retained: {retained}");
    for (r, n) in &rejected {
        let _ = writeln!(text, "rejected {}: {n}", r.as_str());
    }

    let missing: Vec<_> = needed.iter().filter(|k| planner.profiles.get(k).is_none()).collect();
    let _ = writeln!(text, "profiles needed: {}  present: {}", needed.len(), needed.len() - missing.len());
    for k in missing {
        problems.push(format!("missing latency profile {k}"));
    }

    let s = &planner.scores;
    let _ = writeln!(text, "scores: {} prompts x {} models", s.n_prompts(), s.n_models());
    for (i, m) in s.models().iter().enumerate() {
        let (lo, hi) = s.rows().map(|r| r[i]).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
        let _ = writeln!(text, "  {m}: mean {:.4}  min {lo:.4}  max {hi:.4}", s.column_mean(i));
    }

    if retained == 0 && problems.is_empty() {
        let _ = writeln!(text, "warning: no setup is retained");
    }
    for p in &problems {
        let _ = writeln!(text, "error: {p}");
    }
    let _ = writeln!(text, "{}", if problems.is_empty() { "OK" } else { "FAILED" });
    Ok(CheckReport { text, problems })
}

/// Runs [`check`] and prints the report. Any problem is an error.
pub fn run_check(config: &Path, opts: &RunOptions) -> Result<Status> {
    let report = check(config, opts.seed)?;
    print!("{}", report.text);
    if report.problems.is_empty() {
        Ok(Status::Ok)
    } else {
        Err(Error::validation(report.problems.join("; ")))
    }
}
