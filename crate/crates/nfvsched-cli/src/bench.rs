//! Case execution and reporting: run the annealing sampler repeatedly per
//! case, retry on wider grids when nothing feasible comes back, and render
//! summary tables and delay histograms.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nfvsched::greedy::greedy_schedule;
use nfvsched::instance::{Instance, InstanceError};
use nfvsched::qubo::{build_qubo, PenaltyConfig, QuboError};
use nfvsched::schedule::{Schedule, ScheduleError};
use nfvsched::solver::{derive_seed, simulated_annealing, AnnealParams, SolverError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generate::{generate_case, GenerateError, GeneratorParams};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("case {0}: exactly one of `file` or `generator` must be set")]
    AmbiguousSource(String),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse case file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Qubo(#[from] QuboError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

fn default_repeats() -> usize {
    50
}

fn default_reads() -> usize {
    10
}

fn default_sweeps() -> usize {
    1000
}

fn default_seed() -> u64 {
    1
}

fn default_retry_cap() -> usize {
    3
}

/// One benchmark case: an instance source plus the sampling budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseConfig {
    pub name: String,
    /// Path to an instance JSON file, relative to the case file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    /// Alternatively, parameters to draw an instance from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorParams>,
    #[serde(default)]
    pub instance_seed: u64,
    /// Independent sampler invocations per case.
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_reads")]
    pub reads: usize,
    #[serde(default = "default_sweeps")]
    pub sweeps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_end: Option<f64>,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Uniform penalty weight; the default policy applies when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub penalty: Option<f64>,
    /// How many one-slot grid extensions to try when no repeat returns a
    /// feasible schedule.
    #[serde(default = "default_retry_cap")]
    pub retry_cap: usize,
    /// Pins the starting grid size instead of the baseline-derived one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
}

impl CaseConfig {
    pub fn with_defaults(name: &str) -> CaseConfig {
        CaseConfig {
            name: name.to_string(),
            file: None,
            generator: None,
            instance_seed: 0,
            repeats: default_repeats(),
            reads: default_reads(),
            sweeps: default_sweeps(),
            beta_start: None,
            beta_end: None,
            seed: default_seed(),
            penalty: None,
            retry_cap: default_retry_cap(),
            horizon: None,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CasesFile {
    cases: Vec<CaseConfig>,
}

/// Loads a case file and resolves relative instance paths against its
/// parent directory.
pub fn load_cases(path: &Path) -> Result<Vec<CaseConfig>, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let file: CasesFile = serde_json::from_str(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut cases = file.cases;
    for case in &mut cases {
        if let Some(rel) = &case.file {
            if rel.is_relative() {
                case.file = Some(base.join(rel));
            }
        }
    }
    Ok(cases)
}

/// Materializes the case's instance from its file or generator.
pub fn load_case_instance(config: &CaseConfig) -> Result<Instance, BenchError> {
    match (&config.file, &config.generator) {
        (Some(path), None) => Ok(Instance::load(path)?),
        (None, Some(params)) => Ok(generate_case(params, config.instance_seed)?),
        _ => Err(BenchError::AmbiguousSource(config.name.clone())),
    }
}

/// One sampler invocation within a case. A repeat counts as feasible only
/// when its lowest-energy sample decodes to a feasible schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub best_energy: f64,
    pub feasible: bool,
    pub objective_s: Option<f64>,
    pub longest_s: Option<f64>,
    pub sampler_seconds: f64,
}

/// Aggregated outcome of one case.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub name: String,
    pub chains: usize,
    pub steps: usize,
    pub vms: usize,
    pub horizon: usize,
    /// Grid extensions that were needed before any repeat succeeded.
    pub bumps: usize,
    pub q_size: usize,
    pub greedy_s: f64,
    pub best_objective_s: Option<f64>,
    pub longest_delay_s: Option<f64>,
    pub avg_vm_busy_s: Option<f64>,
    pub repeats: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub avg_sampler_s: f64,
    pub best_schedule: Option<Schedule>,
    pub runs: Vec<RunRecord>,
}

/// Runs every repeat of a case at the base grid size, extending the grid one
/// slot at a time (up to the retry cap) while no repeat yields a feasible
/// schedule.
pub fn run_case(config: &CaseConfig, instance: &Instance) -> Result<CaseResult, BenchError> {
    let greedy = greedy_schedule(instance)?;
    let base_horizon = config
        .horizon
        .or(instance.horizon_override())
        .unwrap_or(greedy.makespan_slots + 1);

    let mut last = None;
    for bump in 0..=config.retry_cap {
        let horizon = base_horizon + bump;
        let penalty = match config.penalty {
            Some(p) => PenaltyConfig::uniform(p),
            None => PenaltyConfig::default_for(instance, horizon),
        };
        let model = build_qubo(instance, horizon, penalty)?;
        let params = AnnealParams {
            reads: config.reads,
            sweeps: config.sweeps,
            beta_start: config.beta_start,
            beta_end: config.beta_end,
            seed: 0,
        };

        let mut runs = Vec::with_capacity(config.repeats);
        let mut best: Option<(Schedule, f64)> = None;
        for run in 0..config.repeats {
            let seed = derive_seed(config.seed, run as u64);
            let started = Instant::now();
            let set = simulated_annealing(
                model.qubo(),
                &AnnealParams {
                    seed,
                    ..params.clone()
                },
            )?;
            let sampler_seconds = started.elapsed().as_secs_f64();
            let top = set.best().expect("at least one read");
            let (schedule, _) = model.decode(&top.bits)?;
            let feasible = schedule.check_feasibility(instance)?.feasible();
            let record = if feasible {
                let objective = schedule.total_delay(instance)?;
                if best.as_ref().map_or(true, |&(_, d)| objective < d) {
                    best = Some((schedule.clone(), objective));
                }
                RunRecord {
                    run,
                    seed,
                    best_energy: top.energy,
                    feasible: true,
                    objective_s: Some(objective),
                    longest_s: Some(schedule.longest_delay(instance)?),
                    sampler_seconds,
                }
            } else {
                RunRecord {
                    run,
                    seed,
                    best_energy: top.energy,
                    feasible: false,
                    objective_s: None,
                    longest_s: None,
                    sampler_seconds,
                }
            };
            runs.push(record);
        }

        let successes = runs.iter().filter(|r| r.feasible).count();
        let avg_sampler_s =
            runs.iter().map(|r| r.sampler_seconds).sum::<f64>() / runs.len().max(1) as f64;
        let result = CaseResult {
            name: config.name.clone(),
            chains: instance.num_chains(),
            steps: instance
                .chains()
                .iter()
                .map(|c| c.steps.len())
                .max()
                .unwrap_or(0),
            vms: instance.num_vms(),
            horizon,
            bumps: bump,
            q_size: model.qubo().n_vars(),
            greedy_s: greedy.makespan_slots as f64 * instance.slot_length_s(),
            best_objective_s: best.as_ref().map(|&(_, d)| d),
            longest_delay_s: match &best {
                Some((schedule, _)) => Some(schedule.longest_delay(instance)?),
                None => None,
            },
            avg_vm_busy_s: match &best {
                Some((schedule, _)) => Some(schedule.avg_vm_busy_time(instance)?),
                None => None,
            },
            repeats: config.repeats,
            successes,
            success_rate: successes as f64 / config.repeats.max(1) as f64,
            avg_sampler_s,
            best_schedule: best.map(|(s, _)| s),
            runs,
        };
        if successes > 0 {
            return Ok(result);
        }
        last = Some(result);
    }
    Ok(last.expect("retry loop always runs at least once"))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Case summary table: shape, baseline, best delays and model size.
pub fn emit_summary_csv(results: &[CaseResult]) -> String {
    let mut out = String::from(
        "case,chains,steps,vms,greedy_s,best_objective_s,longest_delay_s,avg_vm_busy_s,q_size\n",
    );
    for r in results {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.name,
            r.chains,
            r.steps,
            r.vms,
            r.greedy_s,
            opt(r.best_objective_s),
            opt(r.longest_delay_s),
            opt(r.avg_vm_busy_s),
            r.q_size
        )
        .unwrap();
    }
    out
}

/// Success-rate table. Wall-clock sampling time is deliberately left to the
/// aligned-text rendering so reruns with the same seeds stay byte-identical.
pub fn emit_success_csv(results: &[CaseResult]) -> String {
    let mut out = String::from(
        "case,chains,steps,vms,q_size,horizon,bumps,repeats,successes,success_rate\n",
    );
    for r in results {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.name,
            r.chains,
            r.steps,
            r.vms,
            r.q_size,
            r.horizon,
            r.bumps,
            r.repeats,
            r.successes,
            r.success_rate
        )
        .unwrap();
    }
    out
}

fn render_aligned(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (k, cell) in row.iter().enumerate() {
            widths[k] = widths[k].max(cell.len());
        }
    }
    let mut out = String::new();
    for (k, h) in header.iter().enumerate() {
        if k > 0 {
            out.push_str("  ");
        }
        write!(out, "{:>width$}", h, width = widths[k]).unwrap();
    }
    out.push('\n');
    for row in rows {
        for (k, cell) in row.iter().enumerate() {
            if k > 0 {
                out.push_str("  ");
            }
            write!(out, "{:>width$}", cell, width = widths[k]).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Human-readable rendering of both tables.
pub fn emit_tables_text(results: &[CaseResult]) -> String {
    let summary_rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            vec![
                r.name.clone(),
                format!("({}, {}, {})", r.chains, r.steps, r.vms),
                r.greedy_s.to_string(),
                opt(r.best_objective_s),
                opt(r.longest_delay_s),
                opt(r.avg_vm_busy_s),
                r.q_size.to_string(),
            ]
        })
        .collect();
    let success_rows: Vec<Vec<String>> = results
        .iter()
        .map(|r| {
            vec![
                r.name.clone(),
                r.q_size.to_string(),
                format!("{}/{}", r.successes, r.repeats),
                format!("{:.0}%", r.success_rate * 100.0),
                format!("{:.3}", r.avg_sampler_s),
            ]
        })
        .collect();
    let mut out = String::from("delays and model size per case\n");
    out.push_str(&render_aligned(
        &[
            "case",
            "(chains, steps, vms)",
            "greedy s",
            "best s",
            "longest s",
            "avg busy s",
            "Q size",
        ],
        &summary_rows,
    ));
    out.push_str("\nsuccess rates\n");
    out.push_str(&render_aligned(
        &["case", "Q size", "feasible", "rate", "avg sample s"],
        &success_rows,
    ));
    out
}

/// Delay histograms over the feasible repeats of one case, as
/// `(longest, total)` CSV texts. Infeasible repeats are excluded, so the
/// probabilities sum to the success rate.
pub fn emit_histograms(result: &CaseResult) -> (String, String) {
    let collect = |pick: fn(&RunRecord) -> Option<f64>| -> String {
        let mut values: Vec<f64> = result.runs.iter().filter_map(pick).collect();
        values.sort_by(|a, b| a.total_cmp(b));
        let mut out = String::from("delay_s,count,probability\n");
        let mut k = 0;
        while k < values.len() {
            let mut end = k;
            while end < values.len() && values[end] == values[k] {
                end += 1;
            }
            let count = end - k;
            writeln!(
                out,
                "{},{},{}",
                values[k],
                count,
                count as f64 / result.repeats.max(1) as f64
            )
            .unwrap();
            k = end;
        }
        out
    };
    (collect(|r| r.longest_s), collect(|r| r.objective_s))
}
