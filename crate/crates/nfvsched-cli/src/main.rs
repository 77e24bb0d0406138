use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use nfvsched::greedy::{greedy_schedule, horizon as baseline_horizon};
use nfvsched::instance::Instance;
use nfvsched::qubo::{build_qubo, PenaltyConfig};
use nfvsched::schedule::Schedule;
use nfvsched::solver::exhaustive_schedule_oracle;
use nfvsched_cli::bench::{
    emit_histograms, emit_summary_csv, emit_success_csv, emit_tables_text, load_case_instance,
    load_cases, run_case, CaseConfig,
};

/// Service-chain scheduler: compiles time-indexed schedules to quadratic
/// binary models and samples them.
#[derive(Parser)]
#[command(name = "nfvsched", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample an instance repeatedly and print the best feasible schedule.
    Solve {
        /// Instance JSON file.
        instance: PathBuf,
        /// Independent sampler invocations.
        #[arg(long, default_value_t = 5)]
        repeats: usize,
        /// Annealing restarts per invocation.
        #[arg(long, default_value_t = 10)]
        reads: usize,
        /// Full sweeps over the variables per read.
        #[arg(long, default_value_t = 500)]
        sweeps: usize,
        /// Base seed; repeats and reads derive their own streams from it.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Uniform penalty weight (default: scaled from the delay bound).
        #[arg(long)]
        penalty: Option<f64>,
        /// Grid size in slots (default: greedy baseline plus one).
        #[arg(long)]
        horizon: Option<usize>,
        /// Grid extensions to try when no repeat finds a feasible schedule.
        #[arg(long, default_value_t = 3)]
        retry_cap: usize,
    },
    /// Run a suite of cases and write summary tables and delay histograms.
    Bench {
        /// Case suite JSON file.
        cases: PathBuf,
        /// Output directory for the CSV files.
        #[arg(long)]
        out: PathBuf,
    },
    /// Prove the optimum with the exhaustive schedule search.
    Oracle {
        /// Instance JSON file.
        instance: PathBuf,
        /// Grid size in slots (default: greedy baseline plus one).
        #[arg(long)]
        horizon: Option<usize>,
        /// Abort when the estimated search space exceeds this many nodes.
        #[arg(long)]
        cap: Option<f64>,
    },
    /// Write the compiled model in the offline sampler text format.
    ExportQubo {
        /// Instance JSON file.
        instance: PathBuf,
        /// Destination problem file.
        #[arg(long)]
        out: PathBuf,
        /// Grid size in slots (default: greedy baseline plus one).
        #[arg(long)]
        horizon: Option<usize>,
        /// Uniform penalty weight (default: scaled from the delay bound).
        #[arg(long)]
        penalty: Option<f64>,
    },
    /// Decode an externally sampled result file against the same model.
    ImportResult {
        /// Instance JSON file the problem was exported from.
        instance: PathBuf,
        /// Result file: one line of space-separated 0/1 values.
        result: PathBuf,
        /// Grid size used at export time.
        #[arg(long)]
        horizon: Option<usize>,
        /// Penalty weight used at export time.
        #[arg(long)]
        penalty: Option<f64>,
    },
}

/// Exit meaning: 0 solved/reported, 1 input or internal error, 2 completed
/// but no feasible schedule came out.
const EXIT_INFEASIBLE: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::Solve {
            instance,
            repeats,
            reads,
            sweeps,
            seed,
            penalty,
            horizon,
            retry_cap,
        } => solve(
            &instance, repeats, reads, sweeps, seed, penalty, horizon, retry_cap,
        ),
        Command::Bench { cases, out } => bench(&cases, &out),
        Command::Oracle {
            instance,
            horizon,
            cap,
        } => oracle(&instance, horizon, cap),
        Command::ExportQubo {
            instance,
            out,
            horizon,
            penalty,
        } => export_qubo(&instance, &out, horizon, penalty),
        Command::ImportResult {
            instance,
            result,
            horizon,
            penalty,
        } => import_result(&instance, &result, horizon, penalty),
    }
}

fn load_instance(path: &Path) -> anyhow::Result<Instance> {
    Instance::load(path).with_context(|| format!("loading instance {}", path.display()))
}

fn penalty_config(
    instance: &Instance,
    horizon: usize,
    uniform: Option<f64>,
) -> PenaltyConfig {
    match uniform {
        Some(p) => PenaltyConfig::uniform(p),
        None => PenaltyConfig::default_for(instance, horizon),
    }
}

fn print_schedule(instance: &Instance, schedule: &Schedule) -> anyhow::Result<()> {
    print!("{}", schedule.gantt(instance)?);
    for chain in instance.chains() {
        println!(
            "chain {} delay: {} s",
            chain.id,
            schedule.chain_delay(instance, chain.id)?
        );
    }
    println!("total delay: {} s", schedule.total_delay(instance)?);
    println!("longest chain delay: {} s", schedule.longest_delay(instance)?);
    println!(
        "average busy time per machine: {} s",
        schedule.avg_vm_busy_time(instance)?
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn solve(
    path: &Path,
    repeats: usize,
    reads: usize,
    sweeps: usize,
    seed: u64,
    penalty: Option<f64>,
    horizon: Option<usize>,
    retry_cap: usize,
) -> anyhow::Result<ExitCode> {
    let instance = load_instance(path)?;
    let greedy = greedy_schedule(&instance)?;
    println!(
        "instance: {} chains, {} machines, slot {} s",
        instance.num_chains(),
        instance.num_vms(),
        instance.slot_length_s()
    );
    println!(
        "greedy baseline: makespan {} slots, total delay {} s",
        greedy.makespan_slots, greedy.total_delay_s
    );

    let mut config = CaseConfig::with_defaults("solve");
    config.repeats = repeats;
    config.reads = reads;
    config.sweeps = sweeps;
    config.seed = seed;
    config.penalty = penalty;
    config.horizon = horizon;
    config.retry_cap = retry_cap;
    // run_case needs a source even though the instance is already loaded.
    config.file = Some(path.to_path_buf());

    let result = run_case(&config, &instance)?;
    println!(
        "model: {} binary variables on a {}-slot grid ({} extensions used)",
        result.q_size, result.horizon, result.bumps
    );
    for record in &result.runs {
        let outcome = match record.objective_s {
            Some(delay) => format!("feasible, total delay {delay} s"),
            None => "infeasible".to_string(),
        };
        println!(
            "run {}: best energy {}, {}",
            record.run, record.best_energy, outcome
        );
    }
    println!(
        "feasible repeats: {}/{}",
        result.successes, result.repeats
    );
    match &result.best_schedule {
        Some(schedule) => {
            println!("best schedule:");
            print_schedule(&instance, schedule)?;
            Ok(ExitCode::SUCCESS)
        }
        None => {
            println!(
                "no feasible schedule found after {} grid extensions",
                result.bumps
            );
            Ok(ExitCode::from(EXIT_INFEASIBLE))
        }
    }
}

fn bench(cases_path: &Path, out_dir: &Path) -> anyhow::Result<ExitCode> {
    let cases = load_cases(cases_path)
        .with_context(|| format!("loading cases {}", cases_path.display()))?;
    if cases.is_empty() {
        anyhow::bail!("case file {} lists no cases", cases_path.display());
    }
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;

    let mut results = Vec::with_capacity(cases.len());
    for case in &cases {
        let instance = load_case_instance(case)?;
        eprintln!(
            "case {}: {} chains, {} machines, {} repeats",
            case.name,
            instance.num_chains(),
            instance.num_vms(),
            case.repeats
        );
        let result = run_case(case, &instance)?;
        eprintln!(
            "case {}: {}/{} feasible, best {}",
            result.name,
            result.successes,
            result.repeats,
            result
                .best_objective_s
                .map(|d| format!("{d} s"))
                .unwrap_or_else(|| "none".to_string())
        );
        let (longest, total) = emit_histograms(&result);
        let write = |name: String, text: &str| -> anyhow::Result<()> {
            let path = out_dir.join(name);
            std::fs::write(&path, text)
                .with_context(|| format!("writing {}", path.display()))
        };
        write(format!("hist_longest_{}.csv", result.name), &longest)?;
        write(format!("hist_total_{}.csv", result.name), &total)?;
        results.push(result);
    }

    std::fs::write(out_dir.join("table3.csv"), emit_summary_csv(&results))?;
    std::fs::write(out_dir.join("table4.csv"), emit_success_csv(&results))?;
    print!("{}", emit_tables_text(&results));
    println!("wrote {} files to {}", 2 + 2 * results.len(), out_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn oracle(path: &Path, horizon: Option<usize>, cap: Option<f64>) -> anyhow::Result<ExitCode> {
    let instance = load_instance(path)?;
    let h = match horizon {
        Some(h) => h,
        None => baseline_horizon(&instance)?,
    };
    println!("searching all schedules on a {h}-slot grid");
    match exhaustive_schedule_oracle(&instance, h, cap)? {
        Some(outcome) => {
            println!("optimal total delay: {} s", outcome.total_delay_s);
            print_schedule(&instance, &outcome.schedule)?;
            Ok(ExitCode::SUCCESS)
        }
        None => {
            println!("no feasible schedule fits a {h}-slot grid");
            Ok(ExitCode::from(EXIT_INFEASIBLE))
        }
    }
}

fn export_qubo(
    path: &Path,
    out: &Path,
    horizon: Option<usize>,
    penalty: Option<f64>,
) -> anyhow::Result<ExitCode> {
    let instance = load_instance(path)?;
    let h = match horizon {
        Some(h) => h,
        None => baseline_horizon(&instance)?,
    };
    let model = build_qubo(&instance, h, penalty_config(&instance, h, penalty))?;
    std::fs::write(out, model.qubo().to_problem_text())
        .with_context(|| format!("writing {}", out.display()))?;
    println!(
        "wrote {}: {} variables, {} diagonal and {} off-diagonal terms, offset {}",
        out.display(),
        model.qubo().n_vars(),
        model.qubo().num_diagonal(),
        model.qubo().num_off_diagonal(),
        model.qubo().offset()
    );
    println!("grid: {h} slots; reuse --horizon {h} when importing the result");
    Ok(ExitCode::SUCCESS)
}

fn import_result(
    path: &Path,
    result_path: &Path,
    horizon: Option<usize>,
    penalty: Option<f64>,
) -> anyhow::Result<ExitCode> {
    let instance = load_instance(path)?;
    let h = match horizon {
        Some(h) => h,
        None => baseline_horizon(&instance)?,
    };
    let model = build_qubo(&instance, h, penalty_config(&instance, h, penalty))?;
    let text = std::fs::read_to_string(result_path)
        .with_context(|| format!("reading {}", result_path.display()))?;
    let (schedule, _slacks, energy) = model.import_result(&text)?;
    println!("sample energy: {energy}");
    let report = schedule.check_feasibility(&instance)?;
    if report.feasible() {
        println!("decoded schedule is feasible");
        print_schedule(&instance, &schedule)?;
        Ok(ExitCode::SUCCESS)
    } else {
        println!("decoded schedule violates {} constraints:", report.violations.len());
        print!("{report}");
        Ok(ExitCode::from(EXIT_INFEASIBLE))
    }
}
