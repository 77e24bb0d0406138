//! End-to-end acceptance checks, one test per criterion. Each prints a
//! single `criterion N: PASS` line on success; a failure panics with the
//! measured values so the miss is visible in the test output.

use std::collections::BTreeSet;
use std::process::Command;

use nfvsched::fixtures;
use nfvsched::greedy::{greedy_schedule, horizon};
use nfvsched::instance::{FunctionStep, Instance, ServiceChain, VmSpec};
use nfvsched::qubo::{build_qubo, objective_upper_bound, PenaltyConfig};
use nfvsched::schedule::random_feasible;
use nfvsched::solver::{
    brute_force_bits, derive_seed, exhaustive_schedule_oracle, simulated_annealing, AnnealParams,
};
use nfvsched_cli::bench::{run_case, CaseConfig};
use nfvsched_cli::generate::{generate_case, GeneratorParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DELAY_TOLERANCE: f64 = 1e-9;

#[test]
fn acceptance_1_reference_schedule_delays() {
    let (inst, sched) = fixtures::reference_arrangement();
    let report = sched.check_feasibility(&inst).unwrap();
    assert!(report.feasible(), "reference arrangement infeasible:\n{report}");
    let delays: Vec<f64> = (1..=3)
        .map(|i| sched.chain_delay(&inst, i).unwrap())
        .collect();
    assert_eq!(delays, vec![10.0, 4.0, 6.0]);
    assert_eq!(sched.total_delay(&inst).unwrap(), 20.0);

    let model = build_qubo(&inst, 11, PenaltyConfig::default_for(&inst, 11)).unwrap();
    let slacks = sched.canonical_slacks(&inst).unwrap();
    let bits = model.encode(&sched, &slacks).unwrap();
    assert_eq!(model.energy(&bits).unwrap(), 20.0);
    println!("criterion 1: PASS - reference schedule is feasible with delays 10/4/6 s, total 20 s, energy 20");
}

#[test]
fn acceptance_2_greedy_baseline() {
    let inst = fixtures::three_chain_instance();
    let greedy = greedy_schedule(&inst).unwrap();
    assert_eq!(greedy.makespan_slots, 19);
    assert_eq!(horizon(&inst).unwrap(), 20);
    let report = greedy.schedule.check_feasibility(&inst).unwrap();
    assert!(report.feasible(), "greedy schedule infeasible:\n{report}");
    println!("criterion 2: PASS - greedy baseline has makespan 19 slots, grid 20, and is feasible");
}

#[test]
fn acceptance_3_energy_matches_delay_on_random_feasible() {
    let shapes: [(usize, usize, usize); 8] = [
        (1, 1, 1),
        (1, 2, 2),
        (2, 1, 2),
        (2, 2, 2),
        (2, 2, 3),
        (3, 2, 2),
        (2, 3, 3),
        (3, 3, 3),
    ];
    let mut instances = 0;
    let mut checked = 0;
    for (k, &(chains, steps, vms)) in shapes.iter().enumerate() {
        for seed in 0..3u64 {
            let params = GeneratorParams {
                chains,
                steps,
                vms,
                kinds: 3,
                workload_range: (0.5, 1.0),
                rates: vec![1.0, 1.5],
                capability_density: 0.7,
                slot_length_s: 1.0,
            };
            let inst = generate_case(&params, 1000 + 10 * k as u64 + seed).unwrap();
            let h = horizon(&inst).unwrap().min(12);
            let model = build_qubo(&inst, h, PenaltyConfig::default_for(&inst, h)).unwrap();
            instances += 1;
            let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
            let mut draws = 0;
            let mut attempts = 0;
            while draws < 10 && attempts < 60 {
                attempts += 1;
                let Some(sched) = random_feasible(&inst, h, &mut rng).unwrap() else {
                    continue;
                };
                let slacks = sched.canonical_slacks(&inst).unwrap();
                let bits = model.encode(&sched, &slacks).unwrap();
                let energy = model.energy(&bits).unwrap();
                let delay = sched.total_delay(&inst).unwrap();
                assert!(
                    (energy - delay).abs() <= DELAY_TOLERANCE,
                    "energy {energy} != delay {delay} on shape {:?} seed {seed}",
                    (chains, steps, vms)
                );
                draws += 1;
                checked += 1;
            }
        }
    }
    assert!(instances >= 20, "only {instances} instances generated");
    assert!(checked >= 200, "only {checked} schedules checked");
    println!(
        "criterion 3: PASS - energy equals total delay on {checked} random feasible schedules over {instances} instances"
    );
}

#[test]
fn acceptance_4_penalty_separates_infeasible() {
    // One chain, one step, one VM, one busy slot on a 2-slot grid: 11
    // variables, so the whole assignment space can be enumerated.
    let inst = tiny(&[1.0], 1.0, 1.0, 2);
    let h = 2;
    let penalty = (100.0 * objective_upper_bound(&inst, h)).max(1.0);
    let model = build_qubo(&inst, h, PenaltyConfig::default_for(&inst, h)).unwrap();
    let n = model.qubo().n_vars();
    assert!(n <= 24, "enumeration instance grew to {n} variables");

    let mut max_feasible_encoding = f64::NEG_INFINITY;
    let mut min_infeasible = f64::INFINITY;
    for word in 0u64..(1 << n) {
        let bits: Vec<u8> = (0..n).map(|b| ((word >> b) & 1) as u8).collect();
        let energy = model.energy(&bits).unwrap();
        let (sched, slacks) = model.decode(&bits).unwrap();
        let feasible = sched.check_feasibility(&inst).unwrap().feasible();
        if !feasible {
            assert!(
                energy >= penalty - DELAY_TOLERANCE,
                "infeasible assignment {word:#b} has energy {energy} < penalty {penalty}"
            );
            min_infeasible = min_infeasible.min(energy);
        } else if sched
            .canonical_slacks(&inst)
            .map(|canon| canon == slacks)
            .unwrap_or(false)
        {
            max_feasible_encoding = max_feasible_encoding.max(energy);
        }
    }
    assert!(
        max_feasible_encoding < min_infeasible,
        "feasible encodings reach {max_feasible_encoding}, infeasible floor {min_infeasible}"
    );
    println!(
        "criterion 4: PASS - every infeasible assignment costs >= {penalty}, above the feasible ceiling {max_feasible_encoding}"
    );
}

#[test]
fn acceptance_5_solvers_agree_and_sampler_attains_optimum() {
    let catalog: Vec<(Instance, usize)> = vec![
        (tiny(&[1.0], 1.0, 1.0, 2), 2),
        (tiny(&[1.0], 1.0, 1.0, 3), 3),
        (tiny(&[1.0], 2.0, 1.0, 3), 3),
        (tiny(&[1.0], 1.0, 1.0, 4), 4),
        (tiny(&[1.0], 2.0, 1.0, 4), 4),
        (tiny(&[1.0], 3.0, 1.0, 4), 4),
        (tiny(&[1.0], 1.0, 0.5, 3), 3),
        (tiny(&[1.0], 0.5, 0.5, 2), 2),
        (tiny(&[1.0, 1.0], 1.0, 1.0, 2), 2),
        (tiny(&[1.0, 0.5], 1.0, 1.0, 2), 2),
        (tiny(&[1.0, 1.0], 0.5, 0.5, 2), 2),
        (tiny(&[2.0], 3.0, 1.0, 3), 3),
    ];
    assert!(catalog.len() >= 10);

    let mut sa_runs = 0;
    let mut sa_hits = 0;
    for (idx, (inst, h)) in catalog.iter().enumerate() {
        let optimum = exhaustive_schedule_oracle(inst, *h, None)
            .unwrap()
            .unwrap_or_else(|| panic!("catalog instance {idx} has no feasible schedule"))
            .total_delay_s;
        let model = build_qubo(inst, *h, PenaltyConfig::default_for(inst, *h)).unwrap();

        let (bits, _) = brute_force_bits(model.qubo()).unwrap();
        let (sched, _) = model.decode(&bits).unwrap();
        assert!(
            sched.check_feasibility(inst).unwrap().feasible(),
            "brute-force minimum of instance {idx} decodes infeasible"
        );
        let brute_delay = sched.total_delay(inst).unwrap();
        assert!(
            (brute_delay - optimum).abs() <= DELAY_TOLERANCE,
            "instance {idx}: brute force found {brute_delay}, oracle {optimum}"
        );

        for run in 0..10u64 {
            let set = simulated_annealing(
                model.qubo(),
                &AnnealParams {
                    reads: 50,
                    sweeps: 800,
                    beta_start: None,
                    beta_end: None,
                    seed: derive_seed(7000 + idx as u64, run),
                },
            )
            .unwrap();
            let top = set.best().unwrap();
            let (sched, _) = model.decode(&top.bits).unwrap();
            sa_runs += 1;
            if sched.check_feasibility(inst).unwrap().feasible()
                && (sched.total_delay(inst).unwrap() - optimum).abs() <= DELAY_TOLERANCE
            {
                sa_hits += 1;
            }
        }
    }
    let rate = sa_hits as f64 / sa_runs as f64;
    assert!(
        rate >= 0.9,
        "sampler attained the optimum in only {sa_hits}/{sa_runs} runs"
    );
    println!(
        "criterion 5: PASS - brute force matches the schedule oracle on {} instances; sampler hit the optimum in {sa_hits}/{sa_runs} runs",
        catalog.len()
    );
}

#[test]
fn acceptance_6_success_rate_declines_with_model_size() {
    let ladder: [(&str, usize, usize, (f64, f64), u64); 6] = [
        ("t1", 2, 2, (0.5, 1.0), 11),
        ("t2", 2, 2, (0.5, 1.5), 11),
        ("t3", 2, 2, (1.0, 2.0), 11),
        ("t4", 2, 3, (0.5, 1.0), 12),
        ("t5", 2, 3, (1.0, 2.0), 12),
        ("t6", 3, 3, (1.0, 2.0), 14),
    ];
    let mut sizes = Vec::new();
    let mut rates = Vec::new();
    for (k, &(name, chains, steps, workload_range, instance_seed)) in ladder.iter().enumerate() {
        let mut config = CaseConfig::with_defaults(name);
        config.generator = Some(GeneratorParams {
            chains,
            steps,
            vms: 2,
            kinds: 3,
            workload_range,
            rates: vec![1.0, 1.5],
            capability_density: 0.8,
            slot_length_s: 1.0,
        });
        config.instance_seed = instance_seed;
        config.repeats = 50;
        config.reads = 30;
        config.sweeps = 4000;
        config.seed = 300 + k as u64;
        config.retry_cap = 0;
        let inst = nfvsched_cli::bench::load_case_instance(&config).unwrap();
        let result = run_case(&config, &inst).unwrap();
        println!(
            "  ladder case {name}: {} variables, success rate {}",
            result.q_size, result.success_rate
        );
        sizes.push(result.q_size as f64);
        rates.push(result.success_rate);
    }
    let rho = spearman(&sizes, &rates);
    assert!(
        rho <= -0.5,
        "success rate does not decline with model size: rho = {rho}, sizes {sizes:?}, rates {rates:?}"
    );
    println!(
        "criterion 6: PASS - success rate declines with model size (Spearman rho = {rho:.3} over {} cases)",
        sizes.len()
    );
}

#[test]
fn acceptance_7_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cases_path = dir.path().join("cases.json");
    let case_json = format!(
        r#"{{
  "cases": [
    {{
      "name": "det",
      "file": {:?},
      "repeats": 3,
      "reads": 4,
      "sweeps": 60,
      "seed": 5,
      "horizon": 12,
      "retry_cap": 1
    }}
  ]
}}"#,
        fixtures::three_chain_instance_path()
    );
    std::fs::write(&cases_path, case_json).unwrap();

    let mut outputs: Vec<Vec<(String, Vec<u8>)>> = Vec::new();
    for pass in 0..2 {
        let out_dir = dir.path().join(format!("out{pass}"));
        let status = Command::new(env!("CARGO_BIN_EXE_nfvsched"))
            .arg("bench")
            .arg(&cases_path)
            .arg("--out")
            .arg(&out_dir)
            .status()
            .unwrap();
        assert!(status.success(), "bench pass {pass} failed");
        let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(&out_dir)
            .unwrap()
            .map(|entry| {
                let entry = entry.unwrap();
                (
                    entry.file_name().to_string_lossy().into_owned(),
                    std::fs::read(entry.path()).unwrap(),
                )
            })
            .collect();
        files.sort();
        outputs.push(files);
    }
    let names: Vec<&String> = outputs[0].iter().map(|(n, _)| n).collect();
    assert!(
        names.contains(&&"table3.csv".to_string()) && names.contains(&&"table4.csv".to_string()),
        "bench did not write the summary tables: {names:?}"
    );
    assert_eq!(outputs[0], outputs[1], "bench reruns differ");
    println!(
        "criterion 7: PASS - two identical bench invocations produced byte-identical CSV files ({})",
        names.len()
    );
}

#[test]
fn acceptance_8_unconditional_duration_raises_minimum() {
    // Two capable machines: the printed duration penalty charges the
    // unchosen machine for its idle slots, the faithful one does not.
    let inst = tiny(&[1.0, 1.0], 1.0, 1.0, 2);
    let h = 2;
    let faithful = build_qubo(&inst, h, PenaltyConfig::default_for(&inst, h)).unwrap();
    let mut printed_config = PenaltyConfig::default_for(&inst, h);
    printed_config.unconditional_duration = true;
    let printed = build_qubo(&inst, h, printed_config).unwrap();

    let (bits, faithful_min) = brute_force_bits(faithful.qubo()).unwrap();
    let (sched, _) = faithful.decode(&bits).unwrap();
    assert!(sched.check_feasibility(&inst).unwrap().feasible());
    let printed_at_optimum = printed.energy(&bits).unwrap();
    assert!(
        printed_at_optimum > faithful_min + 1.0,
        "printed form is not strictly higher at the faithful optimum: {printed_at_optimum} vs {faithful_min}"
    );
    let (_, printed_min) = brute_force_bits(printed.qubo()).unwrap();
    assert!(
        printed_min > faithful_min + 1.0,
        "printed-form minimum {printed_min} does not exceed the faithful minimum {faithful_min}"
    );
    println!(
        "criterion 8: PASS - printed duration penalty lifts the minimum from {faithful_min} to {printed_min}"
    );
}

/// Single chain with one step of the given workload; every machine can run
/// it. The grid size is pinned through the instance override.
fn tiny(rates: &[f64], workload_mb: f64, slot_length_s: f64, h: usize) -> Instance {
    let vms = rates
        .iter()
        .enumerate()
        .map(|(k, &rate)| VmSpec {
            id: k + 1,
            rate_mb_per_s: rate,
            capabilities: BTreeSet::from([1]),
        })
        .collect();
    Instance::new(
        vms,
        vec![ServiceChain {
            id: 1,
            steps: vec![FunctionStep {
                kind: 1,
                workload_mb,
            }],
        }],
        slot_length_s,
        Some(h),
    )
    .unwrap()
}

/// Spearman rank correlation with average ranks for ties.
fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let rx = ranks(xs);
    let ry = ranks(ys);
    let n = rx.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        cov += (a - mean) * (b - mean);
        var_x += (a - mean).powi(2);
        var_y += (b - mean).powi(2);
    }
    cov / (var_x.sqrt() * var_y.sqrt())
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut out = vec![0.0; values.len()];
    let mut k = 0;
    while k < order.len() {
        let mut end = k;
        while end < order.len() && values[order[end]] == values[order[k]] {
            end += 1;
        }
        let avg = (k + 1 + end) as f64 / 2.0;
        for &idx in &order[k..end] {
            out[idx] = avg;
        }
        k = end;
    }
    out
}
