//! A small worked instance used across tests and docs: three service chains
//! of three steps each, three VMs with overlapping capability sets, and a
//! 1-second slot grid, together with a known-good arrangement of all nine
//! runs.

use std::collections::BTreeSet;

use crate::instance::{FunctionStep, Instance, ServiceChain, VmSpec};
use crate::schedule::{Run, Schedule};

fn kinds(list: &[usize]) -> BTreeSet<usize> {
    list.iter().copied().collect()
}

fn steps(kind_workloads: &[(usize, f64)]) -> Vec<FunctionStep> {
    kind_workloads
        .iter()
        .map(|&(kind, workload_mb)| FunctionStep { kind, workload_mb })
        .collect()
}

/// Three chains, three VMs, five function kinds, 1-second slots.
///
/// * VM 1 runs kinds 1, 2, 3 at 1.5 MB/s
/// * VM 2 runs kinds 1, 3, 5 at 1.0 MB/s
/// * VM 3 runs kinds 2, 4, 5 at 1.0 MB/s
/// * chain 1: kinds 1, 3, 4 at 4 MB per step
/// * chain 2: kinds 3, 4, 2 at 0.8 MB per step
/// * chain 3: kinds 2, 5, 3 at 2 MB per step
pub fn three_chain_instance() -> Instance {
    Instance::new(
        vec![
            VmSpec {
                id: 1,
                rate_mb_per_s: 1.5,
                capabilities: kinds(&[1, 2, 3]),
            },
            VmSpec {
                id: 2,
                rate_mb_per_s: 1.0,
                capabilities: kinds(&[1, 3, 5]),
            },
            VmSpec {
                id: 3,
                rate_mb_per_s: 1.0,
                capabilities: kinds(&[2, 4, 5]),
            },
        ],
        vec![
            ServiceChain {
                id: 1,
                steps: steps(&[(1, 4.0), (3, 4.0), (4, 4.0)]),
            },
            ServiceChain {
                id: 2,
                steps: steps(&[(3, 0.8), (4, 0.8), (2, 0.8)]),
            },
            ServiceChain {
                id: 3,
                steps: steps(&[(2, 2.0), (5, 2.0), (3, 2.0)]),
            },
        ],
        1.0,
        None,
    )
    .expect("fixture instance is valid")
}

/// Path of the shipped JSON copy of [`three_chain_instance`], for exercising
/// the file-based interfaces.
pub fn three_chain_instance_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/three_chains.json")
}

/// The instance plus a hand-placed feasible schedule on an 11-slot grid with
/// chain delays of 10, 4 and 6 seconds.
pub fn reference_arrangement() -> (Instance, Schedule) {
    let instance = three_chain_instance();
    let runs = [
        Run { chain: 1, step: 1, vm: 1, start: 1 },
        Run { chain: 1, step: 2, vm: 1, start: 4 },
        Run { chain: 1, step: 3, vm: 3, start: 7 },
        Run { chain: 2, step: 1, vm: 2, start: 1 },
        Run { chain: 2, step: 2, vm: 3, start: 3 },
        Run { chain: 2, step: 3, vm: 3, start: 4 },
        Run { chain: 3, step: 1, vm: 3, start: 1 },
        Run { chain: 3, step: 2, vm: 2, start: 3 },
        Run { chain: 3, step: 3, vm: 2, start: 5 },
    ];
    let schedule =
        Schedule::from_runs(&instance, 11, &runs).expect("fixture arrangement fits the grid");
    (instance, schedule)
}
