//! Problem instances: virtual machines with capability sets and processing
//! rates, service chains of function steps with per-step workloads, and the
//! length of one slot on the discrete time grid.
//!
//! Chains, steps, VMs and slots are all addressed with 1-based ids, matching
//! the on-disk JSON format.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One virtual machine: which function kinds it can run, and how fast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmSpec {
    pub id: usize,
    /// Processing rate in MB per second. Must be positive.
    pub rate_mb_per_s: f64,
    /// Function kinds this VM can execute.
    pub capabilities: BTreeSet<usize>,
}

/// One step of a service chain: a function kind plus the traffic volume it
/// has to process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionStep {
    pub kind: usize,
    /// Workload in MB. Must be positive.
    pub workload_mb: f64,
}

/// An ordered sequence of function steps. Step `j` may only start once step
/// `j - 1` has finished.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceChain {
    pub id: usize,
    pub steps: Vec<FunctionStep>,
}

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("failed to parse instance JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("slot length must be positive and finite, got {0}")]
    BadSlotLength(f64),
    #[error("vm ids must be unique and run 1..=M, got {0:?}")]
    BadVmIds(Vec<usize>),
    #[error("chain ids must be unique and run 1..=I, got {0:?}")]
    BadChainIds(Vec<usize>),
    #[error("vm {id}: rate must be positive and finite, got {rate}")]
    BadRate { id: usize, rate: f64 },
    #[error("vm {id}: capability set is empty")]
    NoCapabilities { id: usize },
    #[error("vm {id}: capability kinds must be >= 1")]
    BadCapabilityKind { id: usize },
    #[error("chain {id} has no steps")]
    EmptyChain { id: usize },
    #[error("chain {chain} step {step}: workload must be positive and finite, got {workload}")]
    BadWorkload {
        chain: usize,
        step: usize,
        workload: f64,
    },
    #[error("chain {chain} step {step}: kind must be >= 1")]
    BadKind { chain: usize, step: usize },
    #[error("no VM can serve kind {kind} (chain {chain}, step {step})")]
    UnservableKind {
        chain: usize,
        step: usize,
        kind: usize,
    },
    #[error("horizon override must be >= 1")]
    BadHorizonOverride,
    #[error("chain {chain} has no step {step}")]
    StepOutOfRange { chain: usize, step: usize },
    #[error("no chain {0}")]
    ChainOutOfRange(usize),
    #[error("no vm {0}")]
    VmOutOfRange(usize),
    #[error("vm {vm} cannot serve chain {chain} step {step}")]
    NotCapable {
        chain: usize,
        step: usize,
        vm: usize,
    },
}

/// On-disk shape of an instance.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    slot_length_s: f64,
    vms: Vec<VmSpec>,
    chains: Vec<ServiceChain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    horizon_override: Option<usize>,
}

/// A validated scheduling instance.
///
/// Validation guarantees: ids are contiguous from 1, rates and workloads are
/// positive, and every step has at least one capable VM.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    vms: Vec<VmSpec>,
    chains: Vec<ServiceChain>,
    slot_length_s: f64,
    horizon_override: Option<usize>,
    /// `capable[i-1][j-1]`: sorted ids of the VMs able to run step `j` of
    /// chain `i`.
    capable: Vec<Vec<Vec<usize>>>,
}

impl Instance {
    pub fn new(
        mut vms: Vec<VmSpec>,
        chains: Vec<ServiceChain>,
        slot_length_s: f64,
        horizon_override: Option<usize>,
    ) -> Result<Self, InstanceError> {
        if !(slot_length_s.is_finite() && slot_length_s > 0.0) {
            return Err(InstanceError::BadSlotLength(slot_length_s));
        }
        if horizon_override == Some(0) {
            return Err(InstanceError::BadHorizonOverride);
        }

        vms.sort_by_key(|vm| vm.id);
        let vm_ids: Vec<usize> = vms.iter().map(|vm| vm.id).collect();
        if vm_ids.iter().enumerate().any(|(k, &id)| id != k + 1) {
            return Err(InstanceError::BadVmIds(vm_ids));
        }
        for vm in &vms {
            if !(vm.rate_mb_per_s.is_finite() && vm.rate_mb_per_s > 0.0) {
                return Err(InstanceError::BadRate {
                    id: vm.id,
                    rate: vm.rate_mb_per_s,
                });
            }
            if vm.capabilities.is_empty() {
                return Err(InstanceError::NoCapabilities { id: vm.id });
            }
            if vm.capabilities.contains(&0) {
                return Err(InstanceError::BadCapabilityKind { id: vm.id });
            }
        }

        let chain_ids: Vec<usize> = chains.iter().map(|c| c.id).collect();
        if chain_ids.iter().enumerate().any(|(k, &id)| id != k + 1) {
            return Err(InstanceError::BadChainIds(chain_ids));
        }
        let mut capable = Vec::with_capacity(chains.len());
        for chain in &chains {
            if chain.steps.is_empty() {
                return Err(InstanceError::EmptyChain { id: chain.id });
            }
            let mut per_step = Vec::with_capacity(chain.steps.len());
            for (jz, step) in chain.steps.iter().enumerate() {
                if step.kind == 0 {
                    return Err(InstanceError::BadKind {
                        chain: chain.id,
                        step: jz + 1,
                    });
                }
                if !(step.workload_mb.is_finite() && step.workload_mb > 0.0) {
                    return Err(InstanceError::BadWorkload {
                        chain: chain.id,
                        step: jz + 1,
                        workload: step.workload_mb,
                    });
                }
                let set: Vec<usize> = vms
                    .iter()
                    .filter(|vm| vm.capabilities.contains(&step.kind))
                    .map(|vm| vm.id)
                    .collect();
                if set.is_empty() {
                    return Err(InstanceError::UnservableKind {
                        chain: chain.id,
                        step: jz + 1,
                        kind: step.kind,
                    });
                }
                per_step.push(set);
            }
            capable.push(per_step);
        }

        Ok(Instance {
            vms,
            chains,
            slot_length_s,
            horizon_override,
            capable,
        })
    }

    pub fn num_vms(&self) -> usize {
        self.vms.len()
    }

    pub fn num_chains(&self) -> usize {
        self.chains.len()
    }

    pub fn slot_length_s(&self) -> f64 {
        self.slot_length_s
    }

    pub fn horizon_override(&self) -> Option<usize> {
        self.horizon_override
    }

    pub fn vms(&self) -> &[VmSpec] {
        &self.vms
    }

    pub fn chains(&self) -> &[ServiceChain] {
        &self.chains
    }

    pub fn vm(&self, m: usize) -> Result<&VmSpec, InstanceError> {
        m.checked_sub(1)
            .and_then(|k| self.vms.get(k))
            .ok_or(InstanceError::VmOutOfRange(m))
    }

    pub fn chain(&self, i: usize) -> Result<&ServiceChain, InstanceError> {
        i.checked_sub(1)
            .and_then(|k| self.chains.get(k))
            .ok_or(InstanceError::ChainOutOfRange(i))
    }

    pub fn step(&self, i: usize, j: usize) -> Result<&FunctionStep, InstanceError> {
        let chain = self.chain(i)?;
        j.checked_sub(1)
            .and_then(|k| chain.steps.get(k))
            .ok_or(InstanceError::StepOutOfRange { chain: i, step: j })
    }

    /// Sorted ids of the VMs able to run step `j` of chain `i`.
    pub fn capable_set(&self, i: usize, j: usize) -> Result<&[usize], InstanceError> {
        self.step(i, j)?;
        Ok(&self.capable[i - 1][j - 1])
    }

    /// Whole slots VM `m` needs for step `j` of chain `i`:
    /// `ceil((workload / rate) / slot_length)`. At least 1.
    pub fn processing_slots(&self, i: usize, j: usize, m: usize) -> Result<usize, InstanceError> {
        let step = self.step(i, j)?;
        let vm = self.vm(m)?;
        if !vm.capabilities.contains(&step.kind) {
            return Err(InstanceError::NotCapable {
                chain: i,
                step: j,
                vm: m,
            });
        }
        let slots = (step.workload_mb / vm.rate_mb_per_s / self.slot_length_s).ceil();
        Ok((slots as usize).max(1))
    }

    /// The capable VM with the fewest processing slots for step `j` of chain
    /// `i`, ties broken towards the lowest VM id. Returns `(vm, slots)`.
    pub fn fastest_vm(&self, i: usize, j: usize) -> Result<(usize, usize), InstanceError> {
        let mut best: Option<(usize, usize)> = None;
        for &m in self.capable_set(i, j)? {
            let slots = self.processing_slots(i, j, m)?;
            if best.map_or(true, |(_, t)| slots < t) {
                best = Some((m, slots));
            }
        }
        Ok(best.expect("capable set is never empty"))
    }

    pub fn to_json(&self) -> String {
        let file = InstanceFile {
            slot_length_s: self.slot_length_s,
            vms: self.vms.clone(),
            chains: self.chains.clone(),
            horizon_override: self.horizon_override,
        };
        serde_json::to_string_pretty(&file).expect("instance serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self, InstanceError> {
        let file: InstanceFile = serde_json::from_str(text)?;
        Instance::new(file.vms, file.chains, file.slot_length_s, file.horizon_override)
    }

    pub fn save(&self, path: &Path) -> Result<(), InstanceError> {
        std::fs::write(path, self.to_json()).map_err(|source| InstanceError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, InstanceError> {
        let text = std::fs::read_to_string(path).map_err(|source| InstanceError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Instance::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn vm(id: usize, rate: f64, caps: &[usize]) -> VmSpec {
        VmSpec {
            id,
            rate_mb_per_s: rate,
            capabilities: caps.iter().copied().collect(),
        }
    }

    fn chain(id: usize, steps: &[(usize, f64)]) -> ServiceChain {
        ServiceChain {
            id,
            steps: steps
                .iter()
                .map(|&(kind, workload_mb)| FunctionStep { kind, workload_mb })
                .collect(),
        }
    }

    #[test]
    fn three_chain_example_shape() {
        let inst = fixtures::three_chain_instance();
        assert_eq!(inst.num_vms(), 3);
        assert_eq!(inst.num_chains(), 3);
        assert_eq!(inst.slot_length_s(), 1.0);
        for c in inst.chains() {
            assert_eq!(c.steps.len(), 3);
        }
    }

    #[test]
    fn three_chain_example_capable_sets() {
        let inst = fixtures::three_chain_instance();
        // Chain 1 runs kinds 1, 3, 4; kind 4 only exists on VM 3.
        assert_eq!(inst.capable_set(1, 1).unwrap(), &[1, 2]);
        assert_eq!(inst.capable_set(1, 2).unwrap(), &[1, 2]);
        assert_eq!(inst.capable_set(1, 3).unwrap(), &[3]);
        // Chain 3 runs kinds 2, 5, 3.
        assert_eq!(inst.capable_set(3, 1).unwrap(), &[1, 3]);
        assert_eq!(inst.capable_set(3, 2).unwrap(), &[2, 3]);
        assert_eq!(inst.capable_set(3, 3).unwrap(), &[1, 2]);
    }

    #[test]
    fn three_chain_example_processing_slots() {
        let inst = fixtures::three_chain_instance();
        // 4 MB at 1.5 MB/s is 2.67 s, so 3 slots of 1 s.
        assert_eq!(inst.processing_slots(1, 1, 1).unwrap(), 3);
        assert_eq!(inst.processing_slots(1, 1, 2).unwrap(), 4);
        assert_eq!(inst.processing_slots(1, 3, 3).unwrap(), 4);
        // 0.8 MB finishes within one slot on every VM.
        assert_eq!(inst.processing_slots(2, 1, 1).unwrap(), 1);
        assert_eq!(inst.processing_slots(2, 1, 2).unwrap(), 1);
        // 2 MB at 1.5 MB/s is 1.33 s, still 2 slots.
        assert_eq!(inst.processing_slots(3, 1, 1).unwrap(), 2);
        assert_eq!(inst.processing_slots(3, 2, 2).unwrap(), 2);
    }

    #[test]
    fn fastest_vm_prefers_lowest_id_on_ties() {
        let inst = fixtures::three_chain_instance();
        // Chain 2 step 1 takes 1 slot on both VM 1 and VM 2.
        assert_eq!(inst.fastest_vm(2, 1).unwrap(), (1, 1));
        // Chain 3 step 2 takes 2 slots on both VM 2 and VM 3.
        assert_eq!(inst.fastest_vm(3, 2).unwrap(), (2, 2));
        // Chain 1 step 1 is strictly faster on VM 1.
        assert_eq!(inst.fastest_vm(1, 1).unwrap(), (1, 3));
    }

    #[test]
    fn processing_slots_covers_the_workload_exactly() {
        let inst = Instance::new(
            vec![vm(1, 0.7, &[1])],
            vec![chain(1, &[(1, 2.1)])],
            0.5,
            None,
        )
        .unwrap();
        let slots = inst.processing_slots(1, 1, 1).unwrap();
        let need_s = 2.1_f64 / 0.7;
        assert!(slots as f64 * 0.5 >= need_s);
        assert!((slots as f64 - 1.0) * 0.5 < need_s);
    }

    #[test]
    fn json_round_trip_preserves_instance() {
        let inst = fixtures::three_chain_instance();
        let text = inst.to_json();
        let back = Instance::from_json(&text).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn parse_rejects_unknown_fields() {
        let text = r#"{"slot_length_s": 1.0, "vms": [], "chains": [], "extra": 3}"#;
        assert!(matches!(
            Instance::from_json(text),
            Err(InstanceError::Parse(_))
        ));
    }

    #[test]
    fn unservable_kind_is_rejected() {
        let err = Instance::new(
            vec![vm(1, 1.0, &[1, 2])],
            vec![chain(1, &[(1, 1.0), (7, 1.0)])],
            1.0,
            None,
        )
        .unwrap_err();
        match err {
            InstanceError::UnservableKind { chain, step, kind } => {
                assert_eq!((chain, step, kind), (1, 2, 7));
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn bad_ids_and_values_are_rejected() {
        assert!(matches!(
            Instance::new(
                vec![vm(1, 1.0, &[1]), vm(3, 1.0, &[1])],
                vec![],
                1.0,
                None
            ),
            Err(InstanceError::BadVmIds(_))
        ));
        assert!(matches!(
            Instance::new(vec![vm(1, 0.0, &[1])], vec![], 1.0, None),
            Err(InstanceError::BadRate { .. })
        ));
        assert!(matches!(
            Instance::new(vec![vm(1, 1.0, &[1])], vec![chain(2, &[(1, 1.0)])], 1.0, None),
            Err(InstanceError::BadChainIds(_))
        ));
        assert!(matches!(
            Instance::new(
                vec![vm(1, 1.0, &[1])],
                vec![chain(1, &[(1, -2.0)])],
                1.0,
                None
            ),
            Err(InstanceError::BadWorkload { .. })
        ));
        assert!(matches!(
            Instance::new(vec![vm(1, 1.0, &[1])], vec![chain(1, &[])], 1.0, None),
            Err(InstanceError::EmptyChain { .. })
        ));
        assert!(matches!(
            Instance::new(vec![], vec![], 0.0, None),
            Err(InstanceError::BadSlotLength(_))
        ));
    }

    #[test]
    fn vms_are_reordered_by_id_on_construction() {
        let inst = Instance::new(
            vec![vm(2, 1.0, &[1]), vm(1, 2.0, &[1])],
            vec![chain(1, &[(1, 1.0)])],
            1.0,
            None,
        )
        .unwrap();
        assert_eq!(inst.vm(1).unwrap().rate_mb_per_s, 2.0);
        assert_eq!(inst.vm(2).unwrap().rate_mb_per_s, 1.0);
    }
}
