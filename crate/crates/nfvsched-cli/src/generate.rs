//! Random instance generation for benchmark cases.

use std::collections::BTreeSet;

use nfvsched::instance::{FunctionStep, Instance, ServiceChain, VmSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GenerateError {
    #[error("generator parameters: {0}")]
    BadParams(String),
    #[error("no valid instance found in {attempts} attempts for seed {seed}")]
    Exhausted { seed: u64, attempts: usize },
}

/// Shape of a generated instance. Capabilities are drawn per (VM, kind) with
/// `capability_density`, then patched so every kind keeps at least one
/// capable VM; workloads are uniform in `workload_range`; VM rates cycle
/// through `rates`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorParams {
    pub chains: usize,
    pub steps: usize,
    pub vms: usize,
    pub kinds: usize,
    pub workload_range: (f64, f64),
    pub rates: Vec<f64>,
    pub capability_density: f64,
    #[serde(default = "default_slot_length")]
    pub slot_length_s: f64,
}

fn default_slot_length() -> f64 {
    1.0
}

impl GeneratorParams {
    fn validate(&self) -> Result<(), GenerateError> {
        let bad = |msg: &str| Err(GenerateError::BadParams(msg.to_string()));
        if self.chains == 0 || self.steps == 0 || self.vms == 0 || self.kinds == 0 {
            return bad("chains, steps, vms and kinds must all be >= 1");
        }
        let (lo, hi) = self.workload_range;
        if !(lo.is_finite() && hi.is_finite() && 0.0 < lo && lo <= hi) {
            return bad("workload_range must satisfy 0 < low <= high");
        }
        if self.rates.is_empty() || self.rates.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return bad("rates must be nonempty and positive");
        }
        if !(0.0..=1.0).contains(&self.capability_density) {
            return bad("capability_density must lie in 0..=1");
        }
        if !(self.slot_length_s.is_finite() && self.slot_length_s > 0.0) {
            return bad("slot_length_s must be positive");
        }
        Ok(())
    }
}

/// Draws an instance from the parameters, deterministically per seed.
pub fn generate_case(params: &GeneratorParams, seed: u64) -> Result<Instance, GenerateError> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let attempts = 64;
    for _ in 0..attempts {
        let mut capabilities: Vec<BTreeSet<usize>> = (0..params.vms)
            .map(|_| {
                (1..=params.kinds)
                    .filter(|_| rng.random::<f64>() < params.capability_density)
                    .collect()
            })
            .collect();
        // Unserved kinds get a uniformly drawn host so every generated step
        // stays schedulable.
        for kind in 1..=params.kinds {
            if !capabilities.iter().any(|c| c.contains(&kind)) {
                let vm = rng.random_range(0..params.vms);
                capabilities[vm].insert(kind);
            }
        }
        if capabilities.iter().any(|c| c.is_empty()) {
            continue;
        }
        let vms: Vec<VmSpec> = capabilities
            .into_iter()
            .enumerate()
            .map(|(k, caps)| VmSpec {
                id: k + 1,
                rate_mb_per_s: params.rates[k % params.rates.len()],
                capabilities: caps,
            })
            .collect();
        let chains: Vec<ServiceChain> = (1..=params.chains)
            .map(|id| ServiceChain {
                id,
                steps: (0..params.steps)
                    .map(|_| FunctionStep {
                        kind: rng.random_range(1..=params.kinds),
                        workload_mb: rng
                            .random_range(params.workload_range.0..=params.workload_range.1),
                    })
                    .collect(),
            })
            .collect();
        match Instance::new(vms, chains, params.slot_length_s, None) {
            Ok(instance) => return Ok(instance),
            Err(_) => continue,
        }
    }
    Err(GenerateError::Exhausted { seed, attempts })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> GeneratorParams {
        GeneratorParams {
            chains: 2,
            steps: 2,
            vms: 2,
            kinds: 3,
            workload_range: (0.5, 3.0),
            rates: vec![1.0, 1.5],
            capability_density: 0.6,
            slot_length_s: 1.0,
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let a = generate_case(&params(), 7).unwrap();
        let b = generate_case(&params(), 7).unwrap();
        assert_eq!(a, b);
        let c = generate_case(&params(), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn generated_instances_have_the_requested_shape() {
        for seed in 0..20 {
            let inst = generate_case(&params(), seed).unwrap();
            assert_eq!(inst.num_vms(), 2);
            assert_eq!(inst.num_chains(), 2);
            for chain in inst.chains() {
                assert_eq!(chain.steps.len(), 2);
                for (jz, step) in chain.steps.iter().enumerate() {
                    assert!((0.5..=3.0).contains(&step.workload_mb));
                    assert!(!inst.capable_set(chain.id, jz + 1).unwrap().is_empty());
                }
            }
        }
    }

    #[test]
    fn bad_params_are_rejected() {
        let mut p = params();
        p.capability_density = 1.4;
        assert!(matches!(
            generate_case(&p, 1),
            Err(GenerateError::BadParams(_))
        ));
        let mut p = params();
        p.workload_range = (0.0, 1.0);
        assert!(generate_case(&p, 1).is_err());
        let mut p = params();
        p.vms = 0;
        assert!(generate_case(&p, 1).is_err());
    }
}
