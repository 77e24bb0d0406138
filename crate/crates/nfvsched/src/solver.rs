//! Three ways to attack a model: an exhaustive schedule search that proves
//! optimality on small instances, a complete bit-space enumeration for tiny
//! quadratic forms, and a simulated annealing sampler for everything else.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::instance::{Instance, InstanceError};
use crate::qubo::{Adjacency, Qubo, QuboError, QuboModel};
use crate::schedule::{Run, Schedule, ScheduleError};

/// Hard cap for `brute_force_bits`: 2^24 states is the most the complete
/// enumeration is allowed to walk.
pub const MAX_BRUTE_FORCE_BITS: usize = 24;

/// Default cap on the raw search-space estimate of the schedule oracle.
pub const DEFAULT_ORACLE_CAP: f64 = 1e15;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("{got} variables exceed the exhaustive bit search limit of {max}")]
    TooManyBits { got: usize, max: usize },
    #[error("schedule search space of about {estimate:.3e} placements exceeds the cap {cap:.3e}")]
    SearchSpaceTooLarge { estimate: f64, cap: f64 },
    #[error("invalid sampler parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Qubo(#[from] QuboError),
}

/// Sampler configuration. `None` for either beta resolves to a default
/// scaled by the mean magnitude of the nonzero coefficients: `0.1 / scale`
/// up to `10 / scale`. With `sweeps = 0` each read returns its random
/// starting point untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnealParams {
    pub reads: usize,
    pub sweeps: usize,
    pub beta_start: Option<f64>,
    pub beta_end: Option<f64>,
    pub seed: u64,
}

impl Default for AnnealParams {
    fn default() -> Self {
        AnnealParams {
            reads: 50,
            sweeps: 200,
            beta_start: None,
            beta_end: None,
            seed: 0,
        }
    }
}

/// One sampler answer: the bit vector, its energy recomputed from scratch,
/// and which read produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub bits: Vec<u8>,
    pub energy: f64,
    pub read: usize,
}

/// All reads of one sampler invocation, sorted by energy, then bits, then
/// read index.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub samples: Vec<Sample>,
}

impl SampleSet {
    pub fn best(&self) -> Option<&Sample> {
        self.samples.first()
    }
}

/// What the exhaustive schedule search found.
#[derive(Debug, Clone)]
pub struct OracleOutcome {
    pub schedule: Schedule,
    pub total_delay_s: f64,
}

/// Finds a minimum-total-delay feasible schedule by branch and bound over
/// per-step placements, walking chains in order and pruning with a
/// finish-time lower bound. Returns `None` when no feasible schedule fits
/// the grid. Refuses instances whose raw placement count exceeds `cap`
/// (default `DEFAULT_ORACLE_CAP`).
pub fn exhaustive_schedule_oracle(
    instance: &Instance,
    horizon: usize,
    cap: Option<f64>,
) -> Result<Option<OracleOutcome>, SolverError> {
    if horizon == 0 {
        return Err(SolverError::Schedule(ScheduleError::BadHorizon));
    }
    let cap = cap.unwrap_or(DEFAULT_ORACLE_CAP);
    let mut estimate = 1.0_f64;
    let mut steps = Vec::new();
    for chain in instance.chains() {
        for j in 1..=chain.steps.len() {
            let vms: Vec<(usize, usize)> = instance
                .capable_set(chain.id, j)?
                .iter()
                .map(|&m| Ok::<_, InstanceError>((m, instance.processing_slots(chain.id, j, m)?)))
                .collect::<Result<_, _>>()?;
            estimate *= (vms.len() * horizon) as f64;
            steps.push((chain.id, j, vms));
        }
    }
    if estimate > cap {
        return Err(SolverError::SearchSpaceTooLarge { estimate, cap });
    }

    // Fastest possible remaining slots from step k onward within the same
    // chain, for the lower bound.
    let mut suffix_min = vec![0usize; steps.len() + 1];
    for k in (0..steps.len()).rev() {
        let own_min = steps[k].2.iter().map(|&(_, t)| t).min().unwrap_or(0);
        let same_chain_next = steps
            .get(k + 1)
            .map_or(false, |next| next.0 == steps[k].0);
        suffix_min[k] = own_min + if same_chain_next { suffix_min[k + 1] } else { 0 };
    }

    struct Search<'a> {
        instance: &'a Instance,
        horizon: usize,
        steps: &'a [(usize, usize, Vec<(usize, usize)>)],
        suffix_min: &'a [usize],
        busy: Vec<Vec<bool>>,
        placed: Vec<Run>,
        best_delay_slots: Option<u64>,
        best_runs: Vec<Run>,
    }

    impl Search<'_> {
        fn dfs(&mut self, k: usize, earliest: usize, done_delay_slots: u64) {
            if k == self.steps.len() {
                if self
                    .best_delay_slots
                    .map_or(true, |best| done_delay_slots < best)
                {
                    self.best_delay_slots = Some(done_delay_slots);
                    self.best_runs = self.placed.clone();
                }
                return;
            }
            let (chain, step, ref vms) = self.steps[k];
            let last_of_chain = self
                .steps
                .get(k + 1)
                .map_or(true, |next| next.0 != chain);

            // Remaining chains cannot finish faster than their fastest
            // back-to-back run starting at slot 1.
            let mut future = 0u64;
            let mut kk = k + 1;
            while kk < self.steps.len() {
                if kk == k + 1 && self.steps[kk].0 == chain {
                    // Same chain: accounted for through this step's bound.
                    while kk < self.steps.len() && self.steps[kk].0 == chain {
                        kk += 1;
                    }
                    continue;
                }
                future += self.suffix_min[kk] as u64;
                let c = self.steps[kk].0;
                while kk < self.steps.len() && self.steps[kk].0 == c {
                    kk += 1;
                }
            }

            let mut candidates: Vec<(usize, usize, usize)> = Vec::new();
            for &(m, slots) in vms {
                for start in earliest..=self.horizon.saturating_sub(slots) {
                    if (start..start + slots).all(|t| !self.busy[m][t]) {
                        candidates.push((start + slots, m, start));
                    }
                }
            }
            candidates.sort_unstable();

            // Steps of this chain after the current one, at their fastest.
            let suffix_next = if last_of_chain {
                0
            } else {
                self.suffix_min[k + 1]
            };

            for (finish_mark, m, start) in candidates {
                // Finishing this run at finish_mark, the chain's delay is at
                // least finish_mark - 1 plus its fastest remaining work.
                let chain_floor = (finish_mark - 1 + suffix_next) as u64;
                if let Some(best) = self.best_delay_slots {
                    if done_delay_slots + chain_floor + future >= best {
                        // Candidates are ordered by finish time, so later
                        // ones only get worse.
                        break;
                    }
                }
                for t in start..finish_mark {
                    self.busy[m][t] = true;
                }
                self.placed.push(Run { chain, step, vm: m, start });
                if last_of_chain {
                    let delay = (finish_mark - 1) as u64;
                    self.dfs(k + 1, 1, done_delay_slots + delay);
                } else {
                    self.dfs(k + 1, finish_mark, done_delay_slots);
                }
                self.placed.pop();
                for t in start..finish_mark {
                    self.busy[m][t] = false;
                }
            }
        }
    }

    let mut search = Search {
        instance,
        horizon,
        steps: &steps,
        suffix_min: &suffix_min,
        busy: vec![vec![false; horizon + 2]; instance.num_vms() + 1],
        placed: Vec::new(),
        best_delay_slots: None,
        best_runs: Vec::new(),
    };
    search.dfs(0, 1, 0);

    let Some(delay_slots) = search.best_delay_slots else {
        return Ok(None);
    };
    let runs = search.best_runs.clone();
    let schedule = Schedule::from_runs(search.instance, horizon, &runs)?;
    let total_delay_s = delay_slots as f64 * instance.slot_length_s();
    debug_assert_eq!(schedule.total_delay(instance).unwrap(), total_delay_s);
    Ok(Some(OracleOutcome {
        schedule,
        total_delay_s,
    }))
}

/// Enumerates every bit vector of a small form in Gray-code order with
/// incremental energy updates. Returns the minimum-energy vector, breaking
/// exact ties towards the lexicographically smallest bits.
pub fn brute_force_bits(qubo: &Qubo) -> Result<(Vec<u8>, f64), SolverError> {
    let n = qubo.n_vars();
    if n > MAX_BRUTE_FORCE_BITS {
        return Err(SolverError::TooManyBits {
            got: n,
            max: MAX_BRUTE_FORCE_BITS,
        });
    }
    let adj = qubo.adjacency();
    let mut bits = vec![0u8; n];
    let mut cur = qubo.offset();
    let mut best_bits = bits.clone();
    let mut best = qubo.energy(&bits)?;

    for word in 1u64..(1u64 << n) {
        let v = word.trailing_zeros() as usize;
        let sign = if bits[v] == 0 { 1.0 } else { -1.0 };
        let mut local = adj.diag[v];
        for &(u, c) in &adj.neighbors[v] {
            if bits[u as usize] == 1 {
                local += c;
            }
        }
        cur += sign * local;
        bits[v] ^= 1;
        // Incremental sums drift, so resync periodically and re-evaluate
        // exactly before accepting a new champion or declaring a tie.
        if word & 0x3FFFF == 0 {
            cur = qubo.energy(&bits)?;
        }
        if cur <= best + 1e-4 {
            let exact = qubo.energy(&bits)?;
            if exact < best || (exact == best && bits < best_bits) {
                best = exact;
                best_bits = bits.clone();
            }
        }
    }
    Ok((best_bits, best))
}

/// Mixes a base seed with a stream index into an unrelated seed, so numbered
/// repeats (and the annealer's reads) get independent random streams that do
/// not depend on how many streams run in total.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut s = seed.wrapping_add((index + 1).wrapping_mul(0x9E3779B97F4A7C15));
    s = (s ^ (s >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    s = (s ^ (s >> 27)).wrapping_mul(0x94D049BB133111EB);
    s ^ (s >> 31)
}

fn mean_abs_coefficient(qubo: &Qubo) -> f64 {
    let entries = qubo.entries();
    if entries.is_empty() {
        return 1.0;
    }
    entries.iter().map(|&(_, _, c)| c.abs()).sum::<f64>() / entries.len() as f64
}

/// A bit assignment with the local field of every variable maintained
/// incrementally, so flip deltas cost O(1) and applying a flip costs
/// O(degree) instead of re-evaluating the whole quadratic form.
struct FlipWalk<'a> {
    adj: &'a Adjacency,
    bits: Vec<u8>,
    field: Vec<f64>,
}

impl<'a> FlipWalk<'a> {
    fn new(adj: &'a Adjacency, bits: Vec<u8>) -> FlipWalk<'a> {
        let mut field = adj.diag.clone();
        for (v, &b) in bits.iter().enumerate() {
            if b == 1 {
                for &(u, c) in &adj.neighbors[v] {
                    field[u as usize] += c;
                }
            }
        }
        FlipWalk { adj, bits, field }
    }

    /// Energy change that flipping bit `v` would cause.
    fn delta(&self, v: usize) -> f64 {
        if self.bits[v] == 0 {
            self.field[v]
        } else {
            -self.field[v]
        }
    }

    fn flip(&mut self, v: usize) {
        let sign = if self.bits[v] == 0 { 1.0 } else { -1.0 };
        self.bits[v] ^= 1;
        for &(u, c) in &self.adj.neighbors[v] {
            self.field[u as usize] += sign * c;
        }
    }
}

/// Uphill moves with `beta * delta` above this are rejected without drawing
/// randomness: their acceptance probability is below 4e-18.
const REJECT_CUTOFF: f64 = 40.0;

/// Single-bit-flip Metropolis annealing with a geometric inverse-temperature
/// schedule. Each read starts from its own random assignment and walks
/// `sweeps` full passes over the variables; reads are independent streams
/// derived from the seed, so the first k reads of a larger invocation match
/// a smaller one exactly. Reported energies are recomputed from scratch.
pub fn simulated_annealing(qubo: &Qubo, params: &AnnealParams) -> Result<SampleSet, SolverError> {
    if params.reads == 0 {
        return Err(SolverError::InvalidParams("reads must be >= 1".into()));
    }
    let scale = mean_abs_coefficient(qubo);
    let beta_start = params.beta_start.unwrap_or(0.1 / scale);
    let beta_end = params.beta_end.unwrap_or(10.0 / scale);
    if !(beta_start.is_finite() && beta_end.is_finite() && beta_start > 0.0) {
        return Err(SolverError::InvalidParams(format!(
            "betas must be positive and finite, got {beta_start} and {beta_end}"
        )));
    }
    if beta_start > beta_end {
        return Err(SolverError::InvalidParams(format!(
            "beta_start {beta_start} exceeds beta_end {beta_end}"
        )));
    }

    let betas: Vec<f64> = if params.sweeps <= 1 {
        vec![beta_start; params.sweeps]
    } else {
        let ratio = beta_end / beta_start;
        (0..params.sweeps)
            .map(|k| beta_start * ratio.powf(k as f64 / (params.sweeps - 1) as f64))
            .collect()
    };

    let n = qubo.n_vars();
    let adj = qubo.adjacency();
    let mut samples: Vec<Sample> = (0..params.reads)
        .into_par_iter()
        .map(|read| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, read as u64));
            let init: Vec<u8> = (0..n).map(|_| rng.random::<bool>() as u8).collect();
            let mut walk = FlipWalk::new(&adj, init);
            for &beta in &betas {
                for v in 0..n {
                    let delta = walk.delta(v);
                    let accept = if delta <= 0.0 {
                        true
                    } else {
                        let scaled = beta * delta;
                        scaled <= REJECT_CUTOFF && rng.random::<f64>() < (-scaled).exp()
                    };
                    if accept {
                        walk.flip(v);
                    }
                }
            }
            let bits = walk.bits;
            let energy = qubo.energy(&bits).expect("sampler bits are always binary");
            Sample { bits, energy, read }
        })
        .collect();

    samples.sort_by(|a, b| {
        a.energy
            .total_cmp(&b.energy)
            .then_with(|| a.bits.cmp(&b.bits))
            .then_with(|| a.read.cmp(&b.read))
    });
    Ok(SampleSet { samples })
}

/// Decodes samples in energy order and returns the first whose schedule
/// tensors pass the feasibility check, with its total delay. Slack bits play
/// no part in feasibility.
pub fn best_feasible(
    model: &QuboModel,
    samples: &SampleSet,
) -> Result<Option<(Schedule, f64)>, SolverError> {
    for sample in &samples.samples {
        let (schedule, _) = model.decode(&sample.bits)?;
        if schedule.check_feasibility(model.instance())?.feasible() {
            let delay = schedule.total_delay(model.instance())?;
            return Ok(Some((schedule, delay)));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::instance::{FunctionStep, ServiceChain, VmSpec};
    use crate::qubo::{build_qubo, PenaltyConfig};

    fn single_step_instance(rates: &[f64], workload: f64, horizon: usize) -> Instance {
        let vms = rates
            .iter()
            .enumerate()
            .map(|(k, &rate)| VmSpec {
                id: k + 1,
                rate_mb_per_s: rate,
                capabilities: [1].into_iter().collect(),
            })
            .collect();
        Instance::new(
            vms,
            vec![ServiceChain {
                id: 1,
                steps: vec![FunctionStep {
                    kind: 1,
                    workload_mb: workload,
                }],
            }],
            1.0,
            Some(horizon),
        )
        .unwrap()
    }

    #[test]
    fn oracle_solves_single_step_instances() {
        // Two VMs, the faster one needs 2 slots: optimum is starting there
        // at slot 1 for a delay of 2 seconds.
        let inst = single_step_instance(&[0.5, 0.25], 1.0, 6);
        let out = exhaustive_schedule_oracle(&inst, 6, None).unwrap().unwrap();
        assert_eq!(out.total_delay_s, 2.0);
        assert!(out
            .schedule
            .check_feasibility(&inst)
            .unwrap()
            .feasible());
    }

    #[test]
    fn oracle_returns_none_when_nothing_fits() {
        // One slot of work needs its finish marker at slot 2; a 1-slot grid
        // cannot hold it.
        let inst = single_step_instance(&[1.0], 1.0, 1);
        assert!(exhaustive_schedule_oracle(&inst, 1, None)
            .unwrap()
            .is_none());
    }

    #[test]
    fn oracle_respects_the_search_cap() {
        let inst = fixtures::three_chain_instance();
        let err = exhaustive_schedule_oracle(&inst, 20, Some(10.0)).unwrap_err();
        assert!(matches!(err, SolverError::SearchSpaceTooLarge { .. }));
    }

    #[test]
    fn oracle_optimum_on_the_example() {
        let inst = fixtures::three_chain_instance();
        let out = exhaustive_schedule_oracle(&inst, 20, None).unwrap().unwrap();
        assert_eq!(out.total_delay_s, 20.0);
        assert!(out
            .schedule
            .check_feasibility(&inst)
            .unwrap()
            .feasible());
    }

    #[test]
    fn brute_force_finds_the_unique_minimum() {
        let q = Qubo::new(
            3,
            [
                (0, 0, 2.0),
                (1, 1, -1.0),
                (2, 2, 3.0),
                (0, 1, -4.0),
                (1, 2, 1.0),
            ],
            0.5,
        )
        .unwrap();
        // Energies by hand: picking bits 0 and 1 gives 2 - 1 - 4 = -3.
        let (bits, energy) = brute_force_bits(&q).unwrap();
        assert_eq!(bits, vec![1, 1, 0]);
        assert_eq!(energy, -2.5);
    }

    #[test]
    fn brute_force_breaks_ties_lexicographically() {
        // (b0 + b1 - 1)^2: both single-bit states reach 0.
        let q = Qubo::new(2, [(0, 0, -1.0), (1, 1, -1.0), (0, 1, 2.0)], 1.0).unwrap();
        let (bits, energy) = brute_force_bits(&q).unwrap();
        assert_eq!(energy, 0.0);
        assert_eq!(bits, vec![0, 1]);
    }

    #[test]
    fn brute_force_rejects_wide_problems() {
        let q = Qubo::new(25, [], 0.0).unwrap();
        assert!(matches!(
            brute_force_bits(&q),
            Err(SolverError::TooManyBits { got: 25, max: 24 })
        ));
    }

    #[test]
    fn brute_force_matches_the_model_optimum() {
        let inst = single_step_instance(&[1.0], 1.0, 2);
        let model = build_qubo(&inst, 2, PenaltyConfig::default_for(&inst, 2)).unwrap();
        let (bits, energy) = brute_force_bits(model.qubo()).unwrap();
        assert_eq!(energy, 1.0);
        let (sched, slacks) = model.decode(&bits).unwrap();
        assert!(sched.check_feasibility(&inst).unwrap().feasible());
        assert_eq!(sched.canonical_slacks(&inst).unwrap(), slacks);
    }

    #[test]
    fn annealing_is_deterministic_per_seed() {
        let inst = single_step_instance(&[1.0], 2.0, 4);
        let model = build_qubo(&inst, 4, PenaltyConfig::default_for(&inst, 4)).unwrap();
        let params = AnnealParams {
            reads: 8,
            sweeps: 50,
            seed: 42,
            ..AnnealParams::default()
        };
        let a = simulated_annealing(model.qubo(), &params).unwrap();
        let b = simulated_annealing(model.qubo(), &params).unwrap();
        assert_eq!(a, b);
        let c = simulated_annealing(
            model.qubo(),
            &AnnealParams {
                seed: 43,
                ..params
            },
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn extra_reads_extend_rather_than_reshuffle() {
        let inst = single_step_instance(&[1.0, 0.5], 1.0, 3);
        let model = build_qubo(&inst, 3, PenaltyConfig::default_for(&inst, 3)).unwrap();
        let base = AnnealParams {
            reads: 4,
            sweeps: 30,
            seed: 9,
            ..AnnealParams::default()
        };
        let small = simulated_annealing(model.qubo(), &base).unwrap();
        let large = simulated_annealing(
            model.qubo(),
            &AnnealParams {
                reads: 12,
                ..base
            },
        )
        .unwrap();
        for sample in &small.samples {
            let twin = large
                .samples
                .iter()
                .find(|s| s.read == sample.read)
                .unwrap();
            assert_eq!(twin.bits, sample.bits);
        }
    }

    #[test]
    fn annealing_solves_the_tiny_model() {
        let inst = single_step_instance(&[1.0], 1.0, 2);
        let model = build_qubo(&inst, 2, PenaltyConfig::default_for(&inst, 2)).unwrap();
        let params = AnnealParams {
            reads: 20,
            sweeps: 100,
            seed: 1,
            ..AnnealParams::default()
        };
        let set = simulated_annealing(model.qubo(), &params).unwrap();
        assert_eq!(set.best().unwrap().energy, 1.0);
        let (sched, delay) = best_feasible(&model, &set).unwrap().unwrap();
        assert_eq!(delay, 1.0);
        assert!(sched.check_feasibility(&inst).unwrap().feasible());
    }

    #[test]
    fn zero_sweeps_returns_random_assignments() {
        let inst = single_step_instance(&[1.0], 1.0, 2);
        let model = build_qubo(&inst, 2, PenaltyConfig::default_for(&inst, 2)).unwrap();
        let params = AnnealParams {
            reads: 3,
            sweeps: 0,
            seed: 5,
            ..AnnealParams::default()
        };
        let set = simulated_annealing(model.qubo(), &params).unwrap();
        assert_eq!(set.samples.len(), 3);
        for s in &set.samples {
            assert_eq!(s.energy, model.energy(&s.bits).unwrap());
        }
    }

    #[test]
    fn flip_deltas_match_scratch_energy_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 60u32;
        let mut terms = Vec::new();
        for i in 0..n {
            terms.push((i, i, rng.random_range(-2.0..2.0)));
            for j in (i + 1)..n {
                if rng.random::<f64>() < 0.15 {
                    terms.push((i, j, rng.random_range(-2.0..2.0)));
                }
            }
        }
        let qubo = Qubo::new(n as usize, terms, 0.5).unwrap();
        let adj = qubo.adjacency();
        let init: Vec<u8> = (0..n).map(|_| rng.random::<bool>() as u8).collect();
        let mut walk = FlipWalk::new(&adj, init.clone());
        let mut bits = init;
        let mut before = qubo.energy(&bits).unwrap();
        for _ in 0..10_000 {
            let v = rng.random_range(0..n as usize);
            let delta = walk.delta(v);
            bits[v] ^= 1;
            let after = qubo.energy(&bits).unwrap();
            assert!(
                (delta - (after - before)).abs() <= 1e-9,
                "incremental delta drifted: {delta} vs {}",
                after - before
            );
            walk.flip(v);
            before = after;
        }
    }

    #[test]
    fn best_feasible_ignores_infeasible_samples() {
        let inst = single_step_instance(&[1.0], 1.0, 2);
        let model = build_qubo(&inst, 2, PenaltyConfig::default_for(&inst, 2)).unwrap();
        let zeros = Sample {
            bits: vec![0; model.qubo().n_vars()],
            energy: model.qubo().offset(),
            read: 0,
        };
        let set = SampleSet {
            samples: vec![zeros],
        };
        assert!(best_feasible(&model, &set).unwrap().is_none());
    }

    #[test]
    fn bad_params_are_rejected() {
        let q = Qubo::new(2, [(0, 1, 1.0)], 0.0).unwrap();
        let mut params = AnnealParams {
            reads: 0,
            ..AnnealParams::default()
        };
        assert!(simulated_annealing(&q, &params).is_err());
        params.reads = 1;
        params.beta_start = Some(5.0);
        params.beta_end = Some(1.0);
        assert!(simulated_annealing(&q, &params).is_err());
    }
}
