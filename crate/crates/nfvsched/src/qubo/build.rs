//! Compiles an instance into the quadratic model: the delay objective plus
//! one penalty per constraint family. Equality constraints become squared
//! expressions, at-most-one constraints become pairwise products, and the
//! three inequality families each get a binary slack per occurrence.

use std::collections::HashMap;

use crate::instance::Instance;
use crate::qubo::form::{Qubo, QuboError};
use crate::qubo::penalty::PenaltyConfig;
use crate::qubo::varmap::VariableMap;
use crate::schedule::{Layout, Schedule, SlackAssignment};

struct Accum {
    map: HashMap<(u32, u32), f64>,
    offset: f64,
}

impl Accum {
    fn new() -> Accum {
        Accum {
            map: HashMap::new(),
            offset: 0.0,
        }
    }

    fn add(&mut self, u: usize, v: usize, c: f64) {
        let key = if u <= v {
            (u as u32, v as u32)
        } else {
            (v as u32, u as u32)
        };
        *self.map.entry(key).or_insert(0.0) += c;
    }

    fn add_linear(&mut self, u: usize, c: f64) {
        self.add(u, u, c);
    }

    /// `weight * (sum of a_k * b_k + constant)^2` over distinct binary
    /// variables, using `b^2 = b`.
    fn add_squared(&mut self, terms: &[(usize, f64)], constant: f64, weight: f64) {
        for (k, &(u, a)) in terms.iter().enumerate() {
            self.add_linear(u, weight * a * (a + 2.0 * constant));
            for &(v, b) in &terms[k + 1..] {
                debug_assert_ne!(u, v, "squared expression repeats a variable");
                self.add(u, v, weight * 2.0 * a * b);
            }
        }
        self.offset += weight * constant * constant;
    }
}

/// The compiled model: the quadratic form together with everything needed to
/// translate between bit vectors and schedules.
#[derive(Debug, Clone, PartialEq)]
pub struct QuboModel {
    instance: Instance,
    varmap: VariableMap,
    config: PenaltyConfig,
    qubo: Qubo,
}

impl QuboModel {
    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn varmap(&self) -> &VariableMap {
        &self.varmap
    }

    pub fn config(&self) -> &PenaltyConfig {
        &self.config
    }

    pub fn qubo(&self) -> &Qubo {
        &self.qubo
    }

    pub fn horizon(&self) -> usize {
        self.varmap.horizon()
    }

    pub fn energy(&self, bits: &[u8]) -> Result<f64, QuboError> {
        self.qubo.energy(bits)
    }

    /// Concatenates a schedule's tensors and a slack assignment into the
    /// model's bit vector.
    pub fn encode(
        &self,
        schedule: &Schedule,
        slacks: &SlackAssignment,
    ) -> Result<Vec<u8>, QuboError> {
        if **schedule.layout() != **self.varmap.layout()
            || schedule.horizon() != self.varmap.horizon()
        {
            return Err(QuboError::ShapeMismatch(
                "schedule was built for a different instance or horizon".into(),
            ));
        }
        if slacks.layout != *self.varmap.layout() || slacks.horizon != self.varmap.horizon() {
            return Err(QuboError::ShapeMismatch(
                "slacks were built for a different instance or horizon".into(),
            ));
        }
        let (x, y, z, p) = schedule.tensors();
        let mut bits = Vec::with_capacity(self.varmap.len());
        for block in [x, y, z, p, &slacks.assign[..], &slacks.run[..], &slacks.seq[..]] {
            bits.extend(block.iter().map(|&b| b as u8));
        }
        debug_assert_eq!(bits.len(), self.varmap.len());
        Ok(bits)
    }

    /// Splits a bit vector back into a schedule and its slack assignment.
    pub fn decode(&self, bits: &[u8]) -> Result<(Schedule, SlackAssignment), QuboError> {
        if bits.len() != self.varmap.len() {
            return Err(QuboError::WrongBitCount {
                got: bits.len(),
                want: self.varmap.len(),
            });
        }
        if let Some(index) = bits.iter().position(|&b| b > 1) {
            return Err(QuboError::NonBinaryBit {
                index,
                value: bits[index],
            });
        }
        let layout = self.varmap.layout().clone();
        let h = self.varmap.horizon();
        let a_total = layout.total_assign();
        let s_total = layout.total_seq();
        let mut cursor = 0;
        let mut take = |len: usize| {
            let slice: Vec<bool> = bits[cursor..cursor + len].iter().map(|&b| b == 1).collect();
            cursor += len;
            slice
        };
        let x = take(a_total);
        let y = take(a_total * h);
        let z = take(a_total * h);
        let p = take(a_total * h);
        let assign = take(a_total * h);
        let run = take(a_total * h);
        let seq = take(s_total * h);
        let schedule = Schedule::from_raw_tensors(layout.clone(), h, x, y, z, p);
        let slacks = SlackAssignment {
            layout,
            horizon: h,
            assign,
            run,
            seq,
        };
        Ok((schedule, slacks))
    }

    /// Parses an externally sampled result file and decodes it, returning
    /// the schedule, its slack bits, and the evaluated energy.
    pub fn import_result(
        &self,
        text: &str,
    ) -> Result<(Schedule, SlackAssignment, f64), QuboError> {
        let bits = self.qubo.parse_result_text(text)?;
        let energy = self.qubo.energy(&bits)?;
        let (schedule, slacks) = self.decode(&bits)?;
        Ok((schedule, slacks, energy))
    }
}

/// Builds the quadratic model for an instance on a fixed grid.
pub fn build_qubo(
    instance: &Instance,
    horizon: usize,
    config: PenaltyConfig,
) -> Result<QuboModel, QuboError> {
    if horizon == 0 {
        return Err(QuboError::BadHorizon);
    }
    config.validate()?;
    let layout = Layout::new(instance);
    let vm = VariableMap::new(layout.clone(), horizon);
    let h = horizon;
    let dt = instance.slot_length_s();
    let mut acc = Accum::new();

    // Objective: each chain's delay, read off the finish marker of its last
    // step. A marker at slot t means t - 1 elapsed slots.
    for chain in instance.chains() {
        let sv = layout
            .step_vars(chain.id, chain.steps.len())
            .expect("validated chain");
        for k in 0..sv.vms.len() {
            let a = sv.base + k;
            for tz in 0..h {
                acc.add_linear(vm.p_at(a, tz), tz as f64 * dt);
            }
        }
    }

    // Every step is assigned to exactly one VM.
    let w = config.assign_once_weight();
    for sv in &layout.steps {
        let terms: Vec<(usize, f64)> = (0..sv.vms.len())
            .map(|k| (vm.x_at(sv.base + k), 1.0))
            .collect();
        acc.add_squared(&terms, -1.0, w);
    }

    // Per (step, vm): the start count equals the assignment bit.
    let w = config.start_count_matches_assign_weight();
    for sv in &layout.steps {
        for k in 0..sv.vms.len() {
            let a = sv.base + k;
            let mut terms = vec![(vm.x_at(a), 1.0)];
            terms.extend((0..h).map(|tz| (vm.z_at(a, tz), -1.0)));
            acc.add_squared(&terms, 0.0, w);
        }
    }

    // A VM serves at most one step per slot: pairwise products of busy bits
    // across the steps sharing that VM.
    let w = config.vm_slot_capacity_weight();
    for m in 1..=instance.num_vms() {
        let sharing: Vec<usize> = layout
            .steps
            .iter()
            .filter_map(|sv| sv.vms.binary_search(&m).ok().map(|k| sv.base + k))
            .collect();
        for tz in 0..h {
            for (ka, &a) in sharing.iter().enumerate() {
                for &b in &sharing[ka + 1..] {
                    acc.add(vm.y_at(a, tz), vm.y_at(b, tz), w);
                }
            }
        }
    }

    // Busy slots only on the assigned VM: x - y - slack = 0.
    let w = config.busy_within_assign_weight();
    for a in 0..layout.total_assign() {
        for tz in 0..h {
            acc.add_squared(
                &[
                    (vm.x_at(a), 1.0),
                    (vm.y_at(a, tz), -1.0),
                    (vm.assign_slack_at(a, tz), -1.0),
                ],
                0.0,
                w,
            );
        }
    }

    // The busy-slot count equals the processing time when assigned.
    let w = config.busy_duration_weight();
    for sv in &layout.steps {
        for (k, &m) in sv.vms.iter().enumerate() {
            let a = sv.base + k;
            let slots = instance
                .processing_slots(sv.chain, sv.step, m)
                .expect("capable by construction") as f64;
            let mut terms: Vec<(usize, f64)> =
                (0..h).map(|tz| (vm.y_at(a, tz), 1.0)).collect();
            if config.unconditional_duration {
                acc.add_squared(&terms, -slots, w);
            } else {
                terms.push((vm.x_at(a), -slots));
                acc.add_squared(&terms, 0.0, w);
            }
        }
    }

    // Start and finish markers exclude each other per slot.
    let w = config.start_finish_exclusive_weight();
    for a in 0..layout.total_assign() {
        for tz in 0..h {
            acc.add(vm.z_at(a, tz), vm.p_at(a, tz), w);
        }
    }

    // Busy intervals open at a start marker and close at a finish marker:
    // y(t-1) - y(t) + z(t) - p(t) = 0, with y(0) reading as 0.
    let w = config.run_boundary_weight();
    for a in 0..layout.total_assign() {
        for tz in 0..h {
            let mut terms = Vec::with_capacity(4);
            if tz >= 1 {
                terms.push((vm.y_at(a, tz - 1), 1.0));
            }
            terms.push((vm.y_at(a, tz), -1.0));
            terms.push((vm.z_at(a, tz), 1.0));
            terms.push((vm.p_at(a, tz), -1.0));
            acc.add_squared(&terms, 0.0, w);
        }
    }

    // A busy slot is covered by a start within the last `slots` slots:
    // y - window - slack = 0.
    let w = config.run_contiguity_weight();
    for sv in &layout.steps {
        for (k, &m) in sv.vms.iter().enumerate() {
            let a = sv.base + k;
            let slots = instance
                .processing_slots(sv.chain, sv.step, m)
                .expect("capable by construction");
            for tz in 0..h {
                let mut terms = vec![(vm.y_at(a, tz), 1.0)];
                terms.extend(
                    (0..slots)
                        .filter_map(|alpha| tz.checked_sub(alpha))
                        .map(|ttz| (vm.z_at(a, ttz), -1.0)),
                );
                terms.push((vm.run_slack_at(a, tz), -1.0));
                acc.add_squared(&terms, 0.0, w);
            }
        }
    }

    // A step starts only once its predecessor's finish marker has fired:
    // prefix(p) - z - slack = 0 per successor VM and slot.
    let w = config.precedence_weight();
    for sq in &layout.seqs {
        let prev = layout
            .step_vars(sq.chain, sq.step)
            .expect("predecessor exists");
        let next = layout
            .step_vars(sq.chain, sq.step + 1)
            .expect("successor exists");
        for (k2, &m2) in sq.vms.iter().enumerate() {
            let a2 = next.base + next.vms.binary_search(&m2).expect("same capable set");
            for tz in 0..h {
                let mut terms = Vec::with_capacity(prev.vms.len() * (tz + 1) + 2);
                for k in 0..prev.vms.len() {
                    let ap = prev.base + k;
                    terms.extend((0..=tz).map(|ttz| (vm.p_at(ap, ttz), 1.0)));
                }
                terms.push((vm.z_at(a2, tz), -1.0));
                terms.push((vm.seq_slack_at(sq.base + k2, tz), -1.0));
                acc.add_squared(&terms, 0.0, w);
            }
        }
    }

    // Every step starts exactly once and finishes exactly once.
    let w_start = config.single_start_weight();
    let w_finish = config.single_finish_weight();
    for sv in &layout.steps {
        let starts: Vec<(usize, f64)> = (0..sv.vms.len())
            .flat_map(|k| (0..h).map(move |tz| (sv.base + k, tz)))
            .map(|(a, tz)| (vm.z_at(a, tz), 1.0))
            .collect();
        acc.add_squared(&starts, -1.0, w_start);
        let finishes: Vec<(usize, f64)> = (0..sv.vms.len())
            .flat_map(|k| (0..h).map(move |tz| (sv.base + k, tz)))
            .map(|(a, tz)| (vm.p_at(a, tz), 1.0))
            .collect();
        acc.add_squared(&finishes, -1.0, w_finish);
    }

    let qubo = Qubo::new(
        vm.len(),
        acc.map.into_iter().map(|((i, j), c)| (i, j, c)),
        acc.offset,
    )?;
    Ok(QuboModel {
        instance: instance.clone(),
        varmap: vm,
        config,
        qubo,
    })
}
