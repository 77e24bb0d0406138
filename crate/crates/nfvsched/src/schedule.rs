//! Schedules on the discrete time grid, stored as the four binary tensors the
//! optimization model works with, plus the feasibility checker, delay
//! metrics, canonical slack values and a text Gantt rendering.
//!
//! Tensor semantics, per chain `i`, step `j`, capable VM `m` and slot `t`:
//!
//! * `x[i,j,m]`     step `j` of chain `i` is assigned to VM `m`
//! * `y[i,j,m,t]`   VM `m` is busy with that step during slot `t`
//! * `z[i,j,m,t]`   the run starts at slot `t`
//! * `p[i,j,m,t]`   the finish marker: fires one slot after the last busy one
//!
//! Variables only exist for capable VMs; incapable combinations are not
//! representable at all.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{Instance, InstanceError};

/// Per-step variable block: the capable VMs of one `(chain, step)` pair and
/// the block's offset into the assignment-indexed space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct StepVars {
    pub(crate) chain: usize,
    pub(crate) step: usize,
    pub(crate) vms: Vec<usize>,
    pub(crate) base: usize,
}

/// Per-transition variable block for the precedence slacks: the pair
/// `(chain, step)` names the predecessor step, `vms` are the successor
/// step's capable VMs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct SeqVars {
    pub(crate) chain: usize,
    pub(crate) step: usize,
    pub(crate) vms: Vec<usize>,
    pub(crate) base: usize,
}

/// The variable layout an instance induces: which `(chain, step, vm)`
/// combinations exist and where they sit in flat index space. Shared between
/// schedules, the variable map and the solvers so encodings agree by
/// construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub(crate) steps: Vec<StepVars>,
    pub(crate) chain_first_step: Vec<usize>,
    pub(crate) total_assign: usize,
    pub(crate) seqs: Vec<SeqVars>,
    pub(crate) total_seq: usize,
}

impl Layout {
    pub fn new(instance: &Instance) -> Arc<Layout> {
        let mut steps = Vec::new();
        let mut chain_first_step = Vec::with_capacity(instance.num_chains());
        let mut base = 0;
        for chain in instance.chains() {
            chain_first_step.push(steps.len());
            for j in 1..=chain.steps.len() {
                let vms = instance
                    .capable_set(chain.id, j)
                    .expect("validated instance")
                    .to_vec();
                let len = vms.len();
                steps.push(StepVars {
                    chain: chain.id,
                    step: j,
                    vms,
                    base,
                });
                base += len;
            }
        }
        let total_assign = base;

        let mut seqs = Vec::new();
        let mut base = 0;
        for chain in instance.chains() {
            for j in 1..chain.steps.len() {
                let vms = instance
                    .capable_set(chain.id, j + 1)
                    .expect("validated instance")
                    .to_vec();
                let len = vms.len();
                seqs.push(SeqVars {
                    chain: chain.id,
                    step: j,
                    vms,
                    base,
                });
                base += len;
            }
        }
        let total_seq = base;

        Arc::new(Layout {
            steps,
            chain_first_step,
            total_assign,
            seqs,
            total_seq,
        })
    }

    /// Number of `(chain, step, vm)` assignment combinations.
    pub fn total_assign(&self) -> usize {
        self.total_assign
    }

    /// Number of `(chain, transition, successor vm)` combinations.
    pub fn total_seq(&self) -> usize {
        self.total_seq
    }

    pub(crate) fn step_vars(&self, chain: usize, step: usize) -> Option<&StepVars> {
        let first = *self.chain_first_step.get(chain.checked_sub(1)?)?;
        let sv = self.steps.get(first + step.checked_sub(1)?)?;
        (sv.chain == chain && sv.step == step).then_some(sv)
    }

    /// Flat index of `(chain, step, vm)` in assignment space.
    pub(crate) fn assign_slot(&self, chain: usize, step: usize, vm: usize) -> Option<usize> {
        let sv = self.step_vars(chain, step)?;
        let k = sv.vms.binary_search(&vm).ok()?;
        Some(sv.base + k)
    }

    /// Inverse of `assign_slot`.
    pub(crate) fn describe_assign(&self, idx: usize) -> (usize, usize, usize) {
        let pos = self.steps.partition_point(|sv| sv.base <= idx) - 1;
        let sv = &self.steps[pos];
        (sv.chain, sv.step, sv.vms[idx - sv.base])
    }

    pub(crate) fn seq_slot(&self, chain: usize, step: usize, vm: usize) -> Option<usize> {
        let sv = self
            .seqs
            .iter()
            .find(|sv| sv.chain == chain && sv.step == step)?;
        let k = sv.vms.binary_search(&vm).ok()?;
        Some(sv.base + k)
    }

    pub(crate) fn describe_seq(&self, idx: usize) -> (usize, usize, usize) {
        let pos = self.seqs.partition_point(|sv| sv.base <= idx) - 1;
        let sv = &self.seqs[pos];
        (sv.chain, sv.step, sv.vms[idx - sv.base])
    }
}

/// One tensor coordinate, for point reads and writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    X {
        chain: usize,
        step: usize,
        vm: usize,
    },
    Y {
        chain: usize,
        step: usize,
        vm: usize,
        slot: usize,
    },
    Z {
        chain: usize,
        step: usize,
        vm: usize,
        slot: usize,
    },
    P {
        chain: usize,
        step: usize,
        vm: usize,
        slot: usize,
    },
}

/// One contiguous run: step `j` of chain `i` on VM `m`, starting at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Run {
    pub chain: usize,
    pub step: usize,
    pub vm: usize,
    pub start: usize,
}

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("schedule horizon must be >= 1")]
    BadHorizon,
    #[error("schedule was built for a different instance")]
    LayoutMismatch,
    #[error("schedules have different horizons or layouts")]
    ShapeMismatch,
    #[error("no variable {0:?} in this instance")]
    UnknownVar(Var),
    #[error("slot {slot} outside 1..={horizon}")]
    SlotOutOfRange { slot: usize, horizon: usize },
    #[error(
        "run for chain {chain} step {step} on vm {vm} starting at {start} \
         needs its finish marker at {finish_mark}, past horizon {horizon}"
    )]
    RunPastHorizon {
        chain: usize,
        step: usize,
        vm: usize,
        start: usize,
        finish_mark: usize,
        horizon: usize,
    },
    #[error("chain {chain}: delay undefined, finish marker of the last step fires {fires} times")]
    DelayUndefined { chain: usize, fires: usize },
    #[error("schedule is infeasible:\n{0}")]
    Infeasible(Box<FeasibilityReport>),
    #[error("failed to parse schedule exchange JSON: {0}")]
    ExchangeParse(#[from] serde_json::Error),
    #[error("bad exchange entry: {0}")]
    BadExchangeVar(String),
    #[error(
        "canonical {family} slack for chain {chain} step {step} vm {vm} slot {slot} \
         would be {value}, outside 0..=1"
    )]
    SlackOutOfRange {
        family: &'static str,
        chain: usize,
        step: usize,
        vm: usize,
        slot: usize,
        value: i64,
    },
}

/// The constraint families the feasibility checker enforces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Constraint {
    /// Every step is assigned to exactly one VM.
    AssignOnce,
    /// Per `(step, vm)`, the start count equals the assignment bit.
    StartCountMatchesAssign,
    /// A VM processes at most one step per slot.
    VmSlotCapacity,
    /// Busy slots only occur on the assigned VM.
    BusyWithinAssign,
    /// The busy-slot count equals the processing time when assigned.
    BusyDuration,
    /// Start and finish markers never share a `(step, vm, slot)`.
    StartFinishExclusive,
    /// Busy intervals open at a start marker and close at a finish marker.
    RunBoundary,
    /// A start implies busy slots for the full processing time after it.
    RunContiguity,
    /// A step starts only after its predecessor's finish marker has fired.
    Precedence,
    /// Every step starts exactly once.
    SingleStart,
    /// Every step finishes exactly once.
    SingleFinish,
}

impl Constraint {
    pub fn name(self) -> &'static str {
        match self {
            Constraint::AssignOnce => "assign-once",
            Constraint::StartCountMatchesAssign => "start-count-matches-assign",
            Constraint::VmSlotCapacity => "vm-slot-capacity",
            Constraint::BusyWithinAssign => "busy-within-assign",
            Constraint::BusyDuration => "busy-duration",
            Constraint::StartFinishExclusive => "start-finish-exclusive",
            Constraint::RunBoundary => "run-boundary",
            Constraint::RunContiguity => "run-contiguity",
            Constraint::Precedence => "precedence",
            Constraint::SingleStart => "single-start",
            Constraint::SingleFinish => "single-finish",
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One violated constraint occurrence. Index fields are filled as far as the
/// constraint is localized; a missing field means the violation spans it.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub constraint: Constraint,
    pub chain: Option<usize>,
    pub step: Option<usize>,
    pub vm: Option<usize>,
    pub slot: Option<usize>,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.constraint)?;
        if let Some(i) = self.chain {
            write!(f, " chain {i}")?;
        }
        if let Some(j) = self.step {
            write!(f, " step {j}")?;
        }
        if let Some(m) = self.vm {
            write!(f, " vm {m}")?;
        }
        if let Some(t) = self.slot {
            write!(f, " slot {t}")?;
        }
        write!(f, ": {}", self.detail)
    }
}

/// Every constraint violation a schedule exhibits, in a deterministic order:
/// constraint families in declaration order, indices lexicographic within
/// each family.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count_of(&self, constraint: Constraint) -> usize {
        self.violations
            .iter()
            .filter(|v| v.constraint == constraint)
            .count()
    }
}

impl fmt::Display for FeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.feasible() {
            return f.write_str("feasible");
        }
        writeln!(f, "{} violation(s):", self.violations.len())?;
        for v in &self.violations {
            writeln!(f, "  {v}")?;
        }
        Ok(())
    }
}

/// Canonical values for the slack bits that make the soft inequality
/// penalties vanish at a feasible schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct SlackAssignment {
    pub(crate) layout: Arc<Layout>,
    pub(crate) horizon: usize,
    /// Per `(chain, step, vm, slot)`: assigned but not busy.
    pub(crate) assign: Vec<bool>,
    /// Per `(chain, step, vm, slot)`: busy slot not covered by the start
    /// window. Always zero for feasible schedules.
    pub(crate) run: Vec<bool>,
    /// Per `(chain, transition, successor vm, slot)`: predecessor already
    /// finished but the successor does not start here.
    pub(crate) seq: Vec<bool>,
}

impl SlackAssignment {
    pub fn assign_bits(&self) -> &[bool] {
        &self.assign
    }

    pub fn run_bits(&self) -> &[bool] {
        &self.run
    }

    pub fn seq_bits(&self) -> &[bool] {
        &self.seq
    }
}

/// A schedule: the four binary tensors over a fixed horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    layout: Arc<Layout>,
    horizon: usize,
    x: Vec<bool>,
    y: Vec<bool>,
    z: Vec<bool>,
    p: Vec<bool>,
}

/// On-disk shape of the offline solver exchange format.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExchangeFile {
    t_max: usize,
    set: Vec<ExchangeVar>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExchangeVar {
    var: String,
    i: usize,
    j: usize,
    m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    t: Option<usize>,
}

impl Schedule {
    /// All-zero schedule over `horizon` slots.
    pub fn empty(instance: &Instance, horizon: usize) -> Result<Schedule, ScheduleError> {
        if horizon == 0 {
            return Err(ScheduleError::BadHorizon);
        }
        let layout = Layout::new(instance);
        let a = layout.total_assign;
        Ok(Schedule {
            layout,
            horizon,
            x: vec![false; a],
            y: vec![false; a * horizon],
            z: vec![false; a * horizon],
            p: vec![false; a * horizon],
        })
    }

    /// Builds the tensors for a list of per-step runs: each run sets its
    /// assignment bit, a start marker, the busy slots for the VM's processing
    /// time and the finish marker one slot after. Runs may conflict with each
    /// other; that surfaces in `check_feasibility`, not here.
    pub fn from_runs(
        instance: &Instance,
        horizon: usize,
        runs: &[Run],
    ) -> Result<Schedule, ScheduleError> {
        let mut sched = Schedule::empty(instance, horizon)?;
        for run in runs {
            let slots = instance.processing_slots(run.chain, run.step, run.vm)?;
            if run.start == 0 {
                return Err(ScheduleError::SlotOutOfRange {
                    slot: 0,
                    horizon,
                });
            }
            let finish_mark = run.start + slots;
            if finish_mark > horizon {
                return Err(ScheduleError::RunPastHorizon {
                    chain: run.chain,
                    step: run.step,
                    vm: run.vm,
                    start: run.start,
                    finish_mark,
                    horizon,
                });
            }
            let a = sched
                .layout
                .assign_slot(run.chain, run.step, run.vm)
                .expect("capability already checked");
            sched.x[a] = true;
            sched.z[a * horizon + run.start - 1] = true;
            for t in run.start..run.start + slots {
                sched.y[a * horizon + t - 1] = true;
            }
            sched.p[a * horizon + finish_mark - 1] = true;
        }
        Ok(sched)
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub(crate) fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub(crate) fn tensors(&self) -> (&[bool], &[bool], &[bool], &[bool]) {
        (&self.x, &self.y, &self.z, &self.p)
    }

    pub(crate) fn from_raw_tensors(
        layout: Arc<Layout>,
        horizon: usize,
        x: Vec<bool>,
        y: Vec<bool>,
        z: Vec<bool>,
        p: Vec<bool>,
    ) -> Schedule {
        debug_assert_eq!(x.len(), layout.total_assign);
        debug_assert_eq!(y.len(), layout.total_assign * horizon);
        Schedule {
            layout,
            horizon,
            x,
            y,
            z,
            p,
        }
    }

    fn resolve(&self, var: Var) -> Result<(usize, &'static str), ScheduleError> {
        let (chain, step, vm, slot, family) = match var {
            Var::X { chain, step, vm } => (chain, step, vm, None, "x"),
            Var::Y {
                chain,
                step,
                vm,
                slot,
            } => (chain, step, vm, Some(slot), "y"),
            Var::Z {
                chain,
                step,
                vm,
                slot,
            } => (chain, step, vm, Some(slot), "z"),
            Var::P {
                chain,
                step,
                vm,
                slot,
            } => (chain, step, vm, Some(slot), "p"),
        };
        let a = self
            .layout
            .assign_slot(chain, step, vm)
            .ok_or(ScheduleError::UnknownVar(var))?;
        match slot {
            None => Ok((a, family)),
            Some(t) => {
                if t == 0 || t > self.horizon {
                    return Err(ScheduleError::SlotOutOfRange {
                        slot: t,
                        horizon: self.horizon,
                    });
                }
                Ok((a * self.horizon + t - 1, family))
            }
        }
    }

    pub fn get(&self, var: Var) -> Result<bool, ScheduleError> {
        let (idx, family) = self.resolve(var)?;
        Ok(match family {
            "x" => self.x[idx],
            "y" => self.y[idx],
            "z" => self.z[idx],
            _ => self.p[idx],
        })
    }

    pub fn set(&mut self, var: Var, value: bool) -> Result<(), ScheduleError> {
        let (idx, family) = self.resolve(var)?;
        match family {
            "x" => self.x[idx] = value,
            "y" => self.y[idx] = value,
            "z" => self.z[idx] = value,
            _ => self.p[idx] = value,
        }
        Ok(())
    }

    /// Serializes the set variables for the offline solver exchange: the
    /// grid size plus one entry per set bit, in x, y, z, p block order.
    pub fn to_exchange_json(&self) -> String {
        let mut set = Vec::new();
        let h = self.horizon;
        for (a, &on) in self.x.iter().enumerate() {
            if on {
                let (i, j, m) = self.layout.describe_assign(a);
                set.push(ExchangeVar {
                    var: "x".into(),
                    i,
                    j,
                    m,
                    t: None,
                });
            }
        }
        for (family, bits) in [("y", &self.y), ("z", &self.z), ("p", &self.p)] {
            for (idx, &on) in bits.iter().enumerate() {
                if on {
                    let (i, j, m) = self.layout.describe_assign(idx / h);
                    set.push(ExchangeVar {
                        var: family.into(),
                        i,
                        j,
                        m,
                        t: Some(idx % h + 1),
                    });
                }
            }
        }
        let file = ExchangeFile {
            t_max: self.horizon,
            set,
        };
        serde_json::to_string_pretty(&file).expect("exchange serialization cannot fail")
    }

    pub fn from_exchange_json(instance: &Instance, text: &str) -> Result<Schedule, ScheduleError> {
        let file: ExchangeFile = serde_json::from_str(text)?;
        let mut sched = Schedule::empty(instance, file.t_max)?;
        for entry in &file.set {
            let (chain, step, vm) = (entry.i, entry.j, entry.m);
            let var = match (entry.var.as_str(), entry.t) {
                ("x", None) => Var::X { chain, step, vm },
                ("x", Some(_)) => {
                    return Err(ScheduleError::BadExchangeVar(
                        "x entries must not carry a slot".into(),
                    ))
                }
                ("y", Some(slot)) => Var::Y {
                    chain,
                    step,
                    vm,
                    slot,
                },
                ("z", Some(slot)) => Var::Z {
                    chain,
                    step,
                    vm,
                    slot,
                },
                ("p", Some(slot)) => Var::P {
                    chain,
                    step,
                    vm,
                    slot,
                },
                (other, None) if other == "y" || other == "z" || other == "p" => {
                    return Err(ScheduleError::BadExchangeVar(format!(
                        "{other} entries need a slot"
                    )))
                }
                (other, _) => {
                    return Err(ScheduleError::BadExchangeVar(format!(
                        "unknown variable family {other:?}"
                    )))
                }
            };
            sched.set(var, true)?;
        }
        Ok(sched)
    }

    fn require_layout(&self, instance: &Instance) -> Result<(), ScheduleError> {
        if *self.layout == *Layout::new(instance) {
            Ok(())
        } else {
            Err(ScheduleError::LayoutMismatch)
        }
    }

    /// Checks every constraint family and reports all violations.
    pub fn check_feasibility(
        &self,
        instance: &Instance,
    ) -> Result<FeasibilityReport, ScheduleError> {
        self.require_layout(instance)?;
        let h = self.horizon;
        let mut violations = Vec::new();

        for sv in &self.layout.steps {
            let assigned: usize = sv.vms.iter().enumerate().map(|(k, _)| self.x[sv.base + k] as usize).sum();
            if assigned != 1 {
                violations.push(Violation {
                    constraint: Constraint::AssignOnce,
                    chain: Some(sv.chain),
                    step: Some(sv.step),
                    vm: None,
                    slot: None,
                    detail: format!("assigned to {assigned} VMs, expected 1"),
                });
            }
        }

        for sv in &self.layout.steps {
            for (k, &m) in sv.vms.iter().enumerate() {
                let a = sv.base + k;
                let starts: usize = (0..h).map(|tz| self.z[a * h + tz] as usize).sum();
                let x = self.x[a] as usize;
                if starts != x {
                    violations.push(Violation {
                        constraint: Constraint::StartCountMatchesAssign,
                        chain: Some(sv.chain),
                        step: Some(sv.step),
                        vm: Some(m),
                        slot: None,
                        detail: format!("{starts} start(s) against assignment bit {x}"),
                    });
                }
            }
        }

        for m in 1..=instance.num_vms() {
            for t in 1..=h {
                let mut users = Vec::new();
                for sv in &self.layout.steps {
                    if let Ok(k) = sv.vms.binary_search(&m) {
                        if self.y[(sv.base + k) * h + t - 1] {
                            users.push((sv.chain, sv.step));
                        }
                    }
                }
                if users.len() > 1 {
                    let list = users
                        .iter()
                        .map(|(i, j)| format!("{i}.{j}"))
                        .collect::<Vec<_>>()
                        .join(", ");
                    violations.push(Violation {
                        constraint: Constraint::VmSlotCapacity,
                        chain: None,
                        step: None,
                        vm: Some(m),
                        slot: Some(t),
                        detail: format!("busy with {} steps: {list}", users.len()),
                    });
                }
            }
        }

        for sv in &self.layout.steps {
            for (k, &m) in sv.vms.iter().enumerate() {
                let a = sv.base + k;
                for t in 1..=h {
                    if self.y[a * h + t - 1] && !self.x[a] {
                        violations.push(Violation {
                            constraint: Constraint::BusyWithinAssign,
                            chain: Some(sv.chain),
                            step: Some(sv.step),
                            vm: Some(m),
                            slot: Some(t),
                            detail: "busy on an unassigned VM".into(),
                        });
                    }
                }
            }
        }

        for sv in &self.layout.steps {
            for (k, &m) in sv.vms.iter().enumerate() {
                let a = sv.base + k;
                let busy: usize = (0..h).map(|tz| self.y[a * h + tz] as usize).sum();
                let slots = instance.processing_slots(sv.chain, sv.step, m)?;
                let want = slots * self.x[a] as usize;
                if busy != want {
                    violations.push(Violation {
                        constraint: Constraint::BusyDuration,
                        chain: Some(sv.chain),
                        step: Some(sv.step),
                        vm: Some(m),
                        slot: None,
                        detail: format!("{busy} busy slot(s), expected {want}"),
                    });
                }
            }
        }

        for sv in &self.layout.steps {
            for (k, &m) in sv.vms.iter().enumerate() {
                let a = sv.base + k;
                for t in 1..=h {
                    if self.z[a * h + t - 1] && self.p[a * h + t - 1] {
                        violations.push(Violation {
                            constraint: Constraint::StartFinishExclusive,
                            chain: Some(sv.chain),
                            step: Some(sv.step),
                            vm: Some(m),
                            slot: Some(t),
                            detail: "start and finish markers share the slot".into(),
                        });
                    }
                }
            }
        }

        for sv in &self.layout.steps {
            for (k, &m) in sv.vms.iter().enumerate() {
                let a = sv.base + k;
                for t in 1..=h {
                    let prev_busy = if t >= 2 { self.y[a * h + t - 2] as i64 } else { 0 };
                    let balance = prev_busy - self.y[a * h + t - 1] as i64
                        + self.z[a * h + t - 1] as i64
                        - self.p[a * h + t - 1] as i64;
                    if balance != 0 {
                        violations.push(Violation {
                            constraint: Constraint::RunBoundary,
                            chain: Some(sv.chain),
                            step: Some(sv.step),
                            vm: Some(m),
                            slot: Some(t),
                            detail: format!("boundary balance {balance}, expected 0"),
                        });
                    }
                }
            }
        }

        for sv in &self.layout.steps {
            for (k, &m) in sv.vms.iter().enumerate() {
                let a = sv.base + k;
                let slots = instance.processing_slots(sv.chain, sv.step, m)?;
                for t in 1..=h {
                    let window: usize = (0..slots)
                        .filter_map(|alpha| t.checked_sub(alpha).filter(|&tt| tt >= 1))
                        .map(|tt| self.z[a * h + tt - 1] as usize)
                        .sum();
                    if window > self.y[a * h + t - 1] as usize {
                        violations.push(Violation {
                            constraint: Constraint::RunContiguity,
                            chain: Some(sv.chain),
                            step: Some(sv.step),
                            vm: Some(m),
                            slot: Some(t),
                            detail: format!(
                                "{window} start(s) within the last {slots} slot(s) but not busy"
                            ),
                        });
                    }
                }
            }
        }

        for sv in &self.layout.steps {
            let (i, j) = (sv.chain, sv.step);
            if j + 1 > instance.chain(i)?.steps.len() {
                continue;
            }
            let next = self
                .layout
                .step_vars(i, j + 1)
                .expect("successor step exists");
            for t in 1..=h {
                let finished: usize = sv
                    .vms
                    .iter()
                    .enumerate()
                    .map(|(k, _)| {
                        (0..t)
                            .map(|tz| self.p[(sv.base + k) * h + tz] as usize)
                            .sum::<usize>()
                    })
                    .sum();
                for (k2, &m2) in next.vms.iter().enumerate() {
                    if self.z[(next.base + k2) * h + t - 1] && finished == 0 {
                        violations.push(Violation {
                            constraint: Constraint::Precedence,
                            chain: Some(i),
                            step: Some(j + 1),
                            vm: Some(m2),
                            slot: Some(t),
                            detail: format!("starts before step {j} has finished"),
                        });
                    }
                }
            }
        }

        for sv in &self.layout.steps {
            let starts: usize = sv
                .vms
                .iter()
                .enumerate()
                .map(|(k, _)| {
                    (0..h)
                        .map(|tz| self.z[(sv.base + k) * h + tz] as usize)
                        .sum::<usize>()
                })
                .sum();
            if starts != 1 {
                violations.push(Violation {
                    constraint: Constraint::SingleStart,
                    chain: Some(sv.chain),
                    step: Some(sv.step),
                    vm: None,
                    slot: None,
                    detail: format!("{starts} start marker(s), expected 1"),
                });
            }
        }

        for sv in &self.layout.steps {
            let finishes: usize = sv
                .vms
                .iter()
                .enumerate()
                .map(|(k, _)| {
                    (0..h)
                        .map(|tz| self.p[(sv.base + k) * h + tz] as usize)
                        .sum::<usize>()
                })
                .sum();
            if finishes != 1 {
                violations.push(Violation {
                    constraint: Constraint::SingleFinish,
                    chain: Some(sv.chain),
                    step: Some(sv.step),
                    vm: None,
                    slot: None,
                    detail: format!("{finishes} finish marker(s), expected 1"),
                });
            }
        }

        Ok(FeasibilityReport { violations })
    }

    /// Completion delay of chain `i` in seconds: the last step's finish
    /// marker fires at slot `t`, and the chain is done after `t - 1` full
    /// slots.
    pub fn chain_delay(&self, instance: &Instance, i: usize) -> Result<f64, ScheduleError> {
        self.require_layout(instance)?;
        let last = instance.chain(i)?.steps.len();
        let sv = self
            .layout
            .step_vars(i, last)
            .expect("validated chain has its last step");
        let h = self.horizon;
        let mut fires = Vec::new();
        for (k, _) in sv.vms.iter().enumerate() {
            for t in 1..=h {
                if self.p[(sv.base + k) * h + t - 1] {
                    fires.push(t);
                }
            }
        }
        if fires.len() != 1 {
            return Err(ScheduleError::DelayUndefined {
                chain: i,
                fires: fires.len(),
            });
        }
        Ok((fires[0] - 1) as f64 * instance.slot_length_s())
    }

    /// Sum of all chain delays in seconds: the model's objective.
    pub fn total_delay(&self, instance: &Instance) -> Result<f64, ScheduleError> {
        (1..=instance.num_chains())
            .map(|i| self.chain_delay(instance, i))
            .sum()
    }

    /// Largest single chain delay in seconds.
    pub fn longest_delay(&self, instance: &Instance) -> Result<f64, ScheduleError> {
        let mut longest = 0.0_f64;
        for i in 1..=instance.num_chains() {
            longest = longest.max(self.chain_delay(instance, i)?);
        }
        Ok(longest)
    }

    /// Mean busy time per VM in seconds: all busy slots times the slot
    /// length, divided by the VM count.
    pub fn avg_vm_busy_time(&self, instance: &Instance) -> Result<f64, ScheduleError> {
        self.require_layout(instance)?;
        let busy = self.y.iter().filter(|&&b| b).count();
        Ok(busy as f64 * instance.slot_length_s() / instance.num_vms() as f64)
    }

    /// Canonical slack bits: the values that zero the inequality penalties at
    /// this schedule. Fails if any slack would need a value outside 0..=1,
    /// which only happens for infeasible schedules.
    pub fn canonical_slacks(&self, instance: &Instance) -> Result<SlackAssignment, ScheduleError> {
        self.require_layout(instance)?;
        let h = self.horizon;
        let a_total = self.layout.total_assign;
        let mut assign = vec![false; a_total * h];
        let mut run = vec![false; a_total * h];
        let mut seq = vec![false; self.layout.total_seq * h];

        for sv in &self.layout.steps {
            for (k, &m) in sv.vms.iter().enumerate() {
                let a = sv.base + k;
                let slots = instance.processing_slots(sv.chain, sv.step, m)?;
                for t in 1..=h {
                    let v = self.x[a] as i64 - self.y[a * h + t - 1] as i64;
                    if !(0..=1).contains(&v) {
                        return Err(ScheduleError::SlackOutOfRange {
                            family: "assign",
                            chain: sv.chain,
                            step: sv.step,
                            vm: m,
                            slot: t,
                            value: v,
                        });
                    }
                    assign[a * h + t - 1] = v == 1;

                    let window: i64 = (0..slots)
                        .filter_map(|alpha| t.checked_sub(alpha).filter(|&tt| tt >= 1))
                        .map(|tt| self.z[a * h + tt - 1] as i64)
                        .sum();
                    let v = self.y[a * h + t - 1] as i64 - window;
                    if !(0..=1).contains(&v) {
                        return Err(ScheduleError::SlackOutOfRange {
                            family: "run",
                            chain: sv.chain,
                            step: sv.step,
                            vm: m,
                            slot: t,
                            value: v,
                        });
                    }
                    run[a * h + t - 1] = v == 1;
                }
            }
        }

        for sq in &self.layout.seqs {
            let prev = self
                .layout
                .step_vars(sq.chain, sq.step)
                .expect("predecessor step exists");
            let next = self
                .layout
                .step_vars(sq.chain, sq.step + 1)
                .expect("successor step exists");
            for t in 1..=h {
                let finished: i64 = prev
                    .vms
                    .iter()
                    .enumerate()
                    .map(|(k, _)| {
                        (0..t)
                            .map(|tz| self.p[(prev.base + k) * h + tz] as i64)
                            .sum::<i64>()
                    })
                    .sum();
                for (k2, &m2) in sq.vms.iter().enumerate() {
                    let z = self.z[(next.base + k2) * h + t - 1] as i64;
                    let v = finished - z;
                    if !(0..=1).contains(&v) {
                        return Err(ScheduleError::SlackOutOfRange {
                            family: "seq",
                            chain: sq.chain,
                            step: sq.step,
                            vm: m2,
                            slot: t,
                            value: v,
                        });
                    }
                    seq[(sq.base + k2) * h + t - 1] = v == 1;
                }
            }
        }

        Ok(SlackAssignment {
            layout: Arc::clone(&self.layout),
            horizon: h,
            assign,
            run,
            seq,
        })
    }

    /// Text Gantt rendering, one row per VM, slots as columns. Refuses
    /// infeasible schedules, carrying the report in the error.
    pub fn gantt(&self, instance: &Instance) -> Result<String, ScheduleError> {
        let report = self.check_feasibility(instance)?;
        if !report.feasible() {
            return Err(ScheduleError::Infeasible(Box::new(report)));
        }
        let h = self.horizon;
        let mut cells: Vec<Vec<String>> = vec![vec![".".to_string(); h]; instance.num_vms()];
        for sv in &self.layout.steps {
            for (k, &m) in sv.vms.iter().enumerate() {
                let a = sv.base + k;
                for t in 1..=h {
                    if self.y[a * h + t - 1] {
                        cells[m - 1][t - 1] = format!("{}.{}", sv.chain, sv.step);
                    }
                }
            }
        }
        let width = cells
            .iter()
            .flatten()
            .map(|c| c.len())
            .chain((1..=h).map(|t| t.to_string().len()))
            .max()
            .unwrap_or(1);
        let label_width = format!("VM {}", instance.num_vms()).len().max(4);
        let mut out = String::new();
        out.push_str(&format!("{:label_width$} |", "slot"));
        for t in 1..=h {
            out.push_str(&format!(" {t:>width$}"));
        }
        out.push('\n');
        for (mz, row) in cells.iter().enumerate() {
            out.push_str(&format!("{:label_width$} |", format!("VM {}", mz + 1)));
            for cell in row {
                out.push_str(&format!(" {cell:>width$}"));
            }
            out.push('\n');
        }
        Ok(out)
    }
}

/// Draws a uniformly random feasible schedule by walking chains in order and
/// picking a random capable VM and a random conflict-free start for each
/// step. Returns `None` when a partial placement runs out of room before the
/// horizon; callers retry with fresh randomness.
pub fn random_feasible<R: Rng>(
    instance: &Instance,
    horizon: usize,
    rng: &mut R,
) -> Result<Option<Schedule>, ScheduleError> {
    if horizon == 0 {
        return Err(ScheduleError::BadHorizon);
    }
    let mut busy = vec![vec![false; horizon + 1]; instance.num_vms() + 1];
    let mut runs = Vec::new();
    for chain in instance.chains() {
        // Minimal residual processing time after each step, so a start is
        // only eligible when the rest of the chain can still fit the grid.
        let n = chain.steps.len();
        let mut suffix_min = vec![0usize; n + 2];
        for j in (1..=n).rev() {
            suffix_min[j] = suffix_min[j + 1] + instance.fastest_vm(chain.id, j)?.1;
        }
        let mut earliest = 1;
        for j in 1..=n {
            let mut candidates = Vec::new();
            for &m in instance.capable_set(chain.id, j)? {
                let slots = instance.processing_slots(chain.id, j, m)?;
                for start in earliest..=horizon {
                    if start + slots + suffix_min[j + 1] > horizon {
                        break;
                    }
                    if (start..start + slots).all(|t| !busy[m][t]) {
                        candidates.push((start, m, slots));
                    }
                }
            }
            if candidates.is_empty() {
                return Ok(None);
            }
            candidates.sort_unstable();
            // Geometric preference over the eligible starts keeps the draws
            // scattered without starving the chains drawn after this one.
            let mut starts: Vec<usize> = candidates.iter().map(|&(s, _, _)| s).collect();
            starts.dedup();
            let mut pick = starts.len() - 1;
            for k in 0..starts.len() {
                if rng.random::<f64>() < 0.5 {
                    pick = k;
                    break;
                }
            }
            let at_start: Vec<(usize, usize, usize)> = candidates
                .iter()
                .copied()
                .filter(|&(s, _, _)| s == starts[pick])
                .collect();
            let (start, m, slots) = at_start[rng.random_range(0..at_start.len())];
            for t in start..start + slots {
                busy[m][t] = true;
            }
            runs.push(Run {
                chain: chain.id,
                step: j,
                vm: m,
                start,
            });
            earliest = start + slots;
        }
    }
    Ok(Some(Schedule::from_runs(instance, horizon, &runs)?))
}
