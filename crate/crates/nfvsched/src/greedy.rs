//! A deliberately naive baseline: concatenate every chain's steps into one
//! long sequence and run them strictly one after another, each on the
//! capable VM with the fewest processing slots. Its makespan bounds how many
//! slots any sensible schedule needs, which sizes the time grid.

use crate::instance::Instance;
use crate::schedule::{Run, Schedule, ScheduleError};

/// What the sequential baseline produced.
#[derive(Debug, Clone)]
pub struct GreedyOutcome {
    /// The baseline placement on a grid of `makespan_slots + 1` slots.
    pub schedule: Schedule,
    pub runs: Vec<Run>,
    /// Busy slots from the first to the last: the sum of each step's
    /// fastest processing time.
    pub makespan_slots: usize,
    /// Sum of the baseline's chain delays in seconds.
    pub total_delay_s: f64,
}

/// Runs the sequential baseline.
pub fn greedy_schedule(instance: &Instance) -> Result<GreedyOutcome, ScheduleError> {
    let mut runs = Vec::new();
    let mut cursor = 0;
    let mut total_delay_s = 0.0;
    for chain in instance.chains() {
        for j in 1..=chain.steps.len() {
            let (vm, slots) = instance.fastest_vm(chain.id, j)?;
            runs.push(Run {
                chain: chain.id,
                step: j,
                vm,
                start: cursor + 1,
            });
            cursor += slots;
        }
        total_delay_s += cursor as f64 * instance.slot_length_s();
    }
    let schedule = Schedule::from_runs(instance, cursor + 1, &runs)?;
    Ok(GreedyOutcome {
        schedule,
        runs,
        makespan_slots: cursor,
        total_delay_s,
    })
}

/// Number of slots the time grid gets: one more than the baseline makespan,
/// so the last finish marker always fits. An instance-level override wins
/// when present.
pub fn horizon(instance: &Instance) -> Result<usize, ScheduleError> {
    if let Some(h) = instance.horizon_override() {
        return Ok(h);
    }
    Ok(greedy_schedule(instance)?.makespan_slots + 1)
}

/// Convenience wrapper for retry loops: the base horizon plus `bump` extra
/// slots.
pub fn horizon_with_bump(instance: &Instance, bump: usize) -> Result<usize, ScheduleError> {
    Ok(horizon(instance)? + bump)
}
