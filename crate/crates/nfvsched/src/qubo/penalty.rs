//! Penalty weights for the constraint families, with a uniform base value
//! and optional per-family overrides.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::Instance;

/// Largest objective value any schedule on the grid can reach: every chain
/// finishing at the last slot. Penalties above this cannot be traded against
/// the objective.
pub fn objective_upper_bound(instance: &Instance, horizon: usize) -> f64 {
    instance.num_chains() as f64 * (horizon.saturating_sub(1)) as f64 * instance.slot_length_s()
}

#[derive(Debug, Error)]
pub enum PenaltyError {
    #[error("penalty {name} must be positive and finite, got {value}")]
    BadWeight { name: &'static str, value: f64 },
}

/// Weights for the eleven penalty families. `base` applies wherever the
/// per-family override is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltyConfig {
    pub base: f64,
    pub assign_once: Option<f64>,
    pub start_count_matches_assign: Option<f64>,
    pub vm_slot_capacity: Option<f64>,
    pub busy_within_assign: Option<f64>,
    pub busy_duration: Option<f64>,
    pub start_finish_exclusive: Option<f64>,
    pub run_boundary: Option<f64>,
    pub run_contiguity: Option<f64>,
    pub precedence: Option<f64>,
    pub single_start: Option<f64>,
    pub single_finish: Option<f64>,
    /// Replace the busy-duration penalty `(busy slots - time * assigned)^2`
    /// with `(busy slots - time)^2`, which demands the full busy time on
    /// every capable VM whether or not it is assigned. Kept for comparison;
    /// it makes the penalty minimum unreachable whenever a step has more
    /// than one capable VM.
    pub unconditional_duration: bool,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig::uniform(1.0)
    }
}

impl PenaltyConfig {
    /// All families at the same weight.
    pub fn uniform(base: f64) -> PenaltyConfig {
        PenaltyConfig {
            base,
            assign_once: None,
            start_count_matches_assign: None,
            vm_slot_capacity: None,
            busy_within_assign: None,
            busy_duration: None,
            start_finish_exclusive: None,
            run_boundary: None,
            run_contiguity: None,
            precedence: None,
            single_start: None,
            single_finish: None,
            unconditional_duration: false,
        }
    }

    /// The default policy: 100 times the objective upper bound, floored at 1
    /// so degenerate grids still get a positive weight.
    pub fn default_for(instance: &Instance, horizon: usize) -> PenaltyConfig {
        PenaltyConfig::uniform((100.0 * objective_upper_bound(instance, horizon)).max(1.0))
    }

    pub fn validate(&self) -> Result<(), PenaltyError> {
        let named = [
            ("base", Some(self.base)),
            ("assign_once", self.assign_once),
            ("start_count_matches_assign", self.start_count_matches_assign),
            ("vm_slot_capacity", self.vm_slot_capacity),
            ("busy_within_assign", self.busy_within_assign),
            ("busy_duration", self.busy_duration),
            ("start_finish_exclusive", self.start_finish_exclusive),
            ("run_boundary", self.run_boundary),
            ("run_contiguity", self.run_contiguity),
            ("precedence", self.precedence),
            ("single_start", self.single_start),
            ("single_finish", self.single_finish),
        ];
        for (name, value) in named {
            if let Some(value) = value {
                if !(value.is_finite() && value > 0.0) {
                    return Err(PenaltyError::BadWeight { name, value });
                }
            }
        }
        Ok(())
    }

    pub fn assign_once_weight(&self) -> f64 {
        self.assign_once.unwrap_or(self.base)
    }

    pub fn start_count_matches_assign_weight(&self) -> f64 {
        self.start_count_matches_assign.unwrap_or(self.base)
    }

    pub fn vm_slot_capacity_weight(&self) -> f64 {
        self.vm_slot_capacity.unwrap_or(self.base)
    }

    pub fn busy_within_assign_weight(&self) -> f64 {
        self.busy_within_assign.unwrap_or(self.base)
    }

    pub fn busy_duration_weight(&self) -> f64 {
        self.busy_duration.unwrap_or(self.base)
    }

    pub fn start_finish_exclusive_weight(&self) -> f64 {
        self.start_finish_exclusive.unwrap_or(self.base)
    }

    pub fn run_boundary_weight(&self) -> f64 {
        self.run_boundary.unwrap_or(self.base)
    }

    pub fn run_contiguity_weight(&self) -> f64 {
        self.run_contiguity.unwrap_or(self.base)
    }

    pub fn precedence_weight(&self) -> f64 {
        self.precedence.unwrap_or(self.base)
    }

    pub fn single_start_weight(&self) -> f64 {
        self.single_start.unwrap_or(self.base)
    }

    pub fn single_finish_weight(&self) -> f64 {
        self.single_finish.unwrap_or(self.base)
    }
}
