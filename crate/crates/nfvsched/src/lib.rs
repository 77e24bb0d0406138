//! Scheduling of virtualized network function chains on a discrete time
//! grid, minimizing the summed completion delay.
//!
//! The pipeline: describe an [`instance::Instance`] (VMs, service chains,
//! slot length), size the grid with the [`greedy`] baseline, compile the
//! scheduling constraints into a quadratic binary model with
//! [`qubo::build_qubo`], sample it with one of the [`solver`] backends or an
//! external sampler through the text exchange formats, and decode the bits
//! back into a [`schedule::Schedule`] to check and measure.

pub mod fixtures;
pub mod greedy;
pub mod instance;
pub mod qubo;
pub mod schedule;
pub mod solver;
