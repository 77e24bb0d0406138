//! Benchmark harness: case configuration, instance generation, solve loops
//! and table/histogram rendering for the `nfvsched` binary.

pub mod bench;
pub mod generate;
