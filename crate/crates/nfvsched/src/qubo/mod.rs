//! Compilation of scheduling instances into quadratic binary models, plus
//! the text formats for handing problems to external samplers and reading
//! their answers back.

mod build;
mod form;
mod penalty;
mod varmap;

pub use build::{build_qubo, QuboModel};
pub use form::{Adjacency, Qubo, QuboError};
pub use penalty::{objective_upper_bound, PenaltyConfig, PenaltyError};
pub use varmap::{VarRef, VariableMap};
