//! Linear algebra kernels: exact solves, Gram assembly and the α solve.

pub mod alpha;
pub mod dd;
pub mod dense;
pub mod forward;
pub mod gram;

pub use alpha::{solve_alpha, upper_bound_direct, AlphaSolution};
pub use forward::{bound_constant, exact_forward, exact_leadfield, reduced_rows, ExactForward, ReducedRows};
pub use gram::{extend_gram, GramData};
