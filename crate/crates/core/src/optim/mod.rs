//! Solver core shared by every optimizer in the crate.

mod adam;
mod fd;
mod lbfgs;
mod nlp;

pub use adam::{adam_minimize, adam_minimize_projected, AdamConfig, AdamOutcome};
pub use fd::{finite_difference_gradient, relative_error};
pub use lbfgs::{minimize_box, BoxOptions, BoxOutcome, InnerStatus};
pub use nlp::{
    solve_nlp, EqualityConstraint, Nlp, NlpProblem, OuterRecord, SolveReport, SolverOptions,
};
