//! Temperature-scheduled, multi-trial swarm optimizer for black-box
//! objectives over box-constrained domains.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distributions;
pub mod domain;
pub mod error;
pub mod linmin;
pub mod objective;
mod quad;
pub mod rng;
pub mod scheduler;
pub mod stages;
pub mod swarm;
#[cfg(test)]
mod test_support;

pub use error::{Error, Result};

pub use domain::{d1_distance, line_domain, Bounds, LineSegment};
pub use linmin::{minimize_on_line, LinminOptions, LinminResult};
pub use objective::{make_benchmark, BenchmarkKind, BoundsStyle, Concurrency, Objective, ObjectiveHandle};
pub use rng::Jkiss;
pub use scheduler::{allocate_budget, initial_guesses, run_optimization, RunConfig, RunDiagnostics, RunOutcome};
pub use stages::StageOptions;
pub use swarm::{InsertOutcome, RatedPoint, Stack, StackMetrics};
