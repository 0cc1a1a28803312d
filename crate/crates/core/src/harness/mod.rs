//! Experiment plumbing: traces, configs, the runner and the invariant suite.

pub mod bundled;
pub mod config;
pub mod invariants;
pub mod run;
pub mod trace;

pub use bundled::{bundled, suite, BUNDLED, SUITES};
pub use config::RunConfig;
pub use run::{build_problem, run, Instance};
pub use trace::{Counters, MetricTrace, Recorder, Reference, TraceRow};
