//! Stochastic optimization laboratory: shuffled and federated methods,
//! adaptive stepsizes, quantized communication, proximal splitting, and a
//! deterministic harness around them.

pub mod adaptive;
pub mod error;
pub mod federated;
pub mod harness;
pub mod linalg;
pub mod problems;
pub mod prox;
pub mod quantize;
pub mod rng;
pub mod shuffle;
pub mod splitting;

pub use error::{OptError, Result};
pub use harness::{MetricTrace, Reference, TraceRow};
pub use problems::{FiniteSumObjective, Smooth};
pub use prox::ProxTerm;
pub use rng::RngStream;
