//! Shared fixtures for the criterion benches in `benches/`.

use optlab_core::problems::{make_logistic, synthetic_classification, FiniteSumObjective};
use optlab_core::RngStream;

/// Logistic regression with l2 weight 0.1 on a synthetic dataset.
pub fn logistic(n: usize, d: usize, seed: u64) -> FiniteSumObjective {
    let ds = synthetic_classification(n, d, false, &RngStream::new(seed));
    make_logistic(&ds, 0.1).expect("valid synthetic problem")
}
