//! Configs shipped with the library, one or more per solver family.

use super::config::RunConfig;
use crate::error::{OptError, Result};

pub const BUNDLED: &[(&str, &str)] = &[
    ("adaptive_adgd", include_str!("../../configs/adaptive_adgd.json")),
    ("diana_dense", include_str!("../../configs/diana_dense.json")),
    ("diana_quantized", include_str!("../../configs/diana_quantized.json")),
    ("diana_terngrad", include_str!("../../configs/diana_terngrad.json")),
    ("federated_fed_rr", include_str!("../../configs/federated_fed_rr.json")),
    (
        "federated_local_sgd",
        include_str!("../../configs/federated_local_sgd.json"),
    ),
    ("sdm_kaczmarz", include_str!("../../configs/sdm_kaczmarz.json")),
    ("sdm_linear", include_str!("../../configs/sdm_linear.json")),
    ("shuffle_prox_rr", include_str!("../../configs/shuffle_prox_rr.json")),
    ("shuffle_rr", include_str!("../../configs/shuffle_rr.json")),
    (
        "splitting_destroy",
        include_str!("../../configs/splitting_destroy.json"),
    ),
    (
        "splitting_licosgd",
        include_str!("../../configs/splitting_licosgd.json"),
    ),
    (
        "splitting_pddy_fused",
        include_str!("../../configs/splitting_pddy_fused.json"),
    ),
];

/// Suite names accepted by [`suite`].
pub const SUITES: &[&str] = &["smoke", "shuffle", "federated", "adaptive", "diana", "sdm", "splitting"];

pub fn bundled(name: &str) -> Result<RunConfig> {
    let (_, text) = BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| OptError::Config(format!("no bundled config named {name:?}")))?;
    RunConfig::from_json(text)
}

/// `smoke` is every bundled config; a family name selects that family.
pub fn suite(name: &str) -> Result<Vec<(String, RunConfig)>> {
    if !SUITES.contains(&name) {
        return Err(OptError::Config(format!(
            "unknown suite {name:?}, expected one of {}",
            SUITES.join(", ")
        )));
    }
    let mut out = Vec::new();
    for (n, text) in BUNDLED {
        let cfg = RunConfig::from_json(text)?;
        if name == "smoke" || cfg.solver.family() == name {
            out.push((n.to_string(), cfg));
        }
    }
    Ok(out)
}
