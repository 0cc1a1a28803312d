use optlab_core::harness::invariants::csv_without_wall;
use optlab_core::harness::{bundled, run, suite, MetricTrace, RunConfig, BUNDLED, SUITES};

#[test]
fn every_bundled_config_runs_and_reports_its_family() {
    for (name, text) in BUNDLED {
        let cfg = RunConfig::from_json(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        let t = run(&cfg).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(t.rows[0].step, 0, "{name}");
        assert!(t.rows.len() >= 2 && t.rows.len() <= cfg.budget + 1, "{name}");
        assert_eq!(t.metadata["family"], cfg.solver.family(), "{name}");
        assert_eq!(t.metadata["config_hash"], cfg.hash(), "{name}");
        assert!(t.rows.iter().all(|r| r.dist_sq.is_finite()), "{name}");
    }
}

#[test]
fn bundled_runs_are_reproducible() {
    let cfg = bundled("shuffle_prox_rr").unwrap();
    let (a, b) = (run(&cfg).unwrap(), run(&cfg).unwrap());
    assert_eq!(csv_without_wall(&a), csv_without_wall(&b));
}

#[test]
fn seed_changes_the_trace() {
    let mut cfg = bundled("shuffle_rr").unwrap();
    let a = run(&cfg).unwrap();
    cfg.seed += 1;
    let b = run(&cfg).unwrap();
    assert_ne!(csv_without_wall(&a), csv_without_wall(&b));
}

#[test]
fn zero_budget_records_only_the_start() {
    for (name, _) in BUNDLED {
        let mut cfg = bundled(name).unwrap();
        cfg.budget = 0;
        let t = run(&cfg).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(t.rows.len(), 1, "{name}");
        assert_eq!(t.rows[0].step, 0);
    }
}

#[test]
fn csv_round_trip_through_a_file() {
    let t = run(&bundled("diana_quantized").unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    t.write_csv(&path).unwrap();
    let back = MetricTrace::read_csv(&path).unwrap();
    assert!(t.same_metrics(&back));
}

#[test]
fn suites_cover_every_bundled_config() {
    let mut seen: Vec<String> = SUITES
        .iter()
        .filter(|s| **s != "smoke")
        .flat_map(|s| suite(s).unwrap().into_iter().map(|(n, _)| n))
        .collect();
    seen.sort();
    let mut all: Vec<String> = BUNDLED.iter().map(|(n, _)| n.to_string()).collect();
    all.sort();
    assert_eq!(seen, all);
    assert!(suite("nope").is_err());
}

#[test]
fn unknown_fields_are_config_errors() {
    let text = BUNDLED[0].1.replacen('{', "{\"bogus\": 1,", 1);
    let e = RunConfig::from_json(&text).unwrap_err();
    assert!(e.is_config_error());
}
