use std::path::PathBuf;
use std::process::{Command, Output};

use optlab_core::harness::MetricTrace;

fn optlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_optlab"))
        .args(args)
        .env_remove("OPTLAB_SEED")
        .output()
        .expect("spawn optlab")
}

fn config(name: &str) -> String {
    let p: PathBuf = [
        env!("CARGO_MANIFEST_DIR"),
        "..",
        "core",
        "configs",
        &format!("{name}.json"),
    ]
    .iter()
    .collect();
    p.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_config_exits_2_naming_the_flag() {
    let o = optlab(&["shuffle", "run"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--config"), "{}", stderr(&o));
}

#[test]
fn unreadable_or_malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ \"problem\": 3 }").unwrap();
    for path in [bad.to_str().unwrap(), "/nonexistent/config.json"] {
        let o = optlab(&["adaptive", "run", "--config", path]);
        assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    }
}

#[test]
fn family_must_match_the_config() {
    let o = optlab(&["sdm", "run", "--config", &config("shuffle_rr")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("shuffle"));
}

#[test]
fn run_writes_csv_and_seed_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let c = dir.path().join("c.csv");
    let cfg = config("shuffle_rr");
    for (out, seed) in [(&a, "1"), (&b, "1"), (&c, "2")] {
        let o = optlab(&[
            "shuffle",
            "run",
            "--config",
            &cfg,
            "--seed",
            seed,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let read = |p: &PathBuf| MetricTrace::read_csv(p).unwrap();
    assert!(read(&a).same_metrics(&read(&b)));
    assert!(!read(&a).same_metrics(&read(&c)));
}

#[test]
fn stdout_when_no_output_is_given() {
    let o = optlab(&["adaptive", "run", "--config", &config("adaptive_adgd")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("step,grads,proxes,bits,f_gap,dist_sq,wall_ns\n"));
}

#[test]
fn seed_env_is_the_last_resort() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("shuffle_rr")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v.as_object_mut().unwrap().remove("seed");
    let path = dir.path().join("noseed.json");
    std::fs::write(&path, v.to_string()).unwrap();
    let p = path.to_str().unwrap();
    let o = optlab(&["shuffle", "run", "--config", p]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("OPTLAB_SEED"));
    let o = Command::new(env!("CARGO_BIN_EXE_optlab"))
        .args(["shuffle", "run", "--config", p])
        .env("OPTLAB_SEED", "7")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn terngrad_sends_fewer_bits_than_dense() {
    let dir = tempfile::tempdir().unwrap();
    let tern = dir.path().join("tern.csv");
    let dense = dir.path().join("dense.csv");
    for (name, out) in [("diana_terngrad", &tern), ("diana_dense", &dense)] {
        let o = optlab(&[
            "diana",
            "run",
            "--config",
            &config(name),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{name}: {}", stderr(&o));
    }
    let (t, d) = (
        MetricTrace::read_csv(&tern).unwrap(),
        MetricTrace::read_csv(&dense).unwrap(),
    );
    assert_eq!(t.rows.len(), d.rows.len());
    for (rt, rd) in t.rows.iter().zip(&d.rows).skip(1) {
        assert!(rt.bits < rd.bits, "step {}: {} vs {}", rt.step, rt.bits, rd.bits);
    }
}

#[test]
fn bench_suite_writes_one_csv_per_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = optlab(&["bench", "suite", "smoke", "--out-dir", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let n = std::fs::read_dir(dir.path()).unwrap().count();
    assert_eq!(n, String::from_utf8(o.stdout).unwrap().lines().count());
    assert!(n >= 6);
    let o = optlab(&["bench", "suite", "nope"]);
    assert_eq!(o.status.code(), Some(2));
}
