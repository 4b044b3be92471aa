use std::path::Path;
use std::process::{Command, Output};

fn birkhoff(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_birkhoff"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("BIRKHOFF_OUT_DIR")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn records(dir: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(dir.join("results.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn check_identities_passes_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let o = birkhoff(&["check-identities", "--alpha", "1", "--n", "8", "--seed", "7"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for name in ["results.jsonl", "summary.csv", "manifest.json"] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(!text.contains('\r'));
    }
    let recs = records(dir.path());
    let homological: Vec<&serde_json::Value> = recs
        .iter()
        .filter(|r| r["label"].as_str().unwrap().starts_with("homological"))
        .collect();
    assert!(!homological.is_empty());
    for r in homological {
        assert!(r["estimate"].as_f64().unwrap() < 1e-10);
        assert_eq!(r["params"]["N"], 8);
        assert_eq!(r["seed"], 7);
        assert!(r["artifact_version"].as_str().unwrap().starts_with("birkhoff-core/"));
    }
}

#[test]
fn transport_verify_example() {
    let dir = tempfile::tempdir().unwrap();
    let o = birkhoff(
        &[
            "transport-verify",
            "--alpha",
            "1",
            "--n",
            "2",
            "--t",
            "1",
            "--count",
            "100000",
            "--set",
            "re(u0)>0.1",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let recs = records(dir.path());
    assert_eq!(recs.len(), 1);
    assert_eq!(recs[0]["predicate"], "re(u0)>0.1");
    assert!(recs[0]["estimate"].as_f64().unwrap() <= 3.0);
    assert_eq!(recs[0]["n_samples"], 100000);
}

#[test]
fn missing_key_is_an_operational_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = birkhoff(&["check-identities", "--n", "4"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("alpha"), "{}", stderr(&o));

    let o = birkhoff(&["transport-verify", "--alpha", "1", "--n", "2", "--t", "1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("`set`"), "{}", stderr(&o));
}

#[test]
fn config_errors_report_key_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "alpha = 1.0\nn_trunc = 2\nradius = \"big\"\n").unwrap();
    let o = birkhoff(&["check-identities", "--config", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let e = stderr(&o);
    assert!(e.contains("radius") && e.contains(":3"), "{e}");
}

#[test]
fn gate_failure_exits_with_two() {
    // Truncation decay between M = 1 and M = 2 cannot show the asymptotic slope.
    let dir = tempfile::tempdir().unwrap();
    let o = birkhoff(
        &["decay", "--alpha", "1", "--n", "2", "--m-list", "1,2", "--count", "20000"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(dir.path().join("summary.csv").exists());
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "alpha = 0.95\nsigma = -1\nn_trunc = 3\nseed = 1\ncount = 5000\np_list = [2, 3, 4]\n\
         [integrator]\nmethod = \"rk45_adaptive\"\nrel_tol = 1e-9\n",
    )
    .unwrap();
    let o = birkhoff(&["moments", "--config", cfg.to_str().unwrap(), "--seed", "4"], dir.path());
    assert!(matches!(o.status.code(), Some(0) | Some(2)), "{}", stderr(&o));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], 4);
    assert_eq!(manifest["config"]["params"]["sigma"], -1);
    assert_eq!(manifest["config"]["integrator"]["rel_tol"], 1e-9);
    assert_eq!(manifest["config"]["experiment"]["p_list"], serde_json::json!([2.0, 3.0, 4.0]));
    assert_eq!(records(dir.path()).len(), 4);
}

#[test]
fn replay_is_bitwise_identical_across_workers() {
    let first = tempfile::tempdir().unwrap();
    let o = birkhoff(
        &[
            "exp-moment", "--alpha", "1", "--sigma", "-1", "--n", "4", "--n-list", "2,4", "--count", "20000",
            "--workers", "1",
        ],
        first.path(),
    );
    assert!(matches!(o.status.code(), Some(0) | Some(2)), "{}", stderr(&o));
    let second = tempfile::tempdir().unwrap();
    let manifest = first.path().join("manifest.json");
    let o = birkhoff(&["replay", manifest.to_str().unwrap(), "--workers", "3"], second.path());
    assert!(matches!(o.status.code(), Some(0) | Some(2)), "{}", stderr(&o));
    let a = std::fs::read(first.path().join("results.jsonl")).unwrap();
    let b = std::fs::read(second.path().join("results.jsonl")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn sample_exports_binary_batch() {
    let dir = tempfile::tempdir().unwrap();
    let o = birkhoff(&["sample", "--alpha", "0.9", "--n", "2", "--count", "2000", "--seed", "3"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let bytes = std::fs::read(dir.path().join("samples.bin")).unwrap();
    assert_eq!(bytes.len(), 2000 * (8 + 16 * 5));
    let mut reader = &bytes[..];
    let first = birkhoff_core::FourierState::read_binary(&mut reader).unwrap().unwrap();
    assert_eq!(first.n_trunc(), 2);
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("samples.json")).unwrap()).unwrap();
    assert_eq!(sidecar["seed"], 3);
}

#[test]
fn out_dir_defaults_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_birkhoff"))
        .args(["jacobian", "--alpha", "1", "--n", "1", "--samples", "2"])
        .env("BIRKHOFF_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn bad_flags_are_operational_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = birkhoff(&["evolve", "--alpha", "1", "--n", "2", "--method", "euler"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = birkhoff(&["evolve", "--alpha", "2", "--n", "2"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let o = birkhoff(&["no-such-command"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}
