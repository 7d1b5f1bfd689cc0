use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use equinash::io::sha256_hex;
use serde_json::Value;
use tempfile::TempDir;

const SMALL: &str = r#"{ "n_paths": 300, "grid": { "n_steps": 20 },
  "verify": { "contraction_pairs": 4, "gateaux_directions": 4, "deviations": 2, "concavity_pairs": 3, "particles": 4000 },
  "output": { "export_paths": 5 } }"#;

const TRIVIAL: &str = r#"{ "params": { "horizon": 1.0, "h": 0.0, "p": 0.0, "phi": 0.0, "psi": 0.0, "r_b": 0.0, "r_i": 0.0,
  "q_i0": 0.0, "z0": 0.0, "sigma": 1.0, "kappa": 0.0, "sigma_alpha": 0.0, "alpha0_mean": 0.0, "alpha0_var": 0.0 },
  "n_paths": 200, "grid": { "n_steps": 10 } }"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p
}

fn equinash(mode: &str, config: &Path, out: &Path, extra: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_equinash"));
    cmd.arg(mode).arg("--config").arg(config).arg("--out").arg(out).args(extra);
    if let Some(t) = threads {
        cmd.env("EQUINASH_THREADS", t);
    }
    cmd.output().unwrap()
}

fn manifest(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn digests(out: &Path) -> Vec<(String, String)> {
    manifest(out)["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| (f["name"].as_str().unwrap().to_string(), f["sha256"].as_str().unwrap().to_string()))
        .collect()
}

#[test]
fn validate_writes_only_the_report() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "{}");
    let out = tmp.path().join("out");
    let o = equinash("validate", &cfg, &out, &[], None);
    assert!(o.status.success());
    let names: Vec<String> = digests(&out).into_iter().map(|(n, _)| n).collect();
    assert_eq!(names, ["config.json", "validation.json"]);
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("validation.json")).unwrap()).unwrap();
    assert_eq!(report["in_contraction_regime"], Value::Bool(true));
}

#[test]
fn invalid_parameters_fail_with_named_invariant() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), r#"{"params": {"a": -1.0}}"#);
    let o = equinash("validate", &cfg, &tmp.path().join("out"), &[], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("a positive definite"));
}

#[test]
fn zero_problem_has_zero_equilibrium() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), TRIVIAL);
    let out = tmp.path().join("out");
    assert!(equinash("solve-picard", &cfg, &out, &[], None).status.success());
    let text = fs::read_to_string(out.join("equilibrium.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("path,t,nu,eta"));
    for line in lines {
        let cols: Vec<f64> = line.split(',').skip(2).map(|x| x.parse().unwrap()).collect();
        assert!(cols.iter().all(|&x| x == 0.0), "{line}");
    }
}

#[test]
fn manifest_lists_every_file_with_its_digest() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    assert!(equinash("solve-picard", &cfg, &out, &[], None).status.success());
    let listed = digests(&out);
    let mut on_disk: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n != "manifest.json")
        .collect();
    on_disk.sort();
    let mut names: Vec<String> = listed.iter().map(|(n, _)| n.clone()).collect();
    names.sort();
    assert_eq!(names, on_disk);
    for (name, digest) in listed {
        assert_eq!(sha256_hex(&fs::read(out.join(&name)).unwrap()), digest, "{name}");
    }
}

#[test]
fn outputs_reproduce_across_runs_and_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let runs: Vec<Vec<(String, String)>> = [None, None, Some("1"), Some("3")]
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let out = tmp.path().join(format!("run{i}"));
            assert!(equinash("solve-perturbation", &cfg, &out, &[], *t).status.success());
            digests(&out)
        })
        .collect();
    for r in &runs[1..] {
        assert_eq!(r, &runs[0]);
    }
    assert_eq!(manifest(&tmp.path().join("run3"))["threads"], 3);
}

#[test]
fn seed_flag_changes_the_sample() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(equinash("simulate", &cfg, &a, &[], None).status.success());
    assert!(equinash("simulate", &cfg, &b, &["--seed", "7"], None).status.success());
    assert_eq!(manifest(&b)["seed"], 7);
    assert_ne!(fs::read(a.join("ensemble.csv")).unwrap(), fs::read(b.join("ensemble.csv")).unwrap());
}

#[test]
fn verify_passes_on_a_small_market() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let out = tmp.path().join("out");
    let o = equinash("verify", &cfg, &out, &[], None);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(out.join("verification.json")).unwrap()).unwrap();
    let ids: Vec<u64> = v["criteria"].as_array().unwrap().iter().map(|c| c["id"].as_u64().unwrap()).collect();
    assert_eq!(ids, [1, 2, 3, 4, 5, 6, 8, 9]);
}

#[test]
fn missing_output_directory_is_an_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), "{}");
    let o = Command::new(env!("CARGO_BIN_EXE_equinash")).arg("validate").arg("--config").arg(&cfg).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}
