//! Acceptance battery on the shipped baseline configuration.
//! Prints one PASS/FAIL line per criterion and fails if any criterion fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use equinash::checks::{self, CriterionReport, Experiment};
use equinash::load_config;
use tempfile::TempDir;

fn baseline_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/baseline.json")
}

/// Attaches a wall-clock budget to a criterion.
fn timed<F>(budget: Option<Duration>, f: F) -> CriterionReport
where
    F: FnOnce() -> CriterionReport,
{
    let start = Instant::now();
    let mut report = f();
    let elapsed = start.elapsed();
    report.summary = format!("{}; {:.1} s", report.summary, elapsed.as_secs_f64());
    if let Some(b) = budget {
        if elapsed > b {
            report.passed = false;
            report.summary += &format!(" exceeds {} s", b.as_secs());
        }
    }
    report
}

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn reproducibility(config: &Path) -> CriterionReport {
    let tmp = TempDir::new().unwrap();
    let runs: Vec<_> = [None, None, Some("1"), Some("2")]
        .iter()
        .enumerate()
        .map(|(i, threads)| {
            let out = tmp.path().join(format!("run{i}"));
            let mut cmd = Command::new(env!("CARGO_BIN_EXE_equinash"));
            cmd.arg("solve-picard").arg("--config").arg(config).arg("--out").arg(&out);
            if let Some(t) = threads {
                cmd.env(equinash::THREADS_ENV, t);
            }
            let status = cmd.status().unwrap();
            (status.success(), csv_bytes(&out))
        })
        .collect();
    let ok_runs = runs.iter().all(|(ok, files)| *ok && !files.is_empty());
    let same_seed = runs[0].1 == runs[1].1;
    let threads = runs[2].1 == runs[3].1 && runs[0].1 == runs[2].1;
    CriterionReport {
        id: 10,
        title: "reproducibility".into(),
        passed: ok_runs && same_seed && threads,
        summary: format!(
            "{} csv files; same seed identical: {same_seed}; 1 vs 2 threads identical: {threads}",
            runs[0].1.len()
        ),
        checks: Vec::new(),
    }
}

#[test]
fn acceptance() {
    let path = baseline_path();
    let config = load_config(&path).expect("baseline config");
    let mut reports = Vec::new();

    reports.push(timed(Some(Duration::from_secs(1)), || checks::riccati(&config).unwrap()));

    let exp = Experiment::new(config.clone()).expect("experiment");
    reports.push(timed(Some(Duration::from_secs(300)), || checks::contraction(&exp).unwrap()));

    let mut eq = None;
    reports.push(timed(Some(Duration::from_secs(600)), || {
        let e = exp.solve().unwrap();
        let r = checks::fixed_point(&e);
        eq = Some(e);
        r
    }));
    let eq = eq.unwrap();

    reports.push(timed(Some(Duration::from_secs(600)), || checks::optimality(&exp, &eq).unwrap()));
    reports.push(timed(None, || checks::filter(&exp).unwrap()));
    reports.push(timed(None, || checks::cross_solver(&exp).unwrap()));
    reports.push(timed(Some(Duration::from_secs(1800)), || checks::scaling(&exp).unwrap().0));
    reports.push(timed(None, || checks::concavity(&exp, &eq).unwrap()));
    reports.push(timed(None, || checks::fbsde(&exp, &eq).unwrap()));
    drop(eq);
    drop(exp);
    reports.push(timed(None, || reproducibility(&path)));

    for r in &reports {
        println!("{}", r.line());
    }
    let failed: Vec<usize> = reports.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
